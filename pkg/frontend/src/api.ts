// Typed client for the grading service HTTP API. The fetch implementation is
// injected so tests can record traffic and simulate network failures.

export type Verdict = 'original' | 'modified';

export interface SessionOpened {
  session_id: string;
  item_count: number;
}

export interface SessionStateDto {
  cursor: number;
  answered: number[];
  item_count: number;
  finished: boolean;
}

export interface FinishSummary {
  session_id: string;
  item_count: number;
  counts: Record<string, number>;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly body: unknown,
    message?: string,
  ) {
    super(message ?? `HTTP ${status}`);
    this.name = 'ApiError';
  }
}

/** Missing indices from a 409 finish response, or [] if the shape is off. */
export function missingIndices(err: unknown): number[] {
  if (err instanceof ApiError && err.body && typeof err.body === 'object') {
    const m = (err.body as Record<string, unknown>).missing;
    if (Array.isArray(m)) return m.filter((v): v is number => typeof v === 'number');
  }
  return [];
}

async function errorBody(resp: Response): Promise<unknown> {
  try {
    return await resp.json();
  } catch {
    return null;
  }
}

export class GradingApi {
  private readonly base: string;

  constructor(
    baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {
    this.base = baseUrl.replace(/\/+$/, '');
  }

  private async json<T>(url: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.base + url, init);
    if (!resp.ok) throw new ApiError(resp.status, await errorBody(resp));
    return (await resp.json()) as T;
  }

  async createSession(studyId: string, graderId: string): Promise<SessionOpened> {
    return this.json<SessionOpened>(`/studies/${encodeURIComponent(studyId)}/sessions`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ grader_id: graderId }),
    });
  }

  async fetchItemPng(sessionId: string, index: number): Promise<ArrayBuffer> {
    const resp = await this.fetchFn(
      `${this.base}/sessions/${encodeURIComponent(sessionId)}/items/${index}`,
    );
    if (!resp.ok) throw new ApiError(resp.status, await errorBody(resp));
    return resp.arrayBuffer();
  }

  // Resolves on the service's 204; the verdict is durable once acknowledged.
  async putVerdict(sessionId: string, index: number, verdict: Verdict): Promise<void> {
    const resp = await this.fetchFn(
      `${this.base}/sessions/${encodeURIComponent(sessionId)}/items/${index}/verdict`,
      {
        method: 'PUT',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ verdict }),
      },
    );
    if (resp.status !== 204) throw new ApiError(resp.status, await errorBody(resp));
  }

  async getState(sessionId: string): Promise<SessionStateDto> {
    return this.json<SessionStateDto>(`/sessions/${encodeURIComponent(sessionId)}/state`);
  }

  async finish(sessionId: string): Promise<FinishSummary> {
    return this.json<FinishSummary>(`/sessions/${encodeURIComponent(sessionId)}/finish`, {
      method: 'POST',
    });
  }
}
