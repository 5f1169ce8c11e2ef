// One-image-at-a-time grading screen. The grader sees the scan, two verdict
// buttons, free prev/next navigation and a progress count — nothing about
// which band the item came from or whether it is the untouched original.
//
// All mutating actions funnel through a single promise chain so verdict
// writes stay serialized; tests await settled() instead of polling the DOM.

import { ApiError, GradingApi, missingIndices } from './api.js';
import type { Verdict } from './api.js';
import { VerdictQueue } from './retryQueue.js';
import {
  answeredCount,
  clampCursor,
  newSessionState,
  nextUnanswered,
  reconcile,
  unansweredIndices,
} from './state.js';
import type { UiSessionState } from './state.js';

export interface GraderAppOptions {
  /** Delay before an automatic resend of queued verdicts. */
  retryDelayMs?: number;
  /** Prefetch the next unanswered item's image after rendering. */
  prefetch?: boolean;
}

function bytesToDataUrl(bytes: ArrayBuffer): string {
  const view = new Uint8Array(bytes);
  let binary = '';
  const CHUNK = 0x8000; // keep fromCharCode arg counts bounded
  for (let i = 0; i < view.length; i += CHUNK) {
    binary += String.fromCharCode(...view.subarray(i, i + CHUNK));
  }
  return `data:image/png;base64,${btoa(binary)}`;
}

function toImageSrc(bytes: ArrayBuffer): string {
  if (typeof URL.createObjectURL === 'function') {
    return URL.createObjectURL(new Blob([bytes], { type: 'image/png' }));
  }
  return bytesToDataUrl(bytes); // jsdom has no object URLs
}

export class GraderApp {
  private state: UiSessionState | null = null;
  private readonly queue = new VerdictQueue();
  private readonly images = new Map<number, string>();
  private imageFailed = false;
  private statusText = '';
  private chain: Promise<unknown> = Promise.resolve();
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private keyHandler: ((e: KeyboardEvent) => void) | null = null;
  private onlineHandler: (() => void) | null = null;
  private readonly retryDelayMs: number;
  private readonly prefetch: boolean;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: GradingApi,
    opts: GraderAppOptions = {},
  ) {
    this.retryDelayMs = opts.retryDelayMs ?? 2000;
    this.prefetch = opts.prefetch ?? true;
  }

  // -- lifecycle ------------------------------------------------------------

  async start(studyId: string, graderId: string): Promise<void> {
    const opened = await this.api.createSession(studyId, graderId);
    this.state = newSessionState(opened.session_id, opened.item_count);
    this.buildSkeleton();
    this.bindKeys();
    await this.showItem(0);
  }

  dispose(): void {
    if (this.retryTimer !== null) clearTimeout(this.retryTimer);
    this.retryTimer = null;
    if (this.keyHandler) document.removeEventListener('keydown', this.keyHandler);
    if (this.onlineHandler) window.removeEventListener('online', this.onlineHandler);
    this.keyHandler = null;
    this.onlineHandler = null;
  }

  /** Resolves once every queued action (including ones they spawned) ran. */
  async settled(): Promise<void> {
    let seen;
    do {
      seen = this.chain;
      await seen.catch(() => undefined);
    } while (seen !== this.chain);
  }

  get sessionId(): string {
    return this.must().sessionId;
  }

  // -- public actions (each returns after its effect is applied) -------------

  submitVerdict(verdict: Verdict): Promise<void> {
    return this.enqueue(async () => {
      const s = this.must();
      if (s.finished) return;
      const index = s.cursor;
      s.verdicts.set(index, verdict);
      s.acked.delete(index); // a fresh write is unacked until the PUT lands
      this.queue.set(index, verdict);
      const next = nextUnanswered(s, index);
      await this.flushQueueOnce();
      if (next !== null && !this.must().finished) await this.showItem(next);
      else this.render();
    });
  }

  goTo(index: number): Promise<void> {
    return this.enqueue(() => this.showItem(clampCursor(this.must(), index)));
  }

  next(): Promise<void> {
    return this.enqueue(() => this.showItem(clampCursor(this.must(), this.must().cursor + 1)));
  }

  prev(): Promise<void> {
    return this.enqueue(() => this.showItem(clampCursor(this.must(), this.must().cursor - 1)));
  }

  /** Resend queued verdicts now (also wired to the window 'online' event). */
  flushPending(): Promise<boolean> {
    return this.enqueue(() => this.flushQueueOnce());
  }

  finishSession(): Promise<void> {
    return this.enqueue(async () => {
      const s = this.must();
      const missing = unansweredIndices(s);
      if (missing.length > 0) {
        this.statusText = `cannot finish — unanswered: ${formatIndices(missing)}`;
        this.render();
        return;
      }
      if (!(await this.flushQueueOnce())) {
        this.statusText = 'cannot finish while verdicts are still syncing';
        this.render();
        return;
      }
      try {
        const summary = await this.api.finish(s.sessionId);
        s.finished = true;
        this.renderSummary(summary.item_count);
      } catch (err) {
        const serverMissing = missingIndices(err);
        if (err instanceof ApiError && err.status === 409 && serverMissing.length > 0) {
          this.statusText = `server reports unanswered: ${formatIndices(serverMissing)}`;
          await this.showItem(serverMissing[0]);
        } else {
          this.statusText = describeError(err);
          this.render();
        }
      }
    });
  }

  retryImage(): Promise<void> {
    return this.enqueue(() => this.showItem(this.must().cursor));
  }

  // -- internals --------------------------------------------------------------

  private must(): UiSessionState {
    if (!this.state) throw new Error('session not started');
    return this.state;
  }

  private enqueue<T>(fn: () => Promise<T>): Promise<T> {
    const run = this.chain.then(fn, fn);
    this.chain = run.then(
      () => undefined,
      () => undefined,
    );
    return run;
  }

  private async showItem(index: number): Promise<void> {
    const s = this.must();
    s.cursor = index;
    this.imageFailed = false;
    this.render();
    try {
      const src = await this.loadImage(index);
      if (this.must().cursor === index) {
        this.img().src = src;
      }
    } catch {
      if (this.must().cursor === index) {
        this.imageFailed = true;
        this.render();
      }
      return;
    }
    if (this.prefetch) {
      const ahead = nextUnanswered(s, index);
      if (ahead !== null && ahead !== index && !this.images.has(ahead)) {
        this.loadImage(ahead).catch(() => undefined); // best effort only
      }
    }
  }

  private async loadImage(index: number): Promise<string> {
    const cached = this.images.get(index);
    if (cached !== undefined) return cached;
    const bytes = await this.api.fetchItemPng(this.must().sessionId, index);
    const src = toImageSrc(bytes);
    this.images.set(index, src);
    return src;
  }

  private async flushQueueOnce(): Promise<boolean> {
    const s = this.must();
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
    const drained = await this.queue.flush(async (index, verdict) => {
      await this.api.putVerdict(s.sessionId, index, verdict);
      s.acked.add(index);
    });
    s.connectivity.online = drained;
    s.connectivity.retrying = !drained;
    if (drained) {
      try {
        reconcile(s, await this.api.getState(s.sessionId));
      } catch {
        // keep-alive read failed; the acked writes above are already durable
      }
    } else if (this.retryDelayMs > 0) {
      this.retryTimer = setTimeout(() => {
        this.retryTimer = null;
        void this.flushPending();
      }, this.retryDelayMs);
    }
    this.render();
    return drained;
  }

  private bindKeys(): void {
    this.keyHandler = (e: KeyboardEvent) => {
      const target = e.target as HTMLElement | null;
      if (target && /^(INPUT|TEXTAREA|SELECT)$/.test(target.tagName)) return;
      if (this.state?.finished) return;
      switch (e.key) {
        case 'o':
        case 'O':
          void this.submitVerdict('original');
          break;
        case 'm':
        case 'M':
          void this.submitVerdict('modified');
          break;
        case 'ArrowLeft':
          void this.prev();
          break;
        case 'ArrowRight':
          void this.next();
          break;
      }
    };
    document.addEventListener('keydown', this.keyHandler);
    this.onlineHandler = () => void this.flushPending();
    window.addEventListener('online', this.onlineHandler);
  }

  // -- rendering ----------------------------------------------------------------

  private buildSkeleton(): void {
    this.root.innerHTML = `
      <div class="grader">
        <header>
          <span id="progress"></span>
          <span id="connectivity" hidden></span>
        </header>
        <figure id="stage">
          <img id="scan" alt="">
          <div id="image-error" hidden>
            image failed to load
            <button id="btn-retry-image" type="button">Retry</button>
          </div>
        </figure>
        <nav>
          <button id="btn-prev" type="button">&#8592; Prev</button>
          <button id="btn-original" type="button">Original (o)</button>
          <button id="btn-modified" type="button">Modified (m)</button>
          <button id="btn-next" type="button">Next &#8594;</button>
          <button id="btn-finish" type="button">Finish</button>
        </nav>
        <p id="status"></p>
      </div>`;
    this.el('btn-prev').addEventListener('click', () => void this.prev());
    this.el('btn-next').addEventListener('click', () => void this.next());
    this.el('btn-original').addEventListener('click', () => void this.submitVerdict('original'));
    this.el('btn-modified').addEventListener('click', () => void this.submitVerdict('modified'));
    this.el('btn-finish').addEventListener('click', () => void this.finishSession());
    this.el('btn-retry-image').addEventListener('click', () => void this.retryImage());
  }

  private el(id: string): HTMLElement {
    const node = this.root.querySelector(`#${id}`);
    if (!node) throw new Error(`missing #${id}`);
    return node as HTMLElement;
  }

  private img(): HTMLImageElement {
    return this.el('scan') as HTMLImageElement;
  }

  private render(): void {
    const s = this.must();
    if (s.finished) return;

    this.el('progress').textContent = `${answeredCount(s)}/${s.itemCount} answered — item ${
      s.cursor + 1
    } of ${s.itemCount}`;
    this.img().alt = `scan ${s.cursor + 1} of ${s.itemCount}`;

    const conn = this.el('connectivity');
    if (s.connectivity.retrying) {
      conn.hidden = false;
      conn.textContent = `offline — ${this.queue.size} verdict${
        this.queue.size === 1 ? '' : 's'
      } pending, retrying`;
    } else {
      conn.hidden = true;
      conn.textContent = '';
    }

    const current = s.verdicts.get(s.cursor);
    this.el('btn-original').classList.toggle('selected', current === 'original');
    this.el('btn-modified').classList.toggle('selected', current === 'modified');

    (this.el('btn-prev') as HTMLButtonElement).disabled = s.cursor === 0;
    (this.el('btn-next') as HTMLButtonElement).disabled = s.cursor === s.itemCount - 1;

    const missing = unansweredIndices(s);
    const finish = this.el('btn-finish') as HTMLButtonElement;
    finish.disabled = missing.length > 0;
    finish.title = missing.length > 0 ? `unanswered: ${formatIndices(missing)}` : '';

    this.el('image-error').hidden = !this.imageFailed;

    const bits: string[] = [];
    if (this.queue.has(s.cursor)) bits.push('verdict pending sync');
    if (missing.length > 0 && missing.length <= 8) {
      bits.push(`unanswered: ${formatIndices(missing)}`);
    }
    if (this.statusText) bits.push(this.statusText);
    this.el('status').textContent = bits.join(' · ');
    this.statusText = '';
  }

  private renderSummary(itemCount: number): void {
    this.root.innerHTML = `
      <div class="grader">
        <h2>Session complete</h2>
        <p id="summary">${itemCount} verdicts recorded. Thank you.</p>
      </div>`;
  }
}

function formatIndices(indices: number[]): string {
  return indices.map((i) => String(i + 1)).join(', '); // 1-based for humans
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) return `request failed (HTTP ${err.status})`;
  return err instanceof Error ? err.message : 'request failed';
}
