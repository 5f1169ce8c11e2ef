// Client-side session state. `verdicts` is the grader's local map (kept in
// sync with the server: every entry is either acknowledged or sitting in the
// retry queue); `acked` tracks which writes the server has confirmed.

import type { SessionStateDto, Verdict } from './api.js';

export interface Connectivity {
  online: boolean;
  retrying: boolean;
}

export interface UiSessionState {
  sessionId: string;
  itemCount: number;
  cursor: number;
  verdicts: Map<number, Verdict>;
  acked: Set<number>;
  connectivity: Connectivity;
  finished: boolean;
}

export function newSessionState(sessionId: string, itemCount: number): UiSessionState {
  if (itemCount <= 0) throw new Error(`item_count must be positive, got ${itemCount}`);
  return {
    sessionId,
    itemCount,
    cursor: 0,
    verdicts: new Map(),
    acked: new Set(),
    connectivity: { online: true, retrying: false },
    finished: false,
  };
}

export function answeredCount(s: UiSessionState): number {
  return s.verdicts.size;
}

export function unansweredIndices(s: UiSessionState): number[] {
  const out: number[] = [];
  for (let i = 0; i < s.itemCount; i++) {
    if (!s.verdicts.has(i)) out.push(i);
  }
  return out;
}

/**
 * Next unanswered index strictly after `from`, wrapping around to the start;
 * null when everything is answered. Drives auto-advance after a verdict.
 */
export function nextUnanswered(s: UiSessionState, from: number): number | null {
  for (let step = 1; step <= s.itemCount; step++) {
    const i = (from + step) % s.itemCount;
    if (!s.verdicts.has(i)) return i;
  }
  return null;
}

export function clampCursor(s: UiSessionState, index: number): number {
  return Math.min(Math.max(index, 0), s.itemCount - 1);
}

/**
 * Fold an authoritative GET /state response into the local state. Server
 * `answered` marks those writes acknowledged; anything we hold locally that
 * the server doesn't list must still be in the retry queue (the caller
 * asserts that). Throws if the server contradicts the session shape.
 */
export function reconcile(s: UiSessionState, dto: SessionStateDto): void {
  if (dto.item_count !== s.itemCount) {
    throw new Error(`server item_count ${dto.item_count} != local ${s.itemCount}`);
  }
  for (const i of dto.answered) {
    s.acked.add(i);
  }
  s.finished = dto.finished;
}
