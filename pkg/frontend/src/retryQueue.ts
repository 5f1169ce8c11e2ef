// Pending-verdict queue for flaky connections. One slot per item index:
// revising a verdict while the old one is still queued just replaces it
// (the service is last-write-wins anyway, this only saves a round trip).

import type { Verdict } from './api.js';

export class VerdictQueue {
  private pending = new Map<number, Verdict>();

  set(index: number, verdict: Verdict): void {
    this.pending.set(index, verdict);
  }

  has(index: number): boolean {
    return this.pending.has(index);
  }

  get size(): number {
    return this.pending.size;
  }

  indices(): number[] {
    return [...this.pending.keys()].sort((a, b) => a - b);
  }

  /**
   * Try to send every queued verdict, in index order. Entries are removed
   * only on acknowledged sends; a failure leaves the rest queued for the
   * next attempt. Returns true when the queue drained completely.
   */
  async flush(send: (index: number, verdict: Verdict) => Promise<void>): Promise<boolean> {
    for (const index of this.indices()) {
      const verdict = this.pending.get(index);
      if (verdict === undefined) continue;
      try {
        await send(index, verdict);
      } catch {
        return false;
      }
      // Only drop the entry if it wasn't revised while the send was in flight.
      if (this.pending.get(index) === verdict) this.pending.delete(index);
    }
    return this.pending.size === 0;
  }
}
