/**
 * Client-side review queue.
 *
 * Pulls pending counterfactual pairs from the service and serialises verdict
 * submission so a pair can never be answered twice from this tab: a record id
 * enters `inFlight` before the POST and only leaves once the server has
 * acknowledged (204 stored, or 409 already answered elsewhere).
 */

import { ApiClient, ApiError, Judgment, PendingPair } from "./api.js";

export interface QueueEvents {
  onBatch?: (stage: string | null, size: number) => void;
  onAnswered?: (recordId: string, judgment: Judgment) => void;
  onDuplicate?: (recordId: string) => void;
  onError?: (err: unknown) => void;
}

const RETRY_DELAYS_MS = [250, 1000, 4000];

async function sleep(ms: number): Promise<void> {
  await new Promise((resolve) => setTimeout(resolve, ms));
}

/**
 * Retry `fn` on network-level failures only. HTTP errors carry meaning
 * (409 duplicate, 404 stage over) and must surface to the caller unchanged.
 */
export async function withRetry<T>(fn: () => Promise<T>): Promise<T> {
  let lastErr: unknown;
  for (let attempt = 0; attempt <= RETRY_DELAYS_MS.length; attempt++) {
    try {
      return await fn();
    } catch (err) {
      if (err instanceof ApiError) throw err;
      lastErr = err;
      if (attempt < RETRY_DELAYS_MS.length) {
        await sleep(RETRY_DELAYS_MS[attempt] ?? 0);
      }
    }
  }
  throw lastErr;
}

export class ReviewQueue {
  private pairs: PendingPair[] = [];
  private inFlight = new Set<string>();
  private answeredCount = 0;
  stage: string | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly events: QueueEvents = {},
  ) {}

  get size(): number {
    return this.pairs.length;
  }

  get answered(): number {
    return this.answeredCount;
  }

  /** Pair currently shown to the reviewer, if any. */
  current(): PendingPair | undefined {
    return this.pairs[0];
  }

  /**
   * Re-sync with the server. Keeps local ordering stable for ids already
   * queued and drops anything the server no longer lists (answered from
   * another tab, or the stage moved on).
   */
  async refresh(): Promise<void> {
    const payload = await withRetry(() => this.api.pending(50));
    this.stage = payload.stage;
    const fresh = payload.pairs.filter((p) => !this.inFlight.has(p.record_id));
    const freshIds = new Set(fresh.map((p) => p.record_id));
    const kept = this.pairs.filter((p) => freshIds.has(p.record_id));
    const keptIds = new Set(kept.map((p) => p.record_id));
    this.pairs = [...kept, ...fresh.filter((p) => !keptIds.has(p.record_id))];
    this.events.onBatch?.(this.stage, this.pairs.length);
  }

  /**
   * Submit the verdict for the pair at the head of the queue. Returns false
   * when there was nothing to submit or a submission for that record is
   * already in flight.
   */
  async submit(judgment: Judgment): Promise<boolean> {
    const pair = this.current();
    if (!pair || this.inFlight.has(pair.record_id)) return false;
    this.inFlight.add(pair.record_id);
    try {
      const outcome = await withRetry(() => this.api.feedback(pair.record_id, judgment));
      this.pairs = this.pairs.filter((p) => p.record_id !== pair.record_id);
      if (outcome === "stored") {
        this.answeredCount += 1;
        this.events.onAnswered?.(pair.record_id, judgment);
      } else {
        // Answered elsewhere: drop it locally and pick up the server's view.
        this.events.onDuplicate?.(pair.record_id);
        await this.refresh().catch(() => undefined);
      }
      return outcome === "stored";
    } catch (err) {
      this.events.onError?.(err);
      throw err;
    } finally {
      this.inFlight.delete(pair.record_id);
    }
  }
}
