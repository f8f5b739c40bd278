/** Typed client for the feedback service. One instance per run. */

export type Judgment = "true_counterfactual" | "false_counterfactual";

export interface RunState {
  run_id: string;
  state: string;
  iteration?: number;
  stage?: string | null;
  updated_at?: string;
}

export interface PendingPair {
  record_id: string;
  y: number;
  y_target: number;
  final_confidence: number;
  x_png: string;
  x_prime_png: string;
}

export interface PendingPayload {
  stage: string | null;
  pairs: PendingPair[];
}

export interface ClusterPoint {
  record_id: string;
  x: number;
  y: number;
  label: number;
  judged: boolean;
}

export interface ClusterPayload {
  seed: number;
  points: ClusterPoint[];
}

export interface Box {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export interface IterationRow {
  iteration: number;
  generated: number;
  converged: number;
  failed: number;
  accepted: number;
  rejected: number;
  feedback_generated: number;
  feedback_converged: number;
  feedback_accuracy: number | null;
  val_accuracy: number;
  unpoisoned_test_accuracy: number;
  checkpoint_path: string | null;
}

export interface MetricsPayload {
  state: RunState;
  reports: IterationRow[];
  correlations: Record<string, number | null> | null;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** Outcome of a verdict POST. 409 means someone else answered first. */
export type FeedbackOutcome = "stored" | "duplicate";

export class ApiClient {
  constructor(
    readonly runId: string,
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private url(suffix: string): string {
    return `${this.baseUrl}/runs/${encodeURIComponent(this.runId)}${suffix}`;
  }

  private async getJson<T>(url: string): Promise<T> {
    const res = await this.fetchFn(url);
    if (!res.ok) {
      throw new ApiError(res.status, `GET ${url} -> ${res.status}`);
    }
    return (await res.json()) as T;
  }

  run(): Promise<RunState> {
    return this.getJson<RunState>(this.url(""));
  }

  pending(limit?: number): Promise<PendingPayload> {
    const query = limit === undefined ? "" : `?limit=${limit}`;
    return this.getJson<PendingPayload>(this.url(`/pending${query}`));
  }

  async feedback(recordId: string, judgment: Judgment): Promise<FeedbackOutcome> {
    const res = await this.fetchFn(this.url("/feedback"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ record_id: recordId, judgment, source: "human" }),
    });
    if (res.status === 204) return "stored";
    if (res.status === 409) return "duplicate";
    throw new ApiError(res.status, `POST feedback -> ${res.status}`);
  }

  /** null when no cluster view has been published for the current batch. */
  async clusters(): Promise<ClusterPayload | null> {
    const res = await this.fetchFn(this.url("/clusters"));
    if (res.status === 404) return null;
    if (!res.ok) {
      throw new ApiError(res.status, `GET clusters -> ${res.status}`);
    }
    return (await res.json()) as ClusterPayload;
  }

  async clusterSelection(boxes: Box[]): Promise<{ created: number; skipped: number }> {
    // source is left to the server default ("cluster"): box rejection is the
    // cluster-teacher pathway even when a human draws the boxes.
    const res = await this.fetchFn(this.url("/cluster-selection"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ boxes }),
    });
    if (!res.ok) {
      throw new ApiError(res.status, `POST cluster-selection -> ${res.status}`);
    }
    return (await res.json()) as { created: number; skipped: number };
  }

  metrics(): Promise<MetricsPayload> {
    return this.getJson<MetricsPayload>(this.url("/metrics"));
  }
}
