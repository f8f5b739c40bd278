/**
 * DOM wiring for the feedback UI. All state lives on the server; this file
 * only renders the three panels (review queue, cluster board, metrics) and
 * forwards clicks. Loaded from index.html as an ES module.
 */

import { ApiClient, ClusterPayload, PendingPair, RunState } from "./api.js";
import { ClusterBoard, fitTransform, pointInBox, toCanvas, toData } from "./clusters.js";
import { correlationLines, describeState, formatAccuracy, tableRows } from "./metrics.js";
import { ReviewQueue } from "./queue.js";

const POLL_MS = 1000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function pngSrc(b64: string): string {
  return `data:image/png;base64,${b64}`;
}

class App {
  private api: ApiClient;
  private queue: ReviewQueue;
  private board = new ClusterBoard();
  private clusterSeed: number | null = null;
  private judged = new Set<string>();
  private lastState: RunState | null = null;

  constructor(runId: string) {
    this.api = new ApiClient(runId);
    this.queue = new ReviewQueue(this.api, {
      onDuplicate: () => this.note("already answered elsewhere"),
      onError: (err) => this.note(String(err)),
    });
  }

  start(): void {
    el<HTMLButtonElement>("btn-true").addEventListener("click", () => {
      void this.answer("true_counterfactual");
    });
    el<HTMLButtonElement>("btn-false").addEventListener("click", () => {
      void this.answer("false_counterfactual");
    });
    document.addEventListener("keydown", (ev) => {
      if (ev.key === "t") void this.answer("true_counterfactual");
      if (ev.key === "f") void this.answer("false_counterfactual");
    });
    el<HTMLButtonElement>("btn-clear-boxes").addEventListener("click", () => {
      this.board.clear();
      this.drawBoard();
    });
    el<HTMLButtonElement>("btn-send-boxes").addEventListener("click", () => {
      void this.sendBoxes();
    });
    this.wireCanvas();
    void this.tick();
    setInterval(() => void this.tick(), POLL_MS);
  }

  private note(text: string): void {
    el("note").textContent = text;
  }

  private async answer(judgment: "true_counterfactual" | "false_counterfactual"): Promise<void> {
    try {
      await this.queue.submit(judgment);
    } catch {
      // note() already set by the queue's onError hook
    }
    this.renderPair();
  }

  private async tick(): Promise<void> {
    let state: RunState;
    try {
      state = await this.api.run();
    } catch {
      this.note("run not found");
      return;
    }
    this.lastState = state;
    el("state").textContent = describeState(state);
    if (state.state === "awaiting_feedback") {
      try {
        await this.queue.refresh();
      } catch {
        // transient; next poll retries
      }
      await this.refreshClusters();
    } else {
      this.clusterSeed = null;
    }
    this.renderPair();
    await this.refreshMetrics();
  }

  private renderPair(): void {
    const pair = this.queue.current();
    const panel = el("pair");
    if (!pair) {
      panel.classList.add("empty");
      const msg =
        this.lastState && this.lastState.state !== "awaiting_feedback"
          ? describeState(this.lastState)
          : "queue empty";
      el("pair-meta").textContent = msg;
      return;
    }
    panel.classList.remove("empty");
    el<HTMLImageElement>("img-x").src = pngSrc(pair.x_png);
    el<HTMLImageElement>("img-xp").src = pngSrc(pair.x_prime_png);
    el("pair-meta").textContent =
      `${pair.record_id}: class ${pair.y} → ${pair.y_target}, ` +
      `confidence ${pair.final_confidence.toFixed(3)}, ${this.queue.size} left`;
  }

  private async refreshClusters(): Promise<void> {
    let payload: ClusterPayload | null;
    try {
      payload = await this.api.clusters();
    } catch {
      return;
    }
    if (!payload) {
      this.clusterSeed = null;
      this.board.points = [];
      this.drawBoard();
      return;
    }
    if (this.clusterSeed !== payload.seed) {
      this.board = new ClusterBoard(payload.points);
      this.clusterSeed = payload.seed;
    } else {
      this.board.points = payload.points;
    }
    this.judged = new Set(payload.points.filter((p) => p.judged).map((p) => p.record_id));
    this.drawBoard();
  }

  private canvas(): HTMLCanvasElement {
    return el<HTMLCanvasElement>("cluster-canvas");
  }

  private wireCanvas(): void {
    const canvas = this.canvas();
    const dataPos = (ev: MouseEvent) => {
      const rect = canvas.getBoundingClientRect();
      const t = fitTransform(this.board.points, canvas.width, canvas.height);
      return toData(t, ev.clientX - rect.left, ev.clientY - rect.top);
    };
    canvas.addEventListener("mousedown", (ev) => {
      const p = dataPos(ev);
      this.board.beginDrag(p.x, p.y);
    });
    canvas.addEventListener("mousemove", (ev) => {
      const p = dataPos(ev);
      this.drawBoard(this.board.previewBox(p.x, p.y));
    });
    canvas.addEventListener("mouseup", (ev) => {
      const p = dataPos(ev);
      this.board.endDrag(p.x, p.y);
      this.drawBoard();
    });
    canvas.addEventListener("mouseleave", () => {
      this.board.cancelDrag();
      this.drawBoard();
    });
  }

  private drawBoard(preview?: ReturnType<ClusterBoard["previewBox"]>): void {
    const canvas = this.canvas();
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const points = this.board.points;
    el("cluster-meta").textContent = points.length
      ? `${points.length} points, ${this.board.selected().size} enclosed`
      : "no cluster view published";
    if (points.length === 0) return;
    const t = fitTransform(points, canvas.width, canvas.height);
    const boxes = preview ? [...this.board.boxes, preview] : this.board.boxes;
    for (const p of points) {
      const c = toCanvas(t, p.x, p.y);
      const enclosed = boxes.some((b) => pointInBox(p, b));
      ctx.beginPath();
      ctx.arc(c.x, c.y, 4, 0, 2 * Math.PI);
      ctx.fillStyle = this.judged.has(p.record_id)
        ? "#b9b9b9"
        : enclosed
          ? "#d9534f"
          : p.label === 0
            ? "#4a7fd4"
            : "#48a463";
      ctx.fill();
    }
    ctx.strokeStyle = "#d9534f";
    ctx.setLineDash([4, 3]);
    for (const b of boxes) {
      const a = toCanvas(t, b.x0, b.y0);
      const z = toCanvas(t, b.x1, b.y1);
      ctx.strokeRect(a.x, a.y, z.x - a.x, z.y - a.y);
    }
    ctx.setLineDash([]);
  }

  private async sendBoxes(): Promise<void> {
    if (this.board.boxes.length === 0) {
      this.note("draw a box first");
      return;
    }
    try {
      const res = await this.api.clusterSelection(this.board.boxes);
      this.note(`cluster selection: ${res.created} stored, ${res.skipped} already judged`);
      this.board.clear();
      await this.refreshClusters();
      await this.queue.refresh();
      this.renderPair();
    } catch (err) {
      this.note(String(err));
    }
  }

  private async refreshMetrics(): Promise<void> {
    let metrics;
    try {
      metrics = await this.api.metrics();
    } catch {
      return;
    }
    const body = el("metrics-body");
    body.innerHTML = "";
    for (const row of tableRows(metrics.reports)) {
      const tr = document.createElement("tr");
      for (const cell of [row.iteration, row.feedback, row.val, row.test, row.generated]) {
        const td = document.createElement("td");
        td.textContent = cell;
        tr.appendChild(td);
      }
      body.appendChild(tr);
    }
    el("correlations").textContent = correlationLines(metrics).join("   ");
  }
}

function runIdFromLocation(): string {
  const params = new URLSearchParams(window.location.search);
  const fromQuery = params.get("run");
  if (fromQuery) return fromQuery;
  const input = window.prompt("run id?");
  return input ?? "";
}

const runId = runIdFromLocation();
if (runId) {
  document.title = `cfkd · ${runId}`;
  new App(runId).start();
} else {
  document.body.textContent = "no run id given (use ?run=<id>)";
}
