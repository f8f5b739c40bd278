/** Formatting helpers for the metrics panel. */

import { IterationRow, MetricsPayload, RunState } from "./api.js";

export function formatAccuracy(value: number | null | undefined): string {
  if (value === null || value === undefined) return "—";
  return value.toFixed(3);
}

export interface TableRow {
  iteration: string;
  feedback: string;
  val: string;
  test: string;
  generated: string;
}

export function tableRows(reports: IterationRow[]): TableRow[] {
  return reports.map((r) => ({
    iteration: String(r.iteration),
    feedback: formatAccuracy(r.feedback_accuracy),
    val: formatAccuracy(r.val_accuracy),
    test: formatAccuracy(r.unpoisoned_test_accuracy),
    generated: `${r.converged}/${r.generated}`,
  }));
}

export function describeState(state: RunState): string {
  if (state.state === "done") return "run complete";
  if (state.state === "failed") return "run failed";
  const stage = state.stage ? state.stage.replace(/_/g, " ") : state.state;
  return `iteration ${state.iteration ?? "?"}: ${stage}`;
}

export function correlationLines(metrics: MetricsPayload): string[] {
  const corr = metrics.correlations;
  if (!corr) return [];
  const labels: Record<string, string> = {
    spearman_feedback_vs_test: "feedback vs test",
    spearman_validation_vs_test: "validation vs test",
  };
  const lines: string[] = [];
  for (const [key, label] of Object.entries(labels)) {
    if (key in corr) {
      const v = corr[key];
      lines.push(`${label}: ${v === null || v === undefined ? "—" : v.toFixed(3)}`);
    }
  }
  return lines;
}
