import { describe, expect, it } from "vitest";
import { IterationRow } from "../src/api.js";
import { correlationLines, describeState, formatAccuracy, tableRows } from "../src/metrics.js";

function row(overrides: Partial<IterationRow>): IterationRow {
  return {
    iteration: 1,
    generated: 100,
    converged: 100,
    failed: 0,
    accepted: 40,
    rejected: 60,
    feedback_generated: 100,
    feedback_converged: 100,
    feedback_accuracy: 0.5,
    val_accuracy: 0.9,
    unpoisoned_test_accuracy: 0.6,
    checkpoint_path: null,
    ...overrides,
  };
}

describe("formatAccuracy", () => {
  it("renders null as an em dash", () => {
    expect(formatAccuracy(null)).toBe("—");
    expect(formatAccuracy(undefined)).toBe("—");
  });

  it("renders numbers with three decimals", () => {
    expect(formatAccuracy(0.5)).toBe("0.500");
    expect(formatAccuracy(1)).toBe("1.000");
  });
});

describe("tableRows", () => {
  it("produces one row per iteration in order", () => {
    const rows = tableRows([row({ iteration: 1 }), row({ iteration: 2 }), row({ iteration: 3 })]);
    expect(rows.map((r) => r.iteration)).toEqual(["1", "2", "3"]);
  });

  it("shows a dash for null feedback accuracy", () => {
    const rows = tableRows([row({ feedback_accuracy: null, converged: 0, generated: 100 })]);
    expect(rows[0]?.feedback).toBe("—");
    expect(rows[0]?.generated).toBe("0/100");
  });
});

describe("describeState", () => {
  it("summarizes terminal and in-progress states", () => {
    expect(describeState({ run_id: "r", state: "done" })).toBe("run complete");
    expect(describeState({ run_id: "r", state: "failed" })).toBe("run failed");
    expect(
      describeState({ run_id: "r", state: "awaiting_feedback", iteration: 2, stage: "augment" }),
    ).toBe("iteration 2: augment");
    expect(
      describeState({ run_id: "r", state: "awaiting_feedback", iteration: 3, stage: null }),
    ).toBe("iteration 3: awaiting_feedback");
  });
});

describe("correlationLines", () => {
  const state = { run_id: "r", state: "done" };

  it("returns nothing when correlations are unpublished", () => {
    expect(correlationLines({ state, reports: [], correlations: null })).toEqual([]);
  });

  it("formats both spearman values, dash for null", () => {
    const lines = correlationLines({
      state,
      reports: [],
      correlations: {
        spearman_feedback_vs_test: 0.9,
        spearman_validation_vs_test: null,
        n_iterations: 5,
      },
    });
    expect(lines).toEqual(["feedback vs test: 0.900", "validation vs test: —"]);
  });
});
