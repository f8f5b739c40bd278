"""Evaluation: rank correlations over iteration reports and poisoning sweeps.

The headline comparison: feedback accuracy should track unpoisoned test
accuracy across iterations (positive Spearman correlation), while poisoned
validation accuracy should not. The sweep utility repeats training with and
without distillation over a grid of confounder kinds, poisoning strengths,
and seeds.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .classifier import train_classifier
from .datasets import BaseSampleSpec, PoisonSpec, build_full_dataset, build_poisoned_subset
from .distill import DistillConfig, IterationReport, TrainConfig, run_cfkd
from .errors import ConfigurationError
from .flow import FlowConfig, train_generator
from .teachers import OracleTeacher

logger = logging.getLogger(__name__)


def _midranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing the mean of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_correlation(a, b) -> float | None:
    """Spearman rank correlation with midranks for ties.

    Returns None when either series is constant (correlation undefined).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ConfigurationError(
            f"spearman: need two equal-length 1-d series, got {a.shape} and {b.shape}"
        )
    if a.size < 2:
        return None
    ra, rb = _midranks(a), _midranks(b)
    sa, sb = ra.std(), rb.std()
    if sa == 0.0 or sb == 0.0:
        return None
    return float(((ra - ra.mean()) * (rb - rb.mean())).mean() / (sa * sb))


@dataclass
class CorrelationReport:
    spearman_feedback_vs_test: float | None
    spearman_validation_vs_test: float | None
    n_iterations: int

    def to_dict(self) -> dict:
        return {
            "spearman_feedback_vs_test": self.spearman_feedback_vs_test,
            "spearman_validation_vs_test": self.spearman_validation_vs_test,
            "n_iterations": self.n_iterations,
        }


def correlation_report(reports: list[IterationReport]) -> CorrelationReport:
    """Correlate per-iteration feedback accuracy and poisoned validation
    accuracy against unpoisoned test accuracy."""
    rows = [r for r in reports if r.feedback_accuracy is not None]
    if len(rows) < 3:
        raise ConfigurationError(
            f"correlation_report: need at least 3 iterations with defined "
            f"feedback accuracy, got {len(rows)}"
        )
    test = [r.unpoisoned_test_accuracy for r in rows]
    return CorrelationReport(
        spearman_feedback_vs_test=spearman_correlation(
            [r.feedback_accuracy for r in rows], test
        ),
        spearman_validation_vs_test=spearman_correlation(
            [r.val_accuracy for r in rows], test
        ),
        n_iterations=len(rows),
    )


# -- sweep ------------------------------------------------------------------------


@dataclass
class SweepConfig:
    """Grid and per-cell settings for a poisoning sweep."""

    kinds: tuple = ("corner_tag", "intensity_shift", "color_shift")
    alphas: tuple = (0.6, 0.8, 1.0)
    seeds: tuple = (0, 1)
    base: BaseSampleSpec = field(default_factory=BaseSampleSpec)
    full_sizes: dict = field(default_factory=lambda: {"train": 2400, "test_unpoisoned": 400})
    poison_train_size: int = 800
    poison_validation_size: int = 200
    train: TrainConfig = field(default_factory=TrainConfig)
    oracle_train: TrainConfig = field(default_factory=TrainConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)

    def __post_init__(self):
        if not self.kinds or not self.alphas or not self.seeds:
            raise ConfigurationError("sweep: kinds, alphas, and seeds must be non-empty")


@dataclass
class SweepRow:
    kind: str
    alpha: float
    seed: int
    uncorrected_acc: float | None
    corrected_acc: float | None
    oracle_acc: float | None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "alpha": self.alpha,
            "seed": self.seed,
            "uncorrected_acc": self.uncorrected_acc,
            "corrected_acc": self.corrected_acc,
            "oracle_acc": self.oracle_acc,
            "error": self.error,
        }


@dataclass
class SweepResult:
    rows: list[SweepRow]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["kind", "alpha", "seed", "uncorrected_acc", "corrected_acc", "oracle_acc"]
            )
            for r in self.rows:
                writer.writerow(
                    [
                        r.kind,
                        repr(float(r.alpha)),
                        r.seed,
                        "" if r.uncorrected_acc is None else repr(r.uncorrected_acc),
                        "" if r.corrected_acc is None else repr(r.corrected_acc),
                        "" if r.oracle_acc is None else repr(r.oracle_acc),
                    ]
                )

    def plot_data(self) -> dict:
        """Mean accuracies per (kind, alpha), ready for plotting."""
        out: dict = {}
        for kind in sorted({r.kind for r in self.rows}):
            kind_rows = [r for r in self.rows if r.kind == kind and r.error is None]
            alphas = sorted({float(r.alpha) for r in kind_rows})
            out[kind] = {
                "alphas": alphas,
                "uncorrected": [
                    float(np.mean([r.uncorrected_acc for r in kind_rows if r.alpha == a]))
                    for a in alphas
                ],
                "corrected": [
                    float(np.mean([r.corrected_acc for r in kind_rows if r.alpha == a]))
                    for a in alphas
                ],
                "oracle": [
                    float(np.mean([r.oracle_acc for r in kind_rows if r.alpha == a]))
                    for a in alphas
                ],
            }
        return out

    def save_plot_data(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.plot_data(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def run_sweep_cell(config: SweepConfig, kind: str, alpha: float, seed: int) -> SweepRow:
    """One grid cell: poison, train uncorrected, distill, compare on the
    unpoisoned test split."""
    full = build_full_dataset(config.base, kind, config.full_sizes, seed=seed)
    oracle = OracleTeacher.from_dataset(full, replace(config.oracle_train, seed=seed))
    poisoned = build_poisoned_subset(
        full,
        PoisonSpec(
            alpha=alpha,
            train_size=config.poison_train_size,
            validation_size=config.poison_validation_size,
            seed=seed,
        ),
    )
    test_X, test_y = poisoned.split_arrays("test_unpoisoned")
    uncorrected = train_classifier(poisoned, "train", replace(config.train, seed=seed))
    flow = train_generator(poisoned, "train", replace(config.flow, seed=seed))
    distill_cfg = replace(config.distill, seed=seed)
    corrected, _reports = run_cfkd(uncorrected, flow, poisoned, oracle, distill_cfg)
    return SweepRow(
        kind=kind,
        alpha=float(alpha),
        seed=seed,
        uncorrected_acc=uncorrected.accuracy(test_X, test_y),
        corrected_acc=corrected.accuracy(test_X, test_y),
        oracle_acc=oracle.test_accuracy,
    )


def sweep_alpha(config: SweepConfig) -> SweepResult:
    """Run the full grid; a failed cell is recorded and does not stop the sweep."""
    rows = []
    for kind in config.kinds:
        for alpha in config.alphas:
            for seed in config.seeds:
                try:
                    rows.append(run_sweep_cell(config, kind, float(alpha), int(seed)))
                except Exception as exc:  # noqa: BLE001 - sweep must survive cell failures
                    logger.exception(
                        "sweep cell failed: kind=%s alpha=%s seed=%s", kind, alpha, seed
                    )
                    rows.append(
                        SweepRow(
                            kind=kind,
                            alpha=float(alpha),
                            seed=int(seed),
                            uncorrected_acc=None,
                            corrected_acc=None,
                            oracle_acc=None,
                            error=f"{type(exc).__name__}: {exc}",
                        )
                    )
    return SweepResult(rows=rows)
