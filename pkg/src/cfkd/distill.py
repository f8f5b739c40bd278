"""Counterfactual knowledge distillation: the iterative correction loop.

Each iteration explains a fresh sample of training images, asks the teacher
which counterfactuals are real class changes, appends every judged
counterfactual to the training pool under its selected label (the target
class when true, the original label when false), retrains the student, and
then measures feedback accuracy on counterfactuals of validation images:
the fraction the teacher accepts. The checkpoint with the highest feedback
accuracy wins, later iterations breaking ties.
"""

from __future__ import annotations

import logging
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .classifier import ImageClassifier, train_classifier
from .counterfactual import SearchConfig, batch_explain, save_records
from .datasets import LabeledDataset
from .errors import ConfigurationError, TeacherSessionError
from .runio import RunDir
from .teachers import TRUE_CF, Verdict, cluster_embed
from .validation import check_non_negative, check_positive

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Classifier training settings (initial fit and per-iteration retrain)."""

    architecture: str = "cnn"
    conv_channels: tuple = (16, 32)
    epochs: int = 12
    batch_size: int = 64
    learning_rate: float = 0.01
    momentum: float = 0.9
    fine_tune: bool = False
    seed: int = 0

    def __post_init__(self):
        check_non_negative(self.epochs, "train.epochs", integer=True)
        check_positive(self.batch_size, "train.batch_size", integer=True)
        check_positive(self.learning_rate, "train.learning_rate")
        check_non_negative(self.momentum, "train.momentum")


@dataclass
class DistillConfig:
    n_iterations: int = 5
    samples_per_iteration: int = 100
    feedback_samples: int = 100
    accumulate: bool = True
    # Fine-tuning wants a cooler rate than the initial fit: warm starts at the
    # full 0.01 can kick the student out of its minimum and destabilize later
    # iterations.
    retrain: TrainConfig = field(
        default_factory=lambda: TrainConfig(epochs=4, fine_tune=True, learning_rate=0.002)
    )
    search: SearchConfig = field(default_factory=SearchConfig)
    seed: int = 0

    def __post_init__(self):
        check_non_negative(self.n_iterations, "distill.n_iterations", integer=True)
        check_positive(self.samples_per_iteration, "distill.samples_per_iteration", integer=True)
        check_positive(self.feedback_samples, "distill.feedback_samples", integer=True)


@dataclass
class IterationReport:
    """Counts and accuracies for one iteration.

    generated/converged/failed/accepted/rejected describe the augmentation
    batch; feedback_* describe the measurement batch drawn from the
    validation split after retraining. feedback_accuracy is None when the
    measurement batch produced no judged counterfactuals.
    """

    iteration: int
    generated: int
    converged: int
    failed: int
    accepted: int
    rejected: int
    feedback_generated: int
    feedback_converged: int
    feedback_accuracy: float | None
    val_accuracy: float
    unpoisoned_test_accuracy: float
    checkpoint_path: str | None = None

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "generated": self.generated,
            "converged": self.converged,
            "failed": self.failed,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "feedback_generated": self.feedback_generated,
            "feedback_converged": self.feedback_converged,
            "feedback_accuracy": self.feedback_accuracy,
            "val_accuracy": self.val_accuracy,
            "unpoisoned_test_accuracy": self.unpoisoned_test_accuracy,
            "checkpoint_path": self.checkpoint_path,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IterationReport":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


def feedback_accuracy(verdicts: list[Verdict]) -> float | None:
    """Fraction of verdicts accepting the counterfactual; None when empty."""
    if not verdicts:
        return None
    good = sum(1 for v in verdicts if v.judgment == TRUE_CF)
    return good / len(verdicts)


def selected_label(record, verdict: Verdict) -> int:
    """Label a judged counterfactual trains under: the target class when the
    teacher accepts it, the original label otherwise."""
    return int(record.y_target if verdict.judgment == TRUE_CF else record.y)


def select_model(reports: list[IterationReport]) -> IterationReport | None:
    """Pick the iteration with maximal feedback accuracy (ties: latest).

    When no iteration has a defined feedback accuracy, falls back to the
    last one with a warning. Empty report list returns None.
    """
    if not reports:
        return None
    defined = [r for r in reports if r.feedback_accuracy is not None]
    if not defined:
        logger.warning(
            "select_model: no iteration has a defined feedback accuracy; "
            "falling back to the last checkpoint"
        )
        return reports[-1]
    best = defined[0]
    for r in defined[1:]:
        if r.feedback_accuracy >= best.feedback_accuracy:
            best = r
    return best


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _sample_indices(rng: np.random.Generator, pool: np.ndarray, k: int) -> np.ndarray:
    take = min(k, pool.size)
    if take < k:
        logger.info("sampling clamped to split size %d (requested %d)", pool.size, k)
    pick = rng.choice(pool.size, size=take, replace=False)
    return pool[np.sort(pick)]


def _judge(teacher, records, run_dir, stage, records_file, cluster_seed):
    """Publish the batch for interactive teachers and collect verdicts."""
    converged = [r for r in records if r.status == "converged"]
    if run_dir is not None:
        run_dir.publish_pending(stage, records_file, [r.record_id for r in converged])
        if getattr(teacher, "source", None) == "cluster" and len(converged) >= 2:
            run_dir.publish_clusters(cluster_embed(converged, seed=cluster_seed))
        else:
            run_dir.publish_clusters(None)
    verdicts = teacher.judge_batch(converged)
    if run_dir is not None:
        store = run_dir.verdict_store()
        have = store.all()
        for v in verdicts:
            if v.record_id not in have:
                store.add(v)
    return converged, verdicts


def run_cfkd(
    classifier: ImageClassifier,
    generator,
    dataset: LabeledDataset,
    teacher,
    config: DistillConfig,
    run_dir: RunDir | None = None,
) -> tuple[ImageClassifier, list[IterationReport]]:
    """Run the distillation loop and return (best model, iteration reports).

    The input classifier is not mutated. With n_iterations=0 the returned
    model is an unchanged copy. Teacher timeouts abort the run after
    persisting everything collected so far.
    """
    for split in ("validation", "test_unpoisoned"):
        if dataset.indices(split).size == 0:
            raise ConfigurationError(f"run_cfkd: dataset has an empty {split} split")
    student = classifier.clone_fitted()
    reports: list[IterationReport] = []
    if config.n_iterations == 0:
        if run_dir is not None:
            run_dir.write_reports(reports)
            run_dir.set_state("done", iteration=0)
        return student, reports

    tmp_ctx = None
    if run_dir is None:
        tmp_ctx = tempfile.TemporaryDirectory(prefix="cfkd-ckpt-")
        ckpt_dir = Path(tmp_ctx.name)
    else:
        ckpt_dir = run_dir.path / "checkpoints"

    train_idx = dataset.indices("train")
    val_X, val_y = dataset.split_arrays("validation")
    test_X, test_y = dataset.split_arrays("test_unpoisoned")
    aug_images: list[np.ndarray] = []
    aug_labels: list[int] = []

    try:
        for it in range(1, config.n_iterations + 1):
            if run_dir is not None:
                run_dir.set_state("generating", iteration=it, stage="augment")
            rng = np.random.default_rng([config.seed, it, 0])
            idx = _sample_indices(rng, train_idx, config.samples_per_iteration)
            ids = [f"it{it:02d}-a{j:04d}" for j in range(idx.size)]
            records = batch_explain(
                student, generator, dataset.images[idx], dataset.labels[idx],
                config.search, record_ids=ids,
            )
            records_file = f"it{it:02d}_augment.jsonl"
            if run_dir is not None:
                save_records(records, run_dir.path / "records", records_file)
            if run_dir is not None:
                run_dir.set_state("awaiting_feedback", iteration=it, stage="augment")
            converged, verdicts = _judge(
                teacher, records, run_dir, "augment",
                f"records/{records_file}", _derive_seed(config.seed, 7, it, 0),
            )
            accepted = 0
            by_id = {v.record_id: v for v in verdicts}
            for rec in converged:
                v = by_id[rec.record_id]
                accepted += int(v.judgment == TRUE_CF)
                aug_images.append(rec.x_prime)
                aug_labels.append(selected_label(rec, v))

            n_conv = len(converged)
            if n_conv == 0:
                report = IterationReport(
                    iteration=it,
                    generated=len(records),
                    converged=0,
                    failed=len(records),
                    accepted=0,
                    rejected=0,
                    feedback_generated=0,
                    feedback_converged=0,
                    feedback_accuracy=None,
                    val_accuracy=student.accuracy(val_X, val_y),
                    unpoisoned_test_accuracy=student.accuracy(test_X, test_y),
                    checkpoint_path=None,
                )
                reports.append(report)
                if run_dir is not None:
                    run_dir.write_reports(reports)
                logger.info("iteration %d: no converged counterfactuals, skipping retrain", it)
                continue

            if run_dir is not None:
                run_dir.set_state("retraining", iteration=it, stage="augment")
            if config.accumulate:
                use_images, use_labels = aug_images, aug_labels
            else:
                use_images = aug_images[-n_conv:]
                use_labels = aug_labels[-n_conv:]
            aug_ds = dataset.with_training_samples(
                np.stack(use_images), np.array(use_labels, dtype=np.int64)
            )
            retrain_cfg = replace(config.retrain, seed=_derive_seed(config.seed, 11, it))
            student = train_classifier(aug_ds, "train", retrain_cfg, init=student)

            if run_dir is not None:
                run_dir.set_state("generating", iteration=it, stage="feedback")
            rng_f = np.random.default_rng([config.seed, it, 1])
            vidx = _sample_indices(rng_f, dataset.indices("validation"), config.feedback_samples)
            fids = [f"it{it:02d}-f{j:04d}" for j in range(vidx.size)]
            f_records = batch_explain(
                student, generator, dataset.images[vidx], dataset.labels[vidx],
                config.search, record_ids=fids,
            )
            f_file = f"it{it:02d}_feedback.jsonl"
            if run_dir is not None:
                save_records(f_records, run_dir.path / "records", f_file)
                run_dir.set_state("awaiting_feedback", iteration=it, stage="feedback")
            f_converged, f_verdicts = _judge(
                teacher, f_records, run_dir, "feedback",
                f"records/{f_file}", _derive_seed(config.seed, 7, it, 1),
            )
            fa = feedback_accuracy(f_verdicts)

            ckpt_path = str(Path(ckpt_dir) / f"iter_{it:03d}.ckpt")
            student.save(ckpt_path)
            report = IterationReport(
                iteration=it,
                generated=len(records),
                converged=n_conv,
                failed=len(records) - n_conv,
                accepted=accepted,
                rejected=n_conv - accepted,
                feedback_generated=len(f_records),
                feedback_converged=len(f_converged),
                feedback_accuracy=fa,
                val_accuracy=student.accuracy(val_X, val_y),
                unpoisoned_test_accuracy=student.accuracy(test_X, test_y),
                checkpoint_path=ckpt_path,
            )
            reports.append(report)
            if run_dir is not None:
                run_dir.write_reports(reports)
            logger.info(
                "iteration %d: %d/%d converged, %d accepted, feedback accuracy %s",
                it, n_conv, len(records), accepted,
                "n/a" if fa is None else f"{fa:.3f}",
            )
    except TeacherSessionError:
        if run_dir is not None:
            run_dir.write_reports(reports)
            run_dir.set_state("aborted", iteration=len(reports))
        if tmp_ctx is not None:
            tmp_ctx.cleanup()
        raise

    best = select_model(reports)
    if best is not None and best.checkpoint_path is not None:
        student = ImageClassifier.load(best.checkpoint_path)
    if tmp_ctx is not None:
        tmp_ctx.cleanup()
    if run_dir is not None:
        run_dir.set_state("done", iteration=config.n_iterations)
    return student, reports
