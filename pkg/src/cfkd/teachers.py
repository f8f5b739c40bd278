"""Teachers that judge counterfactuals, and the verdict log they feed.

A verdict says whether a counterfactual truly changed class content
("true_counterfactual") or merely toggled a confounder
("false_counterfactual"). Three sources:

* oracle: a classifier trained on unpoisoned data judges by argmax.
* cluster: a 2-d embedding of latent differences is shown to a person who
  selects boxes; points inside any box are judged false.
* human: per-pair accept/reject decisions, collected through the verdict
  store (typically via the HTTP service) while the training loop blocks.

The store is an append-only JSONL file; the first verdict per record wins
and later writers get DuplicateVerdictError. A file lock makes appends safe
across processes.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from filelock import FileLock
from sklearn.manifold import TSNE

from .classifier import ImageClassifier, train_classifier
from .counterfactual import CounterfactualRecord
from .errors import (
    ConfigurationError,
    DuplicateVerdictError,
    InputError,
    TeacherSessionError,
)

TRUE_CF = "true_counterfactual"
FALSE_CF = "false_counterfactual"
JUDGMENTS = (TRUE_CF, FALSE_CF)
VERDICT_SOURCES = ("oracle", "human", "cluster")


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class Verdict:
    record_id: str
    judgment: str
    source: str
    timestamp: str

    def __post_init__(self):
        if self.judgment not in JUDGMENTS:
            raise InputError(
                f"verdict.judgment: expected one of {list(JUDGMENTS)}, got {self.judgment!r}"
            )
        if self.source not in VERDICT_SOURCES:
            raise InputError(
                f"verdict.source: expected one of {list(VERDICT_SOURCES)}, got {self.source!r}"
            )


def make_verdict(record_id: str, judgment: str, source: str) -> Verdict:
    return Verdict(record_id=record_id, judgment=judgment, source=source, timestamp=_now_iso())


class VerdictStore:
    """Append-only verdict log (JSONL), first verdict per record wins.

    Appends take a file lock and re-read the log first, so concurrent
    writers (training loop and HTTP service) cannot both win.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._lock = FileLock(str(self.path) + ".lock")

    def _read(self) -> dict[str, Verdict]:
        out: dict[str, Verdict] = {}
        if not self.path.exists():
            return out
        with open(self.path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                v = Verdict(
                    record_id=row["record_id"],
                    judgment=row["judgment"],
                    source=row["source"],
                    timestamp=row["timestamp"],
                )
                out.setdefault(v.record_id, v)
        return out

    def all(self) -> dict[str, Verdict]:
        return self._read()

    def get(self, record_id: str) -> Verdict | None:
        return self._read().get(record_id)

    def add(self, verdict: Verdict) -> None:
        with self._lock:
            existing = self._read()
            if verdict.record_id in existing:
                raise DuplicateVerdictError(
                    f"record {verdict.record_id} already has a verdict "
                    f"({existing[verdict.record_id].judgment})"
                )
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a") as fh:
                fh.write(
                    json.dumps(
                        {
                            "record_id": verdict.record_id,
                            "judgment": verdict.judgment,
                            "source": verdict.source,
                            "timestamp": verdict.timestamp,
                        }
                    )
                    + "\n"
                )

    def missing(self, record_ids: list[str]) -> list[str]:
        have = self._read()
        return [rid for rid in record_ids if rid not in have]


class OracleTeacher:
    """Judges a counterfactual by whether an unpoisoned classifier agrees
    that it now shows the target class."""

    source = "oracle"

    def __init__(self, oracle: ImageClassifier, margin: float = 0.0, test_accuracy: float | None = None):
        if margin < 0 or margin >= 1:
            raise ConfigurationError(f"oracle.margin: must lie in [0, 1), got {margin}")
        self.oracle = oracle
        self.margin = float(margin)
        self.test_accuracy = test_accuracy

    @classmethod
    def from_dataset(cls, full_dataset, train_config, margin: float = 0.0) -> "OracleTeacher":
        """Train the oracle on the full (unpoisoned) train split and record
        its unpoisoned test accuracy."""
        oracle = train_classifier(full_dataset, "train", train_config)
        X, y = full_dataset.split_arrays("test_unpoisoned")
        acc = oracle.accuracy(X, y) if len(y) else None
        return cls(oracle, margin=margin, test_accuracy=acc)

    def judge(self, record: CounterfactualRecord) -> Verdict:
        [v] = self.judge_batch([record])
        return v

    def judge_batch(self, records: list[CounterfactualRecord]) -> list[Verdict]:
        for rec in records:
            if rec.status != "converged":
                raise InputError(
                    f"oracle teacher: record {rec.record_id} did not converge"
                )
        if not records:
            return []
        X = np.stack([rec.x_prime for rec in records])
        probs = self.oracle.predict_proba(X)
        verdicts = []
        for i, rec in enumerate(records):
            pred = int(np.argmax(probs[i]))
            ok = pred == rec.y_target
            if ok and self.margin > 0:
                others = np.delete(probs[i], rec.y_target)
                ok = probs[i][rec.y_target] - float(others.max()) >= self.margin
            verdicts.append(
                make_verdict(rec.record_id, TRUE_CF if ok else FALSE_CF, self.source)
            )
        return verdicts


# -- cluster teacher -------------------------------------------------------------


@dataclass
class ClusterView:
    """2-d embedding of latent differences, one point per converged record."""

    record_ids: list[str]
    coords: np.ndarray
    labels: np.ndarray
    seed: int

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "points": [
                {
                    "record_id": rid,
                    "x": float(self.coords[i, 0]),
                    "y": float(self.coords[i, 1]),
                    "label": int(self.labels[i]),
                }
                for i, rid in enumerate(self.record_ids)
            ],
        }

    @classmethod
    def from_json(cls, payload: dict) -> "ClusterView":
        pts = payload["points"]
        return cls(
            record_ids=[p["record_id"] for p in pts],
            coords=np.array([[p["x"], p["y"]] for p in pts], dtype=np.float64).reshape(
                len(pts), 2
            ),
            labels=np.array([p["label"] for p in pts], dtype=np.int64),
            seed=int(payload.get("seed", 0)),
        )


def cluster_embed(records: list[CounterfactualRecord], seed: int = 0, perplexity: float = 30.0) -> ClusterView:
    """Embed converged records' delta_z into 2-d with t-SNE.

    Deterministic for a fixed seed (PCA init). Degenerate input where all
    latent differences coincide maps every point to the origin instead of
    letting the PCA whitening divide by zero.
    """
    usable = [rec for rec in records if rec.status == "converged"]
    if len(usable) < 2:
        raise ConfigurationError(
            f"cluster_embed: need at least 2 converged records, got {len(usable)}"
        )
    deltas = np.stack([rec.delta_z for rec in usable])
    ids = [rec.record_id for rec in usable]
    labels = np.array([rec.y for rec in usable], dtype=np.int64)
    if float(deltas.var(axis=0).sum()) == 0.0:
        coords = np.zeros((len(usable), 2))
        return ClusterView(record_ids=ids, coords=coords, labels=labels, seed=seed)
    eff_perplexity = min(float(perplexity), max(0.5, (len(usable) - 1) / 3.0))
    tsne = TSNE(
        n_components=2,
        perplexity=eff_perplexity,
        init="pca",
        random_state=int(seed) & 0x7FFFFFFF,
    )
    coords = tsne.fit_transform(deltas).astype(np.float64)
    return ClusterView(record_ids=ids, coords=coords, labels=labels, seed=seed)


def apply_cluster_selection(
    view: ClusterView, boxes: list[dict], source: str = "cluster"
) -> list[Verdict]:
    """Turn box selections over the embedding into verdicts.

    Each box is {x0, y0, x1, y1} with x0 <= x1 and y0 <= y1 (edges
    inclusive). Points inside any box are judged false counterfactuals,
    everything else true. Pure geometry: invariant under translating both
    points and boxes.
    """
    for b, box in enumerate(boxes):
        for key in ("x0", "y0", "x1", "y1"):
            if key not in box:
                raise InputError(f"boxes[{b}]: missing field {key}")
        if box["x0"] > box["x1"] or box["y0"] > box["y1"]:
            raise InputError(
                f"boxes[{b}]: degenerate box, need x0 <= x1 and y0 <= y1"
            )
    verdicts = []
    for i, rid in enumerate(view.record_ids):
        px, py = float(view.coords[i, 0]), float(view.coords[i, 1])
        inside = any(
            box["x0"] <= px <= box["x1"] and box["y0"] <= py <= box["y1"]
            for box in boxes
        )
        verdicts.append(make_verdict(rid, FALSE_CF if inside else TRUE_CF, source))
    return verdicts


class ClusterTeacher:
    """Non-interactive cluster teacher: applies pre-chosen boxes per batch.

    Useful for scripted runs and tests; the interactive variant collects the
    boxes through the HTTP service instead.
    """

    source = "cluster"

    def __init__(self, boxes: list[dict], seed: int = 0):
        self.boxes = boxes
        self.seed = seed

    def judge_batch(self, records: list[CounterfactualRecord]) -> list[Verdict]:
        if not records:
            return []
        view = cluster_embed(records, seed=self.seed)
        return apply_cluster_selection(view, self.boxes, source=self.source)


# -- interactive session ----------------------------------------------------------


def await_verdicts(
    store: VerdictStore,
    record_ids: list[str],
    timeout_s: float = 3600.0,
    poll_interval_s: float = 0.2,
) -> list[Verdict]:
    """Block until the store holds a verdict for every id, then return them
    in record order. Resumable: verdicts already stored count immediately.
    On timeout, raises TeacherSessionError; partial verdicts stay persisted.
    """
    deadline = time.monotonic() + float(timeout_s)
    while True:
        have = store.all()
        missing = [rid for rid in record_ids if rid not in have]
        if not missing:
            return [have[rid] for rid in record_ids]
        if time.monotonic() >= deadline:
            raise TeacherSessionError(
                f"feedback session timed out with {len(missing)} of "
                f"{len(record_ids)} verdicts missing (first: {missing[0]})"
            )
        time.sleep(poll_interval_s)


class InteractiveTeacher:
    """Blocks on the verdict store until someone (UI or script) has judged
    every converged record in the batch."""

    def __init__(
        self,
        store: VerdictStore,
        source: str = "human",
        timeout_s: float = 3600.0,
        poll_interval_s: float = 0.2,
    ):
        if source not in ("human", "cluster"):
            raise ConfigurationError(
                f"interactive teacher source must be human or cluster, got {source!r}"
            )
        self.store = store
        self.source = source
        self.timeout_s = timeout_s
        self.poll_interval_s = poll_interval_s

    def judge_batch(self, records: list[CounterfactualRecord]) -> list[Verdict]:
        ids = [rec.record_id for rec in records if rec.status == "converged"]
        return await_verdicts(self.store, ids, self.timeout_s, self.poll_interval_s)
