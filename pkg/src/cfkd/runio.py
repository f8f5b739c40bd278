"""Run directory layout and persistence.

A run directory is the only shared state between the training loop and the
HTTP service: the loop writes records, pending batches, cluster views,
checkpoints, and reports; the service reads them and appends verdicts to the
store. Every state transition is persisted (atomic rename) before the loop
moves on, so a crashed or restarted process resumes from a coherent view.

Layout::

    run_dir/
      config.json      run configuration as given
      state.json       {run_id, state, iteration, stage, updated_at}
      verdicts.jsonl   append-only verdict log
      records/         per-phase records JSONL + PNG images
      pending.json     ids awaiting verdicts + the records file they live in
      clusters.json    current cluster view (cluster teacher only)
      checkpoints/     per-iteration classifier checkpoints
      reports.csv      one row per iteration (stable column set)
      reports.json     full iteration reports
      correlations.json evaluation output
"""

from __future__ import annotations

import csv
import io
import json
import os
from datetime import datetime, timezone
from pathlib import Path

from .errors import InputError
from .teachers import ClusterView, VerdictStore

RUN_STATES = (
    "idle",
    "generating",
    "awaiting_feedback",
    "retraining",
    "done",
    "aborted",
)

REPORT_CSV_COLUMNS = (
    "iteration",
    "generated",
    "converged",
    "accepted",
    "feedback_accuracy",
    "val_accuracy",
    "unpoisoned_test_accuracy",
)


def _write_json_atomic(path: Path, payload) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


class RunDir:
    """Handle on one run directory; see module docstring for the layout."""

    def __init__(self, path):
        self.path = Path(path)

    @classmethod
    def create(cls, path, run_id: str, config: dict | None = None) -> "RunDir":
        run = cls(path)
        run.path.mkdir(parents=True, exist_ok=True)
        (run.path / "records").mkdir(exist_ok=True)
        (run.path / "checkpoints").mkdir(exist_ok=True)
        _write_json_atomic(run.path / "config.json", config or {})
        run.set_state("idle", iteration=0, run_id=run_id)
        return run

    @classmethod
    def open(cls, path) -> "RunDir":
        run = cls(path)
        if not (run.path / "state.json").exists():
            raise InputError(f"{path}: not a run directory (no state.json)")
        return run

    @property
    def run_id(self) -> str:
        return self.state()["run_id"]

    # -- state ---------------------------------------------------------------

    def state(self) -> dict:
        with open(self.path / "state.json") as fh:
            return json.load(fh)

    def set_state(self, state: str, iteration: int, stage: str | None = None, run_id: str | None = None) -> None:
        if state not in RUN_STATES:
            raise InputError(f"unknown run state {state!r}")
        if run_id is None:
            run_id = self.state()["run_id"]
        _write_json_atomic(
            self.path / "state.json",
            {
                "run_id": run_id,
                "state": state,
                "iteration": int(iteration),
                "stage": stage,
                "updated_at": datetime.now(timezone.utc).isoformat(),
            },
        )

    # -- verdicts and pending ---------------------------------------------------

    def verdict_store(self) -> VerdictStore:
        return VerdictStore(self.path / "verdicts.jsonl")

    def publish_pending(self, stage: str, records_file: str, record_ids: list[str]) -> None:
        _write_json_atomic(
            self.path / "pending.json",
            {"stage": stage, "records_file": records_file, "record_ids": list(record_ids)},
        )

    def pending(self) -> dict:
        p = self.path / "pending.json"
        if not p.exists():
            return {"stage": None, "records_file": None, "record_ids": []}
        with open(p) as fh:
            return json.load(fh)

    def publish_clusters(self, view: ClusterView | None) -> None:
        target = self.path / "clusters.json"
        if view is None:
            if target.exists():
                target.unlink()
            return
        _write_json_atomic(target, view.to_json())

    def clusters(self) -> ClusterView | None:
        target = self.path / "clusters.json"
        if not target.exists():
            return None
        with open(target) as fh:
            return ClusterView.from_json(json.load(fh))

    # -- reports -----------------------------------------------------------------

    def write_reports(self, reports: list) -> None:
        rows = [r.to_dict() for r in reports]
        _write_json_atomic(self.path / "reports.json", rows)
        (self.path / "reports.csv").write_text(reports_csv_text(reports))

    def reports(self) -> list[dict]:
        p = self.path / "reports.json"
        if not p.exists():
            return []
        with open(p) as fh:
            return json.load(fh)

    def write_correlations(self, payload: dict) -> None:
        _write_json_atomic(self.path / "correlations.json", payload)

    def checkpoint_path(self, iteration: int) -> Path:
        return self.path / "checkpoints" / f"iter_{iteration:03d}.ckpt"

    def records_path(self, name: str) -> Path:
        return self.path / "records" / name


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def reports_csv_text(reports: list) -> str:
    """Render iteration reports with the stable column set."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_CSV_COLUMNS)
    for r in reports:
        d = r.to_dict() if hasattr(r, "to_dict") else dict(r)
        writer.writerow(
            [
                _csv_cell(d["iteration"]),
                _csv_cell(d["generated"]),
                _csv_cell(d["converged"]),
                _csv_cell(d["accepted"]),
                _csv_cell(d["feedback_accuracy"]),
                _csv_cell(d["val_accuracy"]),
                _csv_cell(d["unpoisoned_test_accuracy"]),
            ]
        )
    return buf.getvalue()
