"""HTTP service for interactive feedback sessions.

The service is a read-mostly view over run directories plus one write path:
appending verdicts. It never touches model state; the training loop watches
the verdict store and carries on once the batch is fully judged. Runs live
under <data_dir>/runs/<run_id>, with data_dir from the CFKD_DATA_DIR
environment variable when not passed explicitly.
"""

from __future__ import annotations

import base64
import json
import os
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field

from .errors import DuplicateVerdictError, InputError
from .runio import RunDir
from .teachers import apply_cluster_selection, make_verdict

DEFAULT_PORT = 8765


class FeedbackBody(BaseModel):
    record_id: str
    judgment: Literal["true_counterfactual", "false_counterfactual"]
    source: Literal["human", "oracle", "cluster"] = "human"


class SelectionBox(BaseModel):
    x0: float
    y0: float
    x1: float
    y1: float


class ClusterSelectionBody(BaseModel):
    boxes: list[SelectionBox] = Field(default_factory=list)
    source: Literal["human", "cluster"] = "cluster"


def resolve_data_dir(data_dir=None) -> Path:
    if data_dir is not None:
        return Path(data_dir)
    env = os.environ.get("CFKD_DATA_DIR")
    if env:
        return Path(env)
    return Path.cwd() / "cfkd-data"


def _record_rows(run: RunDir, records_file: str) -> dict[str, dict]:
    path = run.path / records_file
    if not path.exists():
        return {}
    rows = {}
    with open(path) as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                rows[row["record_id"]] = row
    return rows


def _find_record(run: RunDir, record_id: str) -> dict | None:
    pending = run.pending()
    if pending["records_file"]:
        row = _record_rows(run, pending["records_file"]).get(record_id)
        if row is not None:
            return row
    records_dir = run.path / "records"
    if records_dir.is_dir():
        for path in sorted(records_dir.glob("*.jsonl")):
            row = _record_rows(run, f"records/{path.name}").get(record_id)
            if row is not None:
                return row
    return None


def _png_b64(path: Path) -> str:
    return base64.b64encode(path.read_bytes()).decode("ascii")


def create_app(data_dir=None, ui_dir=None) -> FastAPI:
    root = resolve_data_dir(data_dir)
    app = FastAPI(title="cfkd feedback service")

    @app.exception_handler(RequestValidationError)
    async def _validation_to_400(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    def _run(run_id: str) -> RunDir:
        path = root / "runs" / run_id
        if not (path / "state.json").exists():
            raise HTTPException(status_code=404, detail=f"unknown run {run_id!r}")
        return RunDir(path)

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        return _run(run_id).state()

    @app.get("/runs/{run_id}/pending")
    def get_pending(run_id: str, limit: int | None = Query(default=None, ge=1)):
        run = _run(run_id)
        pending = run.pending()
        if not pending["records_file"]:
            return {"stage": None, "pairs": []}
        store = run.verdict_store()
        unanswered = store.missing(pending["record_ids"])
        if limit is not None:
            unanswered = unanswered[:limit]
        rows = _record_rows(run, pending["records_file"])
        pairs = []
        for rid in unanswered:
            row = rows.get(rid)
            if row is None:
                continue
            rec_dir = (run.path / pending["records_file"]).parent
            pairs.append(
                {
                    "record_id": rid,
                    "y": row["y"],
                    "y_target": row["y_target"],
                    "final_confidence": row["final_confidence"],
                    "x_png": _png_b64(rec_dir / row["x_path"]),
                    "x_prime_png": _png_b64(rec_dir / row["x_prime_path"]),
                }
            )
        return {"stage": pending["stage"], "pairs": pairs}

    @app.post("/runs/{run_id}/feedback", status_code=204)
    def post_feedback(run_id: str, body: FeedbackBody):
        run = _run(run_id)
        if _find_record(run, body.record_id) is None:
            raise HTTPException(
                status_code=404, detail=f"unknown record {body.record_id!r}"
            )
        verdict = make_verdict(body.record_id, body.judgment, body.source)
        try:
            run.verdict_store().add(verdict)
        except DuplicateVerdictError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return Response(status_code=204)

    @app.get("/runs/{run_id}/clusters")
    def get_clusters(run_id: str):
        run = _run(run_id)
        view = run.clusters()
        if view is None:
            raise HTTPException(status_code=404, detail="no cluster view published")
        payload = view.to_json()
        judged = run.verdict_store().all()
        for point in payload["points"]:
            point["judged"] = point["record_id"] in judged
        return payload

    @app.post("/runs/{run_id}/cluster-selection")
    def post_cluster_selection(run_id: str, body: ClusterSelectionBody):
        run = _run(run_id)
        view = run.clusters()
        if view is None:
            raise HTTPException(status_code=404, detail="no cluster view published")
        boxes = [box.model_dump() for box in body.boxes]
        try:
            verdicts = apply_cluster_selection(view, boxes, source=body.source)
        except InputError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        store = run.verdict_store()
        created = skipped = 0
        for v in verdicts:
            try:
                store.add(v)
                created += 1
            except DuplicateVerdictError:
                skipped += 1
        return {"created": created, "skipped": skipped}

    @app.get("/runs/{run_id}/metrics")
    def get_metrics(run_id: str):
        run = _run(run_id)
        correlations = None
        cpath = run.path / "correlations.json"
        if cpath.exists():
            with open(cpath) as fh:
                correlations = json.load(fh)
        return {
            "state": run.state(),
            "reports": run.reports(),
            "correlations": correlations,
        }

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(data_dir=None, host: str = "127.0.0.1", port: int = DEFAULT_PORT, ui_dir=None) -> None:
    import uvicorn

    uvicorn.run(create_app(data_dir=data_dir, ui_dir=ui_dir), host=host, port=port)
