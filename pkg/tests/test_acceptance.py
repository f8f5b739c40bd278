"""Acceptance suite: one check per release criterion, one pass/fail line each.

Heavy artifacts (trained models, distillation runs) are built once per
session and shared across checks. Point CFKD_ACCEPTANCE_CACHE at a directory
to persist them between invocations; by default everything is rebuilt in the
test tmp dir. Expect the full suite to train a dozen models, so give it tens
of minutes on a laptop-class CPU.
"""

import base64
import importlib.util
import io
import os
import shutil
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import conftest
import numpy as np
import pytest
from fastapi.testclient import TestClient

from cfkd.classifier import ImageClassifier, train_classifier
from cfkd.counterfactual import SearchConfig, batch_explain, load_records
from cfkd.datasets import (
    CONFOUNDER_KINDS,
    BaseSampleSpec,
    PoisonSpec,
    build_full_dataset,
    build_poisoned_subset,
    load_image_png,
    poison_cell_counts,
    quantize_to_grid,
    render_confounder,
    save_image_png,
)
from cfkd.distill import DistillConfig, IterationReport, TrainConfig, run_cfkd
from cfkd.evaluation import spearman_correlation
from cfkd.flow import CouplingFlow, FlowConfig, train_generator
from cfkd.runio import RunDir
from cfkd.service import create_app
from cfkd.teachers import FALSE_CF, TRUE_CF, InteractiveTeacher, OracleTeacher

GOLDEN_DIR = Path(__file__).parent / "golden"

_spec = importlib.util.spec_from_file_location("golden_generate", GOLDEN_DIR / "generate.py")
golden_generate = importlib.util.module_from_spec(_spec)
_spec.loader.exec_module(golden_generate)

FULL_SIZES = {"train": 2400, "test_unpoisoned": 400}
POISON_TRAIN, POISON_VAL = 800, 200
ALPHAS = (0.6, 0.8, 1.0)
SEEDS_A = (0, 1, 2)
# single pre-registered seed for the kind x alpha grid
GRID_SEED = 1

_full_cache: dict = {}
_run_cache: dict = {}


def check(num: int, name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num} ({name}): {detail}"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, line


def full_dataset(kind: str, seed: int):
    key = (kind, seed)
    if key not in _full_cache:
        _full_cache[key] = build_full_dataset(BaseSampleSpec(), kind, FULL_SIZES, seed=seed)
    return _full_cache[key]


def poisoned_dataset(kind: str, alpha: float, seed: int):
    return build_poisoned_subset(
        full_dataset(kind, seed),
        PoisonSpec(alpha=alpha, train_size=POISON_TRAIN, validation_size=POISON_VAL, seed=seed),
    )


def _cached(root: Path, name: str, cls, builder):
    path = root / "models" / f"{name}.ckpt"
    if path.exists():
        return cls.load(path)
    model = builder()
    path.parent.mkdir(parents=True, exist_ok=True)
    model.save(path)
    return model


def classifier_for(root: Path, kind: str, alpha: float, seed: int) -> ImageClassifier:
    return _cached(
        root, f"clf_{kind}_a{alpha}_s{seed}", ImageClassifier,
        lambda: train_classifier(poisoned_dataset(kind, alpha, seed), "train", TrainConfig(seed=seed)),
    )


def flow_for(root: Path, kind: str, alpha: float, seed: int) -> CouplingFlow:
    return _cached(
        root, f"flow_{kind}_a{alpha}_s{seed}", CouplingFlow,
        lambda: train_generator(poisoned_dataset(kind, alpha, seed), "train", FlowConfig(seed=seed)),
    )


def oracle_for(root: Path, kind: str, seed: int) -> tuple[OracleTeacher, Path]:
    path = root / "models" / f"oracle_{kind}_s{seed}.ckpt"
    if path.exists():
        return OracleTeacher(ImageClassifier.load(path)), path
    teacher = OracleTeacher.from_dataset(full_dataset(kind, seed), TrainConfig(seed=seed))
    path.parent.mkdir(parents=True, exist_ok=True)
    teacher.oracle.save(path)
    return teacher, path


@dataclass
class CfkdRun:
    kind: str
    alpha: float
    seed: int
    path: Path
    reports: list
    uncorrected_test: float
    corrected_test: float
    oracle_ckpt: Path


def cfkd_run(root: Path, kind: str, alpha: float, seed: int) -> CfkdRun:
    run_id = f"{kind}_a{alpha}_s{seed}"
    if run_id in _run_cache:
        return _run_cache[run_id]
    ds = poisoned_dataset(kind, alpha, seed)
    test_X, test_y = ds.split_arrays("test_unpoisoned")
    clf = classifier_for(root, kind, alpha, seed)
    oracle, oracle_ckpt = oracle_for(root, kind, seed)
    run_path = root / "runs" / run_id
    model_path = run_path / "model.ckpt"

    reuse = False
    if model_path.exists():
        run = RunDir.open(run_path)
        reuse = run.state().get("state") == "done"
    if reuse:
        reports = [IterationReport.from_dict(d) for d in run.reports()]
        model = ImageClassifier.load(model_path)
    else:
        if run_path.exists():
            shutil.rmtree(run_path)
        flow = flow_for(root, kind, alpha, seed)
        run = RunDir.create(run_path, run_id, {"kind": kind, "alpha": alpha, "seed": seed})
        model, reports = run_cfkd(clf, flow, ds, oracle, DistillConfig(seed=seed), run_dir=run)
        model.save(model_path)

    bundle = CfkdRun(
        kind=kind, alpha=alpha, seed=seed, path=run_path, reports=reports,
        uncorrected_test=clf.accuracy(test_X, test_y),
        corrected_test=model.accuracy(test_X, test_y),
        oracle_ckpt=oracle_ckpt,
    )
    _run_cache[run_id] = bundle
    return bundle


@pytest.fixture(scope="module")
def work_root(tmp_path_factory) -> Path:
    env = os.environ.get("CFKD_ACCEPTANCE_CACHE")
    if env:
        root = Path(env)
        root.mkdir(parents=True, exist_ok=True)
        return root
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def runs_4a(work_root) -> list[CfkdRun]:
    return [cfkd_run(work_root, "intensity_shift", 1.0, s) for s in SEEDS_A]


@pytest.fixture(scope="module")
def grid_runs(work_root) -> dict:
    return {
        (kind, alpha): cfkd_run(work_root, kind, alpha, GRID_SEED)
        for kind in CONFOUNDER_KINDS
        for alpha in ALPHAS
    }


def test_criterion_1_flow_roundtrip_and_log_det(work_root):
    ds = poisoned_dataset("intensity_shift", 1.0, 0)
    flow = flow_for(work_root, "intensity_shift", 1.0, 0)
    X, _ = ds.split_arrays("train")
    X = X[:256]
    back = flow.inverse_transform(flow.transform(X))
    roundtrip_err = float(np.max(np.abs(back - X)))

    rng = np.random.default_rng(0)
    X2 = rng.uniform(0.05, 0.95, size=(64, 1, 1, 2))
    toy = CouplingFlow(
        input_shape=(1, 1, 2), num_coupling_layers=4, hidden_width=16,
        epochs=5, batch_size=32, seed=0,
    ).fit(X2)
    h = 1e-5
    worst_rel = 0.0
    for x in X2[:16]:
        J = np.empty((2, 2))
        for j in range(2):
            up, down = x.copy(), x.copy()
            up[0, 0, j] += h
            down[0, 0, j] -= h
            J[:, j] = (toy.transform(up) - toy.transform(down)) / (2 * h)
        fd = float(np.log(abs(np.linalg.det(J))))
        got = float(toy.log_det_jacobian(x))
        worst_rel = max(worst_rel, abs(got - fd) / max(1.0, abs(fd)))

    ok = roundtrip_err < 1e-4 and worst_rel <= 1e-3
    check(
        1, "flow round-trip", ok,
        f"max |decode(encode(x))-x| = {roundtrip_err:.2e} over 256 images; "
        f"worst log-det FD relative error = {worst_rel:.2e}",
    )


def test_criterion_2_counterfactual_contract(work_root):
    ds = poisoned_dataset("intensity_shift", 1.0, 0)
    clf = classifier_for(work_root, "intensity_shift", 1.0, 0)
    flow = flow_for(work_root, "intensity_shift", 1.0, 0)
    X, y = ds.split_arrays("train")
    rng = np.random.default_rng([2, 0])
    idx = np.sort(rng.choice(len(y), size=100, replace=False))
    records = batch_explain(clf, flow, X[idx], y[idx], SearchConfig())

    converged = [r for r in records if r.status == "converged"]
    rate = len(converged) / len(records)
    min_conf = min((r.final_confidence for r in converged), default=0.0)
    max_steps = max((r.steps_taken for r in converged), default=0)
    # stored confidences must also match a fresh batched recompute
    agree = False
    if converged:
        probs = clf.predict_proba(np.stack([r.x_prime for r in converged]))
        recomputed = np.array([probs[i, r.y_target] for i, r in enumerate(converged)])
        stored = np.array([r.final_confidence for r in converged])
        agree = bool(np.allclose(recomputed, stored, atol=1e-9))

    ok = rate >= 0.9 and min_conf >= 0.8 and max_steps <= 500 and agree
    check(
        2, "counterfactual contract", ok,
        f"{len(converged)}/100 converged (min 90), min target confidence "
        f"{min_conf:.4f} (min 0.8), max steps {max_steps} (cap 500), "
        f"recompute agreement {agree}",
    )


def test_criterion_3_clever_hans_reproduction(work_root):
    details = []
    ok = True
    for seed in SEEDS_A:
        parts = []
        for alpha in (1.0, 0.5):
            ds = poisoned_dataset("intensity_shift", alpha, seed)
            clf = classifier_for(work_root, "intensity_shift", alpha, seed)
            val = clf.accuracy(*ds.split_arrays("validation"))
            test = clf.accuracy(*ds.split_arrays("test_unpoisoned"))
            parts.append((alpha, val, test))
        (_, val1, test1), (_, val5, test5) = parts
        seed_ok = val1 >= 0.95 and test1 <= 0.65 and abs(val5 - test5) <= 0.05
        ok = ok and seed_ok
        details.append(
            f"seed {seed}: a=1.0 val {val1:.3f}/test {test1:.3f}, "
            f"a=0.5 gap {abs(val5 - test5):.3f}"
        )
    check(3, "Clever-Hans reproduction", ok, "; ".join(details))


def test_criterion_4_cfkd_improvement(runs_4a, grid_runs):
    gains = [(r.seed, r.corrected_test - r.uncorrected_test) for r in runs_4a]
    a_ok = all(g >= 0.15 for _, g in gains) and all(
        len(r.reports) <= 5 for r in runs_4a
    )
    worst_cell = None
    b_ok = True
    for (kind, alpha), run in grid_runs.items():
        diff = run.corrected_test - run.uncorrected_test
        if worst_cell is None or diff < worst_cell[2]:
            worst_cell = (kind, alpha, diff)
        b_ok = b_ok and diff >= 0.0
    ok = a_ok and b_ok
    gains_str = ", ".join(f"seed {s}: +{g:.3f}" for s, g in gains)
    check(
        4, "CFKD improvement", ok,
        f"a=1.0 gains [{gains_str}] (min +0.15); worst grid cell "
        f"{worst_cell[0]} a={worst_cell[1]}: {worst_cell[2]:+.3f} (min 0)",
    )


def test_criterion_5_metric_correlation(runs_4a, grid_runs):
    # the claim concerns runs where validation is fully misleading (alpha=1)
    gated = {r.path: r for r in runs_4a}
    for kind in CONFOUNDER_KINDS:
        run = grid_runs[(kind, 1.0)]
        gated[run.path] = run
    ok = True
    details = []
    for run in gated.values():
        rows = [r for r in run.reports if r.feedback_accuracy is not None]
        test = [r.unpoisoned_test_accuracy for r in rows]
        fb = spearman_correlation([r.feedback_accuracy for r in rows], test)
        val = spearman_correlation([r.val_accuracy for r in rows], test)
        fb = 0.0 if fb is None else fb
        val = 0.0 if val is None else val
        ok = ok and fb > val
        details.append(f"{run.kind} s{run.seed}: fb {fb:+.2f} vs val {val:+.2f}")
    check(5, "metric correlation", ok, "; ".join(details))


def test_criterion_6_oracle_judge_equivalence(runs_4a, grid_runs):
    unique = {r.path: r for r in [*runs_4a, *grid_runs.values()]}
    total = 0
    mismatches = 0
    missing = 0
    for run in unique.values():
        oracle_clf = ImageClassifier.load(run.oracle_ckpt)
        stored = RunDir.open(run.path).verdict_store().all()
        for records_file in sorted((run.path / "records").glob("*.jsonl")):
            converged = [
                r for r in load_records(records_file) if r.status == "converged"
            ]
            if not converged:
                continue
            # stack exactly the batch the teacher judged during the run
            probs = oracle_clf.predict_proba(np.stack([r.x_prime for r in converged]))
            for i, rec in enumerate(converged):
                total += 1
                expected = (
                    TRUE_CF if int(np.argmax(probs[i])) == rec.y_target else FALSE_CF
                )
                verdict = stored.get(rec.record_id)
                if verdict is None:
                    missing += 1
                elif verdict.judgment != expected:
                    mismatches += 1
    ok = total > 0 and mismatches == 0 and missing == 0
    check(
        6, "oracle-judge equivalence", ok,
        f"{total} stored verdicts across {len(unique)} runs recomputed from "
        f"checkpoints; {mismatches} mismatches, {missing} missing",
    )


def test_criterion_7_transform_exactness(tmp_path):
    base = golden_generate.golden_base()
    byte_equal = 0
    for kind in CONFOUNDER_KINDS:
        for tag, u in golden_generate.U_VALUES.items():
            img = quantize_to_grid(render_confounder(base, kind, u))
            fresh = tmp_path / f"{kind}_{tag}.png"
            save_image_png(img, fresh)
            golden = GOLDEN_DIR / f"{kind}_{tag}.png"
            assert fresh.read_bytes() == golden.read_bytes(), golden.name
            assert np.array_equal(load_image_png(golden), img), golden.name
            byte_equal += 1

    full = full_dataset("intensity_shift", 0)
    assert all(v == 100 for v in full.cell_counts("test_unpoisoned").values())
    assert all(v == 600 for v in full.cell_counts("train").values())

    assert poison_cell_counts(1.0, 1000) == {
        (1, True): 500, (0, False): 500, (1, False): 0, (0, True): 0,
    }
    assert all(v == 250 for v in poison_cell_counts(0.5, 1000).values())
    assert poison_cell_counts(0.9, 1000) == {
        (1, True): 450, (0, False): 450, (1, False): 50, (0, True): 50,
    }
    realized = poisoned_dataset("intensity_shift", 0.8, 0).cell_counts("train")
    assert realized == poison_cell_counts(0.8, POISON_TRAIN)

    check(
        7, "transform exactness", True,
        f"{byte_equal}/9 golden images byte-identical; four-cell and "
        f"poisoned-subset counts exact",
    )


def test_criterion_8_determinism(work_root, runs_4a):
    first = (runs_4a[0].path / "reports.csv").read_text()

    run_path = work_root / "runs" / "repeat_intensity_a1.0_s0"
    done = False
    if (run_path / "reports.csv").exists():
        done = RunDir.open(run_path).state().get("state") == "done"
    if not done:
        if run_path.exists():
            shutil.rmtree(run_path)
        # independent end-to-end repeat: retrain every model from scratch
        ds = poisoned_dataset("intensity_shift", 1.0, 0)
        clf = train_classifier(ds, "train", TrainConfig(seed=0))
        flow = train_generator(ds, "train", FlowConfig(seed=0))
        oracle = OracleTeacher.from_dataset(
            full_dataset("intensity_shift", 0), TrainConfig(seed=0)
        )
        run = RunDir.create(run_path, "repeat_intensity_a1.0_s0", {"repeat_of": "intensity_shift_a1.0_s0"})
        run_cfkd(clf, flow, ds, oracle, DistillConfig(seed=0), run_dir=run)
    second = (run_path / "reports.csv").read_text()

    ok = first == second
    check(
        8, "determinism", ok,
        f"reports.csv identical across two full runs "
        f"({len(first.splitlines()) - 1} iteration rows)" if ok else
        "reports.csv differs between identically configured runs",
    )


# criterion 9 runs at a deliberately small scale: it exercises the HTTP
# contract, not model quality, and must not depend on the heavy cache.

MICRO_SPEC = BaseSampleSpec(height=16, width=16)
MICRO_SIZES = {"train": 160, "test_unpoisoned": 40}
MICRO_TRAIN = TrainConfig(conv_channels=(4, 8), epochs=12, batch_size=8, seed=0)
MICRO_RETRAIN = TrainConfig(
    conv_channels=(4, 8), epochs=2, batch_size=8, fine_tune=True, learning_rate=0.002
)
MICRO_FLOW = FlowConfig(num_coupling_layers=4, hidden_width=16, epochs=1, batch_size=32, seed=0)
# the small model's gradients are shallow; big steps keep searches converging
MICRO_SEARCH = SearchConfig(target_confidence=0.6, max_steps=200, step_size=80.0)


def _png_to_image(b64: str) -> np.ndarray:
    from PIL import Image

    raw = base64.b64decode(b64)
    arr = np.asarray(Image.open(io.BytesIO(raw)), dtype=np.uint8)
    return arr.astype(np.float64) / 255.0


def _micro_world(seed: int = 0):
    full = build_full_dataset(MICRO_SPEC, "intensity_shift", MICRO_SIZES, seed=seed)
    ds = build_poisoned_subset(
        full, PoisonSpec(alpha=1.0, train_size=48, validation_size=16, seed=seed)
    )
    clf = train_classifier(ds, "train", MICRO_TRAIN)
    flow = train_generator(ds, "train", MICRO_FLOW)
    oracle = OracleTeacher.from_dataset(full, MICRO_TRAIN)
    cfg = DistillConfig(
        n_iterations=2,
        samples_per_iteration=12,
        feedback_samples=12,
        retrain=MICRO_RETRAIN,
        search=MICRO_SEARCH,
        seed=5,
    )
    return ds, clf, flow, oracle, cfg


def _run_in_thread(clf, flow, ds, teacher, cfg, run_dir):
    result: dict = {}

    def worker():
        try:
            result["model"], result["reports"] = run_cfkd(
                clf, flow, ds, teacher, cfg, run_dir=run_dir
            )
        except BaseException as exc:
            result["error"] = exc

    thread = threading.Thread(target=worker, daemon=True)
    thread.start()
    return thread, result


def test_criterion_9_ui_round_trip(tmp_path):
    ds, clf, flow, oracle, cfg = _micro_world()
    data_dir = tmp_path / "data"

    run_a = RunDir.create(data_dir / "runs" / "native", "native", {})
    run_cfkd(clf, flow, ds, oracle, cfg, run_dir=run_a)
    native_csv = (run_a.path / "reports.csv").read_bytes()

    # scripted client: same models, verdicts arrive over HTTP
    run_b = RunDir.create(data_dir / "runs" / "scripted", "scripted", {})
    teacher = InteractiveTeacher(
        run_b.verdict_store(), source="human", timeout_s=180.0, poll_interval_s=0.02
    )
    thread, result = _run_in_thread(clf, flow, ds, teacher, cfg, run_b)
    client = TestClient(create_app(data_dir=data_dir))

    saw_retraining = False
    deadline = time.time() + 180.0
    while time.time() < deadline:
        state = client.get("/runs/scripted").json()
        if state["state"] == "done" or "error" in result:
            break
        if state["state"] != "awaiting_feedback":
            time.sleep(0.005)
            continue
        payload = client.get("/runs/scripted/pending", params={"limit": 1000}).json()
        pairs = payload["pairs"]
        if not pairs:
            time.sleep(0.005)
            continue
        # judge exactly as the oracle teacher would: one batch, served order
        batch = np.stack([_png_to_image(p["x_prime_png"]) for p in pairs])
        probs = oracle.oracle.predict_proba(batch)
        for pair, row in zip(pairs, probs):
            judgment = TRUE_CF if int(np.argmax(row)) == int(pair["y_target"]) else FALSE_CF
            resp = client.post(
                "/runs/scripted/feedback",
                json={"record_id": pair["record_id"], "judgment": judgment, "source": "oracle"},
            )
            assert resp.status_code == 204, resp.text
        if payload["stage"] == "augment":
            # answering the whole batch must advance the run to retraining
            for _ in range(4000):
                state = client.get("/runs/scripted").json()
                if state["state"] != "awaiting_feedback":
                    break
                time.sleep(0.002)
            saw_retraining = saw_retraining or state["state"] == "retraining"
    thread.join(timeout=60.0)
    if "error" in result:
        raise result["error"]
    assert not thread.is_alive(), "training thread did not finish"
    scripted_csv = (run_b.path / "reports.csv").read_bytes()

    csv_ok = scripted_csv == native_csv
    ok = csv_ok and saw_retraining
    check(
        9, "ui round trip", ok,
        "scripted feedback reproduced the oracle run's reports.csv byte for byte; "
        "completed batches advanced the run to retraining" if ok else
        f"reports.csv identical: {csv_ok}, retraining observed: {saw_retraining}",
    )


def test_criterion_9_cluster_selection(tmp_path):
    ds, clf, flow, oracle, cfg = _micro_world()
    data_dir = tmp_path / "data"
    run = RunDir.create(data_dir / "runs" / "clustered", "clustered", {})
    teacher = InteractiveTeacher(
        run.verdict_store(), source="cluster", timeout_s=180.0, poll_interval_s=0.02
    )
    thread, result = _run_in_thread(clf, flow, ds, teacher, cfg, run)
    client = TestClient(create_app(data_dir=data_dir))

    box_batch: dict = {}
    deadline = time.time() + 180.0
    while time.time() < deadline:
        state = client.get("/runs/clustered").json()
        if state["state"] == "done" or "error" in result:
            break
        if state["state"] != "awaiting_feedback":
            time.sleep(0.005)
            continue
        pairs = client.get("/runs/clustered/pending", params={"limit": 1000}).json()["pairs"]
        if not pairs:
            time.sleep(0.005)
            continue
        if not box_batch:
            # first batch is judged through the cluster board
            clusters = client.get("/runs/clustered/clusters")
            if clusters.status_code != 200:
                time.sleep(0.005)
                continue
            points = clusters.json()["points"]
            assert len(points) == len(pairs)
            # box everything left of the widest x-gap: a strict, known subset
            xs = sorted(p["x"] for p in points)
            gaps = [(xs[i + 1] - xs[i], i) for i in range(len(xs) - 1)]
            _, split = max(gaps)
            x_cut = (xs[split] + xs[split + 1]) / 2.0
            box = {
                "x0": min(xs) - 1.0,
                "y0": min(p["y"] for p in points) - 1.0,
                "x1": x_cut,
                "y1": max(p["y"] for p in points) + 1.0,
            }
            enclosed = {p["record_id"] for p in points if p["x"] <= x_cut}
            assert 0 < len(enclosed) < len(points)
            resp = client.post("/runs/clustered/cluster-selection", json={"boxes": [box]})
            assert resp.status_code == 200, resp.text
            # one submission judges the whole view: enclosed rejected, rest accepted
            assert resp.json() == {"created": len(points), "skipped": 0}
            verdicts = run.verdict_store().all()
            rejected = {rid for rid, v in verdicts.items() if v.judgment == FALSE_CF}
            assert rejected == enclosed
            assert all(v.source == "cluster" for v in verdicts.values())
            refreshed = client.get("/runs/clustered/clusters").json()["points"]
            assert all(p["judged"] for p in refreshed)
            # resubmitting the same box only skips
            again = client.post("/runs/clustered/cluster-selection", json={"boxes": [box]})
            assert again.json() == {"created": 0, "skipped": len(points)}
            box_batch = {"enclosed": len(enclosed), "total": len(points)}
            continue
        # later batches: answer directly so the loop advances
        for pair in pairs:
            resp = client.post(
                "/runs/clustered/feedback",
                json={"record_id": pair["record_id"], "judgment": TRUE_CF, "source": "cluster"},
            )
            assert resp.status_code in (204, 409), resp.text
    thread.join(timeout=60.0)
    if "error" in result:
        raise result["error"]
    assert not thread.is_alive(), "training thread did not finish"
    ok = bool(box_batch)
    if ok:
        first = result["reports"][0]
        assert first.rejected == box_batch["enclosed"]
        assert first.accepted == box_batch["total"] - box_batch["enclosed"]
    check(
        9, "cluster box selection", ok,
        "box selection rejected exactly the enclosed points "
        f"({box_batch.get('enclosed')} of {box_batch.get('total')}) and skipped them on resubmit"
        if ok else "no published cluster view was observed during the run",
    )
