"""Command line interface.

Every subcommand reads a JSON config file (--config) and honors --seed as an
override of the config's top-level seed. Usage errors exit with status 2
(argparse), invalid configs with status 3 and a message naming the failing
field.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .classifier import ImageClassifier, train_classifier
from .counterfactual import SearchConfig, batch_explain, save_records
from .datasets import (
    BaseSampleSpec,
    PoisonSpec,
    build_full_dataset,
    build_poisoned_subset,
    load_dataset,
    save_dataset,
)
from .distill import DistillConfig, IterationReport, TrainConfig, run_cfkd
from .errors import ConfigurationError, InputError
from .evaluation import SweepConfig, correlation_report, sweep_alpha
from .flow import CouplingFlow, FlowConfig, train_generator
from .runio import RunDir
from .service import DEFAULT_PORT, resolve_data_dir, serve
from .teachers import InteractiveTeacher, OracleTeacher

logger = logging.getLogger(__name__)

_NESTED = {
    DistillConfig: {"retrain": TrainConfig, "search": SearchConfig},
    SweepConfig: {
        "base": BaseSampleSpec,
        "train": TrainConfig,
        "oracle_train": TrainConfig,
        "flow": FlowConfig,
        "distill": DistillConfig,
    },
}
_TUPLE_FIELDS = {"conv_channels", "kinds", "alphas", "seeds"}


def build_config(cls, data, path: str):
    """Construct a config dataclass from parsed JSON, naming bad fields."""
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected a JSON object")
    known = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigurationError(f"{path}.{key}: unknown field")
    kwargs = {}
    nested = _NESTED.get(cls, {})
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        where = f"{path}.{f.name}"
        if f.name in nested:
            value = build_config(nested[f.name], value, where)
        elif f.name in _TUPLE_FIELDS:
            if not isinstance(value, list):
                raise ConfigurationError(f"{where}: expected a JSON array")
            value = tuple(value)
        kwargs[f.name] = value
    try:
        return cls(**kwargs)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config: file not found: {path}")
    try:
        with open(p) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError("config: top level must be a JSON object")
    return data


def _require(cfg: dict, key: str, kind=str):
    if key not in cfg:
        raise ConfigurationError(f"config.{key}: required field is missing")
    value = cfg[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigurationError(f"config.{key}: expected {kind.__name__}")
    return value


def _config_seed(cfg: dict, args) -> int:
    seed = cfg.get("seed", 0)
    if args.seed is not None:
        seed = args.seed
    if not isinstance(seed, int):
        raise ConfigurationError(f"config.seed: expected integer, got {seed!r}")
    return seed


def _load_dataset_arg(cfg: dict, key: str):
    path = _require(cfg, key)
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config.{key}: no such manifest: {path}")
    return load_dataset(p)


# -- subcommands ---------------------------------------------------------------


def cmd_make_dataset(args) -> int:
    cfg = _load_config(args.config)
    seed = _config_seed(cfg, args)
    kind = _require(cfg, "kind")
    base = build_config(BaseSampleSpec, cfg.get("base", {}), "config.base")
    sizes = cfg.get("full_sizes", {"train": 2400, "test_unpoisoned": 400})
    out = Path(args.out or _require(cfg, "out"))
    full = build_full_dataset(base, kind, sizes, seed=seed)
    full_manifest = save_dataset(full, out / "full")
    print(f"full dataset: {full_manifest}")
    if "poison" in cfg:
        poison = build_config(PoisonSpec, {**cfg["poison"], "seed": seed}, "config.poison")
        poisoned = build_poisoned_subset(full, poison)
        poisoned_manifest = save_dataset(poisoned, out / "poisoned")
        print(f"poisoned dataset (alpha={poison.alpha}): {poisoned_manifest}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    seed = _config_seed(cfg, args)
    dataset = _load_dataset_arg(cfg, "dataset")
    split = cfg.get("split", "train")
    train_cfg = build_config(TrainConfig, {**cfg.get("train", {}), "seed": seed}, "config.train")
    out = Path(args.out or _require(cfg, "out"))
    clf = train_classifier(dataset, split, train_cfg)
    clf.save(out)
    print(f"classifier: {out} (train accuracy {clf.train_accuracy_:.4f})")
    return 0


def cmd_train_flow(args) -> int:
    cfg = _load_config(args.config)
    seed = _config_seed(cfg, args)
    dataset = _load_dataset_arg(cfg, "dataset")
    split = cfg.get("split", "train")
    flow_cfg = build_config(FlowConfig, {**cfg.get("flow", {}), "seed": seed}, "config.flow")
    out = Path(args.out or _require(cfg, "out"))
    flow = train_generator(dataset, split, flow_cfg)
    flow.save(out)
    last = flow.log_likelihood_history_[-1] if flow.log_likelihood_history_ else float("nan")
    print(f"flow: {out} (final mean log-likelihood {last:.2f})")
    return 0


def cmd_explain(args) -> int:
    cfg = _load_config(args.config)
    seed = _config_seed(cfg, args)
    dataset = _load_dataset_arg(cfg, "dataset")
    split = cfg.get("split", "train")
    classifier = ImageClassifier.load(_require(cfg, "classifier"))
    search = build_config(SearchConfig, cfg.get("search", {}), "config.search")
    flow = None
    if search.mode == "latent":
        flow = CouplingFlow.load(_require(cfg, "flow"))
    count = cfg.get("count", 100)
    out = Path(args.out or _require(cfg, "out"))
    X, y = dataset.split_arrays(split)
    rng = np.random.default_rng([seed, 5])
    take = min(int(count), len(y))
    idx = np.sort(rng.choice(len(y), size=take, replace=False))
    records = batch_explain(classifier, flow, X[idx], y[idx], search)
    path = save_records(records, out, "records.jsonl")
    n_conv = sum(1 for r in records if r.status == "converged")
    print(f"records: {path} ({n_conv}/{len(records)} converged)")
    return 0


def _resolve_classifier(cfg: dict, dataset, seed: int) -> ImageClassifier:
    if "classifier" in cfg and cfg["classifier"]:
        return ImageClassifier.load(cfg["classifier"])
    train_cfg = build_config(TrainConfig, {**cfg.get("train", {}), "seed": seed}, "config.train")
    return train_classifier(dataset, "train", train_cfg)


def _resolve_flow(cfg: dict, dataset, seed: int) -> CouplingFlow:
    if "flow" in cfg and cfg["flow"]:
        return CouplingFlow.load(cfg["flow"])
    flow_cfg = build_config(FlowConfig, {**cfg.get("flow_config", {}), "seed": seed}, "config.flow_config")
    return train_generator(dataset, "train", flow_cfg)


def cmd_distill(args) -> int:
    cfg = _load_config(args.config)
    seed = _config_seed(cfg, args)
    dataset = _load_dataset_arg(cfg, "dataset")
    teacher_kind = cfg.get("teacher", "oracle")
    if teacher_kind not in ("oracle", "human", "cluster"):
        raise ConfigurationError(
            f"config.teacher: expected oracle, human, or cluster, got {teacher_kind!r}"
        )
    distill_cfg = build_config(
        DistillConfig, {**cfg.get("distill", {}), "seed": seed}, "config.distill"
    )
    classifier = _resolve_classifier(cfg, dataset, seed)
    flow = _resolve_flow(cfg, dataset, seed) if distill_cfg.search.mode == "latent" else None

    run_id = args.run_id or cfg.get("run_id") or f"run-{seed:04d}"
    data_dir = resolve_data_dir(args.data_dir)
    run = RunDir.create(data_dir / "runs" / run_id, run_id, cfg)
    print(f"run directory: {run.path}")

    if teacher_kind == "oracle":
        oracle_cfg = cfg.get("oracle", {})
        full = _load_dataset_arg(cfg, "full_dataset")
        oracle_train = build_config(
            TrainConfig, {**oracle_cfg.get("train", {}), "seed": seed}, "config.oracle.train"
        )
        teacher = OracleTeacher.from_dataset(
            full, oracle_train, margin=float(oracle_cfg.get("margin", 0.0))
        )
        if teacher.test_accuracy is not None:
            print(f"oracle unpoisoned test accuracy: {teacher.test_accuracy:.4f}")
    else:
        teacher = InteractiveTeacher(
            run.verdict_store(),
            source=teacher_kind if teacher_kind == "cluster" else "human",
            timeout_s=float(cfg.get("feedback_timeout_s", 3600.0)),
        )
        print("waiting for feedback via the service; point the UI at this run")

    model, reports = run_cfkd(classifier, flow, dataset, teacher, distill_cfg, run_dir=run)
    final_path = run.path / "model.ckpt"
    model.save(final_path)
    print(f"final model: {final_path}")
    for r in reports:
        fa = "n/a" if r.feedback_accuracy is None else f"{r.feedback_accuracy:.3f}"
        print(
            f"iteration {r.iteration}: converged {r.converged}/{r.generated}, "
            f"accepted {r.accepted}, feedback accuracy {fa}, "
            f"val {r.val_accuracy:.3f}, test {r.unpoisoned_test_accuracy:.3f}"
        )
    return 0


def cmd_eval(args) -> int:
    run = RunDir.open(args.run)
    rows = run.reports()
    if not rows:
        raise ConfigurationError(f"config: run {run.path} has no reports")
    reports = [IterationReport.from_dict(d) for d in rows]
    report = correlation_report(reports)
    run.write_correlations(report.to_dict())
    print(f"correlations: {run.path / 'correlations.json'}")
    print(json.dumps(report.to_dict(), indent=1, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    out = Path(args.out or _require(cfg, "out"))
    sweep_cfg = build_config(
        SweepConfig, {k: v for k, v in cfg.items() if k != "out"}, "config"
    )
    result = sweep_alpha(sweep_cfg)
    out.mkdir(parents=True, exist_ok=True)
    result.to_csv(out / "sweep.csv")
    result.save_plot_data(out / "sweep_plot.json")
    failed = [r for r in result.rows if r.error is not None]
    print(f"sweep: {out / 'sweep.csv'} ({len(result.rows)} cells, {len(failed)} failed)")
    return 0


def cmd_serve(args) -> int:
    serve(data_dir=args.data_dir, host=args.host, port=args.port, ui_dir=args.ui_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfkd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        return p

    p = add("make-dataset", cmd_make_dataset, help="render a confounded dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)

    p = add("train", cmd_train, help="train a classifier on a dataset split")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)

    p = add("train-flow", cmd_train_flow, help="train the coupling flow")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)

    p = add("explain", cmd_explain, help="generate counterfactual records")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)

    p = add("distill", cmd_distill, help="run the correction loop")
    p.add_argument("--config", required=True)
    p.add_argument("--run-id", default=None)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--seed", type=int, default=None)

    p = add("eval", cmd_eval, help="compute rank correlations for a run")
    p.add_argument("--run", required=True)

    p = add("sweep", cmd_sweep, help="poisoning sweep with and without correction")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)

    p = add("serve", cmd_serve, help="serve the feedback API")
    p.add_argument("--data-dir", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=DEFAULT_PORT)
    p.add_argument("--ui-dir", default=None)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigurationError, InputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
