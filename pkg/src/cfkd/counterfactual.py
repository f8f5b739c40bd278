"""Gradient-ascent counterfactual search in latent or input space.

Starting from the latent code of an input, the search repeatedly steps along
the gradient of the classifier's log probability for the target class,
decoded through the flow, until the decoded image reaches the target
confidence or the step budget runs out. Candidates are snapped to the 8-bit
pixel grid before the confidence check so that stored PNGs reproduce the
exact accepted iterate. input_space mode runs the same loop directly on
pixels (the flow drops out of the gradient).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .datasets import load_image_png, save_image_png
from .errors import ConfigurationError, InputError
from .validation import as_image_batch, check_choice, check_positive

SEARCH_MODES = ("latent", "input_space")


@dataclass
class SearchConfig:
    """Counterfactual search settings.

    overshoot_cap: when a proposed step lands above this confidence, the
    per-sample step size is halved and the step re-proposed (bounded by
    max_halvings), keeping counterfactuals close to the decision boundary.
    None disables halving. pixel_grid: number of levels candidates are
    snapped to before the confidence check; None searches on raw floats.
    """

    target_confidence: float = 0.8
    max_steps: int = 500
    step_size: float = 2.0
    mode: str = "latent"
    overshoot_cap: float | None = 0.95
    max_halvings: int = 8
    pixel_grid: int | None = 256

    def __post_init__(self):
        if not 0.5 < float(self.target_confidence) < 1.0:
            raise ConfigurationError(
                f"search.target_confidence: must lie in (0.5, 1), got {self.target_confidence}"
            )
        check_positive(self.max_steps, "search.max_steps", integer=True)
        check_positive(self.step_size, "search.step_size")
        check_choice(self.mode, SEARCH_MODES, "search.mode")
        if self.overshoot_cap is not None:
            if not float(self.target_confidence) <= float(self.overshoot_cap) <= 1.0:
                raise ConfigurationError(
                    "search.overshoot_cap: must lie in [target_confidence, 1], "
                    f"got {self.overshoot_cap}"
                )
        check_positive(self.max_halvings, "search.max_halvings", integer=True)
        if self.pixel_grid is not None:
            if int(self.pixel_grid) < 2:
                raise ConfigurationError(
                    f"search.pixel_grid: need at least 2 levels, got {self.pixel_grid}"
                )


@dataclass
class CounterfactualRequest:
    x: np.ndarray
    y: int
    y_target: int
    config: SearchConfig = field(default_factory=SearchConfig)


@dataclass
class CounterfactualRecord:
    """One finished search: original, counterfactual, and how it went.

    delta_z is encode(x_prime) - encode(x) in latent mode and the flattened
    pixel difference in input_space mode; it feeds the cluster teacher.
    status is "converged" or "failed"; failed records keep the last iterate.
    """

    record_id: str
    x: np.ndarray
    x_prime: np.ndarray
    y: int
    y_target: int
    steps_taken: int
    final_confidence: float
    delta_z: np.ndarray
    status: str
    failure_reason: str | None = None


def choose_target_class(classifier, x: np.ndarray, y: int) -> int:
    """Binary: the other class. Multiclass: most probable class != y, ties
    broken toward the lowest class index."""
    num_classes = int(classifier.num_classes)
    if not 0 <= int(y) < num_classes:
        raise InputError(f"choose_target_class: label {y} outside [0, {num_classes})")
    if num_classes == 2:
        return 1 - int(y)
    probs = np.asarray(classifier.predict_proba(x), dtype=np.float64)
    probs[int(y)] = -np.inf
    return int(np.argmax(probs))


def _snap_torch(x: torch.Tensor, pixel_grid: int | None) -> torch.Tensor:
    if pixel_grid is None:
        return x
    scale = pixel_grid - 1
    return torch.round(torch.clamp(x, 0.0, 1.0) * scale) / scale


class _Engine:
    """Shared torch plumbing for one batch of searches."""

    def __init__(self, classifier, generator, cfg: SearchConfig, image_shape):
        self.classifier = classifier
        self.generator = generator
        self.cfg = cfg
        self.image_shape = tuple(image_shape)

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        if self.cfg.mode == "latent":
            return self.generator.decode_torch(z)
        return z.reshape(-1, *self.image_shape)

    def confidence(self, z: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
        """Confidence of the snapped decoded candidate, no graph."""
        with torch.no_grad():
            x = _snap_torch(self.decode(z), self.cfg.pixel_grid)
            logits = self.classifier.logits_torch(x)
            probs = torch.softmax(logits, dim=1)
        return probs[torch.arange(z.shape[0]), targets]

    def grad(self, z: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
        """d log p(target | decode(z)) / dz on the raw (unsnapped) path."""
        zg = z.detach().clone().requires_grad_(True)
        x = self.decode(zg)
        logp = torch.log_softmax(self.classifier.logits_torch(x), dim=1)
        picked = logp[torch.arange(zg.shape[0]), targets]
        picked.sum().backward()
        return zg.grad


def search_batch(
    classifier,
    generator,
    X,
    y,
    y_targets,
    config: SearchConfig,
    record_ids: list[str] | None = None,
) -> list[CounterfactualRecord]:
    """Run the counterfactual search for a whole batch.

    Samples advance together; converged or failed ones drop out of the
    active set. Record order matches input order and the procedure is
    deterministic (no randomness inside the search).
    """
    image_shape = tuple(classifier.input_shape)
    Xb, _ = as_image_batch(X, image_shape)
    n = Xb.shape[0]
    y = np.asarray(y, dtype=np.int64)
    y_targets = np.asarray(y_targets, dtype=np.int64)
    if y.shape != (n,) or y_targets.shape != (n,):
        raise InputError("search_batch: y and y_targets must have one entry per image")
    if np.any(y == y_targets):
        bad = int(np.flatnonzero(y == y_targets)[0])
        raise ConfigurationError(
            f"search_batch: sample {bad} has y_target == y ({int(y[bad])})"
        )
    if record_ids is None:
        record_ids = [f"r{i:04d}" for i in range(n)]
    if len(record_ids) != n:
        raise InputError("search_batch: record_ids length must match batch size")
    if config.mode == "latent" and generator is None:
        raise ConfigurationError("search_batch: latent mode needs a generator")

    engine = _Engine(classifier, generator, config, image_shape)
    flat = torch.from_numpy(np.ascontiguousarray(Xb.reshape(n, -1)))
    if config.mode == "latent":
        with torch.no_grad():
            z, _ = generator.torch_net().encode(flat)
        z = z.detach().clone()
    else:
        z = flat.clone()
    targets_t = torch.from_numpy(y_targets)

    step = torch.full((n,), float(config.step_size), dtype=torch.float64)
    steps_taken = np.zeros(n, dtype=np.int64)
    status = np.array(["active"] * n, dtype=object)
    reasons: list[str | None] = [None] * n

    conf = engine.confidence(z, targets_t)
    finite0 = torch.isfinite(conf)
    for i in np.flatnonzero(~finite0.numpy()):
        status[i] = "failed"
        reasons[i] = "non-finite classifier output on the input"
    converged0 = finite0 & (conf >= config.target_confidence)
    for i in np.flatnonzero(converged0.numpy()):
        status[i] = "converged"
    final_conf = conf.numpy().copy()

    active = np.flatnonzero(status == "active")
    for _ in range(config.max_steps):
        if active.size == 0:
            break
        idx = torch.from_numpy(active)
        za = z[idx]
        ta = targets_t[idx]
        grad = engine.grad(za, ta)
        grad_ok = torch.isfinite(grad).all(dim=1).numpy()
        for j in np.flatnonzero(~grad_ok):
            i = active[j]
            status[i] = "failed"
            reasons[i] = f"non-finite gradient at step {int(steps_taken[i])}"
        keep = np.flatnonzero(grad_ok)
        if keep.size == 0:
            active = np.array([], dtype=np.int64)
            break
        active = active[keep]
        za = za[torch.from_numpy(keep)]
        ta = targets_t[torch.from_numpy(active)]
        grad = grad[torch.from_numpy(keep)]

        step_a = step[torch.from_numpy(active)].clone()
        cand = za + step_a[:, None] * grad
        conf_cand = engine.confidence(cand, ta)
        if config.overshoot_cap is not None:
            for _halving in range(config.max_halvings):
                over = (conf_cand > config.overshoot_cap) & torch.isfinite(conf_cand)
                if not bool(over.any()):
                    break
                step_a[over] = step_a[over] / 2.0
                cand[over] = za[over] + step_a[over][:, None] * grad[over]
                conf_cand[over] = engine.confidence(cand[over], ta[over])

        z[torch.from_numpy(active)] = cand.detach()
        step[torch.from_numpy(active)] = step_a
        steps_taken[active] += 1
        conf_np = conf_cand.numpy()
        final_conf[active] = conf_np
        bad = ~np.isfinite(conf_np)
        done = np.isfinite(conf_np) & (conf_np >= config.target_confidence)
        for j in np.flatnonzero(bad):
            i = active[j]
            status[i] = "failed"
            reasons[i] = f"non-finite decoder output at step {int(steps_taken[i])}"
        for j in np.flatnonzero(done):
            status[active[j]] = "converged"
        active = active[~(bad | done)]

    for i in active:
        status[i] = "failed"
        reasons[i] = f"no convergence within {config.max_steps} steps"

    with torch.no_grad():
        x_final = _snap_torch(engine.decode(z), config.pixel_grid).numpy()
    x_final = x_final.reshape(n, *image_shape)

    if config.mode == "latent":
        with torch.no_grad():
            z_orig, _ = generator.torch_net().encode(flat)
            z_prime, _ = generator.torch_net().encode(
                torch.from_numpy(np.ascontiguousarray(x_final.reshape(n, -1)))
            )
        delta = (z_prime - z_orig).numpy()
    else:
        delta = x_final.reshape(n, -1) - Xb.reshape(n, -1)

    records = []
    for i in range(n):
        records.append(
            CounterfactualRecord(
                record_id=record_ids[i],
                x=Xb[i].copy(),
                x_prime=x_final[i],
                y=int(y[i]),
                y_target=int(y_targets[i]),
                steps_taken=int(steps_taken[i]),
                final_confidence=float(final_conf[i]),
                delta_z=delta[i],
                status=str(status[i]),
                failure_reason=reasons[i],
            )
        )
    return records


def search_counterfactual(classifier, generator, request: CounterfactualRequest) -> CounterfactualRecord:
    """Single-sample convenience wrapper around search_batch."""
    if int(request.y_target) == int(request.y):
        raise ConfigurationError(
            f"request: y_target must differ from y, both are {request.y}"
        )
    [record] = search_batch(
        classifier,
        generator,
        request.x[None] if np.asarray(request.x).ndim == 3 else request.x,
        [request.y],
        [request.y_target],
        request.config,
    )
    return record


def batch_explain(
    classifier,
    generator,
    X,
    y,
    config: SearchConfig,
    record_ids: list[str] | None = None,
) -> list[CounterfactualRecord]:
    """Choose a target class per sample and search the whole batch."""
    Xb, _ = as_image_batch(X, tuple(classifier.input_shape))
    y = np.asarray(y, dtype=np.int64)
    y_targets = np.array(
        [choose_target_class(classifier, Xb[i], int(y[i])) for i in range(Xb.shape[0])],
        dtype=np.int64,
    )
    return search_batch(classifier, generator, Xb, y, y_targets, config, record_ids)


# -- record persistence --------------------------------------------------------


def save_records(records: list[CounterfactualRecord], out_dir, filename: str) -> Path:
    """Write records to a JSON-lines file, images as PNGs referenced by path."""
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / filename
    with open(path, "w") as fh:
        for rec in records:
            x_rel = f"images/{rec.record_id}_x.png"
            xp_rel = f"images/{rec.record_id}_cf.png"
            save_image_png(rec.x, out_dir / x_rel)
            save_image_png(rec.x_prime, out_dir / xp_rel)
            row = {
                "record_id": rec.record_id,
                "y": rec.y,
                "y_target": rec.y_target,
                "steps_taken": rec.steps_taken,
                "final_confidence": rec.final_confidence,
                "status": rec.status,
                "failure_reason": rec.failure_reason,
                "x_path": x_rel,
                "x_prime_path": xp_rel,
                "delta_z": [float(v) for v in rec.delta_z],
            }
            fh.write(json.dumps(row) + "\n")
    return path


def load_records(path) -> list[CounterfactualRecord]:
    path = Path(path)
    root = path.parent
    records = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            records.append(
                CounterfactualRecord(
                    record_id=row["record_id"],
                    x=load_image_png(root / row["x_path"]),
                    x_prime=load_image_png(root / row["x_prime_path"]),
                    y=int(row["y"]),
                    y_target=int(row["y_target"]),
                    steps_taken=int(row["steps_taken"]),
                    final_confidence=float(row["final_confidence"]),
                    delta_z=np.array(row["delta_z"], dtype=np.float64),
                    status=row["status"],
                    failure_reason=row.get("failure_reason"),
                )
            )
    return records
