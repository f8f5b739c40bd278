"""Synthetic striped-image datasets with controllable confounders.

Class content is stripe orientation (0 = horizontal, 1 = vertical). Three
confounder kinds can be painted on top, each driven by a per-sample variable
u in [0, 1] with the boolean flag thresholded at 0.5:

* ``corner_tag``: a 6x6 white glyph in the bottom-right corner, always drawn
  with opacity u; the tag counts as a confounder when u < 0.5.
* ``intensity_shift``: global brightness shift of up to 24/255, confounder
  when u >= 0.5 (shift up) and a matching downward shift otherwise.
* ``color_shift``: channel shift of up to (+24, -12, -12)/255, same rule.

Poisoned subsets correlate the flag with the label at strength alpha while
keeping classes exactly balanced. All rendered images are snapped to the
8-bit pixel grid so PNG round-trips are lossless.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigurationError, InputError
from .validation import (
    check_choice,
    check_fraction,
    check_positive,
)

CONFOUNDER_KINDS = ("corner_tag", "intensity_shift", "color_shift")
SPLITS = ("train", "validation", "test_unpoisoned")
MANIFEST_SCHEMA_VERSION = 1

INTENSITY_SHIFT = 24.0 / 255.0
COLOR_SHIFT = np.array([24.0, -12.0, -12.0]) / 255.0

# 6x6 glyph blended into the bottom-right corner (1 = white).
TAG_GLYPH = np.array(
    [
        [0, 1, 1, 1, 1, 0],
        [1, 0, 0, 0, 0, 1],
        [1, 0, 1, 1, 0, 1],
        [1, 0, 1, 0, 0, 1],
        [1, 0, 1, 1, 0, 1],
        [0, 1, 1, 1, 1, 0],
    ],
    dtype=np.float64,
)
TAG_MARGIN = 1


def quantize_to_grid(x: np.ndarray, levels: int = 256) -> np.ndarray:
    """Clip to [0, 1] and snap to the (levels)-step pixel grid."""
    scale = levels - 1
    return np.round(np.clip(x, 0.0, 1.0) * scale) / scale


def has_confounder_flag(kind: str, u: float) -> bool:
    """Threshold rule tying the boolean flag to the underlying variable."""
    check_choice(kind, CONFOUNDER_KINDS, "confounder.kind")
    if kind == "corner_tag":
        return float(u) < 0.5
    return float(u) >= 0.5


def apply_confounder(x: np.ndarray, kind: str, u: float, side: int = 1) -> np.ndarray:
    """Paint a confounder of strength u onto a copy of image x.

    u = 0 is the identity for the shift kinds and an invisible tag for
    corner_tag. side (+1/-1) picks the shift direction and is ignored for
    corner_tag, which has no sign.
    """
    check_choice(kind, CONFOUNDER_KINDS, "confounder.kind")
    u = check_fraction(u, "confounder.u")
    if side not in (1, -1):
        raise ConfigurationError(f"confounder.side: must be +1 or -1, got {side}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != 3:
        raise InputError(f"apply_confounder: expected (H, W, 3) image, got {x.shape}")
    out = x.copy()
    if kind == "corner_tag":
        h, w, _ = x.shape
        gh, gw = TAG_GLYPH.shape
        if h < gh + TAG_MARGIN or w < gw + TAG_MARGIN:
            raise ConfigurationError(
                f"corner_tag needs at least {gh + TAG_MARGIN}x{gw + TAG_MARGIN} images, got {h}x{w}"
            )
        r0 = h - gh - TAG_MARGIN
        c0 = w - gw - TAG_MARGIN
        blend = (u * TAG_GLYPH)[:, :, None]
        region = out[r0 : r0 + gh, c0 : c0 + gw, :]
        out[r0 : r0 + gh, c0 : c0 + gw, :] = region * (1.0 - blend) + blend
    elif kind == "intensity_shift":
        out = out + side * u * INTENSITY_SHIFT
    else:
        out = out + side * u * COLOR_SHIFT[None, None, :]
    return np.clip(out, 0.0, 1.0)


def render_confounder(x: np.ndarray, kind: str, u: float) -> np.ndarray:
    """Paint the confounder as parameterized by the underlying variable u.

    corner_tag uses u directly as opacity. The shift kinds split u at 0.5:
    strength grows linearly away from the threshold and the side is the sign
    of (u - 0.5), so u = 0.5 is the identity and u = 0 or 1 is full strength.
    """
    if kind == "corner_tag":
        return apply_confounder(x, kind, u)
    strength = 2.0 * abs(float(u) - 0.5)
    side = 1 if float(u) >= 0.5 else -1
    return apply_confounder(x, kind, min(strength, 1.0), side)


@dataclass
class BaseSampleSpec:
    """Stripe pattern parameters for the confounder-free image content."""

    height: int = 32
    width: int = 32
    stripe_frequency: float = 4.0
    amplitude: float = 0.12
    noise_sigma: float = 0.05

    def __post_init__(self):
        self.height = check_positive(self.height, "base.height", integer=True)
        self.width = check_positive(self.width, "base.width", integer=True)
        self.stripe_frequency = check_positive(self.stripe_frequency, "base.stripe_frequency")
        self.amplitude = check_fraction(self.amplitude, "base.amplitude")
        if self.noise_sigma < 0:
            raise ConfigurationError(
                f"base.noise_sigma: must be non-negative, got {self.noise_sigma}"
            )


def render_base_image(
    spec: BaseSampleSpec, label: int, rng: np.random.Generator
) -> np.ndarray:
    """Render one unquantized stripe image: horizontal for 0, vertical for 1."""
    if label not in (0, 1):
        raise InputError(f"render_base_image: label must be 0 or 1, got {label}")
    phase = rng.uniform(0.0, 2.0 * np.pi)
    if label == 0:
        t = np.arange(spec.height) / spec.height
        pattern = 0.5 + spec.amplitude * np.sin(2.0 * np.pi * spec.stripe_frequency * t + phase)
        img = np.repeat(pattern[:, None], spec.width, axis=1)
    else:
        t = np.arange(spec.width) / spec.width
        pattern = 0.5 + spec.amplitude * np.sin(2.0 * np.pi * spec.stripe_frequency * t + phase)
        img = np.repeat(pattern[None, :], spec.height, axis=0)
    img = img[:, :, None].repeat(3, axis=2)
    if spec.noise_sigma > 0:
        img = img + rng.normal(0.0, spec.noise_sigma, size=img.shape)
    return img


@dataclass
class LabeledDataset:
    """Images plus labels, split assignment, and confounder metadata."""

    images: np.ndarray
    labels: np.ndarray
    splits: np.ndarray
    u: np.ndarray
    has_confounder: np.ndarray
    confounder_kind: str | None = None
    num_classes: int = 2

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.splits = np.asarray(self.splits, dtype=object)
        self.u = np.asarray(self.u, dtype=np.float64)
        self.has_confounder = np.asarray(self.has_confounder, dtype=bool)
        n = self.images.shape[0]
        if self.images.ndim != 4:
            raise InputError(f"dataset images must be (n, H, W, C), got {self.images.shape}")
        for name, arr in (
            ("labels", self.labels),
            ("splits", self.splits),
            ("u", self.u),
            ("has_confounder", self.has_confounder),
        ):
            if arr.shape[0] != n:
                raise InputError(f"dataset {name} has length {arr.shape[0]}, expected {n}")
        unknown = set(self.splits) - set(SPLITS)
        if unknown:
            raise InputError(f"dataset contains unknown splits: {sorted(unknown)}")

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def indices(self, split: str) -> np.ndarray:
        check_choice(split, SPLITS, "split")
        return np.flatnonzero(self.splits == split)

    def split_arrays(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        idx = self.indices(split)
        return self.images[idx], self.labels[idx]

    def class_counts(self, split: str) -> dict[int, int]:
        idx = self.indices(split)
        return {
            int(c): int((self.labels[idx] == c).sum()) for c in range(self.num_classes)
        }

    def cell_counts(self, split: str) -> dict[tuple[int, bool], int]:
        """Counts for the four (label, has_confounder) cells of a split."""
        idx = self.indices(split)
        out: dict[tuple[int, bool], int] = {}
        for label in range(self.num_classes):
            for conf in (True, False):
                mask = (self.labels[idx] == label) & (self.has_confounder[idx] == conf)
                out[(label, conf)] = int(mask.sum())
        return out

    def with_training_samples(self, images: np.ndarray, labels: np.ndarray) -> "LabeledDataset":
        """Return a copy with extra train-split samples appended (no metadata)."""
        images = np.asarray(images, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if images.shape[0] == 0:
            return self
        if images.shape[1:] != self.images.shape[1:]:
            raise InputError(
                f"appended images have shape {images.shape[1:]}, expected {self.images.shape[1:]}"
            )
        k = images.shape[0]
        return LabeledDataset(
            images=np.concatenate([self.images, images]),
            labels=np.concatenate([self.labels, labels]),
            splits=np.concatenate([self.splits, np.array(["train"] * k, dtype=object)]),
            u=np.concatenate([self.u, np.full(k, np.nan)]),
            has_confounder=np.concatenate([self.has_confounder, np.zeros(k, dtype=bool)]),
            confounder_kind=self.confounder_kind,
            num_classes=self.num_classes,
        )


def _cell_interval(kind: str, conf: bool) -> tuple[float, float]:
    if kind == "corner_tag":
        return (0.0, 0.5) if conf else (0.5, 1.0)
    return (0.5, 1.0) if conf else (0.0, 0.5)


_SPLIT_CODES = {"train": 0, "validation": 1, "test_unpoisoned": 2}


def _render_split(
    base: BaseSampleSpec, kind: str, split: str, size: int, seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    if size % 4 != 0:
        raise ConfigurationError(
            f"sizes.{split}: must be divisible by 4 for exact cell balance, got {size}"
        )
    rng = np.random.default_rng([seed, _SPLIT_CODES[split]])
    per_cell = size // 4
    images = np.empty((size, base.height, base.width, 3))
    labels = np.empty(size, dtype=np.int64)
    us = np.empty(size)
    flags = np.empty(size, dtype=bool)
    i = 0
    for label in (0, 1):
        for conf in (True, False):
            lo, hi = _cell_interval(kind, conf)
            for _ in range(per_cell):
                u = float(rng.uniform(lo, hi))
                img = render_base_image(base, label, rng)
                img = render_confounder(img, kind, u)
                images[i] = quantize_to_grid(img)
                labels[i] = label
                us[i] = u
                flags[i] = has_confounder_flag(kind, u)
                i += 1
    order = rng.permutation(size)
    return images[order], labels[order], us[order], flags[order]


def build_full_dataset(
    base: BaseSampleSpec,
    kind: str,
    sizes: dict[str, int] | None = None,
    seed: int = 0,
) -> LabeledDataset:
    """Render a dataset with exactly 25% of each split in each of the four
    (label, confounder) cells. Default sizes: 2400 train, 400 unpoisoned test.
    """
    check_choice(kind, CONFOUNDER_KINDS, "confounder.kind")
    sizes = dict(sizes or {"train": 2400, "test_unpoisoned": 400})
    for split in sizes:
        check_choice(split, SPLITS, "sizes")
    parts = []
    for split, size in sizes.items():
        size = check_positive(size, f"sizes.{split}", integer=True)
        images, labels, us, flags = _render_split(base, kind, split, size, seed)
        parts.append((split, images, labels, us, flags))
    return LabeledDataset(
        images=np.concatenate([p[1] for p in parts]),
        labels=np.concatenate([p[2] for p in parts]),
        splits=np.concatenate(
            [np.array([p[0]] * len(p[2]), dtype=object) for p in parts]
        ),
        u=np.concatenate([p[3] for p in parts]),
        has_confounder=np.concatenate([p[4] for p in parts]),
        confounder_kind=kind,
        num_classes=2,
    )


def poison_cell_counts(alpha: float, n: int) -> dict[tuple[int, bool], int]:
    """Four-cell counts for a poisoned split of size n at strength alpha.

    A fraction alpha of samples is label-aligned (class 1 with confounder,
    class 0 without); the remainder is anti-aligned. Classes stay exactly
    balanced: each class gets n // 2 samples.
    """
    alpha = check_fraction(alpha, "poison.alpha")
    n = check_positive(n, "poison split size", integer=True)
    if n % 2 != 0:
        raise ConfigurationError(
            f"poison split size: must be even for exact class balance, got {n}"
        )
    aligned = int(round(alpha * n))
    a1 = aligned // 2
    a0 = aligned - a1
    return {
        (1, True): a1,
        (0, False): a0,
        (1, False): n // 2 - a1,
        (0, True): n // 2 - a0,
    }


@dataclass
class PoisonSpec:
    """How to draw a poisoned train/validation pair from a full dataset."""

    alpha: float
    train_size: int = 800
    validation_size: int = 200
    seed: int = 0

    def __post_init__(self):
        self.alpha = check_fraction(self.alpha, "poison.alpha")
        self.train_size = check_positive(self.train_size, "poison.train_size", integer=True)
        self.validation_size = check_positive(
            self.validation_size, "poison.validation_size", integer=True
        )


def build_poisoned_subset(full: LabeledDataset, poison: PoisonSpec) -> LabeledDataset:
    """Draw poisoned train and validation splits from the full train pool.

    Train and validation are disjoint. The unpoisoned test split is copied
    through unchanged.
    """
    rng = np.random.default_rng([poison.seed, 3])
    train_idx = full.indices("train")
    pool: dict[tuple[int, bool], list[int]] = {}
    for label in (0, 1):
        for conf in (True, False):
            mask = (full.labels[train_idx] == label) & (
                full.has_confounder[train_idx] == conf
            )
            cell = train_idx[mask]
            pool[(label, conf)] = list(rng.permutation(cell))

    picked: list[tuple[int, str]] = []
    for split, size in (("train", poison.train_size), ("validation", poison.validation_size)):
        counts = poison_cell_counts(poison.alpha, size)
        for cell, need in counts.items():
            have = len(pool[cell])
            if have < need:
                label, conf = cell
                raise ConfigurationError(
                    f"poison: cell (label={label}, confounder={conf}) needs {need} "
                    f"samples for {split} but only {have} remain in the pool"
                )
            take, pool[cell] = pool[cell][:need], pool[cell][need:]
            picked.extend((int(i), split) for i in take)

    sel = [i for i, _ in picked]
    splits = np.array([s for _, s in picked], dtype=object)
    # Shuffle within each split so cell blocks are not contiguous.
    sel_arr = np.array(sel)
    out_idx: list[int] = []
    out_split: list[str] = []
    for split in ("train", "validation"):
        mask = splits == split
        order = rng.permutation(int(mask.sum()))
        out_idx.extend(sel_arr[mask][order])
        out_split.extend([split] * int(mask.sum()))
    test_idx = full.indices("test_unpoisoned")
    out_idx.extend(test_idx)
    out_split.extend(["test_unpoisoned"] * len(test_idx))

    out_idx = np.array(out_idx, dtype=np.int64)
    return LabeledDataset(
        images=full.images[out_idx],
        labels=full.labels[out_idx],
        splits=np.array(out_split, dtype=object),
        u=full.u[out_idx],
        has_confounder=full.has_confounder[out_idx],
        confounder_kind=full.confounder_kind,
        num_classes=full.num_classes,
    )


def save_image_png(x: np.ndarray, path) -> None:
    """Write an image already on the 8-bit grid as a lossless RGB PNG."""
    arr = np.asarray(x)
    eight = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(eight, mode="RGB").save(path, format="PNG")


def load_image_png(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_dataset(dataset: LabeledDataset, out_dir) -> Path:
    """Write PNGs plus a manifest.json; returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    samples = []
    for i in range(dataset.images.shape[0]):
        u = dataset.u[i]
        if not np.isfinite(u):
            raise InputError("save_dataset: cannot persist samples without metadata")
        rel = f"images/{dataset.splits[i]}_{i:05d}.png"
        save_image_png(dataset.images[i], out_dir / rel)
        samples.append(
            {
                "path": rel,
                "label": int(dataset.labels[i]),
                "u": float(u),
                "has_confounder": bool(dataset.has_confounder[i]),
                "split": str(dataset.splits[i]),
            }
        )
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "confounder_kind": dataset.confounder_kind,
        "num_classes": dataset.num_classes,
        "image_shape": list(dataset.image_shape),
        "cell_counts": {
            split: {
                f"label={label},confounder={str(conf).lower()}": count
                for (label, conf), count in dataset.cell_counts(split).items()
            }
            for split in SPLITS
            if len(dataset.indices(split))
        },
        "samples": samples,
    }
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest_path


def load_dataset(manifest_path) -> LabeledDataset:
    manifest_path = Path(manifest_path)
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise InputError(
            f"{manifest_path}: unsupported manifest schema "
            f"{manifest.get('schema_version')}"
        )
    root = manifest_path.parent
    samples = manifest["samples"]
    shape = tuple(manifest["image_shape"])
    images = np.empty((len(samples), *shape))
    labels = np.empty(len(samples), dtype=np.int64)
    splits = np.empty(len(samples), dtype=object)
    us = np.empty(len(samples))
    flags = np.empty(len(samples), dtype=bool)
    for i, s in enumerate(samples):
        img = load_image_png(root / s["path"])
        if img.shape != shape:
            raise InputError(
                f"{s['path']}: image shape {img.shape} does not match manifest {shape}"
            )
        images[i] = img
        labels[i] = s["label"]
        splits[i] = s["split"]
        us[i] = s["u"]
        flags[i] = s["has_confounder"]
    return LabeledDataset(
        images=images,
        labels=labels,
        splits=splits,
        u=us,
        has_confounder=flags,
        confounder_kind=manifest.get("confounder_kind"),
        num_classes=int(manifest.get("num_classes", 2)),
    )
