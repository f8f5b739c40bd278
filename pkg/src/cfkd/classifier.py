"""Image classifier with probability and input-gradient access.

A small CNN (or a linear head for toy problems) trained with SGD. Everything
runs in float64 on CPU and is deterministic given the seed: parameter init
draws from a dedicated torch.Generator and batch order from a seeded numpy
Generator. No normalization layers, so per-sample outputs do not depend on
batch composition.
"""

from __future__ import annotations

import copy
import logging

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigurationError, InputError, NumericalError
from .validation import (
    as_image_batch,
    check_choice,
    check_labels,
    check_non_negative,
    check_positive,
)

logger = logging.getLogger(__name__)

_PREDICT_CHUNK = 512


def _build_module(architecture: dict, num_classes: int) -> torch.nn.Module:
    kind = architecture["kind"]
    h, w, c = architecture["input_shape"]
    if kind == "linear":
        return torch.nn.Sequential(
            torch.nn.Flatten(),
            torch.nn.Linear(h * w * c, num_classes),
        ).to(torch.float64)
    if kind == "cnn":
        c1, c2 = architecture["channels"]
        if h % 4 != 0 or w % 4 != 0:
            raise ConfigurationError(
                f"cnn architecture needs height and width divisible by 4, got {h}x{w}"
            )
        return torch.nn.Sequential(
            torch.nn.Conv2d(c, c1, kernel_size=3, padding=1),
            torch.nn.ReLU(),
            torch.nn.AvgPool2d(2),
            torch.nn.Conv2d(c1, c2, kernel_size=3, padding=1),
            torch.nn.ReLU(),
            torch.nn.AvgPool2d(2),
            torch.nn.Flatten(),
            torch.nn.Linear(c2 * (h // 4) * (w // 4), num_classes),
        ).to(torch.float64)
    raise ConfigurationError(f"architecture.kind: unknown kind {kind!r}")


def _init_params(module: torch.nn.Module, seed: int) -> None:
    """Uniform(-1/sqrt(fan_in)) init for every conv/linear, from one generator."""
    gen = torch.Generator().manual_seed(int(seed) & 0x7FFFFFFF)
    for m in module.modules():
        if isinstance(m, (torch.nn.Conv2d, torch.nn.Linear)):
            fan_in = m.weight.shape[1] * (
                m.weight.shape[2] * m.weight.shape[3]
                if isinstance(m, torch.nn.Conv2d)
                else 1
            )
            bound = 1.0 / float(np.sqrt(fan_in))
            with torch.no_grad():
                m.weight.uniform_(-bound, bound, generator=gen)
                m.bias.uniform_(-bound, bound, generator=gen)


class ImageClassifier(BaseEstimator, ClassifierMixin):
    """CNN or linear classifier over images in [0, 1], channels-last.

    Parameters
    ----------
    input_shape : (H, W, C) of accepted images.
    num_classes : number of output classes.
    architecture : "cnn" or "linear".
    conv_channels : channel widths of the two conv blocks (cnn only).
    epochs, batch_size, learning_rate, momentum : SGD settings for fit.
    fine_tune : when True, fit continues from the current parameters
        instead of re-initializing.
    seed : drives parameter init and batch shuffling.
    """

    def __init__(
        self,
        input_shape=(32, 32, 3),
        num_classes=2,
        architecture="cnn",
        conv_channels=(16, 32),
        epochs=12,
        batch_size=64,
        learning_rate=0.01,
        momentum=0.9,
        fine_tune=False,
        seed=0,
    ):
        self.input_shape = input_shape
        self.num_classes = num_classes
        self.architecture = architecture
        self.conv_channels = conv_channels
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.fine_tune = fine_tune
        self.seed = seed

    # -- construction ------------------------------------------------------

    def _validate_params_(self) -> None:
        check_choice(self.architecture, ("cnn", "linear"), "architecture")
        if len(self.input_shape) != 3:
            raise ConfigurationError(
                f"input_shape: expected (H, W, C), got {self.input_shape}"
            )
        check_positive(self.num_classes, "num_classes", integer=True)
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes: need at least 2, got {self.num_classes}")
        check_non_negative(self.epochs, "epochs", integer=True)
        check_positive(self.batch_size, "batch_size", integer=True)
        check_positive(self.learning_rate, "learning_rate")
        check_non_negative(self.momentum, "momentum")

    def _architecture_descriptor(self) -> dict:
        desc = {"kind": self.architecture, "input_shape": list(self.input_shape)}
        if self.architecture == "cnn":
            desc["channels"] = [int(c) for c in self.conv_channels]
        return desc

    def _ensure_module(self) -> None:
        if getattr(self, "module_", None) is None:
            self._validate_params_()
            self.module_ = _build_module(self._architecture_descriptor(), self.num_classes)
            _init_params(self.module_, self.seed)

    # -- torch-level access (used by the counterfactual engine) -------------

    def torch_module(self) -> torch.nn.Module:
        self._ensure_module()
        return self.module_

    def logits_torch(self, x_nhwc: torch.Tensor) -> torch.Tensor:
        """Forward a (n, H, W, C) float64 tensor; keeps the autograd graph."""
        self._ensure_module()
        return self.module_(x_nhwc.permute(0, 3, 1, 2))

    # -- estimator API -------------------------------------------------------

    def fit(self, X, y) -> "ImageClassifier":
        self._validate_params_()
        X, _ = as_image_batch(X, tuple(self.input_shape))
        y = check_labels(y, n=X.shape[0], num_classes=self.num_classes)
        if X.shape[0] == 0:
            raise ConfigurationError("fit: training split is empty")
        if np.unique(y).size < 2:
            raise ConfigurationError(
                "fit: training split contains a single class; cannot train"
            )
        if not (self.fine_tune and getattr(self, "module_", None) is not None):
            self.module_ = None
        self._ensure_module()

        xt = torch.from_numpy(np.ascontiguousarray(X))
        yt = torch.from_numpy(y)
        opt = torch.optim.SGD(
            self.module_.parameters(), lr=self.learning_rate, momentum=self.momentum
        )
        loss_fn = torch.nn.CrossEntropyLoss()
        n = X.shape[0]
        for epoch in range(self.epochs):
            order = np.random.default_rng([int(self.seed) & 0x7FFFFFFF, 17, epoch]).permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                bx = xt[idx].permute(0, 3, 1, 2)
                opt.zero_grad()
                loss = loss_fn(self.module_(bx), yt[idx])
                if not torch.isfinite(loss):
                    raise NumericalError(
                        f"fit: non-finite loss at epoch {epoch}, batch start {start}"
                    )
                loss.backward()
                opt.step()
        self.classes_ = np.arange(self.num_classes)
        self.train_accuracy_ = float((self.predict(X) == y).mean())
        logger.info(
            "classifier fit: %d samples, %d epochs, train accuracy %.4f",
            n,
            self.epochs,
            self.train_accuracy_,
        )
        return self

    def predict_proba(self, X) -> np.ndarray:
        Xb, single = as_image_batch(X, tuple(self.input_shape))
        self._ensure_module()
        outs = []
        with torch.no_grad():
            for start in range(0, Xb.shape[0], _PREDICT_CHUNK):
                chunk = torch.from_numpy(
                    np.ascontiguousarray(Xb[start : start + _PREDICT_CHUNK])
                )
                logits = self.logits_torch(chunk)
                outs.append(torch.softmax(logits, dim=1).numpy())
        probs = (
            np.concatenate(outs)
            if outs
            else np.zeros((0, self.num_classes))
        )
        return probs[0] if single else probs

    def predict(self, X) -> np.ndarray:
        probs = self.predict_proba(X)
        if probs.ndim == 1:
            return int(np.argmax(probs))
        return np.argmax(probs, axis=1)

    def input_gradient(self, x, target_class: int) -> np.ndarray:
        """Gradient of log softmax probability of target_class w.r.t. x."""
        xb, single = as_image_batch(x, tuple(self.input_shape))
        if not 0 <= int(target_class) < self.num_classes:
            raise InputError(
                f"target_class: must lie in [0, {self.num_classes}), got {target_class}"
            )
        xt = torch.from_numpy(np.ascontiguousarray(xb)).requires_grad_(True)
        logp = torch.log_softmax(self.logits_torch(xt), dim=1)[:, int(target_class)]
        logp.sum().backward()
        grad = xt.grad.numpy()
        if not np.isfinite(grad).all():
            raise NumericalError(
                f"input_gradient: non-finite gradient for target class {target_class}"
            )
        return grad[0] if single else grad

    def accuracy(self, X, y) -> float:
        X, _ = as_image_batch(X, tuple(self.input_shape))
        y = check_labels(y, n=X.shape[0], num_classes=self.num_classes)
        if X.shape[0] == 0:
            raise InputError("accuracy: empty evaluation split")
        return float((self.predict(X) == y).mean())

    def clone_fitted(self) -> "ImageClassifier":
        """Deep copy carrying over trained parameters."""
        return copy.deepcopy(self)

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        self._ensure_module()
        arrays = {
            name: p.detach().numpy() for name, p in self.module_.named_parameters()
        }
        meta = {
            "architecture": self._architecture_descriptor(),
            "num_classes": int(self.num_classes),
            "seed": int(self.seed),
            "params": {
                "conv_channels": [int(c) for c in self.conv_channels],
                "epochs": int(self.epochs),
                "batch_size": int(self.batch_size),
                "learning_rate": float(self.learning_rate),
                "momentum": float(self.momentum),
            },
        }
        save_checkpoint(path, "classifier", meta, arrays)

    @classmethod
    def load(cls, path) -> "ImageClassifier":
        kind, meta, arrays = load_checkpoint(path)
        if kind != "classifier":
            raise InputError(f"{path}: checkpoint holds a {kind!r}, not a classifier")
        desc = meta["architecture"]
        params = meta.get("params", {})
        clf = cls(
            input_shape=tuple(desc["input_shape"]),
            num_classes=int(meta["num_classes"]),
            architecture=desc["kind"],
            conv_channels=tuple(desc.get("channels", (16, 32))),
            epochs=params.get("epochs", 12),
            batch_size=params.get("batch_size", 64),
            learning_rate=params.get("learning_rate", 0.01),
            momentum=params.get("momentum", 0.9),
            seed=int(meta.get("seed", 0)),
        )
        clf._ensure_module()
        named = dict(clf.module_.named_parameters())
        if set(named) != set(arrays):
            raise InputError(f"{path}: checkpoint parameters do not match architecture")
        with torch.no_grad():
            for name, param in named.items():
                value = arrays[name]
                if tuple(param.shape) != value.shape:
                    raise InputError(
                        f"{path}: parameter {name} has shape {value.shape}, "
                        f"expected {tuple(param.shape)}"
                    )
                param.copy_(torch.from_numpy(value))
        clf.classes_ = np.arange(clf.num_classes)
        return clf


def train_classifier(dataset, split: str, config, init: ImageClassifier | None = None):
    """Train a classifier on one split of a dataset.

    config is a TrainConfig (see distill module); init provides warm-start
    parameters when config.fine_tune is set.
    """
    X, y = dataset.split_arrays(split)
    if init is not None and config.fine_tune:
        clf = init.clone_fitted()
        clf.set_params(
            epochs=config.epochs,
            batch_size=config.batch_size,
            learning_rate=config.learning_rate,
            fine_tune=True,
            seed=config.seed,
        )
    else:
        clf = ImageClassifier(
            input_shape=dataset.image_shape,
            num_classes=dataset.num_classes,
            architecture=config.architecture,
            conv_channels=tuple(config.conv_channels),
            epochs=config.epochs,
            batch_size=config.batch_size,
            learning_rate=config.learning_rate,
            momentum=config.momentum,
            fine_tune=False,
            seed=config.seed,
        )
    return clf.fit(X, y)
