"""Affine coupling flow used as the latent space for counterfactual search.

RealNVP-style: alternating checkerboard masks, per-layer MLP conditioners
whose final layer is zero-initialized so every coupling starts as the
identity, and a tanh cap on the log-scale for stability. An optional logit
transform with epsilon margin maps [0, 1] pixels to the real line before the
couplings; epsilon 0 disables it, making an untrained flow the exact
identity on flattened images. Trained by maximum likelihood with Adam.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigurationError, InputError, NumericalError
from .validation import as_image_batch, check_non_negative, check_positive

logger = logging.getLogger(__name__)

_LOG_2PI = float(np.log(2.0 * np.pi))


def _checkerboard_masks(input_shape: tuple[int, int, int], n_layers: int) -> torch.Tensor:
    """Alternating binary masks, flattened to (n_layers, D).

    Spatial (row + col) parity checkerboard; for degenerate 1x1 "images"
    (toy 2-d problems) falls back to parity of the flattened index so the
    couplings still mix dimensions.
    """
    h, w, c = input_shape
    d = h * w * c
    if h * w > 1:
        rows = np.arange(h)[:, None, None]
        cols = np.arange(w)[None, :, None]
        base = ((rows + cols) % 2).repeat(c, axis=2).reshape(-1)
    else:
        base = np.arange(d) % 2
    masks = np.stack([(base + layer) % 2 for layer in range(n_layers)])
    return torch.from_numpy(masks.astype(np.float64))


class _FlowNet(torch.nn.Module):
    def __init__(self, input_shape, n_layers, hidden_width, scale_cap, logit_eps, seed):
        super().__init__()
        h, w, c = input_shape
        self.d = h * w * c
        self.scale_cap = float(scale_cap)
        self.logit_eps = float(logit_eps)
        self.register_buffer("masks", _checkerboard_masks(input_shape, n_layers))
        gen = torch.Generator().manual_seed(int(seed) & 0x7FFFFFFF)
        layers = []
        for _ in range(n_layers):
            lin1 = torch.nn.Linear(self.d, hidden_width).to(torch.float64)
            lin2 = torch.nn.Linear(hidden_width, 2 * self.d).to(torch.float64)
            bound = 1.0 / float(np.sqrt(self.d))
            with torch.no_grad():
                lin1.weight.uniform_(-bound, bound, generator=gen)
                lin1.bias.uniform_(-bound, bound, generator=gen)
                lin2.weight.zero_()
                lin2.bias.zero_()
            layers.append(torch.nn.Sequential(lin1, torch.nn.Tanh(), lin2))
        self.conditioners = torch.nn.ModuleList(layers)

    def _scale_shift(self, layer: int, masked: torch.Tensor):
        out = self.conditioners[layer](masked)
        s_raw, t = out.chunk(2, dim=1)
        s = self.scale_cap * torch.tanh(s_raw / self.scale_cap)
        return s, t

    def _logit_forward(self, x: torch.Tensor):
        eps = self.logit_eps
        p = eps + (1.0 - 2.0 * eps) * x
        y = torch.log(p) - torch.log1p(-p)
        log_det = (np.log(1.0 - 2.0 * eps) - torch.log(p) - torch.log1p(-p)).sum(dim=1)
        return y, log_det

    def _logit_inverse(self, y: torch.Tensor):
        eps = self.logit_eps
        return (torch.sigmoid(y) - eps) / (1.0 - 2.0 * eps)

    def encode(self, x_flat: torch.Tensor):
        """x -> (z, log|det dz/dx|)."""
        z = x_flat
        log_det = torch.zeros(x_flat.shape[0], dtype=torch.float64, device=x_flat.device)
        if self.logit_eps > 0:
            z, ld = self._logit_forward(z)
            log_det = log_det + ld
        for layer in range(len(self.conditioners)):
            m = self.masks[layer]
            s, t = self._scale_shift(layer, z * m)
            z = m * z + (1.0 - m) * (z * torch.exp(s) + t)
            log_det = log_det + ((1.0 - m) * s).sum(dim=1)
        return z, log_det

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        x = z
        for layer in reversed(range(len(self.conditioners))):
            m = self.masks[layer]
            s, t = self._scale_shift(layer, x * m)
            x = m * x + (1.0 - m) * ((x - t) * torch.exp(-s))
        if self.logit_eps > 0:
            x = self._logit_inverse(x)
        return x

    def log_likelihood(self, x_flat: torch.Tensor) -> torch.Tensor:
        z, log_det = self.encode(x_flat)
        base = -0.5 * (z * z).sum(dim=1) - 0.5 * self.d * _LOG_2PI
        return base + log_det


class CouplingFlow(BaseEstimator, TransformerMixin):
    """Invertible map between images and a standard-normal latent space.

    transform encodes, inverse_transform decodes, score_samples returns the
    per-sample log-likelihood. Construction gives identity couplings; with
    logit_eps=0 the whole untrained flow is the identity on flattened images.
    """

    def __init__(
        self,
        input_shape=(32, 32, 3),
        num_coupling_layers=6,
        hidden_width=64,
        epochs=5,
        batch_size=128,
        learning_rate=1e-3,
        logit_eps=1e-3,
        scale_cap=2.0,
        seed=0,
    ):
        self.input_shape = input_shape
        self.num_coupling_layers = num_coupling_layers
        self.hidden_width = hidden_width
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.logit_eps = logit_eps
        self.scale_cap = scale_cap
        self.seed = seed

    def _validate_params_(self) -> None:
        if len(self.input_shape) != 3:
            raise ConfigurationError(
                f"input_shape: expected (H, W, C), got {self.input_shape}"
            )
        if int(self.num_coupling_layers) < 2:
            raise ConfigurationError(
                f"num_coupling_layers: need at least 2 so every dimension is "
                f"transformed, got {self.num_coupling_layers}"
            )
        check_positive(self.hidden_width, "hidden_width", integer=True)
        check_non_negative(self.epochs, "epochs", integer=True)
        check_positive(self.batch_size, "batch_size", integer=True)
        check_positive(self.learning_rate, "learning_rate")
        if not 0.0 <= float(self.logit_eps) < 0.5:
            raise ConfigurationError(
                f"logit_eps: must lie in [0, 0.5), got {self.logit_eps}"
            )
        check_positive(self.scale_cap, "scale_cap")

    def _ensure_net(self) -> None:
        if getattr(self, "net_", None) is None:
            self._validate_params_()
            self.net_ = _FlowNet(
                tuple(self.input_shape),
                int(self.num_coupling_layers),
                int(self.hidden_width),
                float(self.scale_cap),
                float(self.logit_eps),
                int(self.seed),
            )

    @property
    def latent_dim(self) -> int:
        h, w, c = self.input_shape
        return h * w * c

    # -- torch-level access --------------------------------------------------

    def torch_net(self) -> _FlowNet:
        self._ensure_net()
        return self.net_

    def decode_torch(self, z: torch.Tensor) -> torch.Tensor:
        """Decode a (n, D) latent tensor to (n, H, W, C), keeping the graph."""
        self._ensure_net()
        x = self.net_.decode(z)
        return x.reshape(-1, *self.input_shape)

    # -- numpy API -------------------------------------------------------------

    def _flat_batch(self, X) -> tuple[torch.Tensor, bool]:
        Xb, single = as_image_batch(X, tuple(self.input_shape))
        flat = torch.from_numpy(np.ascontiguousarray(Xb.reshape(Xb.shape[0], -1)))
        return flat, single

    def fit(self, X, y=None) -> "CouplingFlow":
        self._validate_params_()
        self.net_ = None
        self._ensure_net()
        flat, _ = self._flat_batch(X)
        n = flat.shape[0]
        if n == 0:
            raise ConfigurationError("fit: training split is empty")
        opt = torch.optim.Adam(self.net_.parameters(), lr=float(self.learning_rate))
        history = []
        for epoch in range(int(self.epochs)):
            order = np.random.default_rng([int(self.seed) & 0x7FFFFFFF, 29, epoch]).permutation(n)
            epoch_ll = 0.0
            for start in range(0, n, int(self.batch_size)):
                idx = order[start : start + int(self.batch_size)]
                ll = self.net_.log_likelihood(flat[idx])
                loss = -ll.mean()
                if not torch.isfinite(loss):
                    raise NumericalError(
                        f"flow fit: non-finite loss at epoch {epoch}, batch start {start}"
                    )
                opt.zero_grad()
                loss.backward()
                opt.step()
                epoch_ll += float(ll.detach().sum())
            history.append(epoch_ll / n)
            logger.info("flow fit: epoch %d mean log-likelihood %.2f", epoch, history[-1])
        self.log_likelihood_history_ = history
        return self

    def transform(self, X) -> np.ndarray:
        """Encode images to latent vectors (n, D)."""
        flat, single = self._flat_batch(X)
        self._ensure_net()
        with torch.no_grad():
            z, _ = self.net_.encode(flat)
        z = z.numpy()
        return z[0] if single else z

    def inverse_transform(self, Z) -> np.ndarray:
        """Decode latent vectors back to images.

        Output is not clipped: values slightly outside [0, 1] are legitimate
        during search and only snapped at presentation time.
        """
        Z = np.asarray(Z, dtype=np.float64)
        single = Z.ndim == 1
        if single:
            Z = Z[None]
        if Z.ndim != 2 or Z.shape[1] != self.latent_dim:
            raise InputError(
                f"inverse_transform: expected (n, {self.latent_dim}) latents, got {Z.shape}"
            )
        self._ensure_net()
        with torch.no_grad():
            x = self.net_.decode(torch.from_numpy(np.ascontiguousarray(Z)))
        x = x.reshape(-1, *self.input_shape).numpy()
        return x[0] if single else x

    encode = transform
    decode = inverse_transform

    def score_samples(self, X) -> np.ndarray:
        flat, single = self._flat_batch(X)
        self._ensure_net()
        with torch.no_grad():
            ll = self.net_.log_likelihood(flat).numpy()
        return float(ll[0]) if single else ll

    def log_det_jacobian(self, X) -> np.ndarray:
        """log |det d encode/dx| per sample."""
        flat, single = self._flat_batch(X)
        self._ensure_net()
        with torch.no_grad():
            _, ld = self.net_.encode(flat)
        ld = ld.numpy()
        return float(ld[0]) if single else ld

    # -- persistence -----------------------------------------------------------

    def save(self, path) -> None:
        self._ensure_net()
        arrays = {name: p.detach().numpy() for name, p in self.net_.named_parameters()}
        meta = {
            "input_shape": list(self.input_shape),
            "num_coupling_layers": int(self.num_coupling_layers),
            "hidden_width": int(self.hidden_width),
            "logit_eps": float(self.logit_eps),
            "scale_cap": float(self.scale_cap),
            "seed": int(self.seed),
        }
        save_checkpoint(path, "flow", meta, arrays)

    @classmethod
    def load(cls, path) -> "CouplingFlow":
        kind, meta, arrays = load_checkpoint(path)
        if kind != "flow":
            raise InputError(f"{path}: checkpoint holds a {kind!r}, not a flow")
        flow = cls(
            input_shape=tuple(meta["input_shape"]),
            num_coupling_layers=int(meta["num_coupling_layers"]),
            hidden_width=int(meta["hidden_width"]),
            logit_eps=float(meta["logit_eps"]),
            scale_cap=float(meta["scale_cap"]),
            seed=int(meta.get("seed", 0)),
        )
        flow._ensure_net()
        named = dict(flow.net_.named_parameters())
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
        return flow


@dataclass
class FlowConfig:
    """Settings for train_generator."""

    num_coupling_layers: int = 6
    hidden_width: int = 64
    epochs: int = 5
    batch_size: int = 128
    learning_rate: float = 1e-3
    logit_eps: float = 1e-3
    scale_cap: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if int(self.num_coupling_layers) < 2:
            raise ConfigurationError(
                f"flow.num_coupling_layers: need at least 2, got {self.num_coupling_layers}"
            )
        check_positive(self.hidden_width, "flow.hidden_width", integer=True)
        check_non_negative(self.epochs, "flow.epochs", integer=True)
        check_positive(self.batch_size, "flow.batch_size", integer=True)
        check_positive(self.learning_rate, "flow.learning_rate")
        if not 0.0 <= float(self.logit_eps) < 0.5:
            raise ConfigurationError(
                f"flow.logit_eps: must lie in [0, 0.5), got {self.logit_eps}"
            )
        check_positive(self.scale_cap, "flow.scale_cap")


def train_generator(dataset, split: str, config: FlowConfig) -> CouplingFlow:
    """Train a coupling flow on one split of a dataset."""
    X, _ = dataset.split_arrays(split)
    flow = CouplingFlow(
        input_shape=dataset.image_shape,
        num_coupling_layers=config.num_coupling_layers,
        hidden_width=config.hidden_width,
        epochs=config.epochs,
        batch_size=config.batch_size,
        learning_rate=config.learning_rate,
        logit_eps=config.logit_eps,
        scale_cap=config.scale_cap,
        seed=config.seed,
    )
    return flow.fit(X)
