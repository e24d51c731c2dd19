"""Two-layer bidirectional LSTM regressor trained on summed squared error.

Weights live in one flat float64 vector so the optimizer, the gradient
check and serialization all see the same layout.  The recurrent loops are
compiled with numba; input projections and weight gradients are batched
matrix products over the whole sequence.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .alignment import Standardizer
from .errors import DivergedToNonFiniteError, ShapeMismatchError

log = logging.getLogger(__name__)

DEFAULT_SEED = 1787452436
DIRECTIONS = ("fwd", "bwd")


@dataclass
class ModelConfig:
    input_dim: int
    hidden_sizes: tuple[int, ...] = (40, 30)
    output_dim: int = 1
    learning_rate: float = 1e-5
    momentum: float = 0.9
    noise_std: float = 0.1
    max_epochs: int = 100
    patience: int = 10
    seed: int = DEFAULT_SEED
    init_scale: float = 0.1
    clip_norm: float | None = None  # SSE gradients over long sequences have norms in the thousands

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        if self.input_dim < 1 or self.output_dim < 1 or not self.hidden_sizes:
            raise ValueError("input_dim, output_dim and hidden_sizes must be positive")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden sizes must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.max_epochs < 1 or not 1 <= self.patience <= self.max_epochs:
            raise ValueError("need 1 <= patience <= max_epochs")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive or None")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d


def param_layout(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    layout = []
    d_in = cfg.input_dim
    for layer, h in enumerate(cfg.hidden_sizes):
        for dn in DIRECTIONS:
            layout += [
                (f"l{layer}_{dn}_W", (4 * h, d_in)),
                (f"l{layer}_{dn}_U", (4 * h, h)),
                (f"l{layer}_{dn}_b", (4 * h,)),
            ]
        d_in = 2 * h
    layout += [("out_W", (cfg.output_dim, d_in)), ("out_b", (cfg.output_dim,))]
    return layout


def n_params(cfg: ModelConfig) -> int:
    return sum(math.prod(shape) for _, shape in param_layout(cfg))


def unflatten(cfg: ModelConfig, flat: np.ndarray) -> dict[str, np.ndarray]:
    """Named reshaped views into ``flat`` (writes go through to the vector)."""
    views, pos = {}, 0
    for name, shape in param_layout(cfg):
        size = math.prod(shape)
        views[name] = flat[pos : pos + size].reshape(shape)
        pos += size
    return views


@dataclass
class ModelParameters:
    config: ModelConfig
    flat: np.ndarray
    standardizer: Standardizer | None = None
    feature_columns: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.flat = np.ascontiguousarray(self.flat, dtype=np.float64)
        if self.flat.shape != (n_params(self.config),):
            raise ShapeMismatchError(f"expected {n_params(self.config)} parameters, got {self.flat.shape}")

    @property
    def views(self) -> dict[str, np.ndarray]:
        return unflatten(self.config, self.flat)

    def copy(self) -> "ModelParameters":
        return ModelParameters(self.config, self.flat.copy(), self.standardizer, list(self.feature_columns))


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    init_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.Philox(init_ss)), np.random.Generator(np.random.Philox(noise_ss))


def init(cfg: ModelConfig) -> ModelParameters:
    """Uniform(-init_scale, init_scale) weights from a Philox stream keyed by ``cfg.seed``."""
    rng, _ = _streams(cfg.seed)
    flat = rng.uniform(-cfg.init_scale, cfg.init_scale, n_params(cfg))
    return ModelParameters(cfg, flat)


# ---------------------------------------------------------------- kernels
@numba.njit(cache=True)
def _sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


@numba.njit(cache=True)
def _lstm_forward(xproj, U, reverse):
    """Run one direction of one layer.

    ``xproj`` holds the input projections plus bias for every step; gate
    blocks are ordered input, forget, output, candidate.  Returns hidden
    states, cell states and gate activations indexed by time.
    """
    T, G = xproj.shape
    H = G // 4
    hs = np.zeros((T, H))
    cs = np.zeros((T, H))
    acts = np.zeros((T, G))
    h = np.zeros(H)
    c = np.zeros(H)
    z = np.zeros(G)
    for s in range(T):
        t = T - 1 - s if reverse else s
        for r in range(G):
            acc = xproj[t, r]
            for k in range(H):
                acc += U[r, k] * h[k]
            z[r] = acc
        for k in range(H):
            ig = _sigmoid(z[k])
            fg = _sigmoid(z[H + k])
            og = _sigmoid(z[2 * H + k])
            gg = math.tanh(z[3 * H + k])
            c[k] = fg * c[k] + ig * gg
            h[k] = og * math.tanh(c[k])
            acts[t, k] = ig
            acts[t, H + k] = fg
            acts[t, 2 * H + k] = og
            acts[t, 3 * H + k] = gg
            hs[t, k] = h[k]
            cs[t, k] = c[k]
    return hs, cs, acts


@numba.njit(cache=True)
def _lstm_backward(dH, U, cs, acts, reverse):
    """Backpropagate ``dH`` (loss gradient w.r.t. each hidden output) to gate pre-activations."""
    T, H = dH.shape
    G = 4 * H
    dZ = np.zeros((T, G))
    dh_rec = np.zeros(H)
    dc_next = np.zeros(H)
    dz = np.zeros(G)
    for s in range(T - 1, -1, -1):
        t = T - 1 - s if reverse else s
        tp = t + 1 if reverse else t - 1
        for k in range(H):
            ig = acts[t, k]
            fg = acts[t, H + k]
            og = acts[t, 2 * H + k]
            gg = acts[t, 3 * H + k]
            c_prev = cs[tp, k] if s > 0 else 0.0
            tc = math.tanh(cs[t, k])
            dh = dH[t, k] + dh_rec[k]
            dc = dc_next[k] + dh * og * (1.0 - tc * tc)
            dz[k] = dc * gg * ig * (1.0 - ig)
            dz[H + k] = dc * c_prev * fg * (1.0 - fg)
            dz[2 * H + k] = dh * tc * og * (1.0 - og)
            dz[3 * H + k] = dc * ig * (1.0 - gg * gg)
            dc_next[k] = dc * fg
        for k in range(H):
            acc = 0.0
            for r in range(G):
                acc += U[r, k] * dz[r]
            dh_rec[k] = acc
        for r in range(G):
            dZ[t, r] = dz[r]
    return dZ


# ---------------------------------------------------------------- network
def _check_input(params: ModelParameters, sequence) -> np.ndarray:
    x = np.asarray(sequence, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] != params.config.input_dim or x.shape[0] < 1:
        raise ShapeMismatchError(
            f"expected a (T >= 1, {params.config.input_dim}) sequence, got {np.shape(sequence)}"
        )
    return np.ascontiguousarray(x)


def _run(params: ModelParameters, x: np.ndarray, keep_cache: bool):
    v = params.views
    cache = []
    layer_in = x
    for layer in range(len(params.config.hidden_sizes)):
        outs, dir_cache = [], []
        for dn in DIRECTIONS:
            W, U, b = v[f"l{layer}_{dn}_W"], v[f"l{layer}_{dn}_U"], v[f"l{layer}_{dn}_b"]
            xproj = layer_in @ W.T + b
            hs, cs, acts = _lstm_forward(xproj, np.ascontiguousarray(U), dn == "bwd")
            outs.append(hs)
            if keep_cache:
                dir_cache.append((hs, cs, acts))
        if keep_cache:
            cache.append((layer_in, dir_cache))
        layer_in = np.concatenate(outs, axis=1)
    y = layer_in @ v["out_W"].T + v["out_b"]
    return y, layer_in, cache


def forward(params: ModelParameters, sequence) -> np.ndarray:
    """(T, input_dim) standardized features -> (T, output_dim) standardized predictions."""
    x = _check_input(params, sequence)
    return _run(params, x, keep_cache=False)[0]


def gradient(params: ModelParameters, sequence, target) -> tuple[float, np.ndarray]:
    """SSE over the sequence and its exact gradient (BPTT) in the flat layout."""
    x = _check_input(params, sequence)
    t = np.asarray(target, dtype=np.float64).reshape(x.shape[0], -1)
    if t.shape[1] != params.config.output_dim:
        raise ShapeMismatchError(f"target shape {np.shape(target)} does not match the output layer")
    y, top, cache = _run(params, x, keep_cache=True)
    resid = y - t
    loss = float(np.sum(resid * resid))

    grad = np.zeros_like(params.flat)
    g = unflatten(params.config, grad)
    v = params.views
    dY = 2.0 * resid
    g["out_W"][...] = dY.T @ top
    g["out_b"][...] = dY.sum(axis=0)
    d_out = dY @ v["out_W"]

    for layer in range(len(params.config.hidden_sizes) - 1, -1, -1):
        layer_in, dir_cache = cache[layer]
        H = params.config.hidden_sizes[layer]
        d_in = np.zeros_like(layer_in)
        for i, dn in enumerate(DIRECTIONS):
            hs, cs, acts = dir_cache[i]
            W, U = v[f"l{layer}_{dn}_W"], v[f"l{layer}_{dn}_U"]
            dH = np.ascontiguousarray(d_out[:, i * H : (i + 1) * H])
            dZ = _lstm_backward(dH, np.ascontiguousarray(U), cs, acts, dn == "bwd")
            h_prev = np.zeros_like(hs)
            if dn == "fwd":
                h_prev[1:] = hs[:-1]
            else:
                h_prev[:-1] = hs[1:]
            g[f"l{layer}_{dn}_W"][...] = dZ.T @ layer_in
            g[f"l{layer}_{dn}_U"][...] = dZ.T @ h_prev
            g[f"l{layer}_{dn}_b"][...] = dZ.sum(axis=0)
            d_in += dZ @ W
        d_out = d_in
    return loss, grad


# ---------------------------------------------------------------- training
@dataclass
class TrainLog:
    train_sse: list[float] = field(default_factory=list)
    val_sse: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


class EarlyStopping:
    """Tracks the best validation SSE; signals a stop after ``patience`` epochs without a new minimum."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch: int, val_sse: float) -> bool:
        """Record an epoch; returns True when it is the new best."""
        if val_sse < self.best:
            self.best, self.best_epoch, self.stale = val_sse, epoch, 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


Sequences = Sequence[tuple[np.ndarray, np.ndarray]]


def sequence_sse(params: ModelParameters, data: Sequences) -> float:
    total = 0.0
    for x, y in data:
        r = forward(params, x)[:, 0] - np.ravel(y)
        total += float(r @ r)
    return total


def train(
    cfg: ModelConfig,
    train_set: Sequences,
    validation_set: Sequences,
    *,
    initial: ModelParameters | None = None,
) -> tuple[ModelParameters, TrainLog]:
    """Per-sequence SGD with momentum, input noise and validation early stopping.

    Inputs and targets must already be standardized.  Sequences are visited
    in the given order every epoch; each visit sees a freshly noised copy of
    its inputs.  Returns the parameters of the epoch with the lowest
    validation SSE.
    """
    if not train_set or not validation_set:
        raise ValueError("training and validation sets must be non-empty")
    params = initial.copy() if initial is not None else init(cfg)
    _, noise_rng = _streams(cfg.seed)
    velocity = np.zeros_like(params.flat)
    stopper = EarlyStopping(cfg.patience)
    best = params.copy()
    log_ = TrainLog()

    for epoch in range(1, cfg.max_epochs + 1):
        epoch_sse = 0.0
        for x, y in train_set:
            noisy = x + noise_rng.normal(0.0, cfg.noise_std, x.shape) if cfg.noise_std > 0 else x
            loss, grad = gradient(params, noisy, y)
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise DivergedToNonFiniteError(f"non-finite loss/gradient at epoch {epoch}")
            if cfg.clip_norm is not None:
                norm = float(np.sqrt(grad @ grad))
                if norm > cfg.clip_norm:
                    grad *= cfg.clip_norm / norm
            velocity *= cfg.momentum
            velocity -= cfg.learning_rate * grad
            params.flat += velocity
            epoch_sse += loss
        val = sequence_sse(params, validation_set)
        if not math.isfinite(val):
            raise DivergedToNonFiniteError(f"non-finite validation SSE at epoch {epoch}")
        log_.train_sse.append(epoch_sse)
        log_.val_sse.append(val)
        if stopper.update(epoch, val):
            best = params.copy()
        log.debug("epoch %d train_sse=%.6g val_sse=%.6g", epoch, epoch_sse, val)
        if stopper.should_stop:
            log_.stop_reason = "early_stop"
            break
    else:
        log_.stop_reason = "max_epochs"
    log_.best_epoch = stopper.best_epoch
    return best, log_


def predict(params: ModelParameters, sequence) -> np.ndarray:
    """Raw features -> predictions in label units, via the attached standardizer."""
    if params.standardizer is None:
        raise ValueError("model has no standardizer attached")
    z = params.standardizer.apply(sequence)
    return params.standardizer.invert_target(forward(params, z)[:, 0])


# ---------------------------------------------------------------- persistence
def save(params: ModelParameters, path: str | Path, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"config": params.config.to_dict(), "feature_columns": params.feature_columns, **(extra or {})}
    arrays = {"params": params.flat, "meta": np.array(json.dumps(meta, sort_keys=True))}
    if params.standardizer is not None:
        arrays.update(params.standardizer.to_arrays())
    with path.open("wb") as fh:
        np.savez(fh, **arrays)
    return path


def load(path: str | Path) -> tuple[ModelParameters, dict]:
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        cfg = ModelConfig(**meta["config"])
        std = Standardizer.from_arrays(z) if "std_target" in z.files else None
        params = ModelParameters(cfg, z["params"].copy(), std, list(meta.get("feature_columns", [])))
    return params, meta
