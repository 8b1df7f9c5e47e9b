"""Minimal neural numerics: GRU cell, unrolled passes, loss, and SGD.

Everything is plain float64 numpy. Parameter containers are immutable from
the caller's point of view; the optimizer returns fresh arrays. The GRU
state update follows the convention

    z = sigmoid(W_z x + U_z h + b_z)
    r = sigmoid(W_r x + U_r h + b_r)
    hcand = tanh(W_h x + U_h (r * h) + b_h)
    h' = (1 - z) * h + z * hcand

i.e. the update gate z weights the candidate state. Checkpoints record this
convention so saved parameters are unambiguous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GRU_CONVENTION = "z-weights-candidate"

ParamDict = dict[str, np.ndarray]


class NonFiniteGradientError(FloatingPointError):
    """A gradient contained NaN or infinity."""


def _check_finite_params(name: str, *arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError(f"{name}: non-finite parameter value")


@dataclass(frozen=True, eq=False)
class GruParams:
    """Weights of one GRU cell: input maps W_*, recurrent maps U_*, biases b_*."""

    W_z: np.ndarray  # (H, F_in)
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray  # (H, H)
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray  # (H,)
    b_r: np.ndarray
    b_h: np.ndarray

    def __post_init__(self):
        h, f = self.W_z.shape
        for name in ("W_z", "W_r", "W_h"):
            if getattr(self, name).shape != (h, f):
                raise ValueError(f"GRU weight {name} must have shape {(h, f)}")
        for name in ("U_z", "U_r", "U_h"):
            if getattr(self, name).shape != (h, h):
                raise ValueError(f"GRU weight {name} must have shape {(h, h)}")
        for name in ("b_z", "b_r", "b_h"):
            if getattr(self, name).shape != (h,):
                raise ValueError(f"GRU bias {name} must have shape {(h,)}")
        _check_finite_params("GruParams", *self.tensors().values())

    @property
    def input_dim(self) -> int:
        return self.W_z.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W_z.shape[0]

    def tensors(self) -> ParamDict:
        return {
            "W_z": self.W_z, "W_r": self.W_r, "W_h": self.W_h,
            "U_z": self.U_z, "U_r": self.U_r, "U_h": self.U_h,
            "b_z": self.b_z, "b_r": self.b_r, "b_h": self.b_h,
        }


@dataclass(frozen=True, eq=False)
class AffineParams:
    """Affine readout W_o h + b_o from hidden to output space."""

    W_o: np.ndarray  # (F_out, H)
    b_o: np.ndarray  # (F_out,)

    def __post_init__(self):
        if self.W_o.ndim != 2 or self.b_o.shape != (self.W_o.shape[0],):
            raise ValueError(
                f"affine shapes disagree: W_o {self.W_o.shape}, b_o {self.b_o.shape}"
            )
        _check_finite_params("AffineParams", self.W_o, self.b_o)

    @property
    def hidden_dim(self) -> int:
        return self.W_o.shape[1]

    @property
    def output_dim(self) -> int:
        return self.W_o.shape[0]

    def tensors(self) -> ParamDict:
        return {"W_o": self.W_o, "b_o": self.b_o}


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _step(p: GruParams, x, h_prev):
    """One GRU update; x may be None for a zero input vector."""
    if x is None:
        a_z = p.U_z @ h_prev + p.b_z
        a_r = p.U_r @ h_prev + p.b_r
    else:
        a_z = p.W_z @ x + p.U_z @ h_prev + p.b_z
        a_r = p.W_r @ x + p.U_r @ h_prev + p.b_r
    z = sigmoid(a_z)
    r = sigmoid(a_r)
    if x is None:
        hcand = np.tanh(p.U_h @ (r * h_prev) + p.b_h)
    else:
        hcand = np.tanh(p.W_h @ x + p.U_h @ (r * h_prev) + p.b_h)
    h = (1.0 - z) * h_prev + z * hcand
    return h, z, r, hcand


def gru_step(p: GruParams, x: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
    """Apply one GRU update to h_prev given input frame x."""
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if x.shape != (p.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected {(p.input_dim,)}")
    if h_prev.shape != (p.hidden_dim,):
        raise ValueError(f"state has shape {h_prev.shape}, expected {(p.hidden_dim,)}")
    return _step(p, x, h_prev)[0]


@dataclass(frozen=True, eq=False)
class GruTrace:
    """Cached forward pass of one GRU: states plus gate activations per step."""

    h0: np.ndarray
    h: np.ndarray  # (T, H)
    z: np.ndarray
    r: np.ndarray
    hcand: np.ndarray


def gru_trace(p: GruParams, xs=None, h0=None, steps: int | None = None) -> GruTrace:
    """Run a GRU over a sequence (or `steps` zero inputs), caching the gates."""
    if xs is None:
        if steps is None or steps < 1:
            raise ValueError("zero-input runs need steps >= 1")
        n = steps
    else:
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2 or xs.shape[1] != p.input_dim:
            raise ValueError(f"sequence has shape {xs.shape}, expected (T, {p.input_dim})")
        if xs.shape[0] < 1:
            raise ValueError("sequence must have at least one frame")
        n = xs.shape[0]
    hidden = p.hidden_dim
    if h0 is None:
        h0 = np.zeros(hidden)
    else:
        h0 = np.asarray(h0, dtype=np.float64)
        if h0.shape != (hidden,):
            raise ValueError(f"initial state has shape {h0.shape}, expected {(hidden,)}")
    hs = np.empty((n, hidden))
    zs = np.empty((n, hidden))
    rs = np.empty((n, hidden))
    cs = np.empty((n, hidden))
    h = h0
    for t in range(n):
        h, z, r, hcand = _step(p, None if xs is None else xs[t], h)
        hs[t], zs[t], rs[t], cs[t] = h, z, r, hcand
    return GruTrace(h0=h0, h=hs, z=zs, r=rs, hcand=cs)


def gru_forward(p: GruParams, xs=None, h0=None, steps: int | None = None) -> np.ndarray:
    """All hidden states of an unrolled GRU run, shape (T, H)."""
    return gru_trace(p, xs=xs, h0=h0, steps=steps).h


def gru_backward(p: GruParams, trace: GruTrace, dh_out: np.ndarray, xs=None):
    """Backpropagate through a traced GRU run.

    dh_out[t] is the loss gradient arriving directly at state h_t. Returns
    (grads, dh0) where grads maps tensor names to gradient arrays and dh0
    is the gradient w.r.t. the initial state. With xs=None (zero inputs)
    the W_* gradients are identically zero.
    """
    n, hidden = trace.h.shape
    grads = {name: np.zeros_like(arr) for name, arr in p.tensors().items()}
    dh = np.zeros(hidden)
    for t in range(n - 1, -1, -1):
        dh = dh + dh_out[t]
        h_prev = trace.h[t - 1] if t > 0 else trace.h0
        z, r, hcand = trace.z[t], trace.r[t], trace.hcand[t]
        da_z = dh * (hcand - h_prev) * z * (1.0 - z)
        da_h = dh * z * (1.0 - hcand * hcand)
        dh_prev = dh * (1.0 - z)
        drh = p.U_h.T @ da_h
        dr = drh * h_prev
        dh_prev = dh_prev + drh * r
        da_r = dr * r * (1.0 - r)
        dh_prev = dh_prev + p.U_r.T @ da_r + p.U_z.T @ da_z
        grads["U_z"] += np.outer(da_z, h_prev)
        grads["U_r"] += np.outer(da_r, h_prev)
        grads["U_h"] += np.outer(da_h, r * h_prev)
        grads["b_z"] += da_z
        grads["b_r"] += da_r
        grads["b_h"] += da_h
        if xs is not None:
            x = xs[t]
            grads["W_z"] += np.outer(da_z, x)
            grads["W_r"] += np.outer(da_r, x)
            grads["W_h"] += np.outer(da_h, x)
        dh = dh_prev
    return grads, dh


def mse_loss(y: np.ndarray, x: np.ndarray, reduction: str = "mean"):
    """Squared reconstruction error and its gradient w.r.t. y.

    "mean" divides the summed squared error by T*F (the default used for
    training); "sum" keeps the raw sum over frames.
    """
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if y.shape != x.shape:
        raise ValueError(f"shape mismatch: y {y.shape} vs x {x.shape}")
    diff = y - x
    if reduction == "mean":
        scale = 1.0 / diff.size
    elif reduction == "sum":
        scale = 1.0
    else:
        raise ValueError(f"unknown reduction '{reduction}'")
    loss = float(np.sum(diff * diff) * scale)
    grad = (2.0 * scale) * diff
    return loss, grad


def global_norm(grads: ParamDict) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def sgd_step(params: ParamDict, grads: ParamDict, lr: float, clip_norm: float | None = 5.0) -> ParamDict:
    """One SGD update with optional global-norm gradient clipping.

    If the global L2 norm of the gradients exceeds clip_norm, all gradients
    are rescaled to that norm before the step. clip_norm=None (or inf)
    disables clipping.
    """
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if set(params) != set(grads):
        raise ValueError("parameter and gradient names disagree")
    norm = global_norm(grads)
    if not math.isfinite(norm):
        raise NonFiniteGradientError(f"gradient norm is {norm}")
    scale = 1.0
    if clip_norm is not None and math.isfinite(clip_norm) and norm > clip_norm:
        scale = clip_norm / norm
    step = lr * scale
    return {name: params[name] - step * grads[name] for name in params}


@dataclass(frozen=True)
class LrSchedule:
    """Stepwise-decayed learning rate: initial_lr * decay^(batch // period)."""

    initial_lr: float = 1.0
    decay: float = 0.95
    period: int = 500

    def __post_init__(self):
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be positive")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must lie in (0, 1]")
        if self.period < 1:
            raise ValueError("period must be >= 1")


def lr_at(sched: LrSchedule, batch_index: int) -> float:
    """Learning rate in effect for the given zero-based batch index."""
    if batch_index < 0:
        raise ValueError("batch_index must be >= 0")
    return sched.initial_lr * sched.decay ** (batch_index // sched.period)


def _uniform_fan_in(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(cols)
    return rng.uniform(-bound, bound, size=(rows, cols))


def _init_gru(rng: np.random.Generator, input_dim: int, hidden_dim: int) -> GruParams:
    return GruParams(
        W_z=_uniform_fan_in(rng, hidden_dim, input_dim),
        W_r=_uniform_fan_in(rng, hidden_dim, input_dim),
        W_h=_uniform_fan_in(rng, hidden_dim, input_dim),
        U_z=_uniform_fan_in(rng, hidden_dim, hidden_dim),
        U_r=_uniform_fan_in(rng, hidden_dim, hidden_dim),
        U_h=_uniform_fan_in(rng, hidden_dim, hidden_dim),
        b_z=np.zeros(hidden_dim),
        b_r=np.zeros(hidden_dim),
        b_h=np.zeros(hidden_dim),
    )


def init_params(input_dim: int, hidden_dim: int, output_dim: int, seed: int):
    """Fresh encoder GRU, decoder GRU, and affine readout parameters.

    Weights are Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases start at
    zero. Deterministic per seed.
    """
    if min(input_dim, hidden_dim, output_dim) < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    encoder = _init_gru(rng, input_dim, hidden_dim)
    decoder = _init_gru(rng, input_dim, hidden_dim)
    output = AffineParams(
        W_o=_uniform_fan_in(rng, output_dim, hidden_dim),
        b_o=np.zeros(output_dim),
    )
    return encoder, decoder, output
