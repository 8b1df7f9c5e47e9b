"""Sequence-to-sequence autoencoder with a historyless decoder.

The encoder GRU reads a (T, F) feature sequence; its final hidden state is
the fixed-length embedding z. The decoder GRU starts from z and receives a
zero vector as input at every step (no output feedback), so all information
about the sequence must flow through z. An affine readout maps each decoder
state to feature space, and training minimizes the squared reconstruction
error of the input, which needs no labels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .corpus import MAX_FRAMES, SegmentArchive


class CheckpointError(ValueError):
    """Unreadable, incompatible, or corrupt model checkpoint."""


class TrainingDivergedError(RuntimeError):
    """Training hit a non-finite loss or gradient.

    Carries the last finite model and the loss curve recorded up to the
    point of failure, so callers can checkpoint what was learned.
    """

    def __init__(self, message: str, model: "SAModel", loss_curve):
        super().__init__(message)
        self.model = model
        self.loss_curve = list(loss_curve)


@dataclass(frozen=True, eq=False)
class SAModel:
    """Encoder GRU + decoder GRU + affine readout, all over the same dims."""

    encoder: nn.GruParams
    decoder: nn.GruParams
    output: nn.AffineParams

    def __post_init__(self):
        d = self.encoder.hidden_dim
        f = self.encoder.input_dim
        if self.decoder.hidden_dim != d or self.decoder.input_dim != f:
            raise ValueError("decoder dims disagree with encoder dims")
        if self.output.hidden_dim != d or self.output.output_dim != f:
            raise ValueError("readout dims disagree with encoder dims")

    @property
    def feature_dim(self) -> int:
        return self.encoder.input_dim

    @property
    def embed_dim(self) -> int:
        return self.encoder.hidden_dim

    @classmethod
    def create(cls, feature_dim: int, embed_dim: int, seed: int) -> "SAModel":
        encoder, decoder, output = nn.init_params(feature_dim, embed_dim, feature_dim, seed)
        return cls(encoder=encoder, decoder=decoder, output=output)

    def to_param_dict(self) -> nn.ParamDict:
        params = {}
        for prefix, part in (("encoder", self.encoder), ("decoder", self.decoder), ("output", self.output)):
            for name, arr in part.tensors().items():
                params[f"{prefix}.{name}"] = arr
        return params

    @classmethod
    def from_param_dict(cls, params: nn.ParamDict) -> "SAModel":
        def gather(prefix, names):
            out = {}
            for name in names:
                key = f"{prefix}.{name}"
                if key not in params:
                    raise ValueError(f"missing parameter tensor '{key}'")
                out[name] = np.asarray(params[key], dtype=np.float64)
            return out

        gru_names = ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h")
        expected = {f"{p}.{n}" for p in ("encoder", "decoder") for n in gru_names}
        expected |= {"output.W_o", "output.b_o"}
        extra = set(params) - expected
        if extra:
            raise ValueError(f"unexpected parameter tensor(s): {', '.join(sorted(extra))}")
        return cls(
            encoder=nn.GruParams(**gather("encoder", gru_names)),
            decoder=nn.GruParams(**gather("decoder", gru_names)),
            output=nn.AffineParams(**gather("output", ("W_o", "b_o"))),
        )


def _check_frames(model: SAModel, frames, max_frames: int):
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != model.feature_dim:
        raise ValueError(
            f"sequence has shape {frames.shape}, expected (T, {model.feature_dim})"
        )
    if frames.shape[0] < 1:
        raise ValueError("sequence must have at least one frame")
    if frames.shape[0] > max_frames:
        raise ValueError(
            f"sequence has {frames.shape[0]} frames, over the {max_frames}-frame limit"
        )
    return frames


def encode(model: SAModel, frames, max_frames: int = MAX_FRAMES) -> np.ndarray:
    """Embed a (T, F) sequence as the encoder's final hidden state (d,)."""
    frames = _check_frames(model, frames, max_frames)
    return nn.gru_forward(model.encoder, frames)[-1]


def encode_archive(model: SAModel, archive: SegmentArchive, max_frames: int = MAX_FRAMES) -> np.ndarray:
    """Embeddings for every segment of an archive, shape (n, d)."""
    if len(archive) == 0:
        return np.zeros((0, model.embed_dim))
    return np.stack([encode(model, seg.features, max_frames) for seg in archive])


def decode(model: SAModel, z, n_frames: int) -> np.ndarray:
    """Roll the historyless decoder out from z for n_frames steps.

    The hidden trajectory depends only on z (every input is the zero
    vector), so decode(z, t1) is a row-prefix of decode(z, t2) for t1 <= t2.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (model.embed_dim,):
        raise ValueError(f"embedding has shape {z.shape}, expected {(model.embed_dim,)}")
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    states = nn.gru_forward(model.decoder, xs=None, h0=z, steps=n_frames)
    # per-step matvec readout: a single (T, H) @ (H, F) product would let the
    # BLAS kernel choice depend on T, breaking bit-exact prefix decoding
    return np.stack([model.output.W_o @ h + model.output.b_o for h in states])


def reconstruction_loss(model: SAModel, frames, reduction: str = "mean",
                        max_frames: int = MAX_FRAMES) -> float:
    """Reconstruction error of one sequence under the current model."""
    frames = _check_frames(model, frames, max_frames)
    y = decode(model, encode(model, frames, max_frames), frames.shape[0])
    return nn.mse_loss(y, frames, reduction)[0]


def bptt(model: SAModel, frames, target=None, reduction: str = "mean",
         max_frames: int = MAX_FRAMES):
    """Loss and exact gradients of the reconstruction error for one sequence.

    Backpropagates through readout, decoder, embedding, and encoder in one
    pass. `target` defaults to the input sequence (the autoencoding
    objective); passing a different target of the same shape changes only
    the loss term, which is occasionally useful for diagnostics.
    """
    frames = _check_frames(model, frames, max_frames)
    n = frames.shape[0]
    if target is None:
        target = frames
    else:
        target = np.asarray(target, dtype=np.float64)

    enc_trace = nn.gru_trace(model.encoder, xs=frames)
    z = enc_trace.h[-1]
    dec_trace = nn.gru_trace(model.decoder, xs=None, h0=z, steps=n)
    # same per-step readout as decode(), so this loss is bit-identical to
    # reconstruction_loss of the same sequence
    y = np.stack([model.output.W_o @ h + model.output.b_o for h in dec_trace.h])
    loss, dy = nn.mse_loss(y, target, reduction)

    grads = {
        "output.W_o": dy.T @ dec_trace.h,
        "output.b_o": dy.sum(axis=0),
    }
    dh_dec = dy @ model.output.W_o
    dec_grads, dz = nn.gru_backward(model.decoder, dec_trace, dh_dec, xs=None)
    dh_enc = np.zeros_like(enc_trace.h)
    dh_enc[-1] = dz
    enc_grads, _ = nn.gru_backward(model.encoder, enc_trace, dh_enc, xs=frames)
    for name, arr in enc_grads.items():
        grads[f"encoder.{name}"] = arr
    for name, arr in dec_grads.items():
        grads[f"decoder.{name}"] = arr
    return loss, grads


def finite_difference_grads(model: SAModel, frames, eps: float = 1e-5,
                            reduction: str = "mean") -> nn.ParamDict:
    """Central-finite-difference gradients of the reconstruction loss.

    Slow (two forward passes per parameter entry); meant for gradient
    checking small models, not training.
    """
    params = {name: arr.copy() for name, arr in model.to_param_dict().items()}

    def loss_at() -> float:
        return reconstruction_loss(SAModel.from_param_dict(params), frames, reduction)

    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss_at()
            flat[i] = orig - eps
            lo = loss_at()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads[name] = g
    return grads


def max_relative_gradient_error(
    analytic: nn.ParamDict, numeric: nn.ParamDict, floor: float = 1e-6
) -> float:
    """Largest elementwise relative disagreement between two gradient sets.

    Uses |a - n| / max(|a| + |n|, floor). The floor keeps the check
    meaningful for near-zero entries: central differences at eps=1e-5 carry
    ~1e-11 of roundoff noise in double precision, so entries below the
    floor are effectively compared absolutely (at floor * tolerance), which
    is stricter in absolute terms than the relative test applied to larger
    entries.
    """
    worst = 0.0
    for name in analytic:
        a = analytic[name]
        b = numeric[name]
        denom = np.maximum(np.abs(a) + np.abs(b), floor)
        worst = max(worst, float(np.max(np.abs(a - b) / denom)))
    return worst


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for SGD training of the autoencoder."""

    batch_size: int = 32
    max_batches: int = 1000
    schedule: nn.LrSchedule = field(default_factory=nn.LrSchedule)
    clip_norm: float | None = 5.0
    loss_reduction: str = "mean"
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_batches < 0:
            raise ValueError("max_batches must be >= 0")
        if self.loss_reduction not in ("mean", "sum"):
            raise ValueError("loss_reduction must be 'mean' or 'sum'")


def _index_stream(n: int, shuffle: bool, rng: np.random.Generator):
    """Yield segment indices in shuffled epochs (or archive order)."""
    while True:
        if shuffle:
            order = rng.permutation(n)
        else:
            order = np.arange(n)
        for i in order:
            yield int(i)


def train(model: SAModel, archive: SegmentArchive, cfg: TrainConfig):
    """Run cfg.max_batches SGD steps; returns (model', loss_curve).

    Each batch samples cfg.batch_size segments from a per-epoch shuffled
    order, averages their per-sequence gradients (summed in batch order for
    determinism), and applies one clipped SGD step at the scheduled rate.
    The curve holds (batch_index, mean batch loss before the step). If the
    loss or a gradient goes non-finite, TrainingDivergedError is raised
    carrying the last finite model and the curve so far.
    """
    if len(archive) == 0:
        raise ValueError("cannot train on an empty archive")
    if archive.feature_dim != model.feature_dim:
        raise ValueError(
            f"archive feature dim {archive.feature_dim} != model feature dim {model.feature_dim}"
        )
    indices = _index_stream(len(archive), cfg.shuffle, np.random.default_rng(cfg.seed))
    current = model
    params = model.to_param_dict()
    curve: list[tuple[int, float]] = []
    for b in range(cfg.max_batches):
        batch = [next(indices) for _ in range(cfg.batch_size)]
        grad_sum: nn.ParamDict | None = None
        loss_sum = 0.0
        for i in batch:
            loss, grads = bptt(current, archive[i].features, reduction=cfg.loss_reduction)
            loss_sum += loss
            if grad_sum is None:
                grad_sum = grads
            else:
                for name in grad_sum:
                    grad_sum[name] += grads[name]
        mean_loss = loss_sum / cfg.batch_size
        if not np.isfinite(mean_loss):
            raise TrainingDivergedError(
                f"batch {b}: loss became {mean_loss}", model=current, loss_curve=curve
            )
        curve.append((b, mean_loss))
        mean_grads = {name: arr / cfg.batch_size for name, arr in grad_sum.items()}
        try:
            params = nn.sgd_step(params, mean_grads, nn.lr_at(cfg.schedule, b), cfg.clip_norm)
            current = SAModel.from_param_dict(params)
        except (nn.NonFiniteGradientError, ValueError) as exc:
            raise TrainingDivergedError(
                f"batch {b}: {exc}", model=current, loss_curve=curve
            ) from exc
    return current, curve


def fine_tune(model: SAModel, archive: SegmentArchive, cfg: TrainConfig) -> SAModel:
    """Continue SGD from trained parameters on a (possibly empty) subset.

    An empty subset or max_batches=0 returns the model unchanged, which is
    the no-fine-tuning case.
    """
    if len(archive) == 0 or cfg.max_batches == 0:
        return model
    return train(model, archive, cfg)[0]


CHECKPOINT_FORMAT_VERSION = 1


def save_checkpoint(model: SAModel, path) -> None:
    """Write a self-describing checkpoint (npz: JSON header + named tensors)."""
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "feature_dim": model.feature_dim,
        "embed_dim": model.embed_dim,
        "gru_convention": nn.GRU_CONVENTION,
    }
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.array(json.dumps(header)), **model.to_param_dict())


def load_checkpoint(path) -> SAModel:
    """Load a checkpoint, verifying version, convention, dims, and shapes."""
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    with data:
        if "__header__" not in data.files:
            raise CheckpointError(f"{path}: missing checkpoint header")
        try:
            header = json.loads(str(data["__header__"][()]))
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
        version = header.get("format_version")
        if version != CHECKPOINT_FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: unsupported format version {version!r} "
                f"(this build reads version {CHECKPOINT_FORMAT_VERSION})"
            )
        convention = header.get("gru_convention")
        if convention != nn.GRU_CONVENTION:
            raise CheckpointError(
                f"{path}: GRU convention {convention!r} != {nn.GRU_CONVENTION!r}"
            )
        arrays = {name: data[name] for name in data.files if name != "__header__"}
    try:
        model = SAModel.from_param_dict(arrays)
    except ValueError as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint: {exc}") from exc
    if model.feature_dim != header.get("feature_dim") or model.embed_dim != header.get("embed_dim"):
        raise CheckpointError(
            f"{path}: header dims ({header.get('feature_dim')}, {header.get('embed_dim')}) "
            f"disagree with tensors ({model.feature_dim}, {model.embed_dim})"
        )
    return model
