"""Three-phase hybrid training with decaying input corruption.

Phase 1 trains the spatial and temporal networks on corrupted inputs.
Phase 2 pre-trains the residual filter alone on ground-truth blocks.
Phase 3 composes both and fine-tunes only the residual on the frozen
spatio-temporal output.  Every phase keeps the parameters with the lowest
validation reconstruction error.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data.motion import MotionClip
from .data.processing import (
    DatasetSplit,
    NoiseSchedule,
    NormalizationStats,
    corrupt,
    normalize,
    split_segments,
    window_segments,
)
from .losses import LossWeights, reconstruction_loss, smoothness_loss, total_cost
from .model.strnn import STRNN, ModelTag
from .nn import AdaDelta, Parameter, backward, l2_penalty, mse, no_grad
from .nn.optim import NonFiniteGradient


class TrainingDiverged(FloatingPointError):
    """Raised when a loss or gradient becomes non-finite; parameters are rolled back first."""

    def __init__(self, message: str, log: "TrainLog"):
        super().__init__(message)
        self.log = log


@dataclass
class TrainConfig:
    batch_size: int = 32
    phase1_iterations: int = 20000
    phase2_iterations: int = 2000
    phase3_iterations: int = 2000
    lr: float = 1.0
    rho: float = 0.95
    eps: float = 1e-8
    decay: float = 0.0
    l2: float = 0.01
    sigma0: float = 0.1
    sigma_delta: float = 0.001
    w_r: float = 0.8
    w_s: float = 0.2
    patience_epochs: int = 50
    validate_every: int = 0  # iterations; 0 means once per epoch
    target_val_loss: float | None = None
    seed: int = 0

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.w_r, self.w_s)

    @property
    def schedule(self) -> NoiseSchedule:
        return NoiseSchedule(self.sigma0, self.sigma_delta)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class MotionDataset:
    """Normalized fixed-length segments with a train/validation/test split."""

    segments: np.ndarray
    split: DatasetSplit
    stats: NormalizationStats
    raw: np.ndarray = field(repr=False, default=None)

    @property
    def train(self) -> np.ndarray:
        return self.segments[self.split.train]

    @property
    def validation(self) -> np.ndarray:
        return self.segments[self.split.validation]

    @property
    def test(self) -> np.ndarray:
        return self.segments[self.split.test]


def build_dataset(clips, segment_len: int, stride: int = 10, seed: int = 0) -> MotionDataset:
    """Window clips (never across clip boundaries), split, and normalize with train statistics."""
    if isinstance(clips, MotionClip):
        clips = [clips]
    parts = [window_segments(c, segment_len, stride) for c in clips]
    raw = np.concatenate([p for p in parts if len(p)], axis=0) if any(len(p) for p in parts) else None
    if raw is None or len(raw) < 3:
        raise ValueError(f"need at least 3 segments of {segment_len} frames to build a dataset")
    split = split_segments(len(raw), seed)
    stats = NormalizationStats.from_frames(raw[split.train])
    return MotionDataset(normalize(raw, stats), split, stats, raw)


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)

    HEADER = ("iter", "phase", "sigma", "train_loss", "val_loss")

    def add(self, it: int, phase: int, sigma: float, train_loss: float | None, val_loss: float | None):
        self.rows.append((it, phase, sigma, train_loss, val_loss))

    @property
    def next_iter(self) -> int:
        return self.rows[-1][0] + 1 if self.rows else 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        for it, ph, s, tr, va in self.rows:
            w.writerow([it, ph, repr(float(s)),
                        "" if tr is None else repr(float(tr)),
                        "" if va is None else repr(float(va))])
        return buf.getvalue()

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv())

    def column(self, name: str, phase: int | None = None) -> list:
        k = self.HEADER.index(name)
        return [r[k] for r in self.rows if (phase is None or r[1] == phase) and r[k] is not None]


@dataclass
class PhaseResult:
    best_val: float
    best_iteration: int
    iterations: int


def _regularized(params) -> list[Parameter]:
    """Dense and LSTM weights and biases; batch-norm affine terms are not decayed."""
    return [p for p in params if p.name in ("W", "b")]


def validation_loss(model: STRNN, segments: np.ndarray, residual: bool = True,
                    batch: int = 256) -> float:
    """Mean reconstruction error with sigma 0, dropout off and batch norm in eval mode."""
    was_training = model.training
    model.eval()
    total, n = 0.0, 0
    with no_grad():
        for s in range(0, len(segments), batch):
            seg = segments[s : s + batch]
            dec, pred = model.split(model(seg, residual=residual))
            total += float(reconstruction_loss(dec, pred, seg).data) * len(seg)
            n += len(seg)
    model.train(was_training)
    return total / n


def residual_validation_loss(model: STRNN, segments: np.ndarray, sigma: float = 0.0,
                             seed: int = 0) -> float:
    """Denoising MSE of the residual filter on ground-truth blocks.

    Inputs are corrupted with a fixed noise draw so successive validations
    are comparable; with ``sigma`` 0 this measures how close to the identity
    the filter stays on clean data.
    """
    blocks = _gt_blocks(model, segments)
    inp = corrupt(blocks, sigma, np.random.default_rng(seed))
    with no_grad():
        out = model.residual(inp).data
    return float(np.mean((out - blocks) ** 2))


def _gt_blocks(model: STRNN, segments: np.ndarray) -> np.ndarray:
    tag = model.tag
    m = tag.encode_len
    return segments[:, m - tag.decode_len : m + tag.predict_len]


def _run_phase(phase: int, model: STRNN, params, step_loss, val_fn, n_train: int,
               iterations: int, config: TrainConfig, log: TrainLog) -> PhaseResult:
    ss = np.random.SeedSequence([config.seed, phase])
    order_rng, noise_rng, drop_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    opt = AdaDelta(params, config.lr, config.rho, config.eps, config.decay)
    schedule = config.schedule
    bs = min(config.batch_size, n_train)
    per_epoch = max(1, math.ceil(n_train / bs))
    every = config.validate_every or per_epoch
    patience = config.patience_epochs * per_epoch

    start = log.next_iter
    best = val_fn()
    best_state, best_it = model.state_dict(), 0
    log.add(start, phase, schedule(0), None, best)
    if config.target_val_loss is not None and best < config.target_val_loss:
        return PhaseResult(best, 0, 0)

    order = np.zeros(0, dtype=int)
    k = 0
    for k in range(1, iterations + 1):
        if len(order) < bs:
            order = np.concatenate([order, order_rng.permutation(n_train)])
        idx, order = order[:bs], order[bs:]
        sigma = schedule(k - 1)
        try:
            loss = step_loss(idx, sigma, noise_rng, drop_rng)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NonFiniteGradient(f"non-finite training loss at iteration {k}")
            opt.zero_grad()
            backward(loss)
            opt.step()
        except NonFiniteGradient as exc:
            model.load_state_dict(best_state)
            log.add(start + k, phase, sigma, float("nan"), None)
            raise TrainingDiverged(f"phase {phase}: {exc}", log) from exc
        val = None
        if k % every == 0 or k == iterations:
            val = val_fn()
            if val < best:
                best, best_state, best_it = val, model.state_dict(), k
        log.add(start + k, phase, sigma, value, val)
        if val is not None:
            if config.target_val_loss is not None and best < config.target_val_loss:
                break
            if k - best_it >= patience:
                break
    model.load_state_dict(best_state)
    return PhaseResult(best, best_it, k)


def train_spatiotemporal(model: STRNN, data: MotionDataset, config: TrainConfig,
                         log: TrainLog | None = None, iterations: int | None = None) -> PhaseResult:
    """Phase 1: spatial and temporal networks on corrupted encoder inputs."""
    log = log if log is not None else TrainLog()
    train = data.train
    params = model.spatiotemporal_parameters()
    reg = _regularized(params)
    regime = "MSE" if model.tag.regime == "MSE" else "LH"
    weights = config.weights
    m = model.tag.encode_len

    def step_loss(idx, sigma, noise_rng, drop_rng):
        model.train()
        clean = train[idx]
        inp = clean.copy()
        inp[:, :m] = corrupt(clean[:, :m], sigma, noise_rng)
        block = model(inp, rng=drop_rng, residual=False)
        dec, pred = model.split(block)
        parts = {"C_r": reconstruction_loss(dec, pred, clean)}
        if regime == "LH":
            parts["C_s"] = smoothness_loss(block)
        return total_cost(parts, weights, regime, l2_penalty(reg, config.l2) if config.l2 else None)

    def val_fn():
        return validation_loss(model, data.validation, residual=False)

    n = config.phase1_iterations if iterations is None else iterations
    return _run_phase(1, model, params, step_loss, val_fn, len(train), n, config, log)


def train_residual(model: STRNN, data: MotionDataset, config: TrainConfig,
                   log: TrainLog | None = None, iterations: int | None = None) -> PhaseResult:
    """Phase 2: the residual filter alone as a denoiser of ground-truth blocks."""
    log = log if log is not None else TrainLog()
    blocks = _gt_blocks(model, data.train)
    params = model.residual_parameters()
    reg = _regularized(params)

    def step_loss(idx, sigma, noise_rng, drop_rng):
        clean = blocks[idx]
        out = model.residual(corrupt(clean, sigma, noise_rng))
        parts = {"C_r": mse(out, clean)}
        return total_cost(parts, regime="MSE", l2=l2_penalty(reg, config.l2) if config.l2 else None)

    def val_fn():
        return residual_validation_loss(model, data.validation)

    n = config.phase2_iterations if iterations is None else iterations
    return _run_phase(2, model, params, step_loss, val_fn, len(blocks), n, config, log)


def compose_and_finetune(model: STRNN, data: MotionDataset, config: TrainConfig,
                         log: TrainLog | None = None, iterations: int | None = None) -> PhaseResult:
    """Phase 3: only the residual is optimized; the spatio-temporal stack runs frozen in eval mode."""
    log = log if log is not None else TrainLog()
    train = data.train
    params = model.residual_parameters()
    reg = _regularized(params)
    m = model.tag.encode_len

    def step_loss(idx, sigma, noise_rng, drop_rng):
        model.eval()
        clean = train[idx]
        inp = clean.copy()
        inp[:, :m] = corrupt(clean[:, :m], sigma, noise_rng)
        with no_grad():
            st = model.generate(inp).data
        dec, pred = model.split(model.residual(st))
        parts = {"C_r": reconstruction_loss(dec, pred, clean)}
        return total_cost(parts, regime="MSE", l2=l2_penalty(reg, config.l2) if config.l2 else None)

    def val_fn():
        return validation_loss(model, data.validation, residual=True)

    n = config.phase3_iterations if iterations is None else iterations
    return _run_phase(3, model, params, step_loss, val_fn, len(train), n, config, log)


def phases_for(tag: ModelTag) -> tuple[int, ...]:
    return (1, 2, 3) if tag.components == "Composite" else (1,)


def train_model(model: STRNN, data: MotionDataset, config: TrainConfig,
                phases=None, log: TrainLog | None = None) -> tuple[dict, TrainLog]:
    """Run the requested phases in order; returns per-phase results and the log."""
    log = log if log is not None else TrainLog()
    phases = phases_for(model.tag) if phases is None else tuple(phases)
    runners = {1: train_spatiotemporal, 2: train_residual, 3: compose_and_finetune}
    results = {}
    for ph in phases:
        if ph in (2, 3) and not model.has_residual:
            raise ValueError(f"phase {ph} needs a Composite model, got {model.tag}")
        results[ph] = runners[ph](model, data, config, log)
    model.eval()
    return results, log
