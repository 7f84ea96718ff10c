"""Reconstruction, smoothness and run-time constraint costs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data.motion import CONTROL_CHANNELS, PARTITION, BodyPartition, joint_channels
from .data.processing import NormalizationStats
from .data.skeleton import FOOT_JOINTS, Skeleton, default_skeleton
from .nn import ConfigurationError, Tensor, as_tensor, cos, make_node, mse, sin, sqrt, stack, take
from .nn.tensor import _wrap

BONE_EPS = 1e-9


@dataclass(frozen=True)
class LossWeights:
    w_r: float = 0.8
    w_s: float = 0.2

    def __post_init__(self):
        if not (0.0 <= self.w_r <= 1.0 and 0.0 <= self.w_s <= 1.0):
            raise ConfigurationError(f"loss weights must lie in [0, 1], got {self.w_r}, {self.w_s}")
        if self.w_r + self.w_s > 1.0 + 1e-12:
            raise ConfigurationError(f"w_r + w_s must not exceed 1, got {self.w_r + self.w_s}")

    @property
    def w_c(self) -> float:
        """Weight of the run-time constraint costs."""
        return max(0.0, 1.0 - self.w_r - self.w_s)


RUNTIME_WEIGHTS = LossWeights(0.6, 0.2)


@dataclass
class ControlSignal:
    """Desired per-frame (vx, vz, omega) plus optional (T, 4) contact flags, in raw units."""

    gamma: np.ndarray
    contacts: np.ndarray | None = None

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        if self.gamma.ndim != 2 or self.gamma.shape[1] != 3:
            raise ConfigurationError(f"control signal must be (T, 3), got {self.gamma.shape}")
        if self.contacts is not None:
            self.contacts = np.asarray(self.contacts, dtype=np.float64)
            if self.contacts.shape != (len(self.gamma), 4):
                raise ConfigurationError("control contacts must be (T, 4) matching the signal")

    def __len__(self) -> int:
        return len(self.gamma)

    def window(self, start: int, stop: int) -> "ControlSignal":
        c = None if self.contacts is None else self.contacts[start:stop]
        return ControlSignal(self.gamma[start:stop], c)

    @classmethod
    def constant(cls, vx: float, vz: float, omega: float, frames: int) -> "ControlSignal":
        return cls(np.tile([vx, vz, omega], (frames, 1)))


def _as_batch(x) -> Tensor:
    x = as_tensor(x)
    return x.reshape(1, *x.shape) if x.ndim == 2 else x


def reconstruction_loss(decoded, predicted, gt) -> Tensor:
    """C_d + C_p: per-element mean squared errors of both halves.

    ``decoded`` is in forward time and aligned with the first frames of
    ``gt``; ``predicted`` is aligned with the frames after the encoded ones.
    """
    decoded, predicted = _as_batch(decoded), _as_batch(predicted)
    gt = np.asarray(gt.data if isinstance(gt, Tensor) else gt)
    if gt.ndim == 2:
        gt = gt[None]
    D, P = decoded.shape[1], predicted.shape[1]
    m = gt.shape[1] - P
    if m < D or decoded.shape[0] != gt.shape[0] or predicted.shape[0] != gt.shape[0]:
        raise ConfigurationError(
            f"reconstruction shapes disagree: decoded {decoded.shape}, predicted {predicted.shape}, "
            f"ground truth {gt.shape}"
        )
    c_d = mse(decoded, _wrap(np.ascontiguousarray(gt[:, m - D : m])))
    c_p = mse(predicted, _wrap(np.ascontiguousarray(gt[:, m:])))
    return c_d + c_p


def _diff_adjoint(g: np.ndarray) -> np.ndarray:
    """Adjoint of first differences along axis 1."""
    shape = list(g.shape)
    shape[1] += 1
    out = np.zeros(shape)
    out[:, 1:] += g
    out[:, :-1] -= g
    return out


def smoothness_loss(block, partition: BodyPartition = PARTITION) -> Tensor:
    """(1/T) sum ||second difference of body channels||^2 + (1/T) sum ||first difference of root||^2.

    Averaged over the batch.
    """
    block = _as_batch(block)
    B, T = block.shape[0], block.shape[1]
    if T < 3:
        raise ConfigurationError(f"smoothness needs blocks of at least 3 frames, got {T}")
    body = np.asarray(partition.body)
    root = np.asarray(partition.root)
    x = block.data
    a = np.diff(x[..., body], n=2, axis=1)
    v = np.diff(x[..., root], axis=1)
    scale = 1.0 / (T * B)
    value = scale * (np.vdot(a, a) + np.vdot(v, v))

    def bw(g):
        out = np.zeros_like(x)
        out[..., body] = _diff_adjoint(_diff_adjoint(2.0 * scale * g * a))
        out[..., root] = _diff_adjoint(2.0 * scale * g * v)
        return (out,)

    return make_node(np.asarray(value), (block,), bw)


def _raw(block: Tensor, channels, stats: NormalizationStats | None) -> Tensor:
    sel = take(block, channels)
    if stats is None:
        return sel
    ch = np.asarray(channels)
    return sel * stats.std[ch] + stats.mean[ch]


def control_cost(block, gamma, stats: NormalizationStats | None = None,
                 channels=CONTROL_CHANNELS) -> Tensor:
    """sum over frames of ||root velocity - gamma||^2 in raw units."""
    block = _as_batch(block)
    gamma = np.asarray(gamma.gamma if isinstance(gamma, ControlSignal) else gamma, dtype=np.float64)
    if gamma.shape[-2] != block.shape[1] or gamma.shape[-1] != len(channels):
        raise ConfigurationError(
            f"control signal shape {gamma.shape} does not match block {block.shape} / {len(channels)} channels"
        )
    d = _raw(block, list(channels), stats) - gamma
    return (d * d).sum()


FOOT_POS_CHANNELS = [c for j in FOOT_JOINTS for c in joint_channels(j)]


def foot_velocities(block, stats: NormalizationStats | None = None) -> Tensor:
    """World-frame heel/toe velocities arriving at frames 1..T-1: (B, T-1, 4, 3).

    Expressed in the heading frame of the previous frame; norms are heading invariant.
    """
    block = _as_batch(block)
    B, T = block.shape[0], block.shape[1]
    p = _raw(block, FOOT_POS_CHANNELS, stats).reshape(B, T, 4, 3)
    vel = _raw(block, [66, 67, 68], stats)  # vx, vz, omega
    p0, p1 = p[:, :-1], p[:, 1:]
    vx = vel[:, :-1, 0].reshape(B, T - 1, 1)
    vz = vel[:, :-1, 1].reshape(B, T - 1, 1)
    w = vel[:, :-1, 2].reshape(B, T - 1, 1)
    c, s = cos(w), sin(w)
    x1, y1, z1 = p1[..., 0], p1[..., 1], p1[..., 2]
    wx = vx + c * x1 + s * z1 - p0[..., 0]
    wy = y1 - p0[..., 1]
    wz = vz - s * x1 + c * z1 - p0[..., 2]
    return stack([wx, wy, wz], axis=-1)


def footplant_cost(block, contacts, stats: NormalizationStats | None = None) -> Tensor:
    """sum over contact frames of squared heel/toe speed (speed from the previous frame)."""
    block = _as_batch(block)
    f = np.asarray(contacts, dtype=np.float64)
    if f.ndim == 2:
        f = f[None]
    if f.shape[1:] != (block.shape[1], 4):
        raise ConfigurationError(f"contact flags {f.shape} do not match block {block.shape}")
    v = foot_velocities(block, stats)
    sq = (v * v).sum(axis=-1)  # (B, T-1, 4)
    return (sq * f[:, 1:]).sum()


def bonelength_cost(block, skeleton: Skeleton | None = None,
                    stats: NormalizationStats | None = None) -> Tensor:
    """sum over frames and bones of (||p_child - p_parent|| - reference length)^2."""
    block = _as_batch(block)
    skeleton = skeleton or default_skeleton()
    B, T = block.shape[0], block.shape[1]
    bones = skeleton.bones()
    pos = _raw(block, list(range(0, 3)) + list(range(6, 66)), stats).reshape(B, T, 21, 3)
    child = take(pos, [b[0] for b in bones], axis=2)
    parent = take(pos, [b[1] for b in bones], axis=2)
    lengths = np.array([b[2] for b in bones])
    d = child - parent
    dist = sqrt((d * d).sum(axis=-1) + BONE_EPS)
    e = dist - lengths
    return (e * e).sum()


def total_cost(parts: dict, weights: LossWeights = LossWeights(), regime: str = "LH",
               l2: Tensor | None = None) -> Tensor:
    """Combine cost terms.

    ``regime`` is ``MSE`` (reconstruction only), ``LH`` (weighted
    reconstruction and smoothness) or ``runtime`` (LH plus the weighted
    constraint costs).
    """
    if regime == "MSE":
        total = parts["C_r"]
    elif regime in ("LH", "runtime"):
        total = weights.w_r * parts["C_r"] + weights.w_s * parts["C_s"]
        if regime == "runtime":
            extra = [parts[k] for k in ("H_ctr", "H_fp", "H_bone") if k in parts]
            if extra:
                h = extra[0]
                for e in extra[1:]:
                    h = h + e
                total = total + weights.w_c * h
    else:
        raise ConfigurationError(f"unknown loss regime {regime!r}")
    if l2 is not None:
        total = total + l2
    return as_tensor(total)

