"""Resampling, body-local conversion, contact detection, windowing, corruption
and normalization of motion data."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .motion import (
    ANGULAR_VEL,
    CONTACTS,
    FRAME_DIM,
    JOINT_POS,
    PLANAR_VEL,
    ROOT_POS,
    ROOT_ROT,
    MotionClip,
    joint_positions,
)
from .skeleton import FOOT_JOINTS, Skeleton, default_skeleton

DEFAULT_HEIGHT_THRESHOLD = 0.05  # m
DEFAULT_SPEED_THRESHOLD = 0.01  # m/frame


class DataError(ValueError):
    pass


def rot_y(theta) -> np.ndarray:
    """Rotation matrices about +y; ``theta`` of shape (...) -> (..., 3, 3)."""
    theta = np.asarray(theta, dtype=np.float64)
    c, s = np.cos(theta), np.sin(theta)
    z, o = np.zeros_like(theta), np.ones_like(theta)
    return np.stack([np.stack([c, z, s], -1), np.stack([z, o, z], -1), np.stack([-s, z, c], -1)], -2)


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


@dataclass
class WorldMotion:
    """World-space joint positions (T, 21, 3) and root orientation (T, 3) axis-angle."""

    fps: float
    positions: np.ndarray
    root_rotation: np.ndarray
    skeleton: Skeleton = field(default_factory=default_skeleton)

    def __len__(self) -> int:
        return len(self.positions)


def facing_angle(root_rotation: np.ndarray) -> np.ndarray:
    """Heading about +y of the root's forward (+z) axis."""
    fwd = Rotation.from_rotvec(root_rotation).apply(np.array([0.0, 0.0, 1.0]))
    fwd = np.atleast_2d(fwd)
    return np.arctan2(fwd[:, 0], fwd[:, 2])


def to_local_frame(world: WorldMotion, contacts: np.ndarray | None = None,
                   height_threshold: float = DEFAULT_HEIGHT_THRESHOLD,
                   speed_threshold: float = DEFAULT_SPEED_THRESHOLD) -> MotionClip:
    """Express a world-space motion in the ground-projected, facing-aligned root frame.

    The root block holds the root position in that frame (x = z = 0, y = height)
    and the root orientation relative to the facing direction.  Planar and
    angular velocities at frame t describe the motion from t to t+1, expressed
    in frame t; the last frame repeats the previous value.
    """
    pos = np.asarray(world.positions, dtype=np.float64)
    T = len(pos)
    yaw = facing_angle(world.root_rotation)
    origin = pos[:, 0].copy()
    origin[:, 1] = 0.0
    inv = rot_y(-yaw)  # (T, 3, 3)
    local = np.einsum("tij,tkj->tki", inv, pos - origin[:, None, :])

    frames = np.zeros((T, FRAME_DIM))
    frames[:, ROOT_POS] = local[:, 0]
    residual = Rotation.from_matrix(inv) * Rotation.from_rotvec(world.root_rotation)
    frames[:, ROOT_ROT] = residual.as_rotvec()
    frames[:, JOINT_POS] = local[:, 1:].reshape(T, -1)

    if T > 1:
        step = np.einsum("tij,tj->ti", inv[:-1], origin[1:] - origin[:-1])
        dyaw = wrap_angle(np.diff(yaw))
        frames[:-1, PLANAR_VEL] = step[:, [0, 2]]
        frames[:-1, ANGULAR_VEL] = dyaw
        frames[-1, PLANAR_VEL] = frames[-2, PLANAR_VEL]
        frames[-1, ANGULAR_VEL] = frames[-2, ANGULAR_VEL]

    if contacts is None:
        feet = pos[:, [world.skeleton.index(j) for j in FOOT_JOINTS]]
        contacts = contacts_from_world(feet, height_threshold, speed_threshold)
    frames[:, CONTACTS] = contacts
    return MotionClip(world.fps, frames, world.skeleton)


def integrate_root(frames, origin=(0.0, 0.0, 0.0), heading: float = 0.0):
    """Integrate planar and angular root velocities into a ground trajectory.

    Returns (positions (T, 3) with y = 0, headings (T,)).
    """
    if isinstance(frames, MotionClip):
        frames = frames.frames
    frames = np.asarray(frames)
    T = len(frames)
    vel = np.zeros((T, 3))
    vel[:, 0] = frames[:, PLANAR_VEL.start]
    vel[:, 2] = frames[:, PLANAR_VEL.start + 1]
    omega = frames[:, ANGULAR_VEL]
    headings = heading + np.concatenate([[0.0], np.cumsum(omega[:-1])])
    steps = np.einsum("tij,tj->ti", rot_y(headings), vel)
    positions = np.asarray(origin, dtype=np.float64) + np.concatenate(
        [np.zeros((1, 3)), np.cumsum(steps[:-1], axis=0)]
    )
    positions[:, 1] = 0.0
    return positions, headings


def to_world_positions(frames, origin=(0.0, 0.0, 0.0), heading: float = 0.0) -> np.ndarray:
    """(T, 21, 3) world joint positions reconstructed from local frames."""
    if isinstance(frames, MotionClip):
        frames = frames.frames
    roots, headings = integrate_root(frames, origin, heading)
    local = joint_positions(frames)
    return roots[:, None, :] + np.einsum("tij,tkj->tki", rot_y(headings), local)


def contacts_from_world(feet: np.ndarray, height_threshold: float = DEFAULT_HEIGHT_THRESHOLD,
                        speed_threshold: float = DEFAULT_SPEED_THRESHOLD) -> np.ndarray:
    """Contact flags from world heel/toe tracks (T, 4, 3).

    Speed at frame t is the distance travelled since t-1; frame 0 uses the
    displacement to frame 1.
    """
    feet = np.asarray(feet)
    T = len(feet)
    speed = np.zeros((T, feet.shape[1]))
    if T > 1:
        d = np.linalg.norm(np.diff(feet, axis=0), axis=-1)
        speed[1:] = d
        speed[0] = d[0]
    flags = (feet[..., 1] < height_threshold) & (speed < speed_threshold)
    return flags.astype(np.float64)


def detect_foot_contact(clip, height_threshold: float = DEFAULT_HEIGHT_THRESHOLD,
                        speed_threshold: float = DEFAULT_SPEED_THRESHOLD) -> np.ndarray:
    """(T, 4) contact flags (left heel, left toe, right heel, right toe)."""
    if isinstance(clip, WorldMotion):
        feet = clip.positions[:, [clip.skeleton.index(j) for j in FOOT_JOINTS]]
    else:
        world = to_world_positions(clip)
        feet = world[:, [clip.skeleton.index(j) for j in FOOT_JOINTS]]
    return contacts_from_world(feet, height_threshold, speed_threshold)


def resample(clip: MotionClip, target_fps: float = 30) -> MotionClip:
    """Linear resampling to ``target_fps``; contacts take the nearest source frame.

    Per-frame velocity channels are rescaled to the new frame duration.
    """
    src = float(clip.fps)
    if target_fps > src + 1e-9:
        raise DataError(f"cannot upsample from {src} Hz to {target_fps} Hz")
    if abs(target_fps - src) < 1e-9:
        return MotionClip(clip.fps, clip.frames.copy(), clip.skeleton)
    T = len(clip)
    duration = (T - 1) / src
    n = int(math.floor(duration * target_fps + 1e-9)) + 1
    t_src = np.arange(n) * (src / target_fps)
    lo = np.minimum(np.floor(t_src).astype(int), T - 1)
    hi = np.minimum(lo + 1, T - 1)
    w = (t_src - lo)[:, None]
    frames = (1.0 - w) * clip.frames[lo] + w * clip.frames[hi]
    nearest = np.minimum(np.floor(t_src + 0.5).astype(int), T - 1)
    frames[:, CONTACTS] = clip.frames[nearest, CONTACTS]
    ratio = src / target_fps
    frames[:, PLANAR_VEL] *= ratio
    frames[:, ANGULAR_VEL] *= ratio
    return MotionClip(target_fps, frames, clip.skeleton)


def window_segments(clip, length: int, stride: int = 10) -> np.ndarray:
    """All maximal ``length``-frame windows at ``stride``: (N, length, D)."""
    if length < 2 or stride < 1:
        raise DataError(f"need length >= 2 and stride >= 1, got {length}, {stride}")
    frames = clip.frames if isinstance(clip, MotionClip) else np.asarray(clip)
    T = len(frames)
    if T < length:
        return np.zeros((0, length, frames.shape[-1]))
    starts = range(0, T - length + 1, stride)
    return np.stack([frames[s : s + length] for s in starts])


def corrupt(segment: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add iid N(0, sigma^2) noise to every entry."""
    if sigma < 0:
        raise DataError("noise sigma must be non-negative")
    segment = np.asarray(segment, dtype=np.float64)
    if sigma == 0:
        return segment.copy()
    return segment + rng.normal(0.0, sigma, size=segment.shape)


@dataclass
class NoiseSchedule:
    """sigma(k) = max(sigma0 - delta * k, floor), reaching the floor exactly."""

    sigma0: float = 0.1
    delta: float = 0.001
    floor: float = 0.0

    @property
    def zero_iteration(self) -> int:
        if self.delta <= 0:
            return -1
        return int(math.ceil((self.sigma0 - self.floor) / self.delta - 1e-9))

    def __call__(self, iteration: int) -> float:
        if self.delta > 0 and iteration >= self.zero_iteration:
            return self.floor
        return max(self.sigma0 - self.delta * iteration, self.floor)


@dataclass
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray

    ZERO_VARIANCE = 1e-8

    @classmethod
    def from_frames(cls, frames: np.ndarray) -> "NormalizationStats":
        frames = np.asarray(frames, dtype=np.float64).reshape(-1, FRAME_DIM)
        mean = frames.mean(axis=0)
        std = frames.std(axis=0)
        std = np.where(std < cls.ZERO_VARIANCE, 1.0, std)
        return cls(mean, std)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "NormalizationStats":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def normalize(segment: np.ndarray, stats: NormalizationStats | None) -> np.ndarray:
    if stats is None:
        raise DataError("normalization statistics are missing")
    return (np.asarray(segment) - stats.mean) / stats.std


def denormalize(segment: np.ndarray, stats: NormalizationStats | None) -> np.ndarray:
    if stats is None:
        raise DataError("normalization statistics are missing")
    return np.asarray(segment) * stats.std + stats.mean


@dataclass
class DatasetSplit:
    train: list[int]
    validation: list[int]
    test: list[int]

    def to_dict(self) -> dict:
        return {"train": self.train, "validation": self.validation, "test": self.test}


def split_segments(n: int, seed: int, ratios=(0.8, 0.1, 0.1)) -> DatasetSplit:
    """Seeded random partition of ``n`` segment indices into train/val/test."""
    if n < 3:
        raise DataError(f"need at least 3 segments to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratios[0] * n))
    n_val = max(1, int(round(ratios[1] * n)))
    n_train = min(n_train, n - n_val - 1)
    return DatasetSplit(
        sorted(perm[:n_train].tolist()),
        sorted(perm[n_train : n_train + n_val].tolist()),
        sorted(perm[n_train + n_val :].tolist()),
    )
