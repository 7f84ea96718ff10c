"""73-channel frame layout, body partition, clips and the STRNN-MOTION format."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .skeleton import FOOT_JOINTS, JOINT_NAMES, Skeleton, default_skeleton

FRAME_DIM = 73
N_JOINTS = 20  # non-root joints stored as local positions

ROOT_POS = slice(0, 3)
ROOT_ROT = slice(3, 6)
JOINT_POS = slice(6, 66)
PLANAR_VEL = slice(66, 68)
ANGULAR_VEL = 68
CONTACTS = slice(69, 73)
# vx, vz, omega: the channels a control signal constrains.
CONTROL_CHANNELS = (66, 67, 68)


class MotionFormatError(ValueError):
    pass


def joint_channels(name: str) -> list[int]:
    """Frame channels holding the (x, y, z) position of ``name``."""
    if name == "root":
        return list(range(0, 3))
    k = JOINT_NAMES.index(name) - 1
    return list(range(6 + 3 * k, 9 + 3 * k))


def _channels(*names: str) -> tuple[int, ...]:
    return tuple(c for n in names for c in joint_channels(n))


@dataclass(frozen=True)
class BodyPartition:
    """Disjoint channel groups covering all 73 frame channels."""

    root: tuple[int, ...]
    torso: tuple[int, ...]
    l_leg: tuple[int, ...]
    r_leg: tuple[int, ...]
    l_arm: tuple[int, ...]
    r_arm: tuple[int, ...]
    fp: tuple[int, ...]

    BODY_GROUPS = ("torso", "l_arm", "r_arm", "l_leg", "r_leg")

    def groups(self) -> dict[str, tuple[int, ...]]:
        return {
            "root": self.root, "torso": self.torso, "l_leg": self.l_leg, "r_leg": self.r_leg,
            "l_arm": self.l_arm, "r_arm": self.r_arm, "fp": self.fp,
        }

    @property
    def body(self) -> tuple[int, ...]:
        return self.torso + self.l_leg + self.r_leg + self.l_arm + self.r_arm

    def validate(self, dim: int = FRAME_DIM) -> None:
        seen: list[int] = []
        for idx in self.groups().values():
            seen.extend(idx)
        if len(seen) != len(set(seen)):
            raise ValueError("body partition groups overlap")
        if sorted(seen) != list(range(dim)):
            raise ValueError(f"body partition does not cover channels 0..{dim - 1}")
        if len(self.fp) != 4:
            raise ValueError("foot-contact group must have 4 channels")


def default_partition() -> BodyPartition:
    part = BodyPartition(
        root=tuple(range(0, 6)) + (66, 67, 68),
        torso=_channels("spine", "spine1", "neck", "head"),
        l_leg=_channels("left_hip", "left_knee", "left_foot", "left_toe"),
        r_leg=_channels("right_hip", "right_knee", "right_foot", "right_toe"),
        l_arm=_channels("left_arm", "left_forearm", "left_wrist", "left_finger"),
        r_arm=_channels("right_arm", "right_forearm", "right_wrist", "right_finger"),
        fp=tuple(range(69, 73)),
    )
    part.validate()
    return part


PARTITION = default_partition()
FOOT_CHANNELS = tuple(tuple(joint_channels(j)) for j in FOOT_JOINTS)


def joint_positions(frames: np.ndarray) -> np.ndarray:
    """(..., 73) frames -> (..., 21, 3) local joint positions, root first."""
    frames = np.asarray(frames)
    lead = frames.shape[:-1]
    root = frames[..., ROOT_POS].reshape(lead + (1, 3))
    rest = frames[..., JOINT_POS].reshape(lead + (N_JOINTS, 3))
    return np.concatenate([root, rest], axis=-2)


@dataclass
class MotionClip:
    fps: float
    frames: np.ndarray
    skeleton: Skeleton = field(default_factory=default_skeleton)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[1] != FRAME_DIM:
            raise MotionFormatError(f"frames must have shape (T, {FRAME_DIM}), got {self.frames.shape}")
        if len(self.frames) == 0:
            raise MotionFormatError("motion clip is empty")
        if not self.fps > 0:
            raise MotionFormatError(f"fps must be positive, got {self.fps}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def contacts(self) -> np.ndarray:
        return self.frames[:, CONTACTS]


HEADER = "STRNN-MOTION v1"


def write_motion(clip: MotionClip, path) -> None:
    fps = int(round(clip.fps))
    lines = [f"{HEADER} fps={fps} frames={len(clip)} dims={FRAME_DIM}"]
    for row in clip.frames.tolist():
        lines.append(" ".join(repr(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_motion(path, skeleton: Skeleton | None = None) -> MotionClip:
    with open(path) as fh:
        header = fh.readline().split()
        if header[:2] != HEADER.split() or len(header) != 5:
            raise MotionFormatError(f"{path}: not an STRNN-MOTION v1 file")
        try:
            meta = dict(kv.split("=", 1) for kv in header[2:])
            fps, n, dims = int(meta["fps"]), int(meta["frames"]), int(meta["dims"])
        except (KeyError, ValueError) as exc:
            raise MotionFormatError(f"{path}: malformed header {' '.join(header)!r}") from exc
        if dims != FRAME_DIM:
            raise MotionFormatError(f"{path}: expected dims={FRAME_DIM}, got {dims}")
        rows = []
        for lineno, line in enumerate(fh, 2):
            if not line.strip():
                continue
            vals = line.split()
            if len(vals) != dims:
                raise MotionFormatError(f"{path}:{lineno}: expected {dims} values, got {len(vals)}")
            rows.append([float(v) for v in vals])
    if len(rows) != n:
        raise MotionFormatError(f"{path}: header declares {n} frames, found {len(rows)}")
    return MotionClip(fps, np.array(rows), skeleton or default_skeleton())
