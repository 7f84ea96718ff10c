"""The standard 21-joint skeleton and its text file format."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

JOINT_NAMES = (
    "root",
    "spine", "spine1", "neck", "head",
    "left_hip", "left_knee", "left_foot", "left_toe",
    "right_hip", "right_knee", "right_foot", "right_toe",
    "left_arm", "left_forearm", "left_wrist", "left_finger",
    "right_arm", "right_forearm", "right_wrist", "right_finger",
)

PARENTS = {
    "root": None,
    "spine": "root", "spine1": "spine", "neck": "spine1", "head": "neck",
    "left_hip": "root", "left_knee": "left_hip", "left_foot": "left_knee", "left_toe": "left_foot",
    "right_hip": "root", "right_knee": "right_hip", "right_foot": "right_knee", "right_toe": "right_foot",
    "left_arm": "spine1", "left_forearm": "left_arm", "left_wrist": "left_forearm", "left_finger": "left_wrist",
    "right_arm": "spine1", "right_forearm": "right_arm", "right_wrist": "right_forearm", "right_finger": "right_wrist",
}

# Rest-pose offsets from the parent joint in metres (y up, facing +z, left is +x).
REST_OFFSETS = {
    "spine": (0.0, 0.12, 0.0), "spine1": (0.0, 0.15, 0.0),
    "neck": (0.0, 0.20, 0.0), "head": (0.0, 0.10, 0.0),
    "left_hip": (0.10, -0.05, 0.0), "left_knee": (0.0, -0.42, 0.0),
    "left_foot": (0.0, -0.42, 0.0), "left_toe": (0.0, 0.0, 0.15),
    "right_hip": (-0.10, -0.05, 0.0), "right_knee": (0.0, -0.42, 0.0),
    "right_foot": (0.0, -0.42, 0.0), "right_toe": (0.0, 0.0, 0.15),
    "left_arm": (0.18, 0.12, 0.0), "left_forearm": (0.0, -0.28, 0.0),
    "left_wrist": (0.0, -0.25, 0.0), "left_finger": (0.0, -0.08, 0.0),
    "right_arm": (-0.18, 0.12, 0.0), "right_forearm": (0.0, -0.28, 0.0),
    "right_wrist": (0.0, -0.25, 0.0), "right_finger": (0.0, -0.08, 0.0),
}

# Heels (foot joints) and toes in contact-flag order: lheel, ltoe, rheel, rtoe.
FOOT_JOINTS = ("left_foot", "left_toe", "right_foot", "right_toe")


class SkeletonError(ValueError):
    pass


@dataclass
class Skeleton:
    joints: tuple[str, ...]
    parent: dict[str, str | None]
    reference_bone_lengths: dict[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        roots = [j for j in self.joints if self.parent.get(j) is None]
        if len(roots) != 1:
            raise SkeletonError(f"skeleton must have exactly one root, found {roots}")
        for j in self.joints:
            seen = set()
            k = j
            while k is not None:
                if k in seen:
                    raise SkeletonError(f"cycle in parent map at {k!r}")
                seen.add(k)
                if k not in self.parent:
                    raise SkeletonError(f"joint {k!r} has no parent entry")
                k = self.parent[k]
        for bone, length in self.reference_bone_lengths.items():
            if not length > 0:
                raise SkeletonError(f"bone {bone} has non-positive length {length}")

    @property
    def root(self) -> str:
        return next(j for j in self.joints if self.parent[j] is None)

    def index(self, name: str) -> int:
        return self.joints.index(name)

    def bones(self) -> list[tuple[int, int, float]]:
        """(child index, parent index, reference length) for every non-root joint."""
        out = []
        for j in self.joints:
            p = self.parent[j]
            if p is None:
                continue
            out.append((self.index(j), self.index(p), self.reference_bone_lengths[(p, j)]))
        return out


def default_skeleton() -> Skeleton:
    lengths = {
        (PARENTS[j], j): float(np.linalg.norm(REST_OFFSETS[j])) for j in JOINT_NAMES if PARENTS[j]
    }
    return Skeleton(JOINT_NAMES, dict(PARENTS), lengths)


def write_skeleton(skel: Skeleton, path) -> None:
    lines = []
    for j in skel.joints:
        p = skel.parent[j]
        length = 0.0 if p is None else skel.reference_bone_lengths[(p, j)]
        lines.append(f"{j} {p if p is not None else '-'} {length!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_skeleton(path) -> Skeleton:
    joints, parent, lengths = [], {}, {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 3:
                raise SkeletonError(f"{path}:{lineno}: expected 'name parent length'")
            name, par, length = parts[0], parts[1], float(parts[2])
            joints.append(name)
            parent[name] = None if par == "-" else par
            if par != "-":
                lengths[(par, name)] = length
    return Skeleton(tuple(joints), parent, lengths)
