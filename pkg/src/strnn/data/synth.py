"""Synthetic skeletal motion with analytic foot-contact ground truth.

Upper-body joints come from forward kinematics over the standard skeleton;
legs are solved with two-bone inverse kinematics towards a footstep schedule,
so every bone keeps its reference length exactly.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

from .motion import MotionClip
from .processing import WorldMotion, rot_y, to_local_frame
from .skeleton import JOINT_NAMES, PARENTS, REST_OFFSETS, default_skeleton

KINDS = ("gait", "wave", "figure8")

GAIT_PERIOD = 32  # frames per full stride cycle
STANCE_FRAMES = 19
SWING_FRAMES = GAIT_PERIOD - STANCE_FRAMES
WALK_SPEED = 0.025  # m/frame
ROOT_HEIGHT = 0.82
SWING_HEIGHT = 0.25
# Walking speed rises and falls once per step and the pelvis yaws about the
# travel direction once per stride, so root velocities are not constant.
SPEED_SWING = 0.1  # fraction of WALK_SPEED
YAW_SWING = 0.06  # rad
FIGURE8_PERIOD = 8 * GAIT_PERIOD
# First zero of the Bessel function J0: a heading of A*sin(wt) with this
# amplitude has zero mean displacement per period, so the path closes.
FIGURE8_AMPLITUDE = 2.404825557695773
WAVE_PERIOD = 40

THIGH = float(np.linalg.norm(REST_OFFSETS["left_knee"]))
SHIN = float(np.linalg.norm(REST_OFFSETS["left_foot"]))
LEG_JOINTS = {
    "left": ("left_hip", "left_knee", "left_foot", "left_toe"),
    "right": ("right_hip", "right_knee", "right_foot", "right_toe"),
}


def _rot_x(theta):
    return Rotation.from_rotvec(np.outer(theta, [1.0, 0.0, 0.0])).as_matrix()


def _rot_z(theta):
    return Rotation.from_rotvec(np.outer(theta, [0.0, 0.0, 1.0])).as_matrix()


def _smoothstep(u):
    return u * u * (3.0 - 2.0 * u)


def two_bone_ik(hip, target, bend, upper=THIGH, lower=SHIN):
    """Knee and (possibly reach-clamped) foot positions for a two-bone chain.

    The knee lies in the plane spanned by the hip-target line and ``bend``.
    """
    d = target - hip
    dist = np.linalg.norm(d, axis=-1, keepdims=True)
    u = d / dist
    reach = np.minimum(dist, upper + lower - 1e-6)
    foot = hip + u * reach
    x = (upper * upper - lower * lower + reach * reach) / (2.0 * reach)
    h = np.sqrt(np.maximum(upper * upper - x * x, 0.0))
    n = bend - np.sum(bend * u, axis=-1, keepdims=True) * u
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    knee = hip + u * x + n * h
    return knee, foot, dist[..., 0]


def _upper_body(root_pos, root_R, local_R):
    """Forward kinematics for all joints except the legs."""
    pos = {"root": root_pos}
    rot = {"root": root_R}
    for j in JOINT_NAMES[1:]:
        if j in LEG_JOINTS["left"] or j in LEG_JOINTS["right"]:
            continue
        p = PARENTS[j]
        pos[j] = pos[p] + np.einsum("tij,j->ti", rot[p], np.asarray(REST_OFFSETS[j]))
        R = local_R.get(j)
        rot[j] = rot[p] if R is None else np.einsum("tij,tjk->tik", rot[p], R)
    return pos


def _footsteps(origin_ext, psi_ext, offset, side_x, pad, T):
    """Heel/toe tracks and planted flags for one foot on a gait schedule.

    ``origin_ext`` and ``psi_ext`` cover frames -pad .. T+pad-1 so footsteps
    planted before the clip starts or after it ends are known.
    """
    P, S = GAIT_PERIOD, STANCE_FRAMES
    heel = np.zeros((T, 3))
    heading = np.zeros(T)
    planted = np.zeros(T, dtype=bool)

    def plant(c):
        tm = offset + c * P + (S - 1) // 2 + pad
        p = origin_ext[tm] + rot_y(psi_ext[tm]) @ np.array([side_x, 0.0, 0.0])
        p[1] = 0.0
        return p, psi_ext[tm]

    for t in range(T):
        phase = (t - offset) % P
        c = (t - offset) // P
        if phase < S:
            heel[t], heading[t] = plant(c)
            planted[t] = True
        else:
            u = (phase - S + 1) / (SWING_FRAMES + 1)
            s = _smoothstep(u)
            (p0, h0), (p1, h1) = plant(c), plant(c + 1)
            heel[t] = (1.0 - s) * p0 + s * p1
            heel[t, 1] = SWING_HEIGHT * np.sin(np.pi * u)
            heading[t] = h0 + s * ((h1 - h0 + np.pi) % (2 * np.pi) - np.pi)
    toe = heel + np.einsum("tij,j->ti", rot_y(heading), np.asarray(REST_OFFSETS["left_toe"]))
    return heel, toe, planted


def synth_world(kind: str, duration: int, seed: int, fps: float = 30):
    """World-space synthetic motion plus its analytic (T, 4) contact flags."""
    if kind not in KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}; expected one of {KINDS}")
    if duration < 80:
        raise ValueError(f"synthetic clips need at least 80 frames, got {duration}")
    rng = np.random.default_rng(seed)
    P = GAIT_PERIOD
    psi0 = rng.uniform(-np.pi, np.pi)
    offset = int(rng.integers(0, P))
    T = duration
    t = np.arange(T, dtype=np.float64)
    pad = 3 * P
    t_ext = np.arange(-pad, T + pad)

    if kind == "wave":
        psi_ext = np.full(len(t_ext), psi0)
        origin_ext = np.zeros((len(t_ext), 3))
        roll = np.zeros(T)
        height = np.full(T, ROOT_HEIGHT - 0.02)
    else:
        if kind == "gait":
            psi_ext = np.full(len(t_ext), psi0)
            speed = WALK_SPEED * (1.0 + SPEED_SWING * np.cos(4 * np.pi * (t_ext - offset) / P))
            facing_ext = psi_ext + YAW_SWING * np.sin(2 * np.pi * (t_ext - offset) / P)
        else:
            psi_ext = psi0 + FIGURE8_AMPLITUDE * np.sin(2 * np.pi * t_ext / FIGURE8_PERIOD)
            speed = np.full(len(t_ext), WALK_SPEED)
            facing_ext = psi_ext
        steps = np.einsum("tij,j->ti", rot_y(psi_ext), np.array([0.0, 0.0, 1.0])) * speed[:, None]
        origin_ext = np.concatenate([np.zeros((1, 3)), np.cumsum(steps[:-1], axis=0)])
        origin_ext -= origin_ext[pad]
        roll = 0.04 * np.sin(2 * np.pi * (t - offset) / P)
        height = ROOT_HEIGHT + 0.008 * np.cos(4 * np.pi * (t - offset) / P)

    psi = (psi_ext if kind == "wave" else facing_ext)[pad : pad + T]
    origin = origin_ext[pad : pad + T]
    root_R = np.einsum("tij,tjk->tik", rot_y(psi), _rot_z(roll))
    root_pos = origin + height[:, None] * np.array([0.0, 1.0, 0.0])

    if kind == "wave":
        w = 2 * np.pi * t / WAVE_PERIOD + rng.uniform(0, 2 * np.pi)
        local = {
            "spine": _rot_z(0.05 * np.sin(w)),
            "left_arm": _rot_z(np.full(T, 2.4)),
            "left_forearm": _rot_z(0.5 + 0.45 * np.sin(w)),
            "left_wrist": _rot_z(0.2 * np.sin(w)),
            "right_arm": _rot_z(-0.1 + 0.03 * np.sin(w)),
        }
    else:
        phase = 2 * np.pi * (t - offset) / P
        local = {
            "spine": _rot_x(0.04 * np.sin(2 * phase)),
            "neck": _rot_x(-0.04 * np.sin(2 * phase)),
            "left_arm": _rot_x(0.4 * np.sin(phase)),
            "left_forearm": _rot_x(-0.3 - 0.15 * np.sin(phase)),
            "right_arm": _rot_x(-0.4 * np.sin(phase)),
            "right_forearm": _rot_x(-0.3 + 0.15 * np.sin(phase)),
        }
    pos = _upper_body(root_pos, root_R, local)

    contacts = np.zeros((T, 4))
    forward = np.einsum("tij,j->ti", rot_y(psi), np.array([0.0, 0.0, 1.0]))
    for k, side in enumerate(("left", "right")):
        hip_j, knee_j, foot_j, toe_j = LEG_JOINTS[side]
        hip = root_pos + np.einsum("tij,j->ti", root_R, np.asarray(REST_OFFSETS[hip_j]))
        side_x = REST_OFFSETS[hip_j][0]
        if kind == "wave":
            heel = origin + np.einsum("tij,j->ti", rot_y(psi), np.array([side_x, 0.0, 0.0]))
            toe = heel + forward * np.linalg.norm(REST_OFFSETS[toe_j])
            planted = np.ones(T, dtype=bool)
        else:
            foot_offset = offset + (0 if side == "left" else P // 2)
            heel, toe, planted = _footsteps(origin_ext, psi_ext, foot_offset, side_x, pad, T)
        knee, foot, _ = two_bone_ik(hip, heel, forward)
        if np.max(np.abs(foot - heel)) > 1e-12:
            raise RuntimeError("synthetic footstep out of leg reach")
        pos[hip_j], pos[knee_j], pos[foot_j], pos[toe_j] = hip, knee, heel, toe
        prev = np.concatenate([planted[1:2], planted[:-1]])
        flag = (planted & prev).astype(np.float64)
        contacts[:, 2 * k] = flag
        contacts[:, 2 * k + 1] = flag

    positions = np.stack([pos[j] for j in JOINT_NAMES], axis=1)
    rotvec = Rotation.from_matrix(root_R).as_rotvec()
    return WorldMotion(fps, positions, rotvec, default_skeleton()), contacts


def synth_dataset(kind: str, duration: int, seed: int, fps: float = 30) -> MotionClip:
    """Body-local synthetic clip of ``duration`` frames with analytic contacts."""
    world, contacts = synth_world(kind, duration, seed, fps)
    return to_local_frame(world, contacts=contacts)
