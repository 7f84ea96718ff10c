"""Cost terms: closed-form values, invariances and finite-difference gradients."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from strnn import nn
from strnn.data import FRAME_DIM, PARTITION, NormalizationStats, default_skeleton
from strnn.data.motion import joint_positions
from strnn.data.skeleton import REST_OFFSETS
from strnn.losses import (
    ControlSignal,
    LossWeights,
    bonelength_cost,
    control_cost,
    foot_velocities,
    footplant_cost,
    reconstruction_loss,
    smoothness_loss,
    total_cost,
)
from strnn.nn import Tensor, check_gradients

GRAD_TOL = 1e-6


def rest_frames(T):
    """Local frames holding the rest pose (reference bone lengths)."""
    skel = default_skeleton()
    pos = {"root": np.array([0.0, 0.9, 0.0])}
    for j in skel.joints[1:]:
        pos[j] = pos[skel.parent[j]] + np.asarray(REST_OFFSETS[j])
    f = np.zeros(FRAME_DIM)
    f[0:3] = pos["root"]
    f[6:66] = np.concatenate([pos[j] for j in skel.joints[1:]])
    return np.tile(f, (T, 1))


# -- reconstruction --------------------------------------------------------------------

def test_reconstruction_zero_and_offset(rng):
    gt = rng.normal(size=(2, 7, FRAME_DIM))  # m = 4, D = 4, P = 3
    dec, pred = gt[:, :4], gt[:, 4:]
    assert float(reconstruction_loss(dec, pred, gt).data) == 0.0
    assert abs(float(reconstruction_loss(dec + 1.0, pred, gt).data) - 1.0) < 1e-12


def test_reconstruction_gradient_closed_form(rng):
    gt = rng.normal(size=(2, 7, FRAME_DIM))
    dec = Tensor(rng.normal(size=(2, 4, FRAME_DIM)), requires_grad=True)
    pred = Tensor(rng.normal(size=(2, 3, FRAME_DIM)), requires_grad=True)
    gd, gp = nn.grad(reconstruction_loss(dec, pred, gt), [dec, pred])
    assert np.allclose(gd, 2 * (dec.data - gt[:, :4]) / dec.size, atol=1e-15)
    assert np.allclose(gp, 2 * (pred.data - gt[:, 4:]) / pred.size, atol=1e-15)
    errs = check_gradients(lambda: reconstruction_loss(dec, pred, gt), [dec, pred])
    assert max(errs.values()) < GRAD_TOL


def test_reconstruction_shape_mismatch():
    with pytest.raises(nn.ConfigurationError):
        reconstruction_loss(np.zeros((1, 5, 73)), np.zeros((1, 3, 73)), np.zeros((1, 6, 73)))


# -- smoothness ------------------------------------------------------------------------

def test_smoothness_closed_form():
    block = np.zeros((3, FRAME_DIM))
    block[:, PARTITION.torso[0]] = [0.0, 0.0, 1.0]
    assert abs(float(smoothness_loss(block).data) - 1.0 / 3.0) < 1e-15
    assert float(smoothness_loss(np.ones((5, FRAME_DIM))).data) == 0.0


def test_smoothness_root_term_uses_first_differences():
    block = np.zeros((4, FRAME_DIM))
    block[:, 66] = [0.0, 1.0, 2.0, 3.0]
    assert abs(float(smoothness_loss(block).data) - 3.0 / 4.0) < 1e-15


def test_smoothness_ignores_contacts():
    block = np.zeros((4, FRAME_DIM))
    block[:, 69] = [0, 1, 0, 1]
    assert float(smoothness_loss(block).data) == 0.0


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (6, FRAME_DIM), elements=st.floats(-2, 2)),
       arrays(np.float64, (FRAME_DIM,), elements=st.floats(-2, 2)),
       arrays(np.float64, (FRAME_DIM,), elements=st.floats(-1, 1)))
def test_smoothness_invariant_to_body_offset_and_ramp(x, offset, slope):
    body = list(PARTITION.body)
    y = x.copy()
    y[:, body] += offset[body] + np.arange(6)[:, None] * slope[body]
    a, b = float(smoothness_loss(x).data), float(smoothness_loss(y).data)
    assert abs(a - b) <= 1e-9 * max(1.0, a)


def test_smoothness_gradients(rng):
    block = Tensor(rng.normal(size=(2, 5, FRAME_DIM)), requires_grad=True)
    assert max(check_gradients(lambda: smoothness_loss(block), [block]).values()) < GRAD_TOL


def test_smoothness_short_block():
    with pytest.raises(nn.ConfigurationError):
        smoothness_loss(np.zeros((2, FRAME_DIM)))


# -- run-time costs ----------------------------------------------------------------------

def test_control_cost_values(rng):
    block = rng.normal(size=(6, FRAME_DIM))
    gamma = block[:, [66, 67, 68]].copy()
    assert float(control_cost(block, gamma).data) == 0.0
    gamma[:, 1] += 0.3
    assert abs(float(control_cost(block, gamma).data) - 6 * 0.09) < 1e-12
    with pytest.raises(nn.ConfigurationError):
        control_cost(block, gamma[:5])


def test_control_cost_in_raw_units(rng):
    stats = NormalizationStats(rng.normal(size=FRAME_DIM), rng.uniform(0.5, 2, FRAME_DIM))
    raw = rng.normal(size=(4, FRAME_DIM))
    gamma = raw[:, [66, 67, 68]] + 0.1
    z = (raw - stats.mean) / stats.std
    assert abs(float(control_cost(z, gamma, stats).data) - 4 * 3 * 0.01) < 1e-12


def test_control_cost_gradients(rng):
    stats = NormalizationStats(rng.normal(size=FRAME_DIM), rng.uniform(0.5, 2, FRAME_DIM))
    block = Tensor(rng.normal(size=(1, 5, FRAME_DIM)), requires_grad=True)
    gamma = ControlSignal(rng.normal(size=(5, 3)))
    errs = check_gradients(lambda: control_cost(block, gamma, stats), [block])
    assert max(errs.values()) < GRAD_TOL


def test_footplant_zero_cases():
    block = rest_frames(5)
    flags = np.ones((5, 4))
    assert float(footplant_cost(block, flags).data) == 0.0
    moving = block.copy()
    moving[:, 66] = 0.2  # root walks, feet follow it in local frame: sliding
    assert float(footplant_cost(moving, np.zeros((5, 4))).data) == 0.0


def test_footplant_single_contact_frame():
    block = rest_frames(3)
    # left heel slides +0.1 m in x between frames 1 and 2 (heading fixed, root still)
    block[2, 6 + 3 * 6] += 0.1
    flags = np.zeros((3, 4))
    flags[2, 0] = 1.0
    assert abs(float(footplant_cost(block, flags).data) - 0.01) < 1e-15


def test_planted_world_foot_under_moving_root_has_zero_velocity():
    """A foot fixed in the world moves backwards in the local frame as the root advances."""
    T, v, w = 6, 0.03, 0.05
    block = rest_frames(T)
    world_foot = np.array([0.1, 0.0, 0.2])
    heading, origin = 0.0, np.zeros(3)
    for t in range(T):
        c, s = np.cos(heading), np.sin(heading)
        R = np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
        block[t, 24:27] = R.T @ (world_foot - origin)  # left_foot channels
        block[t, 66:69] = [0.0, v, w]
        origin = origin + R @ np.array([0.0, 0.0, v])
        heading += w
    vel = foot_velocities(block).data[0, :, 0]
    assert np.max(np.abs(vel)) < 1e-12


def test_footplant_gradients(rng):
    stats = NormalizationStats(rng.normal(size=FRAME_DIM) * 0.1, rng.uniform(0.5, 2, FRAME_DIM))
    block = Tensor(rng.normal(size=(2, 4, FRAME_DIM)), requires_grad=True)
    flags = (rng.uniform(size=(2, 4, 4)) > 0.5).astype(float)
    errs = check_gradients(lambda: footplant_cost(block, flags, stats), [block])
    assert max(errs.values()) < GRAD_TOL


def test_bonelength_values():
    block = rest_frames(4)
    assert float(bonelength_cost(block).data) < 1e-12
    stretched = block.copy()
    # lengthen the head bone (neck -> head, along +y) by 0.1 in one frame
    stretched[2, 6 + 3 * 3 + 1] += 0.1
    assert abs(float(bonelength_cost(stretched).data) - 0.01) < 1e-9


def test_bonelength_gradients_finite_for_coincident_joints(rng):
    block = Tensor(rest_frames(2), requires_grad=True)
    block.data[0, 9:12] = block.data[0, 6:9]  # spine1 on top of spine
    g, = nn.grad(bonelength_cost(block), [block])
    assert np.all(np.isfinite(g))
    block = Tensor(rest_frames(3) + rng.normal(size=(3, FRAME_DIM)) * 0.05, requires_grad=True)
    assert max(check_gradients(lambda: bonelength_cost(block), [block]).values()) < GRAD_TOL


def test_joint_positions_layout():
    f = rest_frames(1)[0]
    pos = joint_positions(f)
    assert pos.shape == (21, 3)
    assert np.array_equal(pos[0], f[0:3])


# -- total cost ----------------------------------------------------------------------------

def test_total_cost_regimes():
    parts = {"C_r": Tensor(2.0), "C_s": Tensor(5.0), "H_ctr": Tensor(1.0), "H_fp": Tensor(2.0),
             "H_bone": Tensor(3.0)}
    assert float(total_cost(parts, regime="MSE").data) == 2.0
    assert abs(float(total_cost(parts, LossWeights(0.8, 0.2), "LH").data) - 2.6) < 1e-12
    assert float(total_cost(parts, LossWeights(1.0, 0.0), "LH").data) == 2.0
    rt = float(total_cost(parts, LossWeights(0.6, 0.2), "runtime").data)
    assert abs(rt - (1.2 + 1.0 + 0.2 * 6.0)) < 1e-12
    l2 = Tensor(0.5)
    assert float(total_cost(parts, regime="MSE", l2=l2).data) == 2.5
    with pytest.raises(nn.ConfigurationError):
        total_cost(parts, regime="XX")


@pytest.mark.parametrize("w_r,w_s", [(0.9, 0.2), (-0.1, 0.5), (0.5, 1.2)])
def test_invalid_weights(w_r, w_s):
    with pytest.raises(nn.ConfigurationError):
        LossWeights(w_r, w_s)


def test_costs_nonnegative(rng):
    block = rng.normal(size=(2, 5, FRAME_DIM))
    assert float(smoothness_loss(block).data) >= 0
    assert float(control_cost(block, rng.normal(size=(5, 3))).data) >= 0
    assert float(footplant_cost(block, np.ones((2, 5, 4))).data) >= 0
    assert float(bonelength_cost(block).data) >= 0
