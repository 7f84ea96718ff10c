"""Training phases, schedules, model selection and divergence handling."""

import numpy as np
import pytest

from strnn.applications import parameter_hash
from strnn.data import MotionClip, synth_dataset
from strnn.model import STRNN, ModelConfig
from strnn.nn import no_grad
from strnn.training import (
    TrainConfig,
    TrainingDiverged,
    TrainLog,
    build_dataset,
    compose_and_finetune,
    phases_for,
    residual_validation_loss,
    train_model,
    train_residual,
    train_spatiotemporal,
    validation_loss,
)

WIDTHS = (8, 16, 32, 64)


@pytest.fixture(scope="module")
def data():
    return build_dataset(synth_dataset("gait", 400, 0), 8, 4, 0)


def small(tag="Composite_4_4_HY", **kw):
    cfg = dict(spatial_widths=WIDTHS, hidden=64, residual_width=32, seed=1)
    cfg.update(kw)
    return STRNN(ModelConfig(tag=tag, **cfg))


def fast(**kw):
    cfg = dict(batch_size=8, validate_every=5, l2=0.0)
    cfg.update(kw)
    return TrainConfig(**cfg)


def test_build_dataset_split_and_normalization(data):
    n = len(data.segments)
    assert n == (400 - 8) // 4 + 1
    assert len(data.train) + len(data.validation) + len(data.test) == n
    flat = data.train.reshape(-1, 73)
    moving = data.stats.std != 1.0
    assert np.max(np.abs(flat.mean(0))) < 1e-10
    assert np.max(np.abs(flat.std(0)[moving] - 1)) < 1e-10


def test_segments_never_cross_clip_boundaries():
    a = MotionClip(30, np.zeros((25, 73)))
    b = MotionClip(30, np.ones((25, 73)))
    ds = build_dataset([a, b], 10, 5, 0)
    raw = ds.raw
    assert len(raw) == 2 * 4
    for seg in raw:
        assert np.ptp(seg) == 0.0


def test_schedule_values():
    s = TrainConfig().schedule
    assert s(100) == 0.0
    assert abs(s(50) - 0.05) < 1e-15


def test_log_sigma_nonincreasing_and_csv(data):
    log = TrainLog()
    train_spatiotemporal(small(), data, fast(sigma_delta=0.01), log, iterations=15)
    sig = log.column("sigma")
    assert all(a >= b for a, b in zip(sig, sig[1:]))
    assert sig[-1] == 0.0
    text = log.to_csv()
    assert text.splitlines()[0] == "iter,phase,sigma,train_loss,val_loss"
    iters = log.column("iter")
    assert iters == list(range(len(iters)))


def test_training_is_deterministic(data):
    logs = []
    for _ in range(2):
        log = TrainLog()
        m = small()
        train_spatiotemporal(m, data, fast(), log, iterations=10)
        logs.append((log.to_csv(), parameter_hash(m)))
    assert logs[0] == logs[1]


def test_best_validation_parameters_are_kept(data):
    m = small()
    log = TrainLog()
    res = train_spatiotemporal(m, data, fast(), log, iterations=20)
    vals = [r[4] for r in log.rows if r[4] is not None]
    assert res.best_val == min(vals)
    assert abs(validation_loss(m, data.validation, residual=False) - res.best_val) < 1e-12


def test_phase1_leaves_residual_untouched(data):
    m = small()
    before = {k: v.copy() for k, v in m.state_dict().items() if k.startswith("residual.")}
    train_spatiotemporal(m, data, fast(), iterations=5)
    for k, v in before.items():
        assert np.array_equal(m.state_dict()[k], v)


def test_zero_iteration_residual_is_identity(data):
    m = small()
    train_residual(m, data, fast(), iterations=0)
    blocks = data.validation[:, :8]
    with no_grad():
        assert np.array_equal(m.residual(blocks).data, blocks)


def test_phase3_freezes_spatiotemporal_exactly(data):
    m = small()
    train_spatiotemporal(m, data, fast(), iterations=5)
    frozen = {k: v.copy() for k, v in m.state_dict().items() if not k.startswith("residual.")}
    train_residual(m, data, fast(), iterations=5)
    compose_and_finetune(m, data, fast(), iterations=10)
    state = m.state_dict()
    for k, v in frozen.items():
        assert np.array_equal(state[k], v), k


def test_zero_iteration_finetune_equals_spatiotemporal(data):
    m = small()
    train_spatiotemporal(m, data, fast(), iterations=5)
    compose_and_finetune(m, data, fast(), iterations=0)
    m.eval()
    with no_grad():
        seg = data.validation
        assert np.array_equal(m(seg).data, m(seg, residual=False).data)


def test_residual_pretraining_learns_identity_on_held_out(data):
    m = small("Composite_4_4_HY", residual_width=64)
    log = TrainLog()
    train_residual(m, data, TrainConfig(batch_size=16, validate_every=100, l2=0.0), log, iterations=1500)
    assert residual_validation_loss(m, data.test) < 1e-3


def test_miniature_model_overfits_short_gait():
    gait = build_dataset(synth_dataset("gait", 200, 0), 5, 1, 0)
    # 8-wide blocks leave no room for dropout; smoothness is weighted per
    # element and L2 is off, so reconstruction dominates the objective
    m = small("SpatioTemp_3_2_LH", dropout=0.0)
    cfg = TrainConfig(batch_size=16, l2=0.0, w_s=0.2 / 73, validate_every=250, patience_epochs=10**6)
    res = train_spatiotemporal(m, gait, cfg, iterations=5000)
    assert res.iterations <= 5000
    assert validation_loss(m, gait.train, residual=False) < 1e-2


def test_residual_pretraining_loss_descends_over_500_iteration_windows(data):
    m = small("Composite_4_4_HY", residual_width=64)
    log = TrainLog()
    cfg = TrainConfig(batch_size=16, l2=0.0, validate_every=100, patience_epochs=10**6)
    train_residual(m, data, cfg, log, iterations=1500)
    losses = log.column("train_loss", phase=2)
    assert len(losses) == 1500
    for s in range(0, len(losses) - 1000 + 1, 100):
        a = np.mean(losses[s : s + 500])
        b = np.mean(losses[s + 500 : s + 1000])
        assert b <= a * 1.05


def test_residual_validation_with_noise_measures_denoising(data):
    m = small("Composite_4_4_HY")
    # a fresh residual is the identity, so its denoising error is the noise power
    assert abs(residual_validation_loss(m, data.test, 0.1) - 0.01) < 1e-3


def test_target_validation_loss_stops_early(data):
    m = small()
    res = train_spatiotemporal(m, data, fast(target_val_loss=1e9), iterations=50)
    assert res.iterations == 0


def test_patience_stops_training(data):
    m = small()
    res = train_spatiotemporal(m, data, fast(validate_every=1, patience_epochs=0), iterations=50)
    assert res.iterations < 50


def test_divergence_rolls_back(data):
    from strnn.training import MotionDataset

    segments = data.segments.copy()
    segments[data.split.train] = np.nan  # validation stays finite
    poisoned = MotionDataset(segments, data.split, data.stats, data.raw)
    m = small()
    before = parameter_hash(m)
    with pytest.raises(TrainingDiverged) as info:
        train_spatiotemporal(m, poisoned, fast(), iterations=5)
    assert np.isnan(info.value.log.rows[-1][3])
    assert parameter_hash(m) == before


def test_phases_and_train_model(data):
    assert phases_for(small().tag) == (1, 2, 3)
    assert phases_for(small("SpatioTemp_4_4_LH").tag) == (1,)
    m = small()
    results, log = train_model(m, data, fast(phase1_iterations=3, phase2_iterations=3, phase3_iterations=3))
    assert sorted(results) == [1, 2, 3]
    assert [r[1] for r in log.rows] == sorted(r[1] for r in log.rows)
    with pytest.raises(ValueError):
        train_model(small("SpatioTemp_4_4_LH"), data, fast(), phases=(2,))


def test_mse_regime_model_trains(data):
    m = small("Temporal_4_4_MSE")
    res = train_spatiotemporal(m, data, fast(), iterations=10)
    assert np.isfinite(res.best_val)
