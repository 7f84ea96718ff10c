"""Manifold distance, per-horizon error and denoising error."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strnn.data import FRAME_DIM, NormalizationStats
from strnn.evaluation import (
    MetricError,
    MetricReport,
    d1nn,
    denoise_error,
    horizon_frames,
    prediction_error,
)


def brute_force_d1nn(generated, corpus, length, stride, aggregate="mean"):
    """Exact rational nearest-neighbour distance by explicit loops."""
    def windows(clip):
        return [clip[s : s + length] for s in range(0, len(clip) - length + 1, stride)]

    gen = windows(generated)
    refs = [w for c in corpus for w in windows(c)]
    minima = []
    for g in gen:
        best = None
        for r in refs:
            total = Fraction(0)
            for t in range(length):
                for c in range(g.shape[1]):
                    d = Fraction(float(g[t, c])) - Fraction(float(r[t, c]))
                    total += d * d
            dist = total / length
            best = dist if best is None or dist < best else best
        minima.append(best)
    if aggregate == "mean":
        return float(sum(minima) / len(minima))
    return float(min(minima))


def dyadic_clip(rng, T, D):
    # multiples of 1/8 keep every floating-point partial sum exact
    return rng.integers(-16, 17, size=(T, D)) / 8.0


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("aggregate", ["mean", "min"])
def test_d1nn_matches_brute_force_exactly(seed, aggregate):
    rng = np.random.default_rng(seed)
    length, stride = 4, 2
    gen = dyadic_clip(rng, int(rng.integers(4, 12)), 5)
    corpus = [dyadic_clip(rng, int(rng.integers(4, 10)), 5) for _ in range(int(rng.integers(1, 4)))]
    got = d1nn(gen, corpus, length, stride, aggregate).value
    assert got == brute_force_d1nn(gen, corpus, length, stride, aggregate)


def test_d1nn_zero_for_copied_corpus(rng):
    clip = rng.normal(size=(100, FRAME_DIM))
    assert d1nn(clip, [clip]).value == 0.0
    assert d1nn(clip[20:80], [clip]).value == 0.0


def test_d1nn_constant_offset_gives_channel_count(rng):
    clip = rng.normal(size=(40, FRAME_DIM))
    rep = d1nn(clip + 1.0, [clip])
    assert abs(rep.value - 73.0) < 1e-9
    assert rep.n_generated == 1 and rep.n_reference == 1


def test_d1nn_report_fields_and_csv(rng):
    clip = rng.normal(size=(100, FRAME_DIM))
    rep = d1nn(clip, [clip, clip[:50]])
    assert (rep.segment_length, rep.stride, rep.n_generated, rep.n_reference) == (40, 10, 7, 9)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "metric,value,segment_length,stride,n_generated,n_reference"
    assert lines[1].startswith("d1nn,0.0,40,10,7,9")
    assert "d1nn" in str(rep)


def test_d1nn_raw_space(rng):
    stats = NormalizationStats(np.zeros(FRAME_DIM), np.full(FRAME_DIM, 2.0))
    clip = rng.normal(size=(40, FRAME_DIM))
    assert abs(d1nn(clip + 1.0, [clip], stats=stats).value - 4 * 73) < 1e-9


def test_d1nn_errors(rng):
    with pytest.raises(MetricError):
        d1nn(rng.normal(size=(39, FRAME_DIM)), [rng.normal(size=(50, FRAME_DIM))])
    with pytest.raises(MetricError):
        d1nn(rng.normal(size=(50, FRAME_DIM)), [rng.normal(size=(10, FRAME_DIM))])
    with pytest.raises(MetricError):
        d1nn(rng.normal(size=(50, FRAME_DIM)), [rng.normal(size=(50, FRAME_DIM))], aggregate="median")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_d1nn_min_never_exceeds_mean(seed):
    rng = np.random.default_rng(seed)
    g, c = rng.normal(size=(12, 3)), rng.normal(size=(15, 3))
    assert d1nn(g, [c], 4, 2, "min").value <= d1nn(g, [c], 4, 2, "mean").value + 1e-15


def test_horizon_frames():
    assert horizon_frames() == [2, 5, 7, 10, 12, 14, 17]


def test_prediction_error_values(rng):
    gt = rng.normal(size=(8, 20, FRAME_DIM))
    zero = prediction_error(gt, gt)
    assert all(v == 0.0 for v in zero.values())
    off = prediction_error(gt + 0.1, gt)
    assert sorted(off) == [80, 160, 240, 320, 400, 480, 560]
    assert all(abs(v - 0.1 * np.sqrt(73)) < 1e-12 for v in off.values())


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-3, 10.0), st.integers(0, 72))
def test_prediction_error_detects_offsets(delta, channel):
    gt = np.zeros((18, FRAME_DIM))
    g = gt.copy()
    g[:, channel] += delta
    assert all(v > 0 for v in prediction_error(g, gt).values())


def test_prediction_error_too_short(rng):
    with pytest.raises(MetricError):
        prediction_error(rng.normal(size=(16, FRAME_DIM)), rng.normal(size=(16, FRAME_DIM)))


def test_denoise_error(rng):
    a = rng.normal(size=(30, FRAME_DIM))
    assert denoise_error(a, a) == 0.0
    b = a.copy()
    b[5:15, 9] += 0.2  # one joint coordinate
    assert abs(denoise_error(a, b) - 0.4) < 1e-12
    c = a.copy()
    c[:, 66:73] += 5.0  # velocities and contacts are not joint positions
    assert denoise_error(a, c) == 0.0
    with pytest.raises(MetricError):
        denoise_error(a, a[:-1])


def test_metric_report_text():
    r = MetricReport("x", 1.5, 40, 10, 2, 3)
    assert "1.5" in str(r)
