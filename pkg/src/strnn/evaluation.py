"""Manifold distance, per-horizon prediction error and denoising error."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .data.motion import MotionClip
from .data.processing import NormalizationStats, denormalize, window_segments

SEGMENT_LEN = 40
STRIDE = 10
HORIZONS_MS = (80, 160, 240, 320, 400, 480, 560)
JOINT_POSITION_CHANNELS = np.r_[0:3, 6:66]


class MetricError(ValueError):
    pass


@dataclass
class MetricReport:
    metric: str
    value: float
    segment_length: int = SEGMENT_LEN
    stride: int = STRIDE
    n_generated: int = 0
    n_reference: int = 0

    FIELDS = ("metric", "value", "segment_length", "stride", "n_generated", "n_reference")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.FIELDS)
        w.writerow([self.metric, repr(float(self.value)), self.segment_length, self.stride,
                    self.n_generated, self.n_reference])
        return buf.getvalue()

    def __str__(self) -> str:
        return (f"{self.metric} = {self.value:.6g} ({self.n_generated} generated vs "
                f"{self.n_reference} reference segments of {self.segment_length} frames, stride {self.stride})")


def _frames(x) -> np.ndarray:
    return x.frames if isinstance(x, MotionClip) else np.asarray(x, dtype=np.float64)


def _space(x: np.ndarray, stats: NormalizationStats | None) -> np.ndarray:
    return x if stats is None else denormalize(x, stats)


def segment_sums(generated, corpus, length: int = SEGMENT_LEN, stride: int = STRIDE):
    """(n_gen, n_corpus) matrix of summed squared differences between segments."""
    g = window_segments(_frames(generated), length, stride)
    if len(g) == 0:
        raise MetricError(f"generated motion is shorter than {length} frames")
    refs = [window_segments(_frames(c), length, stride) for c in corpus]
    refs = [r for r in refs if len(r)]
    if not refs:
        raise MetricError(f"no corpus clip has at least {length} frames")
    c = np.concatenate(refs).reshape(-1, length * g.shape[-1])
    g = g.reshape(len(g), -1)
    out = np.empty((len(g), len(c)))
    for i, row in enumerate(g):
        d = c - row
        out[i] = np.einsum("ij,ij->i", d, d)
    return out


def d1nn(generated, corpus, length: int = SEGMENT_LEN, stride: int = STRIDE,
         aggregate: str = "mean", stats: NormalizationStats | None = None) -> MetricReport:
    """Nearest-neighbour distance of generated segments to a reference corpus.

    The distance between two segments is the per-frame mean of squared L2
    norms of their difference.  ``aggregate`` is ``mean`` (mean over
    generated segments of their nearest distance) or ``min`` (the single
    smallest pair distance).
    """
    if isinstance(corpus, (MotionClip, np.ndarray)):
        corpus = [corpus]
    gen = _space(_frames(generated), stats)
    corpus = [_space(_frames(c), stats) for c in corpus]
    sums = segment_sums(gen, corpus, length, stride)
    nearest = sums.min(axis=1)
    if aggregate == "mean":
        # One rounding: exact sum of the per-segment minima, then a single division.
        value = math.fsum(nearest.tolist()) / (length * len(nearest))
    elif aggregate == "min":
        value = float(nearest.min()) / length
    else:
        raise MetricError(f"unknown aggregation {aggregate!r}; use 'mean' or 'min'")
    return MetricReport("d1nn" if aggregate == "mean" else "d1nn_min", value, length, stride,
                        sums.shape[0], sums.shape[1])


def horizon_frames(horizons_ms=HORIZONS_MS, fps: float = 30) -> list[int]:
    """1-based frame index of each horizon, rounded half up."""
    return [int(math.floor(h * fps / 1000.0 + 0.5)) for h in horizons_ms]


def prediction_error(generated, ground_truth, horizons_ms=HORIZONS_MS, fps: float = 30,
                     stats: NormalizationStats | None = None) -> dict[int, float]:
    """Euclidean frame distance at each horizon, averaged over prefixes.

    ``generated`` and ``ground_truth`` are (T, 73) or (K, T, 73), frame 0 being
    the first frame after the prefix.
    """
    g = _space(np.asarray(generated, dtype=np.float64), stats)
    t = _space(np.asarray(ground_truth, dtype=np.float64), stats)
    if g.ndim == 2:
        g, t = g[None], t[None]
    frames = horizon_frames(horizons_ms, fps)
    need = max(frames)
    if t.shape[1] < need or g.shape[1] < need:
        raise MetricError(f"need at least {need} frames for a {max(horizons_ms)} ms horizon")
    if g.shape[0] != t.shape[0]:
        raise MetricError("generated and ground truth hold different numbers of prefixes")
    out = {}
    for h, k in zip(horizons_ms, frames):
        d = np.linalg.norm(g[:, k - 1] - t[:, k - 1], axis=-1)
        out[h] = float(np.mean(d))
    return out


def denoise_error(original, denoised, stats: NormalizationStats | None = None) -> float:
    """Sum over frames of squared joint-position differences (root position and joints)."""
    a = _space(_frames(original), stats)
    b = _space(_frames(denoised), stats)
    if a.shape != b.shape:
        raise MetricError(f"length mismatch: {a.shape} vs {b.shape}")
    d = a[..., JOINT_POSITION_CHANNELS] - b[..., JOINT_POSITION_CHANNELS]
    return float(np.sum(d * d))
