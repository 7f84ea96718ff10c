"""Open-loop prediction, denoising and controlled synthesis with a trained model.

All inputs and outputs are normalized (T, 73) frame arrays unless noted.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data.motion import CONTACTS, FRAME_DIM
from .data.processing import NormalizationStats, integrate_root  # noqa: F401  (re-exported)
from .data.skeleton import Skeleton
from .losses import (
    RUNTIME_WEIGHTS,
    ControlSignal,
    LossWeights,
    bonelength_cost,
    control_cost,
    footplant_cost,
    reconstruction_loss,
    smoothness_loss,
    total_cost,
)
from .data.motion import CONTROL_CHANNELS
from .model.strnn import STRNN
from .nn import AdaDelta, backward, no_grad
from .nn.optim import NonFiniteGradient


class RolloutError(FloatingPointError):
    pass


def parameter_hash(model: STRNN) -> str:
    """SHA-256 over every parameter and buffer, in a fixed order."""
    h = hashlib.sha256()
    for name, arr in model.state_dict().items():
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()


def _forward_eval(model: STRNN, window: np.ndarray) -> np.ndarray:
    model.eval()
    with no_grad():
        return model(window[None]).data[0]


def predict_long(model: STRNN, prefix: np.ndarray, total: int) -> np.ndarray:
    """Generate ``total`` frames after ``prefix`` by feeding back generated frames only."""
    tag = model.tag
    E, D, P = tag.encode_len, tag.decode_len, tag.predict_len
    prefix = np.asarray(prefix, dtype=np.float64)
    if prefix.shape != (E, FRAME_DIM):
        raise ValueError(f"prefix must be ({E}, {FRAME_DIM}), got {prefix.shape}")
    if total < P:
        raise ValueError(f"total must be at least predict_len={P}, got {total}")
    out = np.empty((total, FRAME_DIM))
    n = 0
    window = prefix
    while n < total:
        pred = _forward_eval(model, window)[D:]
        bad = ~np.isfinite(pred).all(axis=1)
        if bad.any():
            raise RolloutError(f"non-finite output at generated frame {n + int(np.argmax(bad))}")
        k = min(P, total - n)
        out[n : n + k] = pred[:k]
        n += k
        window = np.concatenate([window, pred])[-E:]
    return out


def _threshold_contacts(frames: np.ndarray, stats: NormalizationStats | None) -> np.ndarray:
    frames = frames.copy()
    if stats is None:
        frames[:, CONTACTS] = (frames[:, CONTACTS] > 0.5).astype(np.float64)
        return frames
    sl = CONTACTS
    raw = frames[:, sl] * stats.std[sl] + stats.mean[sl]
    frames[:, sl] = ((raw > 0.5).astype(np.float64) - stats.mean[sl]) / stats.std[sl]
    return frames


def denoise(model: STRNN, corrupted: np.ndarray, stats: NormalizationStats | None = None,
            threshold_contacts: bool = True) -> np.ndarray:
    """Project a corrupted clip onto the learned manifold.

    Contact flags are binary, so with ``threshold_contacts`` the corrupted
    input flags are read at the 0.5 threshold before encoding and the output
    flags are thresholded the same way.  Windows advance by ``decode_len``;
    one extra window is aligned to the clip end.  Each window's decoded half
    reconstructs its own input frames, and overlapping reconstructions are
    averaged.
    """
    tag = model.tag
    E, D = tag.encode_len, tag.decode_len
    x = np.asarray(corrupted, dtype=np.float64)
    if len(x) < tag.segment_len:
        raise ValueError(f"clip of {len(x)} frames is shorter than the {tag.segment_len}-frame segment")
    if threshold_contacts:
        x = _threshold_contacts(x, stats)
    T = len(x)
    starts = list(range(0, T - E + 1, D))
    if starts[-1] != T - E:
        starts.append(T - E)
    acc = np.zeros_like(x)
    cnt = np.zeros(T)
    batch = np.stack([x[s : s + E] for s in starts])
    model.eval()
    with no_grad():
        dec = np.concatenate([model(batch[i : i + 64]).data[:, :D] for i in range(0, len(batch), 64)])
    for s, d in zip(starts, dec):
        acc[s + E - D : s + E] += d
        cnt[s + E - D : s + E] += 1
    out = acc / cnt[:, None]
    return _threshold_contacts(out, stats) if threshold_contacts else out


@dataclass
class WindowReport:
    start: int
    h_ctr: list = field(default_factory=list)  # control cost before each step and after the last
    diverged: bool = False
    restored: bool = True

    @property
    def reduction(self) -> float:
        if not self.h_ctr or self.h_ctr[0] == 0:
            return 0.0
        return 1.0 - self.h_ctr[-1] / self.h_ctr[0]


@dataclass
class ControlSession:
    steps: int = 20
    weights: LossWeights = RUNTIME_WEIGHTS
    residual_only: bool = False
    skeleton: Skeleton | None = None
    reports: list = field(default_factory=list)


def _normalized_gamma(gamma: np.ndarray, stats: NormalizationStats | None) -> np.ndarray:
    if stats is None:
        return gamma
    ch = list(CONTROL_CHANNELS)
    return (gamma - stats.mean[ch]) / stats.std[ch]


def synthesize_controlled(model: STRNN, prefix: np.ndarray, signal: ControlSignal,
                          stats: NormalizationStats | None = None,
                          session: ControlSession | None = None, total: int | None = None) -> np.ndarray:
    """Predict-then-correct generation under a control signal.

    Per window: predict with the backed-up weights, fine-tune a live copy for
    ``session.steps`` AdaDelta steps on reconstruction, smoothness and the
    run-time costs, emit the corrected prediction and restore the weights.
    """
    session = session or ControlSession()
    tag = model.tag
    E, D, P = tag.encode_len, tag.decode_len, tag.predict_len
    total = len(signal) if total is None else total
    if len(signal) < total:
        raise ValueError(f"control signal covers {len(signal)} frames, {total} requested")
    params = model.residual_parameters() if session.residual_only else model.parameters()
    backup = model.state_dict()
    backup_hash = parameter_hash(model)
    out = np.empty((total, FRAME_DIM))
    window = np.asarray(prefix, dtype=np.float64)
    n = 0
    while n < total:
        k = min(P, total - n)
        pristine = _forward_eval(model, window)
        report = WindowReport(n)
        emitted = pristine[D:]
        if session.steps > 0:
            sig = signal.window(n, n + P) if n + P <= len(signal) else _pad_signal(signal, n, P)
            emitted = _fine_tune(model, params, window, pristine, sig, stats, session, report)
            model.load_state_dict(backup)
            report.restored = parameter_hash(model) == backup_hash
        session.reports.append(report)
        out[n : n + k] = emitted[:k]
        n += k
        window = np.concatenate([window, emitted])[-E:]
    return out


def _pad_signal(signal: ControlSignal, start: int, length: int) -> ControlSignal:
    idx = np.minimum(np.arange(start, start + length), len(signal) - 1)
    c = None if signal.contacts is None else signal.contacts[idx]
    return ControlSignal(signal.gamma[idx], c)


def _fine_tune(model, params, window, pristine, sig, stats, session, report) -> np.ndarray:
    D = model.tag.decode_len
    gamma = _normalized_gamma(sig.gamma, stats)
    if sig.contacts is not None:
        flags = sig.contacts
    else:
        raw = pristine[D:, CONTACTS]
        if stats is not None:
            raw = raw * stats.std[CONTACTS] + stats.mean[CONTACTS]
        flags = (raw > 0.5).astype(np.float64)
    target = np.concatenate([window, pristine[D:]])[None]
    opt = AdaDelta(params)
    model.eval()

    def costs():
        block = model(window[None])
        dec, pred = model.split(block)
        h_ctr = control_cost(pred, gamma)
        parts = {
            "C_r": reconstruction_loss(dec, pred, target),
            "C_s": smoothness_loss(block),
            "H_ctr": h_ctr,
            "H_fp": footplant_cost(pred, flags, stats),
            "H_bone": bonelength_cost(pred, session.skeleton, stats),
        }
        return total_cost(parts, session.weights, "runtime"), float(h_ctr.data), pred

    try:
        for _ in range(session.steps):
            loss, h, _ = costs()
            report.h_ctr.append(h)
            if not math.isfinite(float(loss.data)):
                raise NonFiniteGradient("non-finite run-time cost")
            opt.zero_grad()
            backward(loss)
            opt.step()
        with no_grad():
            _, h, pred = costs()
        report.h_ctr.append(h)
        result = pred.data[0]
        if not np.all(np.isfinite(result)):
            raise NonFiniteGradient("non-finite corrected output")
        return result
    except NonFiniteGradient as exc:
        report.diverged = True
        warnings.warn(f"fine-tuning diverged at window {report.start}: {exc}; emitting uncorrected window")
        return pristine[D:]
