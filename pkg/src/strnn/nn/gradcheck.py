"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, grad


def numerical_grad(fn: Callable[[], Tensor], p: Tensor, step: float = 1e-4) -> np.ndarray:
    """d fn / d p by central differences, perturbing ``p.data`` in place."""
    out = np.zeros_like(p.data)
    flat = p.data.reshape(-1)
    gflat = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = float(fn().data)
        flat[i] = orig - step
        down = float(fn().data)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * step)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """||a - n|| / max(||a||, ||n||), falling back to the absolute error near zero."""
    diff = float(np.linalg.norm(analytic - numeric))
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
    if scale < floor:
        return diff
    return diff / scale


def check_gradients(fn: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-4,
                    max_entries: int | None = None, rng: np.random.Generator | None = None
                    ) -> dict[str, float]:
    """Compare reverse-mode and finite-difference gradients for each tensor.

    With ``max_entries`` only a random subset of entries per tensor is
    perturbed; the error is measured over that subset.
    """
    params = list(params)
    analytic = grad(fn(), params)
    errors = {}
    for k, (p, a) in enumerate(zip(params, analytic)):
        name = p.name or f"param{k}"
        if max_entries is None or p.size <= max_entries:
            num = numerical_grad(fn, p, step)
            errors[f"{k}:{name}"] = relative_error(a, num)
            continue
        rng = rng or np.random.default_rng(0)
        idx = rng.choice(p.size, size=max_entries, replace=False)
        flat = p.data.reshape(-1)
        num = np.empty(max_entries)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + step
            up = float(fn().data)
            flat[i] = orig - step
            down = float(fn().data)
            flat[i] = orig
            num[j] = (up - down) / (2.0 * step)
        errors[f"{k}:{name}"] = relative_error(a.reshape(-1)[idx], num)
    return errors
