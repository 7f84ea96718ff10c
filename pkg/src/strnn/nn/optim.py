"""AdaDelta with the learning-rate and decay knobs of the Keras formulation."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .layers import Parameter


class NonFiniteGradient(FloatingPointError):
    pass


class AdaDelta:
    """Per-parameter AdaDelta.

    E[g^2] <- rho E[g^2] + (1 - rho) g^2
    u      = sqrt(E[u^2] + eps) / sqrt(E[g^2] + eps) * g
    x      <- x - lr_t * u,  lr_t = lr / (1 + decay * t)
    E[u^2] <- rho E[u^2] + (1 - rho) u^2
    """

    def __init__(self, params: Sequence[Parameter], lr: float = 1.0, rho: float = 0.95,
                 eps: float = 1e-8, decay: float = 0.0, names: Sequence[str] | None = None):
        self.params = list(params)
        self.names = list(names) if names is not None else [p.name or f"param{i}" for i, p in enumerate(self.params)]
        self.lr, self.rho, self.eps, self.decay = lr, rho, eps, decay
        self.iterations = 0
        self.acc_grad = [np.zeros_like(p.data) for p in self.params]
        self.acc_delta = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, grads: Sequence[np.ndarray] | None = None) -> None:
        if grads is None:
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        for name, g in zip(self.names, grads):
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"non-finite gradient for parameter {name!r}")
        lr = self.lr / (1.0 + self.decay * self.iterations)
        rho, eps = self.rho, self.eps
        for p, g, ag, ad in zip(self.params, grads, self.acc_grad, self.acc_delta):
            ag *= rho
            ag += (1.0 - rho) * g * g
            u = np.sqrt(ad + eps) / np.sqrt(ag + eps) * g
            ad *= rho
            ad += (1.0 - rho) * u * u
            p.data -= lr * u
        self.iterations += 1

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {"iterations": np.asarray(float(self.iterations))}
        for name, ag, ad in zip(self.names, self.acc_grad, self.acc_delta):
            state[f"{name}.acc_grad"] = ag.copy()
            state[f"{name}.acc_delta"] = ad.copy()
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        self.iterations = int(state["iterations"])
        for i, name in enumerate(self.names):
            self.acc_grad[i][...] = state[f"{name}.acc_grad"]
            self.acc_delta[i][...] = state[f"{name}.acc_delta"]


def adadelta_step(params: Sequence[Parameter], grads: Sequence[np.ndarray], st: AdaDelta) -> AdaDelta:
    """Functional entry point: apply one update of ``st`` with explicit gradients."""
    for p, g in zip(params, grads):
        if p.shape != np.shape(g):
            raise ValueError(f"gradient shape {np.shape(g)} does not match parameter {p.shape}")
    st.step(grads)
    return st
