"""Parameter containers and layers built on the fused primitives."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import functional as F
from .functional import ConfigurationError
from .tensor import DTYPE, Tensor, _wrap, concat, make_node


class Parameter(Tensor):
    """A leaf tensor that is optimized."""

    __slots__ = ()

    def __init__(self, data, name: str | None = None):
        super().__init__(np.array(data, dtype=DTYPE), requires_grad=True, name=name)


class Module:
    """Minimal module tree: named parameters, buffers and a train/eval flag."""

    def __init__(self):
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())
        object.__setattr__(self, "_buffers", OrderedDict())
        object.__setattr__(self, "training", True)

    def __setattr__(self, key, value):
        if isinstance(value, Parameter):
            self._params[key] = value
        elif isinstance(value, Module):
            self._modules[key] = value
        object.__setattr__(self, key, value)

    def register_buffer(self, key: str, value: np.ndarray) -> None:
        self._buffers[key] = key
        object.__setattr__(self, key, np.asarray(value, dtype=DTYPE))

    def add_module(self, key: str, module: "Module") -> None:
        setattr(self, key, module)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for k, p in self._params.items():
            yield prefix + k, p
        for k, m in self._modules.items():
            yield from m.named_parameters(prefix + k + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for k in self._buffers:
            yield prefix + k, getattr(self, k)
        for k, m in self._modules.items():
            yield from m.named_buffers(prefix + k + ".")

    def modules(self) -> Iterator["Module"]:
        yield self
        for m in self._modules.values():
            yield from m.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            object.__setattr__(m, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        state = OrderedDict()
        for k, p in self.named_parameters():
            state[k] = p.data.copy()
        for k, b in self.named_buffers():
            state[k] = b.copy()
        return state

    def load_state_dict(self, state: dict) -> None:
        own = self.state_dict()
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ConfigurationError(
                f"state mismatch: missing {sorted(missing)[:5]}, unexpected {sorted(extra)[:5]}"
            )
        for k, v in state.items():
            if own[k].shape != np.shape(v):
                raise ConfigurationError(f"shape mismatch for {k}: expected {own[k].shape}, got {np.shape(v)}")
        params = dict(self.named_parameters())
        for k, v in state.items():
            if k in params:
                params[k].data[...] = v
            else:
                owner, attr = self._resolve(k)
                object.__setattr__(owner, attr, np.array(v, dtype=DTYPE))

    def _resolve(self, dotted: str):
        *path, attr = dotted.split(".")
        m = self
        for p in path:
            m = m._modules[p]
        return m, attr


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class Dense(Module):
    def __init__(self, n_in: int, n_out: int, activation: str = "identity",
                 rng: np.random.Generator | None = None, zero: bool = False):
        super().__init__()
        if activation not in F.ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {activation!r}")
        self.n_in, self.n_out, self.activation = n_in, n_out, activation
        if zero or rng is None:
            W = np.zeros((n_out, n_in))
        else:
            W = glorot_uniform(rng, n_out, n_in)
        self.W = Parameter(W, "W")
        self.b = Parameter(np.zeros(n_out), "b")

    def __call__(self, x) -> Tensor:
        return F.dense(x, self.W, self.b, self.activation)


def dense_forward(x, p: Dense) -> Tensor:
    return p(x)


@dataclass
class LstmState:
    """Hidden and cell vectors, stored packed as one (B, 2H) tensor."""

    hc: Tensor

    @property
    def hidden_size(self) -> int:
        return self.hc.shape[-1] // 2

    @property
    def h(self) -> Tensor:
        return self.hc[:, : self.hidden_size]

    @property
    def c(self) -> Tensor:
        return self.hc[:, self.hidden_size :]

    @classmethod
    def zeros(cls, batch: int, hidden: int) -> "LstmState":
        return cls(_wrap(np.zeros((batch, 2 * hidden))))

    @classmethod
    def from_parts(cls, h, c) -> "LstmState":
        return cls(concat([h, c], axis=-1))

    def copy(self) -> "LstmState":
        # Same graph node: gradient from every consumer flows back to the source.
        return LstmState(self.hc)


class LSTMCell(Module):
    """LSTM cell whose four gate matrices are stacked as rows of ``W``."""

    GATES = ("input", "forget", "output", "candidate")

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator | None = None,
                 forget_bias: float = 1.0):
        super().__init__()
        self.n_in, self.hidden = n_in, hidden
        if rng is None:
            W = np.zeros((4 * hidden, n_in + hidden))
        else:
            W = np.concatenate(
                [glorot_uniform(rng, hidden, n_in + hidden) for _ in range(4)], axis=0
            )
        b = np.zeros(4 * hidden)
        if rng is not None:
            b[hidden : 2 * hidden] = forget_bias
        self.W = Parameter(W, "W")
        self.b = Parameter(b, "b")

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        k = self.GATES.index(name)
        H = self.hidden
        return self.W.data[k * H : (k + 1) * H], self.b.data[k * H : (k + 1) * H]

    def __call__(self, x, state: LstmState) -> LstmState:
        return LstmState(F.lstm_step(x, state.hc, self.W, self.b))


def lstm_cell_step(x, s: LstmState, p: LSTMCell) -> LstmState:
    return p(x, s)


class BatchNorm(Module):
    def __init__(self, n: int, momentum: float = 0.99, eps: float = 1e-5):
        super().__init__()
        if not 0.0 < momentum < 1.0:
            raise ConfigurationError(f"batch-norm momentum must be in (0, 1), got {momentum}")
        self.momentum, self.eps = momentum, eps
        self.gamma = Parameter(np.ones(n), "gamma")
        self.beta = Parameter(np.zeros(n), "beta")
        self.register_buffer("running_mean", np.zeros(n))
        self.register_buffer("running_var", np.ones(n))

    def __call__(self, x) -> Tensor:
        if x.shape[-1] != self.gamma.shape[0]:
            raise ConfigurationError(
                f"batch-norm width mismatch: input {x.shape}, features {self.gamma.shape[0]}"
            )
        lead = x.shape[:-1]
        x2 = x.reshape(-1, x.shape[-1]) if len(lead) != 1 else x
        if self.training:
            y, mu, var = F.batch_norm_train(x2, self.gamma, self.beta, self.eps)
            m = self.momentum
            self.running_mean = m * self.running_mean + (1.0 - m) * mu
            self.running_var = m * self.running_var + (1.0 - m) * var
        else:
            y = F.batch_norm_eval(x2, self.gamma, self.beta, self.running_mean,
                                  self.running_var, self.eps)
        return y.reshape(x.shape) if len(lead) != 1 else y


def batch_norm_forward(x, st: BatchNorm) -> Tensor:
    return st(x)


class Dropout(Module):
    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ConfigurationError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def __call__(self, x, rng: np.random.Generator | None = None) -> Tensor:
        return F.dropout(x, self.rate, self.training, rng)


def dropout_forward(x, rate: float, mode: str, rng: np.random.Generator | None) -> Tensor:
    return F.dropout(x, rate, mode == "train", rng)


def l2_penalty(params, coefficient: float) -> Tensor:
    """``coefficient * sum(||p||^2)`` as a differentiable scalar."""
    if coefficient < 0:
        raise ConfigurationError("L2 coefficient must be non-negative")
    params = list(params)
    total = sum(float(np.vdot(p.data, p.data)) for p in params)
    data = np.asarray(coefficient * total)
    return make_node(data, params, lambda g: tuple(2.0 * coefficient * g * p.data for p in params))
