"""Two-way bidirectional temporal network.

An LSTM encoder consumes the observed latent sequence; its final state is
copied into a decoder, which regenerates the observed sequence backwards in
time, and into a predictor, which continues it forwards.  Both generators
are conditional: each step's input is the previous step's own output.
"""

from __future__ import annotations

import numpy as np

from ..nn import ConfigurationError, Dense, LSTMCell, LstmState, Module, Tensor, as_tensor


class TemporalNet(Module):
    def __init__(self, latent: int, hidden: int, rng: np.random.Generator | None = None,
                 fold_input_projection: bool = False, forget_bias: float = 1.0):
        super().__init__()
        self.latent, self.hidden = latent, hidden
        self.fold_input_projection = fold_input_projection
        if not fold_input_projection:
            self.proj_e = Dense(latent, latent, "identity", rng)
            self.proj_d = Dense(latent, latent, "identity", rng)
            self.proj_p = Dense(latent, latent, "identity", rng)
        self.cell_e = LSTMCell(latent, hidden, rng, forget_bias)
        self.cell_d = LSTMCell(latent, hidden, rng, forget_bias)
        self.cell_p = LSTMCell(latent, hidden, rng, forget_bias)
        # Hidden vectors are the generated latents when widths agree;
        # otherwise a linear readout maps them back to the latent width.
        self.has_readout = hidden != latent
        if self.has_readout:
            self.readout = Dense(hidden, latent, "identity", rng)

    def _project(self, branch: str, x) -> Tensor:
        if self.fold_input_projection:
            return as_tensor(x)
        return self._modules[f"proj_{branch}"](x)

    def _emit(self, state: LstmState) -> Tensor:
        h = state.h
        return self.readout(h) if self.has_readout else h

    def encode(self, seq) -> LstmState:
        """Run the encoder over ``seq`` (B, m, latent); returns the final state."""
        seq = as_tensor(seq)
        if seq.ndim != 3 or seq.shape[-1] != self.latent:
            raise ConfigurationError(f"encoder expects (B, m, {self.latent}), got {seq.shape}")
        B, m = seq.shape[0], seq.shape[1]
        if m < 1:
            raise ConfigurationError("encoder needs at least one frame")
        proj = self._project("e", seq)
        state = LstmState.zeros(B, self.hidden)
        for t in range(m):
            state = self.cell_e(proj[:, t], state)
        return state

    def _generate(self, branch: str, init: LstmState, seed, steps: int) -> list[Tensor]:
        if steps < 1:
            raise ConfigurationError(f"generation needs at least one step, got {steps}")
        cell = self._modules[f"cell_{branch}"]
        state, inp, out = init.copy(), as_tensor(seed), []
        for _ in range(steps):
            state = cell(self._project(branch, inp), state)
            inp = self._emit(state)
            out.append(inp)
        return out

    def decode(self, init: LstmState, seed, steps: int) -> list[Tensor]:
        """Latents in reverse time: element 0 reconstructs the last encoded frame."""
        return self._generate("d", init, seed, steps)

    def predict(self, init: LstmState, seed, steps: int) -> list[Tensor]:
        """Latents forward in time, continuing after the last encoded frame."""
        return self._generate("p", init, seed, steps)

    def __call__(self, seq, decode_len: int, predict_len: int):
        seq = as_tensor(seq)
        state = self.encode(seq)
        seed = seq[:, -1]
        dec = self.decode(state, seed, decode_len) if decode_len > 0 else []
        pred = self.predict(state, seed, predict_len)
        return dec, pred


def tencoder_run(latent_seq, net: TemporalNet) -> LstmState:
    return net.encode(latent_seq)


def tdecoder_run(init: LstmState, seed_latent, steps: int, net: TemporalNet) -> list[Tensor]:
    return net.decode(init, seed_latent, steps)


def tpredictor_run(init: LstmState, seed_latent, steps: int, net: TemporalNet) -> list[Tensor]:
    return net.predict(init, seed_latent, steps)
