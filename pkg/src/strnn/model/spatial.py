"""Hierarchical body-part encoder and its mirrored decoder.

Encoder levels (default widths 64/128/256/512):

* L1: one block per body group (torso, left/right arm, left/right leg).
* L2: each limb merged with the torso.
* L3: arms merged into an upper-body code, legs into a lower-body code.
* L4: upper + lower + raw root channels + raw contact channels.

Every hidden block is dense(tanh) -> dropout -> batch norm.  The decoder runs
the same topology backwards with transposed weight shapes; the final
per-group reconstruction layers and the direct root/contact readout are
linear.
"""

from __future__ import annotations

import numpy as np

from ..data.motion import FRAME_DIM, PARTITION, BodyPartition
from ..nn import BatchNorm, ConfigurationError, Dense, Dropout, Module, Tensor, as_tensor, concat, take

LIMBS = ("l_arm", "r_arm", "l_leg", "r_leg")
BODY = ("torso",) + LIMBS


class Block(Module):
    """dense(tanh) -> dropout -> batch norm."""

    def __init__(self, n_in: int, n_out: int, rng, dropout: float = 0.1, momentum: float = 0.99):
        super().__init__()
        self.dense = Dense(n_in, n_out, "tanh", rng)
        self.drop = Dropout(dropout)
        self.bn = BatchNorm(n_out, momentum=momentum)

    def __call__(self, x, rng=None) -> Tensor:
        return self.bn(self.drop(self.dense(x), rng))


def _split(x: Tensor, n: int) -> tuple[Tensor, Tensor]:
    return x[:, :n], x[:, n:]


class SpatialEncoder(Module):
    def __init__(self, widths=(64, 128, 256, 512), partition: BodyPartition = PARTITION,
                 rng: np.random.Generator | None = None, dropout: float = 0.1,
                 momentum: float = 0.99):
        super().__init__()
        w1, w2, w3, w4 = widths
        self.widths = tuple(widths)
        self.partition = partition
        groups = partition.groups()
        for g in BODY:
            self.add_module(f"l1_{g}", Block(len(groups[g]), w1, rng, dropout, momentum))
        for g in LIMBS:
            self.add_module(f"l2_{g}", Block(2 * w1, w2, rng, dropout, momentum))
        self.l3_upper = Block(2 * w2, w3, rng, dropout, momentum)
        self.l3_lower = Block(2 * w2, w3, rng, dropout, momentum)
        n_direct = len(partition.root) + len(partition.fp)
        self.l4 = Block(2 * w3 + n_direct, w4, rng, dropout, momentum)

    def level1(self, x: Tensor, rng=None) -> dict[str, Tensor]:
        groups = self.partition.groups()
        return {g: self._modules[f"l1_{g}"](take(x, groups[g]), rng) for g in BODY}

    def __call__(self, frames, rng=None) -> Tensor:
        x = as_tensor(frames)
        if x.shape[-1] != FRAME_DIM:
            raise ConfigurationError(f"spatial encoder expects {FRAME_DIM}-wide frames, got {x.shape}")
        h1 = self.level1(x, rng)
        h2 = {g: self._modules[f"l2_{g}"](concat([h1[g], h1["torso"]]), rng) for g in LIMBS}
        upper = self.l3_upper(concat([h2["l_arm"], h2["r_arm"]]), rng)
        lower = self.l3_lower(concat([h2["l_leg"], h2["r_leg"]]), rng)
        direct = take(x, self.partition.root + self.partition.fp)
        return self.l4(concat([upper, lower, direct]), rng)


class SpatialDecoder(Module):
    """Mirror of :class:`SpatialEncoder`; shared by the decode and predict branches."""

    def __init__(self, widths=(64, 128, 256, 512), partition: BodyPartition = PARTITION,
                 rng: np.random.Generator | None = None, dropout: float = 0.1,
                 momentum: float = 0.99):
        super().__init__()
        w1, w2, w3, w4 = widths
        self.widths = tuple(widths)
        self.partition = partition
        groups = partition.groups()
        n_direct = len(partition.root) + len(partition.fp)
        self.d4 = Block(w4, 2 * w3, rng, dropout, momentum)
        self.d4_direct = Dense(w4, n_direct, "identity", rng)
        self.d3_upper = Block(w3, 2 * w2, rng, dropout, momentum)
        self.d3_lower = Block(w3, 2 * w2, rng, dropout, momentum)
        for g in LIMBS:
            self.add_module(f"d2_{g}", Block(w2, 2 * w1, rng, dropout, momentum))
        for g in BODY:
            self.add_module(f"d1_{g}", Dense(w1, len(groups[g]), "identity", rng))
        order = []
        for g in BODY:
            order.extend(groups[g])
        order.extend(partition.root + partition.fp)
        # Column permutation from group-concatenated outputs back to frame order.
        self._inverse = np.argsort(np.asarray(order))

    def __call__(self, latents, rng=None) -> Tensor:
        z = as_tensor(latents)
        w1, w2, w3, w4 = self.widths
        if z.shape[-1] != w4:
            raise ConfigurationError(f"spatial decoder expects {w4}-wide latents, got {z.shape}")
        upper, lower = _split(self.d4(z, rng), w3)
        h2 = {}
        h2["l_arm"], h2["r_arm"] = _split(self.d3_upper(upper, rng), w2)
        h2["l_leg"], h2["r_leg"] = _split(self.d3_lower(lower, rng), w2)
        h1 = {}
        torso = None
        for g in LIMBS:
            h1[g], t = _split(self._modules[f"d2_{g}"](h2[g], rng), w1)
            torso = t if torso is None else torso + t
        h1["torso"] = torso
        parts = [self._modules[f"d1_{g}"](h1[g]) for g in BODY]
        parts.append(self.d4_direct(z))
        return take(concat(parts), self._inverse)


def weight_entries(module: Module) -> int:
    """Number of dense weight-matrix entries (biases and batch-norm excluded)."""
    return sum(p.size for name, p in module.named_parameters() if name.endswith("W"))
