"""Full model: spatial encoder -> temporal network -> spatial decoder -> residual filter."""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field

import numpy as np

from ..data.motion import FRAME_DIM, PARTITION
from ..nn import ConfigurationError, Dense, Module, Tensor, as_tensor, stack
from .spatial import SpatialDecoder, SpatialEncoder
from .temporal import TemporalNet

COMPONENTS = ("Temporal", "SpatioTemp", "Composite")
REGIMES = ("MSE", "LH", "HY")
_TAG_RE = re.compile(r"^(Temporal|SpatioTemp|Composite)_(\d+)_(\d+)_(MSE|LH|HY)$")


@dataclass(frozen=True)
class ModelTag:
    components: str = "Composite"
    encode_len: int = 20
    predict_len: int = 20
    regime: str = "HY"

    def __post_init__(self):
        if self.components not in COMPONENTS:
            raise ConfigurationError(f"unknown component set {self.components!r}")
        if self.regime not in REGIMES:
            raise ConfigurationError(f"unknown loss regime {self.regime!r}")
        if self.encode_len < 1 or self.predict_len < 1:
            raise ConfigurationError("encode_len and predict_len must be positive")

    @property
    def decode_len(self) -> int:
        return self.encode_len

    @property
    def segment_len(self) -> int:
        return self.encode_len + self.predict_len

    def __str__(self) -> str:
        return f"{self.components}_{self.encode_len}_{self.predict_len}_{self.regime}"

    @classmethod
    def parse(cls, text: str) -> "ModelTag":
        m = _TAG_RE.match(text.strip())
        if not m:
            raise ConfigurationError(
                f"bad model tag {text!r}; expected e.g. Composite_20_20_HY"
            )
        return cls(m.group(1), int(m.group(2)), int(m.group(3)), m.group(4))


@dataclass
class ModelConfig:
    tag: ModelTag = field(default_factory=ModelTag)
    spatial_widths: tuple[int, int, int, int] = (64, 128, 256, 512)
    hidden: int = 512
    residual_width: int = 512
    dropout: float = 0.1
    bn_momentum: float = 0.99
    fold_input_projection: bool = False
    forget_bias: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.tag, str):
            self.tag = ModelTag.parse(self.tag)
        self.spatial_widths = tuple(int(w) for w in self.spatial_widths)
        if len(self.spatial_widths) != 4:
            raise ConfigurationError("spatial_widths needs four entries")

    @property
    def latent(self) -> int:
        return FRAME_DIM if self.tag.components == "Temporal" else self.spatial_widths[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tag"] = str(self.tag)
        d["spatial_widths"] = list(self.spatial_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


class Residual(Module):
    """Four dense layers over a whole flattened motion block with an additive skip.

    The last layer starts at zero, so a fresh residual is the identity.
    """

    def __init__(self, length: int, width: int, rng=None, dim: int = FRAME_DIM):
        super().__init__()
        self.length, self.dim = length, dim
        n = length * dim
        self.fc1 = Dense(n, width, "elu", rng)
        self.fc2 = Dense(width, width, "elu", rng)
        self.fc3 = Dense(width, width, "elu", rng)
        self.fc4 = Dense(width, n, "identity", rng, zero=True)

    def __call__(self, block) -> Tensor:
        block = as_tensor(block)
        squeeze = block.ndim == 2
        if squeeze:
            block = block.reshape(1, *block.shape)
        if block.shape[1:] != (self.length, self.dim):
            raise ConfigurationError(
                f"residual expects blocks of shape ({self.length}, {self.dim}), got {block.shape[1:]}"
            )
        B = block.shape[0]
        flat = block.reshape(B, self.length * self.dim)
        out = flat + self.fc4(self.fc3(self.fc2(self.fc1(flat))))
        out = out.reshape(B, self.length, self.dim)
        return out.reshape(self.length, self.dim) if squeeze else out


def residual_forward(block, residual: Residual) -> Tensor:
    return residual(block)


class STRNN(Module):
    """Composable model; which sub-networks exist depends on ``config.tag.components``."""

    def __init__(self, config: ModelConfig | None = None, partition=PARTITION):
        super().__init__()
        config = config or ModelConfig()
        self.config = config
        tag = config.tag
        rng = np.random.default_rng(config.seed)
        self.has_spatial = tag.components != "Temporal"
        self.has_residual = tag.components == "Composite"
        if self.has_spatial:
            self.sencoder = SpatialEncoder(config.spatial_widths, partition, rng,
                                           config.dropout, config.bn_momentum)
            self.sdecoder = SpatialDecoder(config.spatial_widths, partition, rng,
                                           config.dropout, config.bn_momentum)
        self.temporal = TemporalNet(config.latent, config.hidden, rng,
                                    config.fold_input_projection, config.forget_bias)
        if self.has_residual:
            self.residual = Residual(tag.decode_len + tag.predict_len, config.residual_width, rng)

    @property
    def tag(self) -> ModelTag:
        return self.config.tag

    def spatiotemporal_parameters(self):
        return [p for n, p in self.named_parameters() if not n.startswith("residual.")]

    def residual_parameters(self):
        return self.residual.parameters() if self.has_residual else []

    def generate(self, segment, rng=None) -> Tensor:
        """Spatio-temporal output block (B, decode_len + predict_len, 73), decoded half in forward time."""
        x = as_tensor(segment)
        tag = self.tag
        if x.ndim != 3 or x.shape[-1] != FRAME_DIM or x.shape[1] < tag.encode_len:
            raise ConfigurationError(
                f"{tag} expects segments (B, >= {tag.encode_len}, {FRAME_DIM}), got {x.shape}"
            )
        B, m = x.shape[0], tag.encode_len
        xe = x[:, :m]
        if self.has_spatial:
            z = self.sencoder(xe.reshape(B * m, FRAME_DIM), rng)
            z = z.reshape(B, m, self.config.latent)
        else:
            z = xe
        dec, pred = self.temporal(z, tag.decode_len, tag.predict_len)
        seq = stack(dec[::-1] + pred, axis=1)  # (B, D+P, latent)
        if self.has_spatial:
            L = seq.shape[1]
            out = self.sdecoder(seq.reshape(B * L, self.config.latent), rng)
            return out.reshape(B, L, FRAME_DIM)
        return seq

    def __call__(self, segment, rng=None, residual: bool = True) -> Tensor:
        block = self.generate(segment, rng)
        if self.has_residual and residual:
            block = self.residual(block)
        return block

    def split(self, block: Tensor) -> tuple[Tensor, Tensor]:
        D = self.tag.decode_len
        return block[:, :D], block[:, D:]


def strnn_forward(segment, model: STRNN, rng=None):
    """(decoded, predicted) for a batch of segments, or a single (l, 73) segment."""
    x = np.asarray(segment.data if isinstance(segment, Tensor) else segment)
    single = x.ndim == 2
    block = model(x[None] if single else segment, rng)
    dec, pred = model.split(block)
    if single:
        return dec[0], pred[0]
    return dec, pred
