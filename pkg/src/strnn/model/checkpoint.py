"""Versioned binary checkpoints.

Layout::

    STRNN-CKPT v1\n
    <8-byte little-endian manifest length><UTF-8 JSON manifest>
    <raw little-endian float64 blobs, in manifest order>
    <32-byte SHA-256 of everything above>

The manifest records the model configuration, normalization statistics and
the name, shape and byte offset of every blob.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from ..data.processing import NormalizationStats
from ..nn import ConfigurationError
from .strnn import STRNN, ModelConfig

MAGIC = b"STRNN-CKPT v1\n"
OPTIM_PREFIX = "optimizer/"


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: STRNN, path, stats: NormalizationStats | None = None,
                    optimizer_state: dict | None = None, meta: dict | None = None) -> None:
    arrays = list(model.state_dict().items())
    if optimizer_state:
        arrays += [(OPTIM_PREFIX + k, np.asarray(v, dtype=np.float64)) for k, v in optimizer_state.items()]
    entries, offset = [], 0
    for name, arr in arrays:
        nbytes = arr.size * 8
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": nbytes})
        offset += nbytes
    manifest = {
        "config": model.config.to_dict(),
        "normalization": stats.to_dict() if stats is not None else None,
        "meta": meta or {},
        "entries": entries,
    }
    head = json.dumps(manifest, sort_keys=True).encode("utf-8")
    body = bytearray(MAGIC)
    body += struct.pack("<Q", len(head))
    body += head
    for _, arr in arrays:
        body += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    digest = hashlib.sha256(body).digest()
    with open(path, "wb") as fh:
        fh.write(bytes(body) + digest)


def _read(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(MAGIC):
        first = raw[:32].split(b"\n")[0]
        raise CheckpointError(f"{path}: not an STRNN v1 checkpoint (header {first!r})")
    if len(raw) < len(MAGIC) + 8 + 32:
        raise CheckpointError(f"{path}: truncated checkpoint")
    body, digest = raw[:-32], raw[-32:]
    (n,) = struct.unpack("<Q", body[len(MAGIC) : len(MAGIC) + 8])
    start = len(MAGIC) + 8
    if start + n > len(body):
        raise CheckpointError(f"{path}: truncated checkpoint manifest")
    try:
        manifest = json.loads(body[start : start + n].decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"{path}: corrupt manifest") from exc
    data_start = start + n
    need = sum(e["nbytes"] for e in manifest["entries"])
    if len(body) - data_start != need:
        raise CheckpointError(
            f"{path}: truncated checkpoint ({len(body) - data_start} of {need} data bytes)"
        )
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch")
    arrays = {}
    for e in manifest["entries"]:
        a = data_start + e["offset"]
        arrays[e["name"]] = np.frombuffer(body[a : a + e["nbytes"]], dtype="<f8").reshape(e["shape"]).copy()
    return manifest, arrays


def load_checkpoint(path, expected: ModelConfig | None = None):
    """Return (model, stats, optimizer_state, meta).

    With ``expected`` the stored configuration must describe the same
    architecture, otherwise nothing is built.
    """
    manifest, arrays = _read(path)
    config = ModelConfig.from_dict(manifest["config"])
    if expected is not None:
        check_compatible(config, expected)
    model = STRNN(config)
    state = {k: v for k, v in arrays.items() if not k.startswith(OPTIM_PREFIX)}
    try:
        model.load_state_dict(state)
    except ConfigurationError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    optim = {k[len(OPTIM_PREFIX):]: v for k, v in arrays.items() if k.startswith(OPTIM_PREFIX)}
    norm = manifest.get("normalization")
    stats = NormalizationStats.from_dict(norm) if norm else None
    return model, stats, (optim or None), manifest.get("meta", {})


ARCH_FIELDS = ("spatial_widths", "hidden", "residual_width", "fold_input_projection")


def check_compatible(stored: ModelConfig, expected: ModelConfig) -> None:
    a, b = stored.tag, expected.tag
    if (a.components, a.encode_len, a.predict_len) != (b.components, b.encode_len, b.predict_len):
        raise CheckpointError(f"checkpoint holds a {a} model, which cannot be used as {b}")
    for f in ARCH_FIELDS:
        if getattr(stored, f) != getattr(expected, f):
            raise CheckpointError(
                f"checkpoint {f}={getattr(stored, f)!r} differs from configured {getattr(expected, f)!r}"
            )


def load_into(model: STRNN, path) -> NormalizationStats | None:
    """Load parameters from ``path`` into an existing model after a shape guard."""
    manifest, arrays = _read(path)
    check_compatible(ModelConfig.from_dict(manifest["config"]), model.config)
    model.load_state_dict({k: v for k, v in arrays.items() if not k.startswith(OPTIM_PREFIX)})
    norm = manifest.get("normalization")
    return NormalizationStats.from_dict(norm) if norm else None
