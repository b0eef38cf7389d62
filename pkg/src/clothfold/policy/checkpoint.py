"""Versioned binary checkpoints.

Layout (all little-endian):

    magic            8 bytes  b"CFPOLICY"
    version          u32
    num_candidates   u32
    num_points       u32
    alpha            f64
    canonical_voting u8
    category         16 bytes, utf-8, NUL padded
    layer_count      u32
    per layer:
        name_len     u16
        name         utf-8 bytes
        ndim         u8
        dims         u32 * ndim
        offset       u64   (element offset into the flat weight array)
    total_elements   u64
    weights          f64 * total_elements

Weights are stored in sorted layer-name order; loading is bitwise exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..nn.autodiff import Tensor
from .network import PolicyConfig

MAGIC = b"CFPOLICY"
VERSION = 1


def save_checkpoint(
    path: str | Path, params: dict[str, Tensor], config: PolicyConfig
) -> None:
    names = sorted(params)
    chunks = [MAGIC, struct.pack("<III", VERSION, config.num_candidates, config.num_points)]
    chunks.append(struct.pack("<d", config.alpha))
    chunks.append(struct.pack("<B", 1 if config.canonical_voting else 0))
    cat = config.category.encode("utf-8")[:16]
    chunks.append(cat + b"\0" * (16 - len(cat)))
    chunks.append(struct.pack("<I", len(names)))
    offset = 0
    flat_parts = []
    for name in names:
        data = params[name].data
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)) + encoded)
        chunks.append(struct.pack("<B", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(struct.pack("<Q", offset))
        offset += data.size
        flat_parts.append(np.ascontiguousarray(data, dtype="<f8").reshape(-1))
    chunks.append(struct.pack("<Q", offset))
    chunks.append(np.concatenate(flat_parts).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> tuple[dict[str, Tensor], PolicyConfig]:
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise ValueError(f"not a policy checkpoint: {path}")
    pos = 8
    version, k, n = struct.unpack_from("<III", blob, pos)
    pos += 12
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (alpha,) = struct.unpack_from("<d", blob, pos)
    pos += 8
    (canonical,) = struct.unpack_from("<B", blob, pos)
    pos += 1
    category = blob[pos : pos + 16].rstrip(b"\0").decode("utf-8")
    pos += 16
    (layer_count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    layers: list[tuple[str, tuple[int, ...], int]] = []
    for _ in range(layer_count):
        (name_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        dims = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        (offset,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        layers.append((name, dims, offset))
    (total,) = struct.unpack_from("<Q", blob, pos)
    pos += 8
    flat = np.frombuffer(blob, dtype="<f8", count=total, offset=pos)
    params: dict[str, Tensor] = {}
    for name, dims, offset in layers:
        size = int(np.prod(dims)) if dims else 1
        data = flat[offset : offset + size].reshape(dims).astype(np.float64)
        params[name] = Tensor(data.copy(), requires_grad=True)
    config = PolicyConfig(
        num_points=n,
        num_candidates=k,
        alpha=alpha,
        canonical_voting=bool(canonical),
        category=category,
    )
    return params, config
