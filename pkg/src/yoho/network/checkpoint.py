"""Binary checkpoint format.

Layout (little-endian)::

    b"YOHO"  u32 version
    u32 len  UTF-8 key=value architecture block
    u32 n_tensors
    n_tensors x { u32 name_len, name (UTF-8), u32 ndim, u32 dims[ndim], f32 data }
"""

from __future__ import annotations

import struct
from dataclasses import asdict, fields

import numpy as np

from .model import ArchConfig, Network, build_network

__all__ = ["save_checkpoint", "load_checkpoint", "CheckpointError"]

MAGIC = b"YOHO"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _arch_block(arch: ArchConfig) -> bytes:
    return "\n".join(f"{k}={v}" for k, v in asdict(arch).items()).encode("utf-8")


def _parse_arch(block: bytes) -> ArchConfig:
    kinds = {f.name: f.type for f in fields(ArchConfig)}
    kwargs = {}
    for line in block.decode("utf-8").splitlines():
        key, _, value = line.partition("=")
        kind = kinds.get(key)
        if kind is None:
            raise CheckpointError(f"unknown architecture key {key!r}")
        kind = kind if isinstance(kind, str) else kind.__name__
        kwargs[key] = {"int": int, "float": float}.get(kind, str)(value)
    return ArchConfig(**kwargs)


def save_checkpoint(path, net: Network) -> None:
    tensors = list(net.get_weights().items())
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", VERSION))
        block = _arch_block(net.arch)
        fh.write(struct.pack("<I", len(block)) + block)
        fh.write(struct.pack("<I", len(tensors)))
        for name, value in tensors:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)) + raw)
            fh.write(struct.pack("<I", value.ndim))
            fh.write(struct.pack(f"<{value.ndim}I", *value.shape))
            fh.write(np.ascontiguousarray(value, dtype="<f4").tobytes())


def load_checkpoint(path) -> Network:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a YOHO checkpoint")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 8
    (blen,) = struct.unpack_from("<I", data, pos)
    pos += 4
    arch = _parse_arch(data[pos:pos + blen])
    pos += blen
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    weights = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<I", data, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            weights[name] = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(shape)
            pos += 4 * size
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"{path}: truncated checkpoint") from exc
    net = build_network(arch, dtype=np.float32)
    expected = set(net.get_weights())
    if set(weights) != expected:
        raise CheckpointError(f"{path}: tensor names do not match the architecture")
    net.set_weights(weights)
    return net
