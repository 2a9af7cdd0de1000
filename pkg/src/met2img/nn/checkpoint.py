"""Binary model checkpoints.

Layout (all integers little-endian uint32)::

    b"M2ICKPT\\0" | version | header_len | header (UTF-8 JSON spec fields)
    then per parameter, in declaration order:
    ndim | dims... | float32 little-endian data
"""

import json
import struct

import numpy as np

from met2img.nn.network import build
from met2img.nn.spec import NetworkSpec

MAGIC = b"M2ICKPT\x00"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _spec_fields(spec):
    return {
        "conv_dim": spec.conv_dim.value,
        "depth": spec.depth,
        "width": spec.width,
        "head": spec.head.value,
        "input_shape": list(spec.input_shape),
        "fc_hidden": spec.fc_hidden,
    }


def save(net, path):
    header = json.dumps(_spec_fields(net.spec), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for p in net.params:
            fh.write(struct.pack("<I", p.ndim))
            fh.write(struct.pack(f"<{p.ndim}I", *p.shape))
            fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load(path, expected_spec=None, dtype=np.float32):
    """Load a checkpoint; raise CheckpointError if it disagrees with ``expected_spec``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a met2img checkpoint")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos = 16
    fields = json.loads(data[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    spec = NetworkSpec(**fields)
    if expected_spec is not None and _spec_fields(expected_spec) != _spec_fields(spec):
        raise CheckpointError(f"{path}: checkpoint spec {spec.arch} {spec.input_shape} does not match "
                              f"{expected_spec.arch} {expected_spec.input_shape}")
    net = build(spec, dtype=dtype)
    for p in net.params:
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        if tuple(shape) != p.shape:
            raise CheckpointError(f"{path}: parameter shape {shape} does not match {p.shape}")
        count = int(np.prod(shape))
        p[...] = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(shape)
        pos += 4 * count
    if pos != len(data):
        raise CheckpointError(f"{path}: trailing bytes after parameters")
    return net
