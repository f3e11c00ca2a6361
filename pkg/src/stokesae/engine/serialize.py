"""Weights container.

Layout (all integers little-endian)::

    b"SAEW" | u32 format version | u32 header length | header (UTF-8 JSON) | payload

The header carries the ordered layer specs, input shape, bottleneck index,
parameter names/shapes/trainable flags, the total parameter count and free
``meta`` fields. The payload is every parameter in header order as
little-endian float32.
"""
import json
import os
import struct
import tempfile

import numpy as np

from .graph import Network

MAGIC = b"SAEW"
FORMAT_VERSION = 1


class FormatError(ValueError):
    """A container file is malformed or inconsistent with its header."""


def atomic_write(path, data):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def pack(magic, header, payload):
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return magic + struct.pack("<II", FORMAT_VERSION, len(blob)) + blob + payload


def unpack(magic, data):
    if data[:4] != magic:
        raise FormatError(f"bad magic {data[:4]!r}, expected {magic!r}")
    if len(data) < 12:
        raise FormatError("container shorter than its fixed preamble")
    version, n = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported container version {version}")
    if 12 + n > len(data):
        raise FormatError("container header truncated")
    try:
        header = json.loads(bytes(data[12:12 + n]).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"container header is not valid JSON ({exc})") from None
    return header, memoryview(data)[12 + n:]


def weights_to_bytes(graph, meta=None):
    params = graph.parameters()
    header = {
        "name": graph.name,
        "input_shape": list(graph.input_shape),
        "bottleneck_index": graph.bottleneck_index,
        "layers": [s.to_dict() for s in graph.specs],
        "params": [{"name": n, "shape": list(p.value.shape), "trainable": p.trainable} for n, p in params],
        "param_count": graph.param_count,
        "meta": meta or {},
    }
    payload = b"".join(np.ascontiguousarray(p.value, dtype="<f4").tobytes() for _, p in params)
    return pack(MAGIC, header, payload)


def weights_from_bytes(data, dtype="float32"):
    header, payload = unpack(MAGIC, data)
    graph = Network(header["layers"], header["input_shape"], bottleneck_index=header["bottleneck_index"],
                    dtype=dtype, name=header["name"])
    if graph.param_count != header["param_count"]:
        raise FormatError(f"parameter count {graph.param_count} differs from recorded {header['param_count']}")
    if len(payload) != 4 * graph.param_count:
        raise FormatError(f"payload holds {len(payload)} bytes, expected {4 * graph.param_count}")
    params = dict(graph.parameters())
    if sorted(e["name"] for e in header["params"]) != sorted(params):
        raise FormatError("parameter list does not match the layer list")
    offset = 0
    for entry in header["params"]:
        p = params.get(entry["name"])
        if p is None or list(p.value.shape) != entry["shape"]:
            raise FormatError(f"parameter {entry['name']} does not match the layer list")
        n = int(np.prod(entry["shape"], dtype=np.int64))
        chunk = np.frombuffer(payload, dtype="<f4", count=n, offset=offset)
        p.value[...] = chunk.reshape(entry["shape"])
        offset += 4 * n
    return graph, header["meta"]


def save_weights(path, graph, meta=None):
    atomic_write(path, weights_to_bytes(graph, meta))


def load_weights(path, dtype="float32"):
    with open(path, "rb") as fh:
        return weights_from_bytes(fh.read(), dtype=dtype)
