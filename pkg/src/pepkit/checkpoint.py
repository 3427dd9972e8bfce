"""PEPCKPT1 checkpoint files.

Layout (all integers little-endian)::

    b"PEPCKPT1"
    u32  layer count
    per layer: u32 input width, u32 output width, u8 activation (0 identity, 1 relu)
    u64  P
    P x f64 parameter values in flat layout order
    u32  CRC-32 (zlib) of every preceding byte
"""

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import ParseError
from .nn import Layer, NetworkSpec, ParamVector

MAGIC = b"PEPCKPT1"
ACTIVATION_CODES = {"identity": 0, "relu": 1}
_CODE_TO_ACTIVATION = {v: k for k, v in ACTIVATION_CODES.items()}


def encode_checkpoint(spec: NetworkSpec, params: ParamVector) -> bytes:
    if params.layout != spec.layout():
        raise ParseError("parameters do not match the network layout")
    parts = [MAGIC, struct.pack("<I", len(spec.layers))]
    for layer in spec.layers:
        parts.append(struct.pack("<IIB", layer.input_width, layer.output_width,
                                 ACTIVATION_CODES[layer.activation]))
    parts.append(struct.pack("<Q", len(params)))
    parts.append(params.values.astype("<f8").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_checkpoint(blob: bytes):
    """Return ``(spec, params)`` from checkpoint bytes."""
    if len(blob) < len(MAGIC) + 4 + 8 + 4 or blob[:8] != MAGIC:
        raise ParseError("not a PEPCKPT1 checkpoint (bad magic)")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise ParseError("checkpoint CRC mismatch")
    pos = 8
    (n_layers,) = struct.unpack_from("<I", body, pos)
    pos += 4
    layers = []
    for _ in range(n_layers):
        if pos + 9 > len(body):
            raise ParseError("checkpoint truncated in layer table")
        n_in, n_out, code = struct.unpack_from("<IIB", body, pos)
        pos += 9
        if code not in _CODE_TO_ACTIVATION:
            raise ParseError(f"unknown activation code {code}")
        layers.append(Layer(n_in, n_out, _CODE_TO_ACTIVATION[code]))
    (p,) = struct.unpack_from("<Q", body, pos)
    pos += 8
    if len(body) - pos != 8 * p:
        raise ParseError(f"checkpoint declares {p} values but holds {(len(body) - pos) / 8:g}")
    try:
        spec = NetworkSpec(tuple(layers))
    except ValueError as exc:
        raise ParseError(f"invalid network in checkpoint: {exc}") from exc
    if spec.param_count != p:
        raise ParseError(f"network needs {spec.param_count} values, checkpoint has {p}")
    values = np.frombuffer(body, dtype="<f8", count=p, offset=pos).astype(np.float64)
    return spec, ParamVector(values, spec.layout())


def save_checkpoint(path, spec: NetworkSpec, params: ParamVector) -> None:
    Path(path).write_bytes(encode_checkpoint(spec, params))


def load_checkpoint(path):
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode_checkpoint(blob)
