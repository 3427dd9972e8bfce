import struct
import zlib

import numpy as np
import pytest

from pepkit.checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from pepkit.errors import ParseError
from pepkit.nn import NetworkSpec, flatten, init_params


def test_byte_layout_by_hand():
    spec = NetworkSpec.from_widths([1, 2])
    params = flatten(spec, [([[1.5, -2.0]], [0.25, 0.0])])
    body = (b"PEPCKPT1" + struct.pack("<I", 1) + struct.pack("<IIB", 1, 2, 0)
            + struct.pack("<Q", 4) + struct.pack("<4d", 1.5, -2.0, 0.25, 0.0))
    expected = body + struct.pack("<I", zlib.crc32(body))
    assert encode_checkpoint(spec, params) == expected


def test_relu_activation_code():
    blob = encode_checkpoint(NetworkSpec.from_widths([2, 3, 2]),
                             init_params(NetworkSpec.from_widths([2, 3, 2]), np.random.default_rng(0)))
    assert blob[12 + 8] == 1 and blob[12 + 9 + 8] == 0


def test_round_trip(tmp_path):
    spec = NetworkSpec.from_widths([3, 5, 4, 2])
    params = init_params(spec, np.random.default_rng(1))
    save_checkpoint(tmp_path / "a.ckpt", spec, params)
    spec2, params2 = load_checkpoint(tmp_path / "a.ckpt")
    assert spec2 == spec
    assert params2.values.tobytes() == params.values.tobytes()


def test_corruption_detected():
    spec = NetworkSpec.from_widths([2, 2])
    blob = bytearray(encode_checkpoint(spec, init_params(spec, np.random.default_rng(2))))
    blob[30] ^= 0x01
    with pytest.raises(ParseError, match="CRC"):
        decode_checkpoint(bytes(blob))


def test_bad_magic_and_truncation():
    spec = NetworkSpec.from_widths([2, 2])
    blob = encode_checkpoint(spec, init_params(spec, np.random.default_rng(2)))
    with pytest.raises(ParseError):
        decode_checkpoint(b"XXXXXXXX" + blob[8:])
    with pytest.raises(ParseError):
        decode_checkpoint(blob[:20])
