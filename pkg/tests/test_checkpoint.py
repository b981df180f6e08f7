import struct
import zlib
from collections import OrderedDict

import numpy as np
import pytest

from infocatvae import checkpoint as ckpt


def sample_entries():
    return OrderedDict(
        [
            ("w", np.arange(6, dtype=np.float64).reshape(2, 3)),
            ("b", np.array([1.5, -2.0], dtype=np.float32)),
            ("s", np.array(3.0)),
        ]
    )


def test_round_trip_preserves_everything():
    entries = sample_entries()
    out = ckpt.decode(ckpt.encode(entries))
    assert list(out) == list(entries)
    for k in entries:
        assert out[k].dtype == entries[k].dtype and out[k].shape == entries[k].shape
        np.testing.assert_array_equal(out[k], entries[k])


def test_layout_by_hand():
    raw = ckpt.encode(OrderedDict([("ab", np.array([1.0]))]))
    body = (b"ICVAE1\x00\x00" + struct.pack("<II", 1, 1) + struct.pack("<I", 2) + b"ab"
            + struct.pack("<II", 1, 1) + bytes([8]) + struct.pack("<d", 1.0))
    assert raw == body + struct.pack("<I", zlib.crc32(body))


def test_encode_is_deterministic(tmp_path):
    ckpt.save(tmp_path / "a", sample_entries())
    ckpt.save(tmp_path / "b", ckpt.load(tmp_path / "a"))
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_corruption_detected():
    raw = bytearray(ckpt.encode(sample_entries()))
    raw[-6] ^= 0xFF  # inside the last payload
    with pytest.raises(ckpt.ChecksumError):
        ckpt.decode(bytes(raw))
    raw = bytearray(ckpt.encode(sample_entries()))
    raw[30] ^= 0xFF  # a dimension word
    with pytest.raises(ckpt.CheckpointError):
        ckpt.decode(bytes(raw))


def test_truncation_detected():
    raw = ckpt.encode(sample_entries())
    with pytest.raises(ckpt.TruncatedCheckpointError):
        ckpt.decode(raw[:40])
    with pytest.raises(ckpt.TruncatedCheckpointError):
        ckpt.decode(raw[:10])


def test_bad_magic_and_version():
    raw = ckpt.encode(sample_entries())
    with pytest.raises(ckpt.CheckpointError, match="magic"):
        ckpt.decode(b"NOTACKPT" + raw[8:])
    body = raw[:8] + struct.pack("<I", 2) + raw[12:-4]
    with pytest.raises(ckpt.VersionError):
        ckpt.decode(body + struct.pack("<I", zlib.crc32(body)))


def test_integer_dtype_rejected():
    with pytest.raises(TypeError):
        ckpt.encode({"n": np.array([1, 2])})


@pytest.mark.parametrize("value", [0, 1, 2**32 - 1, 2**32, 2**63 + 12345, 2**64 - 1])
def test_u64_packing(value):
    assert ckpt.unpack_u64(ckpt.pack_u64(value)) == value
