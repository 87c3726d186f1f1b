"""Wire codec: layout, CRC, bijection, corruption detection."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from palmtherm.framing import (
    FRAME_SIZE,
    FrameError,
    SerialFrame,
    crc16_ccitt_false,
    serial_frame_decode,
    serial_frame_encode,
)


def _table_crc(data: bytes) -> int:
    # independent table-driven implementation of the same CRC
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) if crc & 0x8000 else (crc << 1)
            crc &= 0xFFFF
        table.append(crc)
    crc = 0xFFFF
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ table[((crc >> 8) ^ b) & 0xFF]
    return crc


def lattice_frame(rng: np.random.Generator, tick=None) -> SerialFrame:
    # values already on the s16 lattice so the codec is exactly invertible
    t = rng.integers(-4000, 6000, 9) / 100.0
    m = rng.integers(-4000, 6000, 9) / 100.0
    i = rng.integers(-700, 701, 9) / 1000.0
    return SerialFrame(
        tick=int(rng.integers(0, 2**32)) if tick is None else tick,
        setpoints_c=tuple(t), measured_c=tuple(m), currents_a=tuple(i))


def test_frame_is_63_bytes():
    assert FRAME_SIZE == 63
    f = SerialFrame(0, (30.0,) * 9, (30.0,) * 9, (0.0,) * 9)
    assert len(serial_frame_encode(f)) == 63


def test_magic_and_layout():
    buf = serial_frame_encode(SerialFrame(0x01020304, (0.0,) * 9,
                                          (0.0,) * 9, (0.0,) * 9))
    assert buf[0:2] == b"TH"
    assert buf[2] == 1
    assert struct.unpack_from("<I", buf, 3)[0] == 0x01020304


def test_crc_check_value():
    assert crc16_ccitt_false(b"123456789") == 0x29B1


def test_crc_matches_table_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        data = rng.integers(0, 256, rng.integers(0, 80)).astype(np.uint8)
        assert crc16_ccitt_false(bytes(data)) == _table_crc(bytes(data))


def test_all_zero_frame_crc_cross_checked():
    buf = serial_frame_encode(SerialFrame(0, (0.0,) * 9, (0.0,) * 9,
                                          (0.0,) * 9))
    stored = struct.unpack_from("<H", buf, 61)[0]
    assert stored == _table_crc(buf[:61])


def test_round_trip_identity():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        f = lattice_frame(rng)
        assert serial_frame_decode(serial_frame_encode(f)) == f


def test_encode_quantizes_to_lattice():
    f = SerialFrame(5, (34.567,) * 9, (29.994,) * 9, (0.12345,) * 9)
    g = serial_frame_decode(serial_frame_encode(f))
    assert g.setpoints_c[0] == pytest.approx(34.57)
    assert g.measured_c[0] == pytest.approx(29.99)
    assert g.currents_a[0] == pytest.approx(0.123)


def test_single_bit_flip_always_detected():
    rng = np.random.default_rng(21)
    f = lattice_frame(rng)
    buf = bytearray(serial_frame_encode(f))
    for byte in range(FRAME_SIZE):
        for bit in range(8):
            corrupt = bytearray(buf)
            corrupt[byte] ^= 1 << bit
            with pytest.raises(FrameError):
                serial_frame_decode(bytes(corrupt))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1),
       st.lists(st.integers(-4000, 6000), min_size=27, max_size=27))
def test_round_trip_property(tick, words):
    f = SerialFrame(tick,
                    tuple(w / 100.0 for w in words[0:9]),
                    tuple(w / 100.0 for w in words[9:18]),
                    tuple(max(-700, min(700, w)) / 1000.0
                          for w in words[18:27]))
    assert serial_frame_decode(serial_frame_encode(f)) == f


def test_decode_error_offsets():
    f = SerialFrame(1, (30.0,) * 9, (30.0,) * 9, (0.0,) * 9)
    buf = bytearray(serial_frame_encode(f))

    with pytest.raises(FrameError) as exc:
        serial_frame_decode(bytes(buf[:-1]))
    assert exc.value.byte_offset == 62

    bad_magic = bytearray(buf)
    bad_magic[0] = 0x00
    # fix nothing else: magic is checked before CRC
    with pytest.raises(FrameError, match="magic") as exc:
        serial_frame_decode(bytes(bad_magic))
    assert exc.value.byte_offset == 0

    bad_magic2 = bytearray(buf)
    bad_magic2[1] = 0x00
    with pytest.raises(FrameError, match="magic") as exc:
        serial_frame_decode(bytes(bad_magic2))
    assert exc.value.byte_offset == 1

    bad_crc = bytearray(buf)
    bad_crc[61] ^= 0xFF
    with pytest.raises(FrameError, match="CRC") as exc:
        serial_frame_decode(bytes(bad_crc))
    assert exc.value.byte_offset == 61


def test_encode_rejects_bad_values():
    with pytest.raises(ValueError):
        serial_frame_encode(SerialFrame(0, (float("nan"),) * 9,
                                        (30.0,) * 9, (0.0,) * 9))
    with pytest.raises(ValueError):
        serial_frame_encode(SerialFrame(0, (400.0,) * 9, (30.0,) * 9,
                                        (0.0,) * 9))
    with pytest.raises(ValueError):
        SerialFrame(-1, (30.0,) * 9, (30.0,) * 9, (0.0,) * 9)
    with pytest.raises(ValueError):
        SerialFrame(0, (30.0,) * 8, (30.0,) * 9, (0.0,) * 9)
