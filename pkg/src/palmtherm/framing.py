"""Fixed-layout binary frames for the microcontroller link.

Layout (63 bytes, little-endian):

    offset  size  field
    0       2     magic 0x54 0x48 ("TH")
    2       1     version
    3       4     tick index, u32
    7       18    9x setpoint, s16 centidegrees C
    25      18    9x measured, s16 centidegrees C
    43      18    9x drive current, s16 milliamps
    61      2     CRC-16/CCITT-FALSE over bytes [0, 61)

Temperatures and currents are quantized onto the s16 lattice by the
encoder; decode(encode(frame)) is the identity on already-quantized
values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"TH"
VERSION = 1
N_CHANNELS = 9

_STRUCT = struct.Struct("<2sBI27hH")
FRAME_SIZE = _STRUCT.size  # 63
_CRC_OFFSET = FRAME_SIZE - 2

_CENTI = 100.0   # degC -> centidegrees
_MILLI = 1000.0  # A -> mA
_S16_MIN, _S16_MAX = -32768, 32767


class FrameError(ValueError):
    """Rejected frame; byte_offset points at the offending field."""

    def __init__(self, msg: str, byte_offset: int):
        super().__init__(f"{msg} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


def crc16_ccitt_false(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection.

    Check value: crc16_ccitt_false(b"123456789") == 0x29B1.
    """
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            if crc & 0x8000:
                crc = ((crc << 1) ^ 0x1021) & 0xFFFF
            else:
                crc = (crc << 1) & 0xFFFF
    return crc


@dataclass(frozen=True)
class SerialFrame:
    """One tick of the serial link, in physical units."""

    tick: int
    setpoints_c: tuple[float, ...]
    measured_c: tuple[float, ...]
    currents_a: tuple[float, ...]
    version: int = VERSION

    def __post_init__(self):
        for name in ("setpoints_c", "measured_c", "currents_a"):
            if len(getattr(self, name)) != N_CHANNELS:
                raise ValueError(f"{name} must have {N_CHANNELS} entries")
        if not 0 <= self.tick <= 0xFFFFFFFF:
            raise ValueError("tick must fit in u32")


def _quantize(values, scale: float, what: str) -> list[int]:
    out = []
    for v in values:
        if not np.isfinite(v):
            raise ValueError(f"non-finite {what}: {v!r}")
        q = int(round(v * scale))
        if not _S16_MIN <= q <= _S16_MAX:
            raise ValueError(f"{what} {v} out of s16 range after scaling")
        out.append(q)
    return out


def serial_frame_encode(frame: SerialFrame) -> bytes:
    words = (_quantize(frame.setpoints_c, _CENTI, "setpoint")
             + _quantize(frame.measured_c, _CENTI, "measured")
             + _quantize(frame.currents_a, _MILLI, "current"))
    body = _STRUCT.pack(MAGIC, frame.version, frame.tick, *words, 0)
    crc = crc16_ccitt_false(body[:_CRC_OFFSET])
    return body[:_CRC_OFFSET] + struct.pack("<H", crc)


def serial_frame_decode(buf: bytes) -> SerialFrame:
    if len(buf) != FRAME_SIZE:
        raise FrameError(f"frame must be {FRAME_SIZE} bytes, got {len(buf)}",
                         byte_offset=min(len(buf), FRAME_SIZE - 1))
    magic, version, tick, *rest = _STRUCT.unpack(buf)
    if magic != MAGIC:
        raise FrameError("bad magic", byte_offset=0 if buf[0] != MAGIC[0] else 1)
    crc_stored = rest[-1]
    crc_actual = crc16_ccitt_false(buf[:_CRC_OFFSET])
    if crc_stored != crc_actual:
        raise FrameError(
            f"CRC mismatch: stored {crc_stored:#06x}, computed {crc_actual:#06x}",
            byte_offset=_CRC_OFFSET)
    words = rest[:-1]
    return SerialFrame(
        tick=tick,
        setpoints_c=tuple(w / _CENTI for w in words[0:9]),
        measured_c=tuple(w / _CENTI for w in words[9:18]),
        currents_a=tuple(w / _MILLI for w in words[18:27]),
        version=version,
    )
