"""Canonical binary encoding shared by every on-ledger structure.

Framing rules (bit-exact across implementations):
  strings      4-byte big-endian length + UTF-8 bytes
  var bytes    4-byte big-endian length + raw bytes
  fixed bytes  raw bytes (length known from context: 32-byte keys/hashes,
               64-byte signatures)
  enums        1 byte
  booleans     1 byte (0 or 1)
  integers     big-endian fixed width (u32 or u64)
  timestamps   8-byte big-endian seconds
  sequences    4-byte big-endian count + elements
  optionals    1-byte presence flag + value when present
"""

from __future__ import annotations

import struct

U32_MAX = 0xFFFFFFFF
U64_MAX = 0xFFFFFFFFFFFFFFFF


class DecodeError(ValueError):
    """Raised when a byte buffer does not decode under the canonical rules."""


def u8(value: int) -> bytes:
    if not 0 <= value <= 0xFF:
        raise ValueError(f"u8 out of range: {value}")
    return bytes((value,))


def u32(value: int) -> bytes:
    if not 0 <= value <= U32_MAX:
        raise ValueError(f"u32 out of range: {value}")
    return struct.pack(">I", value)


def u64(value: int) -> bytes:
    if not 0 <= value <= U64_MAX:
        raise ValueError(f"u64 out of range: {value}")
    return struct.pack(">Q", value)


def boolean(value: bool) -> bytes:
    return b"\x01" if value else b"\x00"


def string(value: str) -> bytes:
    raw = value.encode("utf-8")
    return u32(len(raw)) + raw


def var_bytes(value: bytes) -> bytes:
    return u32(len(value)) + value


def fixed_bytes(value: bytes, size: int) -> bytes:
    if len(value) != size:
        raise ValueError(f"expected {size} bytes, got {len(value)}")
    return value


def sequence(items, encode_item) -> bytes:
    parts = [u32(len(items))]
    parts.extend(encode_item(item) for item in items)
    return b"".join(parts)


def optional_u64(value) -> bytes:
    if value is None:
        return b"\x00"
    return b"\x01" + u64(value)


class Reader:
    """Cursor over a canonical byte buffer; every read checks bounds."""

    __slots__ = ("_buf", "_pos")

    def __init__(self, buf: bytes, pos: int = 0):
        self._buf = buf
        self._pos = pos

    @property
    def pos(self) -> int:
        return self._pos

    def remaining(self) -> int:
        return len(self._buf) - self._pos

    def _take(self, n: int) -> bytes:
        end = self._pos + n
        if end > len(self._buf):
            raise DecodeError(
                f"buffer underrun at offset {self._pos}: need {n}, have {self.remaining()}"
            )
        chunk = self._buf[self._pos:end]
        self._pos = end
        return chunk

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def boolean(self) -> bool:
        v = self.u8()
        if v not in (0, 1):
            raise DecodeError(f"invalid boolean byte {v!r} at offset {self._pos - 1}")
        return v == 1

    def string(self) -> str:
        raw = self.var_bytes()
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(f"invalid UTF-8 at offset {self._pos}: {exc}") from exc

    def var_bytes(self) -> bytes:
        n = self.u32()
        return self._take(n)

    def fixed_bytes(self, size: int) -> bytes:
        return self._take(size)

    def sequence(self, decode_item) -> list:
        n = self.u32()
        return [decode_item(self) for _ in range(n)]

    def optional_u64(self):
        if self.u8() == 0:
            return None
        return self.u64()

    def expect_end(self) -> None:
        if self.remaining() != 0:
            raise DecodeError(f"{self.remaining()} trailing bytes after decode")
