"""Carry-less range coder over integer CDF tables.

State update (documented here because the byte output is part of the
interface; both ends must implement it identically):

    state: low, range, 32-bit; range starts at 0xFFFFFFFF.
    encode(cum_lo, cum_hi):
        r     = range // 2^16          # total frequency is always 2^16
        low   = low + r * cum_lo       # never wraps: low + range <= 2^32
        range = r * (cum_hi - cum_lo)
        renormalize
    renormalize:
        while top byte of low and low+range agree: emit it, shift both by 8
        else while range < 2^16: range = -low mod 2^16, then emit/shift
    finish: emit the 4 bytes of low (only if any symbol was coded).

The decoder mirrors the update with code = next 4 stream bytes, reading one
byte per renormalization step.  The "range < 2^16 -> clamp" branch is the
carry-less trick: it shrinks the interval so a carry can never propagate
into already-emitted bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .gmm import CDF_TOTAL, CdfTable

__all__ = [
    "Bitstream",
    "StreamFormatError",
    "RangeEncoder",
    "RangeDecoder",
    "rc_encode",
    "rc_decode",
]

MAGIC = b"DETQ"
VERSION = 1

_MASK = 0xFFFFFFFF
_TOP = 1 << 24
_BOT = 1 << 16


class StreamFormatError(ValueError):
    """Malformed or truncated bitstream."""


@dataclass(frozen=True)
class Bitstream:
    """Header (magic, version, count, latent shape) plus payload bytes."""

    count: int
    shape: tuple
    payload: bytes

    def to_bytes(self) -> bytes:
        if len(self.shape) != 3:
            raise StreamFormatError("shape must be (c, h, w)")
        head = MAGIC + struct.pack(">BI3H", VERSION, self.count, *self.shape)
        return head + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bitstream":
        head_len = 4 + struct.calcsize(">BI3H")
        if len(data) < head_len or data[:4] != MAGIC:
            raise StreamFormatError("bad magic or truncated header")
        version, count, c, h, w = struct.unpack(">BI3H", data[4:head_len])
        if version != VERSION:
            raise StreamFormatError(f"unsupported version {version}")
        return cls(count=count, shape=(c, h, w), payload=data[head_len:])


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK
        self.out = bytearray()
        self._coded = 0

    def encode(self, cum_lo: int, cum_hi: int):
        if not 0 <= cum_lo < cum_hi <= CDF_TOTAL:
            raise ValueError("invalid cumulative interval")
        r = self.range // CDF_TOTAL
        self.low += r * cum_lo
        self.range = r * (cum_hi - cum_lo)
        self._coded += 1
        self._renormalize()

    def _renormalize(self):
        while True:
            if (self.low ^ (self.low + self.range)) < _TOP:
                pass
            elif self.range < _BOT:
                self.range = (-self.low) & (_BOT - 1)
            else:
                break
            self.out.append((self.low >> 24) & 0xFF)
            self.low = (self.low << 8) & _MASK
            self.range <<= 8

    def finish(self) -> bytes:
        if self._coded:
            for _ in range(4):
                self.out.append((self.low >> 24) & 0xFF)
                self.low = (self.low << 8) & _MASK
        return bytes(self.out)


class RangeDecoder:
    def __init__(self, payload: bytes, n_symbols: int):
        self.data = payload
        self.pos = 0
        self.low = 0
        self.range = _MASK
        self.code = 0
        if n_symbols:
            if len(payload) < 4:
                raise StreamFormatError("payload shorter than the coder flush")
            for _ in range(4):
                self.code = (self.code << 8) | self._byte()

    def _byte(self) -> int:
        if self.pos >= len(self.data):
            raise StreamFormatError("truncated payload")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def decode(self, table: CdfTable) -> int:
        r = self.range // CDF_TOTAL
        dv = (self.code - self.low) // r
        cum = max(0, min(int(dv), CDF_TOTAL - 1))
        sym = table.symbol_for_cum(cum)
        lo, hi = table.interval(sym)
        self.low += r * lo
        self.range = r * (hi - lo)
        self._renormalize()
        return sym

    def _renormalize(self):
        while True:
            if (self.low ^ (self.low + self.range)) < _TOP:
                pass
            elif self.range < _BOT:
                self.range = (-self.low) & (_BOT - 1)
            else:
                break
            self.code = ((self.code << 8) | self._byte()) & _MASK
            self.low = (self.low << 8) & _MASK
            self.range <<= 8


def _table_at(tables, i, prefix):
    if callable(tables):
        return tables(i, prefix)
    return tables[i]


def rc_encode(symbols, tables, shape=(0, 0, 0)) -> Bitstream:
    """Encode a symbol sequence, one CdfTable per symbol.

    `tables` is a sequence or a callable (index, prefix) -> CdfTable; the
    callable form matches the autoregressive decoder contract.
    """
    symbols = [int(s) for s in symbols]
    enc = RangeEncoder()
    for i, s in enumerate(symbols):
        table = _table_at(tables, i, symbols[:i])
        if not table.contains(s):
            raise ValueError(
                f"symbol {s} at {i} outside table range "
                f"[{table.v_min}, {table.v_max}]"
            )
        enc.encode(*table.interval(s))
    return Bitstream(count=len(symbols), shape=tuple(shape), payload=enc.finish())


def rc_decode(stream: Bitstream, tables, n: int | None = None) -> list:
    """Inverse of rc_encode given bit-identical tables.

    With a differing table at position t the output may diverge from t
    onward; that divergence is exactly the cross-device decode failure the
    interop harness measures.
    """
    if n is None:
        n = stream.count
    dec = RangeDecoder(stream.payload, n)
    out: list[int] = []
    for i in range(n):
        table = _table_at(tables, i, out)
        out.append(dec.decode(table))
    return out
