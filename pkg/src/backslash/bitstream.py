"""MSB-first bit writer and reader used by the exp-Golomb coder."""

from __future__ import annotations

from .errors import TruncationError


class BitWriter:
    """Accumulates bits most-significant first; pads with zeros on :meth:`getvalue`."""

    __slots__ = ("_buf", "_acc", "_nacc", "bit_count")

    def __init__(self):
        self._buf = bytearray()
        self._acc = 0
        self._nacc = 0
        self.bit_count = 0

    def write(self, value, nbits):
        """Append the low ``nbits`` bits of ``value``."""
        if nbits < 0:
            raise ValueError("nbits must be nonnegative")
        if value < 0 or value >> nbits:
            raise ValueError(f"{value} does not fit in {nbits} bits")
        self._acc = (self._acc << nbits) | value
        self._nacc += nbits
        self.bit_count += nbits
        while self._nacc >= 8:
            self._nacc -= 8
            self._buf.append((self._acc >> self._nacc) & 0xFF)
        self._acc &= (1 << self._nacc) - 1

    def write_bits(self, bits):
        """Append a string of '0'/'1' characters."""
        if bits:
            self.write(int(bits, 2), len(bits))

    def getvalue(self):
        out = bytearray(self._buf)
        if self._nacc:
            out.append((self._acc << (8 - self._nacc)) & 0xFF)
        return bytes(out)


class BitReader:
    """Reads bits MSB-first from ``data``, limited to ``nbits`` if given."""

    __slots__ = ("_data", "_limit", "pos")

    def __init__(self, data, nbits=None):
        self._data = bytes(data)
        full = 8 * len(self._data)
        if nbits is None:
            nbits = full
        if nbits > full:
            raise TruncationError(f"{nbits} bits requested from {full}-bit buffer")
        self._limit = nbits
        self.pos = 0

    @classmethod
    def from_string(cls, bits):
        w = BitWriter()
        w.write_bits(bits)
        return cls(w.getvalue(), len(bits))

    @property
    def remaining(self):
        return self._limit - self.pos

    def read_bit(self):
        if self.pos >= self._limit:
            raise TruncationError("bit source exhausted")
        byte = self._data[self.pos >> 3]
        bit = (byte >> (7 - (self.pos & 7))) & 1
        self.pos += 1
        return bit

    def read(self, nbits):
        """Read ``nbits`` bits as an unsigned integer."""
        if nbits > self.remaining:
            raise TruncationError(f"need {nbits} bits, {self.remaining} left")
        value = 0
        for _ in range(nbits):
            value = (value << 1) | self.read_bit()
        return value
