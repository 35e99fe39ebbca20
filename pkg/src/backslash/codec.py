"""Exp-Golomb coding of value-mapped quantized parameters, plus baselines.

Pipeline: quantize with step ``2**-n``, rank the distinct quantized values by
frequency (the value map), and exp-Golomb code each parameter's rank. The
Huffman, fixed-length and entropy figures exist for rate reports.

EncodedBlob layout (little-endian, payload bits MSB-first within bytes)::

    b"GGEG" | version u8 = 1 | eg_order u8 | quant_exponent i8 | reserved u8
    | param_count u64 | table_len u32 | table i32 * table_len
    | payload_bit_count u64 | payload bytes
"""

from __future__ import annotations

import heapq
import math
import struct
from bisect import bisect_left
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .bitstream import BitReader, BitWriter
from .errors import CorruptionError, DomainError, FormatError, RangeError, TruncationError
from .tensorstore import quantize

MAGIC = b"GGEG"
VERSION = 1
MAX_ORDER = 31
EG_ORDERS = range(6)

_HEAD = struct.Struct("<4sBBbBQI")
_I32_MIN, _I32_MAX = -(2**31), 2**31 - 1


# -- exp-Golomb -------------------------------------------------------------


def _check_order(k):
    if not (0 <= k <= MAX_ORDER):
        raise RangeError(f"exp-Golomb order must lie in [0, {MAX_ORDER}], got {k}")


def _check_value(value, k):
    if value < 0 or value >= 2**63 - 2**k:
        raise RangeError(f"value {value} outside exp-Golomb range for order {k}")


def eg_codeword_length(value, k):
    """Length in bits of the order-``k`` codeword for ``value``."""
    return 2 * (value + (1 << k)).bit_length() - k - 1


def eg_encode(value, k=0):
    """Order-``k`` exp-Golomb codeword of ``value`` as a '0'/'1' string.

    With ``m = value + 2**k`` the codeword is ``bitlength(m) - k - 1`` zeros
    followed by ``m`` in binary.
    """
    _check_order(k)
    value = int(value)
    _check_value(value, k)
    m = value + (1 << k)
    return "0" * (m.bit_length() - k - 1) + format(m, "b")


def eg_decode(bits, k=0):
    """Read one order-``k`` codeword from a :class:`BitReader` (or bit string)."""
    _check_order(k)
    if isinstance(bits, str):
        bits = BitReader.from_string(bits)
    zeros = 0
    while bits.read_bit() == 0:
        zeros += 1
    m = (1 << (zeros + k)) | bits.read(zeros + k)
    return m - (1 << k)


def _bit_length_u64(m):
    bl = np.zeros(m.shape, dtype=np.int64)
    t = m.copy()
    for s in (32, 16, 8, 4, 2, 1):
        big = t >= np.uint64(1 << s)
        bl[big] += s
        t[big] >>= np.uint64(s)
    bl += t > 0
    return bl


def eg_lengths(values, k=0):
    """Vectorized codeword lengths for nonnegative integer ``values``."""
    _check_order(k)
    v = np.asarray(values, dtype=np.uint64)
    return 2 * _bit_length_u64(v + np.uint64(1 << k)) - k - 1


def eg_encode_array(values, k=0):
    """Encode nonnegative ints into a packed bitstream; returns (bytes, bit_count)."""
    _check_order(k)
    v = np.asarray(values, dtype=np.int64).ravel()
    if v.size == 0:
        return b"", 0
    if v.min() < 0 or v.max() >= 2**63 - 2**k:
        raise RangeError(f"values outside exp-Golomb range for order {k}")
    m = v.astype(np.uint64) + np.uint64(1 << k)
    bl = _bit_length_u64(m)
    ends = np.cumsum(2 * bl - k - 1)
    total = int(ends[-1])
    bits = np.zeros(total, dtype=np.uint8)
    # leading zeros are already in place; write m's bits right-aligned at each end
    for j in range(int(bl.max())):
        sel = bl > j
        bits[ends[sel] - 1 - j] = ((m[sel] >> np.uint64(j)) & np.uint64(1)).astype(np.uint8)
    return np.packbits(bits).tobytes(), total


def _windows64(payload, positions):
    """64-bit big-endian windows of the bitstream starting at each bit position."""
    padded = np.concatenate([np.frombuffer(payload, dtype=np.uint8), np.zeros(9, np.uint8)])
    rows = sliding_window_view(padded, 9)[positions >> 3]
    w = np.zeros(len(positions), dtype=np.uint64)
    for i in range(8):
        w |= rows[:, i].astype(np.uint64) << np.uint64(56 - 8 * i)
    s = (positions & 7).astype(np.uint64)
    return (w << s) | (rows[:, 8].astype(np.uint64) >> (np.uint64(8) - s))


def eg_decode_array(payload, bit_count, count, k=0):
    """Decode exactly ``count`` codewords; returns (int64 array, bits consumed)."""
    _check_order(k)
    if bit_count > 8 * len(payload):
        raise TruncationError(f"payload holds {8 * len(payload)} bits, header claims {bit_count}")
    if count == 0:
        return np.zeros(0, dtype=np.int64), 0
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), count=bit_count)
    ones = np.flatnonzero(bits)
    win = _windows64(payload, ones).tolist()
    ones = ones.tolist()
    n_ones = len(ones)
    base = 1 << k
    out = [0] * count
    p = j = 0
    for i in range(count):
        j = bisect_left(ones, p, j)
        if j == n_ones:
            raise TruncationError(f"bitstream ended after {i} of {count} codewords")
        q = ones[j]
        nm = q - p + k + 1
        end = q + nm
        if end > bit_count:
            raise TruncationError(f"bitstream ended inside codeword {i}")
        if nm > 64:
            raise CorruptionError(f"codeword {i} exceeds 64-bit range")
        out[i] = (win[j] >> (64 - nm)) - base
        p = end
    return np.array(out, dtype=np.int64), p


# -- value map --------------------------------------------------------------


@dataclass
class CodeTable:
    """Distinct quantized values in rank order (rank 0 = most frequent)."""

    ranked_values: np.ndarray
    _lookup: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.ranked_values = np.asarray(self.ranked_values, dtype=np.int64).ravel()
        if np.unique(self.ranked_values).size != self.ranked_values.size:
            raise CorruptionError("code table contains duplicate values")

    def __len__(self):
        return self.ranked_values.size

    def __eq__(self, other):
        if not isinstance(other, CodeTable):
            return NotImplemented
        return np.array_equal(self.ranked_values, other.ranked_values)

    @property
    def lookup(self):
        """Mapping value -> rank."""
        if self._lookup is None:
            self._lookup = {int(v): i for i, v in enumerate(self.ranked_values.tolist())}
        return self._lookup

    def ranks(self, quantized):
        """Vectorized value -> rank for values present in the table."""
        q = np.asarray(quantized, dtype=np.int64)
        order = np.argsort(self.ranked_values, kind="stable")
        sorted_vals = self.ranked_values[order]
        pos = np.searchsorted(sorted_vals, q)
        pos_c = np.minimum(pos, len(sorted_vals) - 1)
        if q.size and not np.array_equal(sorted_vals[pos_c], q):
            raise DomainError("value not present in code table")
        return order[pos_c]

    def values(self, ranks):
        r = np.asarray(ranks, dtype=np.int64)
        if r.size and (r.min() < 0 or r.max() >= len(self)):
            raise CorruptionError(f"rank index beyond table of size {len(self)}")
        return self.ranked_values[r]


def build_value_map(quantized):
    """Rank distinct values by descending count, then ascending |v|, then v."""
    q = np.asarray(quantized, dtype=np.int64).ravel()
    if q.size == 0:
        raise DomainError("cannot build a value map from an empty sequence")
    uniq, counts = np.unique(q, return_counts=True)
    order = np.lexsort((uniq, np.abs(uniq), -counts))
    return CodeTable(uniq[order])


# -- container --------------------------------------------------------------


@dataclass
class EncodedBlob:
    eg_order: int
    quant_exponent: int
    param_count: int
    code_table: CodeTable
    payload: bytes = field(repr=False)
    payload_bit_count: int
    version: int = VERSION
    magic: bytes = MAGIC

    @property
    def avg_bits(self):
        """Payload bits per parameter, excluding header and table."""
        return self.payload_bit_count / self.param_count if self.param_count else 0.0

    def to_bytes(self):
        table = self.code_table.ranked_values
        if table.size and (table.min() < _I32_MIN or table.max() > _I32_MAX):
            raise RangeError("code table values exceed the signed 32-bit range")
        head = _HEAD.pack(
            self.magic,
            self.version,
            self.eg_order,
            self.quant_exponent,
            0,
            self.param_count,
            len(table),
        )
        return b"".join(
            [
                head,
                table.astype("<i4").tobytes(),
                struct.pack("<Q", self.payload_bit_count),
                self.payload,
            ]
        )

    @classmethod
    def from_bytes(cls, data):
        data = bytes(data)
        if len(data) < _HEAD.size:
            if data[:4] != MAGIC[: len(data)]:
                raise FormatError("bad magic")
            raise TruncationError("blob shorter than its header")
        magic, version, k, n, _reserved, count, table_len = _HEAD.unpack_from(data)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"unsupported blob version {version}")
        if k > MAX_ORDER:
            raise FormatError(f"exp-Golomb order {k} out of range")
        off = _HEAD.size
        end_table = off + 4 * table_len
        if len(data) < end_table + 8:
            raise TruncationError("blob truncated inside the code table")
        table = np.frombuffer(data[off:end_table], dtype="<i4").astype(np.int64)
        (bit_count,) = struct.unpack_from("<Q", data, end_table)
        payload = data[end_table + 8 :]
        need = (bit_count + 7) // 8
        if len(payload) < need:
            raise TruncationError(f"payload has {len(payload)} bytes, needs {need}")
        if len(payload) > need:
            raise FormatError("trailing bytes after payload")
        if count and table_len == 0:
            raise CorruptionError("nonempty tensor with an empty code table")
        return cls(k, n, count, CodeTable(table), payload, bit_count, version, magic)


def encode_tensor(params, quant_exponent, k=0):
    """Quantize ``params`` with step ``2**-quant_exponent`` and EG-code the ranks."""
    _check_order(k)
    if not (-128 <= quant_exponent <= 127):
        raise RangeError(f"quantization exponent {quant_exponent} does not fit in i8")
    q = quantize(np.asarray(params, dtype=np.float64).ravel(), quant_exponent)
    if q.size == 0:
        raise DomainError("cannot encode an empty tensor")
    table = build_value_map(q)
    if table.ranked_values.min() < _I32_MIN or table.ranked_values.max() > _I32_MAX:
        raise RangeError("quantized values exceed the signed 32-bit table range")
    payload, nbits = eg_encode_array(table.ranks(q), k)
    return EncodedBlob(k, int(quant_exponent), int(q.size), table, payload, nbits)


def decode_tensor(blob):
    """Recover the quantized integers from a blob (or its serialized bytes)."""
    if isinstance(blob, (bytes, bytearray)):
        blob = EncodedBlob.from_bytes(blob)
    if blob.magic != MAGIC or blob.version != VERSION:
        raise FormatError("bad magic or version")
    ranks, used = eg_decode_array(blob.payload, blob.payload_bit_count, blob.param_count, blob.eg_order)
    if used != blob.payload_bit_count:
        raise CorruptionError(
            f"{blob.payload_bit_count - used} unused payload bits after {blob.param_count} codewords"
        )
    return blob.code_table.values(ranks)


# -- baselines --------------------------------------------------------------


def _counts(quantized):
    q = np.asarray(quantized, dtype=np.int64).ravel()
    if q.size == 0:
        raise DomainError("empty symbol sequence")
    _, counts = np.unique(q, return_counts=True)
    return q.size, counts


def empirical_entropy(quantized):
    """Shannon entropy in bits/symbol of the empirical distribution."""
    n, counts = _counts(quantized)
    p = counts / n
    return float(max(0.0, -np.sum(p * np.log2(p))))


def fixed_length_bits(quantized):
    """Bits per symbol of a fixed-length code over the distinct values present."""
    _, counts = _counts(quantized)
    return max(1, (len(counts) - 1).bit_length())


def huffman_code_lengths(freqs):
    """Optimal prefix-code lengths for ``freqs`` (a mapping symbol -> count).

    A single-symbol alphabet gets length 1.
    """
    items = [(c, s) for s, c in freqs.items() if c > 0]
    if not items:
        raise DomainError("no symbols with positive frequency")
    if len(items) == 1:
        return {items[0][1]: 1}
    lengths = {s: 0 for _, s in items}
    # heap entries: (weight, tiebreak, symbols under this node)
    heap = [(c, i, [s]) for i, (c, s) in enumerate(items)]
    heapq.heapify(heap)
    tiebreak = len(heap)
    while len(heap) > 1:
        w1, _, s1 = heapq.heappop(heap)
        w2, _, s2 = heapq.heappop(heap)
        for s in s1:
            lengths[s] += 1
        for s in s2:
            lengths[s] += 1
        s1.extend(s2)
        heapq.heappush(heap, (w1 + w2, tiebreak, s1))
        tiebreak += 1
    return lengths


def canonical_codes(lengths):
    """Canonical prefix codewords (bit strings) from a symbol -> length mapping."""
    code = 0
    prev = 0
    out = {}
    for sym, length in sorted(lengths.items(), key=lambda kv: (kv[1], kv[0])):
        code <<= length - prev
        out[sym] = format(code, f"0{length}b")
        code += 1
        prev = length
    return out


def huffman_avg_bits(quantized):
    """Average Huffman codeword length in bits/symbol for the empirical frequencies."""
    n, _ = _counts(quantized)
    freqs = Counter(np.asarray(quantized, dtype=np.int64).ravel().tolist())
    lengths = huffman_code_lengths(freqs)
    return sum(freqs[s] * l for s, l in lengths.items()) / n


# -- rate report ------------------------------------------------------------


@dataclass
class RateReport:
    param_count: int
    quant_exponent: int
    distinct_values: int
    fl_bits: int
    eg_bits: dict
    huffman_bits: float
    entropy_bits: float
    eg_total_bytes: dict

    @property
    def eg_best_k(self):
        return min(self.eg_bits, key=lambda k: (self.eg_bits[k], k))

    @property
    def eg_compress(self):
        """1 - EG(k=0)/FL, the headline exp-Golomb saving."""
        return 1.0 - self.eg_bits[0] / self.fl_bits

    @property
    def eg_best_compress(self):
        return 1.0 - self.eg_bits[self.eg_best_k] / self.fl_bits

    @property
    def hm_compress(self):
        return 1.0 - self.huffman_bits / self.fl_bits

    def as_dict(self):
        return {
            "param_count": self.param_count,
            "quant_exponent": self.quant_exponent,
            "distinct_values": self.distinct_values,
            "fl_bits": self.fl_bits,
            "eg_bits": {str(k): v for k, v in self.eg_bits.items()},
            "eg_best_k": self.eg_best_k,
            "huffman_bits": self.huffman_bits,
            "entropy_bits": self.entropy_bits,
            "eg_compress": self.eg_compress,
            "eg_best_compress": self.eg_best_compress,
            "hm_compress": self.hm_compress,
            "eg_total_bytes": {str(k): v for k, v in self.eg_total_bytes.items()},
        }


def rate_report(params, quant_exponent=8, orders=EG_ORDERS):
    """FL / EG(k) / Huffman / entropy bits per parameter for one tensor."""
    q = quantize(np.asarray(params, dtype=np.float64).ravel(), quant_exponent)
    if q.size == 0:
        raise DomainError("rate report of an empty tensor")
    eg_bits = {}
    eg_total = {}
    for k in orders:
        blob = encode_tensor(params, quant_exponent, k)
        eg_bits[k] = blob.avg_bits
        eg_total[k] = len(blob.to_bytes())
    return RateReport(
        param_count=int(q.size),
        quant_exponent=int(quant_exponent),
        distinct_values=int(np.unique(q).size),
        fl_bits=fixed_length_bits(q),
        eg_bits=eg_bits,
        huffman_bits=huffman_avg_bits(q),
        entropy_bits=empirical_entropy(q),
        eg_total_bytes=eg_total,
    )


def eg_avg_bits(params, quant_exponent=8, k=0):
    """Average payload bits/parameter of the EG-``k`` encoding of ``params``.

    Computed from the value counts alone; equals ``encode_tensor(...).avg_bits``.
    """
    q = quantize(params, quant_exponent).ravel()
    if q.size == 0:
        raise DomainError("cannot encode an empty tensor")
    _, counts = np.unique(q, return_counts=True)
    # rank order only needs the counts: ties in count have equal codeword cost
    counts = np.sort(counts)[::-1]
    lengths = eg_lengths(np.arange(counts.size), k)
    return float(np.dot(counts, lengths)) / q.size
