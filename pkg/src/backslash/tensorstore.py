"""Parameter tensors: the GGRT container, quantization and magnitude pruning.

GGRT record layout (all little-endian)::

    b"GGRT" | version u8 = 1 | dtype u8 = 1 (float64) | name_len u16 | name utf-8
    | ndims u8 | dims u64 * ndims | values float64 * prod(dims)

A file may hold several records back to back; :func:`load_tensors` reads them
all.
"""

from __future__ import annotations

import io
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FormatError, RangeError, TruncationError

MAGIC = b"GGRT"
VERSION = 1
DTYPE_F64 = 1

_HEAD = struct.Struct("<4sBBH")
_U64_LIMIT = 2**63


@dataclass
class ParameterTensor:
    name: str
    dims: tuple
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64).ravel()
        if not self.dims or any(d <= 0 for d in self.dims):
            raise FormatError(f"dims must be a nonempty list of positive integers: {self.dims}")
        if math.prod(self.dims) != self.values.size:
            raise FormatError(
                f"dims {self.dims} hold {math.prod(self.dims)} values, got {self.values.size}"
            )
        if not np.all(np.isfinite(self.values)):
            raise FormatError(f"tensor {self.name!r} has non-finite values")

    @classmethod
    def from_array(cls, name, array):
        array = np.asarray(array, dtype=np.float64)
        dims = array.shape if array.ndim else (1,)
        return cls(name, dims, array.ravel())

    def to_array(self):
        return self.values.reshape(self.dims)

    def __eq__(self, other):
        if not isinstance(other, ParameterTensor):
            return NotImplemented
        return (
            self.name == other.name
            and self.dims == other.dims
            and self.values.tobytes() == other.values.tobytes()
        )


def _write_record(fp, t):
    name = t.name.encode("utf-8")
    if len(name) > 0xFFFF:
        raise FormatError("tensor name longer than 65535 bytes")
    if len(t.dims) > 0xFF:
        raise FormatError("more than 255 dimensions")
    fp.write(_HEAD.pack(MAGIC, VERSION, DTYPE_F64, len(name)))
    fp.write(name)
    fp.write(struct.pack("<B", len(t.dims)))
    fp.write(struct.pack(f"<{len(t.dims)}Q", *t.dims))
    fp.write(t.values.astype("<f8", copy=False).tobytes())


def _read_exact(fp, n):
    data = fp.read(n)
    if len(data) != n:
        raise TruncationError(f"expected {n} bytes, got {len(data)}")
    return data


def _read_record(fp):
    head = fp.read(_HEAD.size)
    if not head:
        return None
    if len(head) != _HEAD.size:
        raise TruncationError("truncated GGRT header")
    magic, version, dtype, name_len = _HEAD.unpack(head)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported GGRT version {version}")
    if dtype != DTYPE_F64:
        raise FormatError(f"unsupported dtype code {dtype}")
    try:
        name = _read_exact(fp, name_len).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"tensor name is not valid UTF-8: {exc}") from None
    (ndims,) = struct.unpack("<B", _read_exact(fp, 1))
    if ndims == 0:
        raise FormatError("tensor has no dimensions")
    dims = struct.unpack(f"<{ndims}Q", _read_exact(fp, 8 * ndims))
    if any(d == 0 or d >= _U64_LIMIT for d in dims):
        raise FormatError(f"invalid dims {dims}")
    count = math.prod(dims)
    values = np.frombuffer(_read_exact(fp, 8 * count), dtype="<f8").astype(np.float64)
    return ParameterTensor(name, dims, values)


def save_tensors(tensors, destination):
    """Write tensors as concatenated GGRT records to a path or binary stream."""
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "wb") as fp:
            save_tensors(tensors, fp)
        return
    for t in tensors:
        _write_record(destination, t)


def save_tensor(t, destination):
    save_tensors([t], destination)


def load_tensors(source):
    """Read every GGRT record from a path, bytes object or binary stream."""
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fp:
            return load_tensors(fp)
    out = []
    while True:
        t = _read_record(source)
        if t is None:
            break
        out.append(t)
    if not out:
        raise FormatError("no GGRT records found")
    return out


def load_tensor(source):
    """Read a single GGRT tensor; files with several records are rejected."""
    tensors = load_tensors(source)
    if len(tensors) != 1:
        raise FormatError(f"expected one tensor, found {len(tensors)}")
    return tensors[0]


def quantize(params, n):
    """Round ``2**n * params`` half away from zero to int64."""
    a = np.asarray(params, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise DomainError("cannot quantize non-finite values")
    scaled = np.abs(a) * math.ldexp(1.0, int(n))
    if scaled.size and not np.all(scaled < _U64_LIMIT - 1024):
        raise RangeError(f"quantized magnitude exceeds 63 bits at step 2^-{n}")
    # floor + fractional test, since floor(x + 0.5) misrounds just below .5
    q = np.floor(scaled)
    q += (scaled - q) >= 0.5
    return (np.sign(a) * q).astype(np.int64)


def dequantize(quantized, n):
    """Map integers back to reals: ``q * 2**-n``."""
    return np.asarray(quantized, dtype=np.int64).astype(np.float64) * math.ldexp(1.0, -int(n))


def prune_count(size, rate):
    if not (0.0 <= rate <= 1.0):
        raise DomainError(f"pruning rate must lie in [0, 1], got {rate!r}")
    # snap products like 0.29 * 100 = 28.999999999999996 to the intended integer
    x = rate * size
    r = round(x)
    return r if abs(x - r) < 1e-9 * max(1, size) else math.floor(x)


def prune(params, rate):
    """Zero the ``floor(rate * N)`` smallest-magnitude entries.

    Ties are broken by position, earlier entries first. Returns a new array
    of the same shape.
    """
    a = np.asarray(params, dtype=np.float64)
    flat = a.ravel().copy()
    k = prune_count(flat.size, rate)
    if k:
        order = np.argsort(np.abs(flat), kind="stable")
        flat[order[:k]] = 0.0
    return flat.reshape(a.shape)
