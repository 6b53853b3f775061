"""Binary containers: raw tensors (``WQT1``) and bit-packed quantized tensors (``WQP1``).

Both formats are little-endian::

    WQT1  magic[4] version:u8 dtype:u8 ndim:u8 dims:u64*ndim payload
    WQP1  magic[4] version:u8 bits:u8 scheme:u8 rounding:u8 ndim:u8 dims:u64*ndim
          M:f64 rescale:f64 codebook:f64*2^(bits-1) records

Each packed record is ``bits`` wide: a sign bit (1 = negative) followed by
the interval code, written MSB-first; the last byte is zero-padded.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError
from .partition import ROUNDING_CODES, SCHEME_CODES, Codebook, Rounding, Scheme, intervals_for_bits
from .quantizer import MAX_BITS, MIN_BITS, QuantizedTensor

TENSOR_MAGIC = b"WQT1"
PACKED_MAGIC = b"WQP1"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}
_SCHEMES = {v: k for k, v in SCHEME_CODES.items()}
_ROUNDINGS = {v: k for k, v in ROUNDING_CODES.items()}
MAX_ELEMENTS = 1 << 40

_UMASK = os.umask(0)
os.umask(_UMASK)


def atomic_write(path, data: bytes) -> Path:
    """Write ``data`` via a temporary sibling file and rename it into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
    return path


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, size: int, field: str) -> bytes:
        if self.pos + size > len(self.data):
            raise FormatError(field, f"truncated: need {size} bytes at offset {self.pos}, file has {len(self.data)}", self.path)
        out = self.data[self.pos:self.pos + size]
        self.pos += size
        return out

    def u8(self, field: str) -> int:
        return self.take(1, field)[0]

    def f64(self, field: str) -> float:
        return struct.unpack("<d", self.take(8, field))[0]

    def dims(self) -> tuple:
        ndim = self.u8("ndim")
        dims = struct.unpack(f"<{ndim}Q", self.take(8 * ndim, "dims"))
        total = 1
        for d in dims:
            total *= d
            if total > MAX_ELEMENTS:
                raise FormatError("dims", f"element count overflows ({dims})", self.path)
        return tuple(int(d) for d in dims)

    def finish(self):
        if self.pos != len(self.data):
            raise FormatError("payload", f"{len(self.data) - self.pos} trailing bytes", self.path)


def _header_dims(shape) -> bytes:
    shape = tuple(int(d) for d in shape)
    if len(shape) > 255:
        raise FormatError("ndim", f"{len(shape)} dimensions do not fit in u8")
    return struct.pack(f"<B{len(shape)}Q", len(shape), *shape)


def tensor_bytes(array) -> bytes:
    a = np.asarray(array)
    if a.dtype not in _DTYPE_CODES:
        raise FormatError("dtype", f"unsupported dtype {a.dtype}; use float32 or float64")
    code = _DTYPE_CODES[a.dtype]
    head = TENSOR_MAGIC + struct.pack("<BB", VERSION, code) + _header_dims(a.shape)
    return head + np.ascontiguousarray(a, dtype=DTYPES[code]).tobytes()


def parse_tensor(data: bytes, path=None) -> np.ndarray:
    r = _Reader(data, path)
    if r.take(4, "magic") != TENSOR_MAGIC:
        raise FormatError("magic", f"expected {TENSOR_MAGIC!r}", path)
    if (v := r.u8("version")) != VERSION:
        raise FormatError("version", f"unsupported version {v}", path)
    code = r.u8("dtype")
    if code not in DTYPES:
        raise FormatError("dtype", f"unknown dtype code {code}", path)
    shape = r.dims()
    dt = DTYPES[code]
    count = int(np.prod(shape, dtype=np.int64))
    payload = r.take(count * dt.itemsize, "payload")
    r.finish()
    return np.frombuffer(payload, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))


def write_tensor(path, array) -> Path:
    return atomic_write(path, tensor_bytes(array))


def read_tensor(path) -> np.ndarray:
    return parse_tensor(Path(path).read_bytes(), path)


def packed_bytes(q: QuantizedTensor) -> bytes:
    bits = int(q.bits)
    if not MIN_BITS <= bits <= MAX_BITS:
        raise FormatError("bits", f"must be in [{MIN_BITS}, {MAX_BITS}], got {bits}")
    n = intervals_for_bits(bits)
    if len(q.codebook.values) != n:
        raise FormatError("codebook", f"expected {n} entries, got {len(q.codebook.values)}")
    head = PACKED_MAGIC + struct.pack(
        "<BBBB", VERSION, bits, SCHEME_CODES[Scheme(q.scheme)], ROUNDING_CODES[Rounding(q.codebook.rounding)]
    )
    head += _header_dims(q.shape) + struct.pack("<dd", q.M, q.rescale)
    head += np.asarray(q.codebook.values, dtype="<f8").tobytes()

    codes = np.asarray(q.codes, dtype=np.uint16).ravel()
    if codes.size and int(codes.max()) >= n:
        raise FormatError("codes", f"code {int(codes.max())} out of range for {n} intervals")
    neg = (np.asarray(q.signs).ravel() < 0).astype(np.uint16)
    records = (neg << (bits - 1)) | codes
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint16)
    bitmat = ((records[:, None] >> shifts) & 1).astype(np.uint8)
    return head + np.packbits(bitmat.ravel()).tobytes()


def parse_packed(data: bytes, path=None) -> QuantizedTensor:
    r = _Reader(data, path)
    if r.take(4, "magic") != PACKED_MAGIC:
        raise FormatError("magic", f"expected {PACKED_MAGIC!r}", path)
    if (v := r.u8("version")) != VERSION:
        raise FormatError("version", f"unsupported version {v}", path)
    bits = r.u8("bits")
    if not MIN_BITS <= bits <= MAX_BITS:
        raise FormatError("bits", f"must be in [{MIN_BITS}, {MAX_BITS}], got {bits}", path)
    sc = r.u8("scheme")
    if sc not in _SCHEMES:
        raise FormatError("scheme", f"unknown scheme code {sc}", path)
    rc = r.u8("rounding")
    if rc not in _ROUNDINGS:
        raise FormatError("rounding", f"unknown rounding code {rc}", path)
    shape = r.dims()
    M = r.f64("M")
    rescale = r.f64("rescale")
    n = intervals_for_bits(bits)
    values = np.frombuffer(r.take(8 * n, "codebook"), dtype="<f8").astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise FormatError("codebook", "non-finite entry", path)
    count = int(np.prod(shape, dtype=np.int64))
    nbytes = (count * bits + 7) // 8
    payload = np.frombuffer(r.take(nbytes, "payload"), dtype=np.uint8)
    r.finish()

    bitmat = np.unpackbits(payload)[: count * bits].reshape(count, bits).astype(np.uint16)
    weights = (1 << np.arange(bits - 2, -1, -1)).astype(np.uint16)
    codes = (bitmat[:, 1:] @ weights).astype(np.uint8)
    signs = np.where(bitmat[:, 0] == 1, -1, 1).astype(np.int8)
    return QuantizedTensor(
        shape=shape, M=M, signs=signs, codes=codes, codebook=Codebook(_ROUNDINGS[rc], values),
        scheme=_SCHEMES[sc], bits=bits, rescale=rescale, x0=None,
    )


def pack(q: QuantizedTensor, path) -> Path:
    return atomic_write(path, packed_bytes(q))


def unpack(path) -> QuantizedTensor:
    return parse_packed(Path(path).read_bytes(), path)


def payload_size(count: int, bits: int) -> int:
    return (count * bits + 7) // 8


def header_size(ndim: int, bits: int) -> int:
    return 4 + 4 + 1 + 8 * ndim + 16 + 8 * intervals_for_bits(bits)


def packed_header(path) -> dict:
    """Decode the header and codebook of a packed file without its payload."""
    data = Path(path).read_bytes()
    q = parse_packed(data, path)
    return {
        "file": str(path), "bits": q.bits, "n": q.n, "scheme": q.scheme.value,
        "rounding": q.codebook.rounding.value, "shape": list(q.shape), "M": q.M,
        "rescale": q.rescale, "codebook": [float(v) for v in q.codebook.values],
        "file_bytes": len(data), "payload_bytes": payload_size(q.size, q.bits),
    }


def write_manifest(path, layers: list[dict], **extra) -> Path:
    doc = dict(extra)
    doc["layers"] = layers
    return atomic_write(path, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())


def read_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or not isinstance(doc.get("layers"), list):
        raise FormatError("layers", "manifest must be an object with a 'layers' list", path)
    return doc
