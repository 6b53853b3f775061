"""Interval partitions of [0, 1] and their reconstruction codebooks.

A partition splits the normalized magnitude range into ``n`` intervals
``(b[i], b[i+1]]`` with ``b[0] = 0``, ``b[1] = x0`` and ``b[n] = 1``.
Bin 0 additionally owns the value 0 itself.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


class Scheme(str, enum.Enum):
    LINEAR = "linear"
    EXPONENTIAL = "exponential"


class Rounding(str, enum.Enum):
    FLOOR = "floor"
    CEIL = "ceil"
    MEAN = "mean"


# on-disk enum codes, fixed by the packed file format
SCHEME_CODES = {Scheme.LINEAR: 0, Scheme.EXPONENTIAL: 1}
ROUNDING_CODES = {Rounding.FLOOR: 0, Rounding.CEIL: 1, Rounding.MEAN: 2}


def intervals_for_bits(bits: int) -> int:
    """Number of magnitude intervals when one of ``bits`` is spent on the sign."""
    if bits < 2:
        raise DomainError(f"bits must be >= 2, got {bits}")
    return 1 << (bits - 1)


@dataclass(frozen=True, eq=False)
class Partition:
    scheme: Scheme
    x0: float
    n: int
    q: float
    boundaries: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.boundaries.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return (
            self.scheme == other.scheme
            and self.x0 == other.x0
            and self.n == other.n
            and self.q == other.q
            and np.array_equal(self.boundaries, other.boundaries)
        )

    __hash__ = None

    @property
    def lower(self) -> np.ndarray:
        return self.boundaries[:-1]

    @property
    def upper(self) -> np.ndarray:
        return self.boundaries[1:]

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.boundaries)


@dataclass(frozen=True, eq=False)
class Codebook:
    rounding: Rounding
    values: np.ndarray

    def __post_init__(self):
        self.values.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return self.rounding == other.rounding and np.array_equal(self.values, other.values)

    __hash__ = None

    def __len__(self):
        return len(self.values)


def boundary_points(scheme, x0, n: int):
    """Return ``(q, boundaries)`` without validation.

    ``x0`` may be a scalar or a 1-D array of candidates, in which case
    ``boundaries`` has shape ``(len(x0), n + 1)``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    k = np.arange(n, dtype=np.float64)
    x = x0[..., None]
    if Scheme(scheme) is Scheme.LINEAR:
        q = (1.0 - x) / (n - 1)
        pts = x + q * k
    else:
        q = x ** (-1.0 / (n - 1))
        pts = x * q**k
    b = np.empty(x0.shape + (n + 1,))
    b[..., 0] = 0.0
    b[..., 1:] = pts
    b[..., 1] = x0
    b[..., n] = 1.0
    return q[..., 0], b


def make_partition(scheme, x0: float, n: int) -> Partition:
    """Build a linear or exponential partition with first boundary ``x0``.

    Raises ``DomainError`` unless ``0 < x0 < 1`` and ``n >= 2``.
    """
    scheme = Scheme(scheme)
    n = int(n)
    x0 = float(x0)
    if n < 2:
        raise DomainError(f"interval count n must be >= 2, got {n}")
    if not (0.0 < x0 < 1.0):
        raise DomainError(f"x0 must lie in the open interval (0, 1), got {x0}")
    q, b = boundary_points(scheme, x0, n)
    if not np.all(np.diff(b) > 0):
        # only reachable when x0 is within a few ulps of 1
        raise DomainError(f"x0={x0} produces non-increasing boundaries")
    return Partition(scheme=scheme, x0=x0, n=n, q=float(q), boundaries=b)


def assign_bins(magnitudes, p: Partition) -> np.ndarray:
    """Map each magnitude ``v`` to ``i`` with ``b[i] < v <= b[i+1]``; 0 goes to bin 0."""
    v = np.asarray(magnitudes, dtype=np.float64)
    idx = np.searchsorted(p.boundaries, v, side="left") - 1
    # clip covers v == 0 (-> -1) and guards values marginally above 1
    return np.clip(idx, 0, p.n - 1).astype(np.int64)


def build_codebook(magnitudes, bins, p: Partition, rounding) -> Codebook:
    rounding = Rounding(rounding)
    if rounding is Rounding.FLOOR:
        values = p.lower.copy()
    elif rounding is Rounding.CEIL:
        values = p.upper.copy()
    else:
        v = np.asarray(magnitudes, dtype=np.float64).ravel()
        bins = np.asarray(bins).ravel()
        sums = np.bincount(bins, weights=v, minlength=p.n)
        counts = np.bincount(bins, minlength=p.n)
        mid = 0.5 * (p.lower + p.upper)
        with np.errstate(invalid="ignore", divide="ignore"):
            values = np.where(counts > 0, sums / np.maximum(counts, 1), mid)
        # floating summation can drift a hair outside a tight interval
        values = np.clip(values, p.lower, p.upper)
    return Codebook(rounding=rounding, values=values)


def reconstruct(magnitudes, p: Partition, rounding) -> tuple[np.ndarray, Codebook]:
    bins = assign_bins(magnitudes, p)
    cb = build_codebook(magnitudes, bins, p, rounding)
    return cb.values[bins], cb
