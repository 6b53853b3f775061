"""Tensor quantization: normalization, correlation, x0 selection and rescaling."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import ConstantArrayError, DomainError
from .partition import (
    Codebook,
    Rounding,
    Scheme,
    assign_bins,
    boundary_points,
    build_codebook,
    intervals_for_bits,
    make_partition,
)

log = logging.getLogger(__name__)

MIN_BITS, MAX_BITS = 2, 8
X0_EPS = 1e-6

# default sweep grid, in units of the sample standard deviation
GRID_POINTS = 400
GRID_LO, GRID_HI = 0.02, 4.0


@dataclass(frozen=True, eq=False)
class NormalizedTensor:
    signs: np.ndarray
    magnitudes: np.ndarray
    M: float
    shape: tuple

    @property
    def degenerate(self) -> bool:
        return self.M == 0.0

    def restore(self) -> np.ndarray:
        return (self.signs * self.magnitudes * self.M).reshape(self.shape)


def normalize(weights) -> NormalizedTensor:
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        raise DomainError("cannot normalize an empty tensor")
    flat = w.ravel()
    M = float(np.max(np.abs(flat)))
    signs = np.sign(flat).astype(np.int8)
    if M == 0.0:
        mags = np.zeros_like(flat)
    else:
        mags = np.abs(flat) / M
    return NormalizedTensor(signs=signs, magnitudes=mags, M=M, shape=tuple(w.shape))


def canonical_signs(signs) -> np.ndarray:
    """Signs in {-1, +1}; zero weights count as positive, as they are stored."""
    return np.where(np.asarray(signs) < 0, -1, 1).astype(np.int8)


def correlation(x, y) -> float:
    """Pearson correlation with population standard deviations."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DomainError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise DomainError("correlation needs at least two points")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ConstantArrayError("correlation undefined for a constant array")
    # centred form of mean(xy) - mean(x) mean(y); avoids cancellation for large offsets
    dx, dy = x - x.mean(), y - y.mean()
    dx, dy = dx / np.abs(dx).max(), dy / np.abs(dy).max()  # scale so squares cannot underflow
    rho = np.mean(dx * dy) / (np.sqrt(np.mean(dx * dx)) * np.sqrt(np.mean(dy * dy)))
    return float(np.clip(rho, -1.0, 1.0))


@dataclass(frozen=True, eq=False)
class SweepResult:
    grid: np.ndarray
    correlations: np.ndarray
    best_x0: float
    best_rho: float
    sigma: float

    @property
    def grid_sigma(self) -> np.ndarray:
        return self.grid / self.sigma

    @property
    def best_x0_sigma(self) -> float:
        return self.best_x0 / self.sigma


def default_grid(sigma: float, points: int = GRID_POINTS, lo: float = GRID_LO, hi: float = GRID_HI) -> np.ndarray:
    """Log-spaced x0 candidates over ``[lo, hi] * sigma``, clipped into (0, 1)."""
    g = np.geomspace(lo, hi, points) * sigma
    return np.clip(g, X0_EPS, 1.0 - X0_EPS)


def _prefix(a):
    out = np.zeros(a.size + 1)
    np.cumsum(a, out=out[1:])
    return out


def sweep_x0(magnitudes, scheme, rounding, bits: int, grid=None, *, signs=None, sigma=None) -> SweepResult:
    """Scan x0 candidates and return the correlation curve and its maximum.

    With ``signs`` the correlation is taken between the signed values and
    their signed reconstruction; without, between magnitudes and
    reconstructed magnitudes. ``sigma`` sets the grid unit and defaults to
    the standard deviation of the signed values (RMS magnitude when no
    signs are given). Grid points where the reconstruction collapses to a
    constant score ``-inf``.

    Bins are contiguous runs of the sorted sample, so every candidate is
    evaluated from prefix sums in O(n log N).
    """
    scheme, rounding = Scheme(scheme), Rounding(rounding)
    n = intervals_for_bits(bits)
    m = np.asarray(magnitudes, dtype=np.float64).ravel()
    N = m.size
    if N < 2:
        raise DomainError("sweep needs at least two samples")
    order = np.argsort(m, kind="stable")
    ms = m[order]
    if signs is None:
        s = None
        if sigma is None:
            sigma = float(np.sqrt(np.mean(m * m)))
    else:
        s = canonical_signs(np.asarray(signs).ravel())[order].astype(np.float64)
        if sigma is None:
            sigma = float(np.std(s * ms))
    if grid is None:
        grid = default_grid(sigma)
    grid = np.asarray(grid, dtype=np.float64)

    _, b = boundary_points(scheme, grid, n)
    r = np.searchsorted(ms, b.ravel(), side="right").reshape(b.shape)
    r[:, 0] = 0
    r[:, -1] = N
    P_m = _prefix(ms)
    C = np.diff(r, axis=1).astype(np.float64)
    Msum = np.diff(P_m[r], axis=1)

    if rounding is Rounding.FLOOR:
        v = b[:, :-1]
    elif rounding is Rounding.CEIL:
        v = b[:, 1:]
    else:
        mid = 0.5 * (b[:, :-1] + b[:, 1:])
        with np.errstate(invalid="ignore", divide="ignore"):
            v = np.where(C > 0, Msum / np.maximum(C, 1.0), mid)
        v = np.clip(v, b[:, :-1], b[:, 1:])

    if s is None:
        x = ms
        Sy = np.sum(v * C, axis=1)
    else:
        x = s * ms
        S = np.diff(_prefix(s)[r], axis=1)
        Sy = np.sum(v * S, axis=1)
    Syy = np.sum(v * v * C, axis=1)
    Sxy = np.sum(v * Msum, axis=1)
    mx = x.mean()
    sx = x.std()
    if sx == 0.0:
        raise ConstantArrayError("sample has zero variance")
    my = Sy / N
    vy = Syy / N - my * my
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = (Sxy / N - mx * my) / (sx * np.sqrt(vy))
    collapsed = ~(vy > 1e-14 * np.maximum(Syy / N, 1e-300))
    rho = np.where(collapsed, -np.inf, np.clip(rho, -1.0, 1.0))

    if not np.any(np.isfinite(rho)):
        raise ConstantArrayError("reconstruction is constant for every grid point")
    i = int(np.argmax(rho))  # first maximum, i.e. smallest x0 on ties
    return SweepResult(grid=grid, correlations=rho, best_x0=float(grid[i]), best_rho=float(rho[i]), sigma=float(sigma))


def heuristic_x0(sigma: float, M: float, bits: int) -> float:
    """Closed-form x0 guess ``4 sigma / (M 2^bits)`` on the max-normalized scale."""
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    if not M > 0:
        raise DomainError(f"M must be positive, got {M}")
    if bits < MIN_BITS:
        raise DomainError(f"bits must be >= {MIN_BITS}, got {bits}")
    x0 = (sigma / M) * 2.0 ** (2 - bits)
    return float(min(max(x0, X0_EPS), 1.0 - X0_EPS))


@dataclass(frozen=True, eq=False)
class QuantizedTensor:
    """Sign bits, interval codes and codebook of one quantized tensor.

    ``x0`` is informational; it is not part of the packed format and is
    ``None`` after unpacking. Equality ignores it.
    """

    shape: tuple
    M: float
    signs: np.ndarray
    codes: np.ndarray
    codebook: Codebook
    scheme: Scheme
    bits: int
    rescale: float
    x0: float | None = None

    @property
    def n(self) -> int:
        return intervals_for_bits(self.bits)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    def dequantize(self, rescale: bool = True) -> np.ndarray:
        d = self.signs * self.codebook.values[self.codes] * self.M
        if rescale:
            d = d * self.rescale
        return d.reshape(self.shape)

    def __eq__(self, other):
        if not isinstance(other, QuantizedTensor):
            return NotImplemented
        return (
            tuple(self.shape) == tuple(other.shape)
            and self.M == other.M
            and self.bits == other.bits
            and self.scheme == other.scheme
            and self.rescale == other.rescale
            and self.codebook == other.codebook
            and np.array_equal(self.signs, other.signs)
            and np.array_equal(self.codes, other.codes)
        )

    __hash__ = None


def _check_bits(bits):
    if not (MIN_BITS <= int(bits) <= MAX_BITS):
        raise DomainError(f"bits must be in [{MIN_BITS}, {MAX_BITS}], got {bits}")
    return int(bits)


def resolve_x0(nt: NormalizedTensor, scheme, rounding, bits: int, x0) -> float:
    """Turn an x0 mode (``"sweep"``, ``"heuristic"`` or a number) into a value."""
    if isinstance(x0, str):
        mode = x0.lower()
        if mode == "heuristic":
            sigma = float(np.std(nt.signs * nt.magnitudes)) * nt.M
            return heuristic_x0(sigma, nt.M, bits)
        if mode == "sweep":
            return sweep_x0(nt.magnitudes, scheme, rounding, bits, signs=nt.signs).best_x0
        try:
            x0 = float(mode)
        except ValueError:
            raise DomainError(f"unknown x0 mode {x0!r}") from None
    x0 = float(x0)
    if not (0.0 < x0 < 1.0):
        raise DomainError(f"x0 must lie in the open interval (0, 1), got {x0}")
    return x0


def quantize_tensor(weights, scheme="exponential", rounding="ceil", bits: int = 4, x0="heuristic") -> QuantizedTensor:
    """Quantize ``weights`` to ``bits`` bits per value (one sign bit included).

    The result is rescaled so the dequantized tensor keeps the standard
    deviation of the input. Constant tensors (including all-zero ones) are
    represented exactly, with ``rescale = 1``.
    """
    scheme, rounding = Scheme(scheme), Rounding(rounding)
    bits = _check_bits(bits)
    n = intervals_for_bits(bits)
    w = np.asarray(weights, dtype=np.float64)
    nt = normalize(w)
    signs = canonical_signs(nt.signs)
    constant = bool(np.all(w == w.flat[0]))

    if constant:
        # no spread to fit x0 to; any valid value reproduces the tensor exactly
        x0v = 0.5 if str(x0).lower() in ("sweep", "heuristic") else resolve_x0(nt, scheme, rounding, bits, x0)
        p = make_partition(scheme, x0v, n)
        codes = assign_bins(nt.magnitudes, p)
        values = np.array(build_codebook(nt.magnitudes, codes, p, rounding).values)
        values[-1] = 1.0  # every nonzero magnitude here is exactly 1
        return QuantizedTensor(
            shape=nt.shape, M=nt.M, signs=signs, codes=codes.astype(np.uint8),
            codebook=Codebook(rounding, values), scheme=scheme, bits=bits, rescale=1.0, x0=x0v,
        )

    x0v = resolve_x0(nt, scheme, rounding, bits, x0)
    p = make_partition(scheme, x0v, n)
    codes = assign_bins(nt.magnitudes, p)
    cb = build_codebook(nt.magnitudes, codes, p, rounding)
    qt = QuantizedTensor(
        shape=nt.shape, M=nt.M, signs=signs, codes=codes.astype(np.uint8),
        codebook=cb, scheme=scheme, bits=bits, rescale=1.0, x0=x0v,
    )
    raw = qt.dequantize(rescale=False)
    if np.ptp(raw) == 0.0:
        log.warning("reconstruction collapsed to a constant; variance rescale skipped")
        return qt
    # ratio taken in normalized units so tiny tensors cannot underflow
    unit = signs.astype(np.float64) * cb.values[codes]
    rescale = float(np.std(signs * nt.magnitudes)) / float(np.std(unit))
    return QuantizedTensor(
        shape=nt.shape, M=nt.M, signs=signs, codes=qt.codes, codebook=cb,
        scheme=scheme, bits=bits, rescale=rescale, x0=x0v,
    )


@dataclass
class LayerReport:
    name: str
    params: int
    quantized: bool
    sigma: float = float("nan")
    M: float = float("nan")
    x0: float = float("nan")
    rho: float = float("nan")
    rho_magnitude: float = float("nan")
    bits: int = 0
    note: str = ""

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def skip_low_rank(name: str, array: np.ndarray) -> bool:
    """Default skip rule: leave biases and other vectors unquantized."""
    return np.ndim(array) <= 1


def tensor_report(name: str, weights, qt: QuantizedTensor) -> LayerReport:
    w = np.asarray(weights, dtype=np.float64)
    d = qt.dequantize()
    rep = LayerReport(
        name=name, params=int(w.size), quantized=True, sigma=float(np.std(w)),
        M=qt.M, x0=float("nan") if qt.x0 is None else qt.x0, bits=qt.bits,
    )
    try:
        rep.rho = correlation(w, d)
        mags = np.abs(w).ravel()
        rep.rho_magnitude = correlation(mags, np.abs(d).ravel())
    except ConstantArrayError:
        rep.note = "degenerate"
    return rep


@dataclass
class NetworkQuantization:
    layers: list = field(default_factory=list)  # (name, QuantizedTensor | ndarray)
    reports: list = field(default_factory=list)

    @property
    def quantized_fraction(self) -> float:
        total = sum(r.params for r in self.reports)
        done = sum(r.params for r in self.reports if r.quantized)
        return done / total if total else 0.0

    def dequantized(self) -> dict:
        out = {}
        for name, obj in self.layers:
            out[name] = obj.dequantize() if isinstance(obj, QuantizedTensor) else obj
        return out


def quantize_network(
    layers: Iterable[tuple[str, np.ndarray]] | dict,
    bits: int,
    scheme="exponential",
    rounding="ceil",
    skip: Callable[[str, np.ndarray], bool] | None = skip_low_rank,
    x0="heuristic",
) -> NetworkQuantization:
    """Quantize every layer not selected by ``skip``; others pass through.

    A layer that fails to quantize is logged, reported and passed through.
    """
    bits = _check_bits(bits)
    if isinstance(layers, dict):
        layers = layers.items()
    skip = skip or (lambda name, a: False)
    out = NetworkQuantization()
    for name, arr in layers:
        a = np.asarray(arr)
        if skip(name, a):
            out.layers.append((name, arr))
            out.reports.append(LayerReport(name=name, params=int(a.size), quantized=False, note="skipped"))
            continue
        try:
            qt = quantize_tensor(a, scheme, rounding, bits, x0=x0)
        except ValueError as exc:
            log.warning("layer %s passed through: %s", name, exc)
            out.layers.append((name, arr))
            out.reports.append(LayerReport(name=name, params=int(a.size), quantized=False, note=str(exc)))
            continue
        out.layers.append((name, qt))
        out.reports.append(tensor_report(name, a, qt))
    return out
