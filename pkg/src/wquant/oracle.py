"""Exact optimal arbitrary-interval quantizer under conditional-mean reconstruction.

For a fixed set of cells the reconstruction by cell means satisfies
``cov(x, y) = var(y)``, so ``corr(x, y) = std(y) / std(x)``. Maximizing the
correlation is therefore the same as maximizing ``var(y)``, i.e. minimizing
the within-cell sum of squares: one-dimensional k-means, which a dynamic
program over the sorted sample solves exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .quantizer import canonical_signs, correlation

MAX_SAMPLES = 20_000


@dataclass(frozen=True, eq=False)
class OptimalQuantizer:
    cut_points: np.ndarray
    codebook: np.ndarray
    rho: float
    signed_rho: float | None = None
    within_ss: float = 0.0

    @property
    def n(self) -> int:
        return len(self.codebook)

    def assign(self, values) -> np.ndarray:
        return np.searchsorted(self.cut_points, np.asarray(values, dtype=np.float64), side="right")

    def reconstruct(self, values) -> np.ndarray:
        return self.codebook[self.assign(values)]


def _subsample(order: np.ndarray, limit: int) -> np.ndarray:
    if order.size <= limit:
        return order
    pick = np.round(np.linspace(0, order.size - 1, limit)).astype(np.int64)
    return order[pick]


def kmeans_1d(values, weights, k: int) -> tuple[np.ndarray, float]:
    """Optimal contiguous split of sorted ``values`` into ``k`` groups.

    ``values`` must be strictly increasing. Returns the start index of each
    group and the minimal weighted within-group sum of squares.
    """
    u = np.asarray(values, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    U = u.size
    if k > U:
        raise DomainError(f"need at least {k} distinct values, got {U}")
    uc = u - np.average(u, weights=w)  # centring keeps the prefix sums well conditioned
    W = np.concatenate([[0.0], np.cumsum(w)])
    S1 = np.concatenate([[0.0], np.cumsum(w * uc)])
    S2 = np.concatenate([[0.0], np.cumsum(w * uc * uc)])

    def cost(j, i):
        # cells hold values j..i inclusive; j may be an array
        c = W[i + 1] - W[j]
        s = S1[i + 1] - S1[j]
        return np.maximum(S2[i + 1] - S2[j] - s * s / c, 0.0)

    idx = np.arange(U)
    prev = cost(np.zeros(U, dtype=np.int64), idx)
    starts = np.zeros((k, U), dtype=np.int64)
    for layer in range(1, k):
        cur = np.full(U, np.inf)
        arg = np.zeros(U, dtype=np.int64)
        # monotone argmin: divide and conquer over end indices
        stack = [(layer, U - 1, layer, U - 1)]
        while stack:
            lo, hi, optlo, opthi = stack.pop()
            if lo > hi:
                continue
            mid = (lo + hi) // 2
            j = np.arange(max(optlo, layer), min(mid, opthi) + 1)
            vals = prev[j - 1] + cost(j, mid)
            t = int(np.argmin(vals))
            cur[mid] = vals[t]
            arg[mid] = j[t]
            stack.append((lo, mid - 1, optlo, arg[mid]))
            stack.append((mid + 1, hi, arg[mid], opthi))
        starts[layer] = arg
        prev = cur

    bounds = np.zeros(k, dtype=np.int64)
    end = U - 1
    for layer in range(k - 1, 0, -1):
        bounds[layer] = starts[layer, end]
        end = bounds[layer] - 1
    return bounds, float(prev[U - 1])


def optimal_partition(magnitudes, n: int, *, signs=None, max_samples: int = MAX_SAMPLES) -> OptimalQuantizer:
    """Best ``n``-cell quantizer of ``magnitudes`` with cell-mean reconstruction.

    Equal values are never split across cells. Samples beyond
    ``max_samples`` are thinned by an even stride over the sorted order.
    When ``signs`` are given, ``signed_rho`` holds the correlation between
    the signed samples and their signed reconstruction.
    """
    n = int(n)
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    x = np.asarray(magnitudes, dtype=np.float64).ravel()
    order = _subsample(np.argsort(x, kind="stable"), max_samples)
    xs = x[order]
    u, counts = np.unique(xs, return_counts=True)
    if u.size < n:
        raise DomainError(f"need at least {n} distinct values, got {u.size}")

    starts, wss = kmeans_1d(u, counts, n)
    ends = np.append(starts[1:], u.size)
    W = np.add.reduceat(counts, starts).astype(np.float64)
    codebook = np.add.reduceat(u * counts, starts) / W
    cut_points = 0.5 * (u[ends[:-1] - 1] + u[starts[1:]])

    cell = np.searchsorted(cut_points, xs, side="right")
    y = codebook[cell]
    rho = correlation(xs, y)
    sx = float(xs.std())
    identity = float(y.std()) / sx if sx > 0 else rho
    if abs(rho - identity) > 1e-9:
        raise AssertionError(f"mean-rounding identity violated: {rho} vs {identity}")

    signed_rho = None
    if signs is not None:
        s = canonical_signs(np.asarray(signs).ravel())[order]
        signed_rho = correlation(s * xs, s * y)
    return OptimalQuantizer(cut_points=cut_points, codebook=codebook, rho=rho, signed_rho=signed_rho, within_ss=wss)
