"""Synthetic-distribution harness: correlation tables, x0 scaling studies, CSV I/O.

Seeding: trial ``t`` under master seed ``S`` draws from
``PCG64(SeedSequence([S, t]))``. The same trial sample is shared by every
(bits, scheme, rounding) cell, so methods are compared on identical data.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import DomainError
from .partition import Rounding, Scheme
from .quantizer import MAX_BITS, MIN_BITS, normalize, sweep_x0
from .reference import METHODS

log = logging.getLogger(__name__)

CSV_HEADER = ["dist", "bits", "scheme", "rounding", "mean_rho", "std_rho", "mean_x0_sigma", "std_x0_sigma", "trials"]


class Distribution(str, enum.Enum):
    GAUSSIAN = "gaussian"
    LAPLACIAN = "laplacian"


@dataclass(frozen=True)
class DistributionSpec:
    kind: Distribution = Distribution.LAPLACIAN
    scale: float = 1.0
    count: int = 10_000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Distribution(self.kind))
        if not self.scale > 0:
            raise DomainError(f"scale must be positive, got {self.scale}")
        if self.count < 1:
            raise DomainError(f"count must be positive, got {self.count}")

    @property
    def std(self) -> float:
        """Theoretical standard deviation."""
        if self.kind is Distribution.LAPLACIAN:
            return math.sqrt(2.0) * self.scale
        return self.scale


def _open_uniform(rng: np.random.Generator, size: int) -> np.ndarray:
    # strictly inside (0, 1) so the logarithms below stay finite
    return (rng.integers(0, 2**53, size=size, dtype=np.int64) + 0.5) / 2.0**53


def sample(spec: DistributionSpec) -> np.ndarray:
    """Draw ``spec.count`` values; Laplacian by inverse CDF, Gaussian by Box-Muller."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if spec.kind is Distribution.LAPLACIAN:
        u = _open_uniform(rng, spec.count)
        x = np.where(u < 0.5, np.log(2.0 * u), -np.log(2.0 * (1.0 - u)))
        return spec.scale * x
    pairs = (spec.count + 1) // 2
    u1 = _open_uniform(rng, pairs)
    u2 = _open_uniform(rng, pairs)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
    return spec.scale * z[: spec.count]


def trial_seed(master: int, index: int) -> int:
    state = np.random.SeedSequence([int(master), int(index)]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


@dataclass(frozen=True)
class TrialStats:
    dist: str
    bits: int
    scheme: str
    rounding: str
    mean_rho: float
    std_rho: float
    mean_x0_sigma: float
    std_x0_sigma: float
    trials: int


def _one_trial(template: DistributionSpec, master: int, t: int, bits_range, methods):
    x = sample(replace(template, seed=trial_seed(master, t)))
    nt = normalize(x)
    sigma = float(np.std(x)) / nt.M
    out = {}
    for bits in bits_range:
        for scheme, rounding in methods:
            sw = sweep_x0(nt.magnitudes, scheme, rounding, bits, signs=nt.signs, sigma=sigma)
            out[(bits, scheme, rounding)] = (sw.best_rho, sw.best_x0_sigma)
    return out


def run_table_experiment(
    template: DistributionSpec = DistributionSpec(),
    bits_range=range(2, 7),
    trials: int = 20,
    *,
    master_seed: int | None = None,
    methods=None,
    threads: int = 1,
) -> list[TrialStats]:
    """Aggregate best correlation and best x0/sigma over independent trials.

    Returns one :class:`TrialStats` per (bits, scheme, rounding), ordered by
    bits, then exponential before linear, then mean, ceil, floor. A trial
    that raises is dropped and logged; its cells use the remaining trials.
    """
    if trials < 2:
        raise DomainError(f"need at least 2 trials for a spread, got {trials}")
    bits_range = list(bits_range)
    for b in bits_range:
        if not MIN_BITS <= b <= MAX_BITS:
            raise DomainError(f"bits must be in [{MIN_BITS}, {MAX_BITS}], got {b}")
    methods = [(Scheme(s).value, Rounding(r).value) for s, r in (methods or METHODS)]
    master = template.seed if master_seed is None else master_seed

    def job(t):
        try:
            return _one_trial(template, master, t, bits_range, methods)
        except ValueError as exc:
            log.warning("trial %d dropped: %s", t, exc)
            return None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, range(trials)))
    else:
        results = [job(t) for t in range(trials)]
    kept = [r for r in results if r is not None]
    if len(kept) < len(results):
        log.warning("%d of %d trials dropped", len(results) - len(kept), len(results))
    if len(kept) < 2:
        raise DomainError("fewer than 2 successful trials")

    stats = []
    for bits in bits_range:
        for scheme, rounding in methods:
            a = np.array([r[(bits, scheme, rounding)] for r in kept])
            stats.append(TrialStats(
                dist=template.kind.value, bits=bits, scheme=scheme, rounding=rounding,
                mean_rho=float(a[:, 0].mean()), std_rho=float(a[:, 0].std(ddof=1)),
                mean_x0_sigma=float(a[:, 1].mean()), std_x0_sigma=float(a[:, 1].std(ddof=1)),
                trials=len(kept),
            ))
    return stats


def lookup(stats, bits, scheme, rounding) -> TrialStats:
    for s in stats:
        if s.bits == bits and s.scheme == Scheme(scheme).value and s.rounding == Rounding(rounding).value:
            return s
    raise KeyError((bits, scheme, rounding))


def x0_vs_sigma_study(kind="laplacian", bits: int = 2, experiments: int = 100, *, seed: int = 0,
                      scale_range=(0.25, 4.0), count: int = 10_000, scheme="exponential", rounding="mean"):
    """Sweep optimum for ``experiments`` samples with log-uniformly varied scale.

    Returns ``(sigma, best_x0)`` pairs in the units of the raw samples, so
    ``best_x0`` is the optimal first boundary times the sample maximum.
    """
    if experiments < 10:
        raise DomainError(f"need at least 10 experiments, got {experiments}")
    lo, hi = scale_range
    points = []
    for e in range(experiments):
        s = trial_seed(seed, e)
        scale = float(np.exp(np.random.default_rng(s).uniform(np.log(lo), np.log(hi))))
        x = sample(DistributionSpec(kind=kind, scale=scale, count=count, seed=s))
        nt = normalize(x)
        sigma = float(np.std(x))
        sw = sweep_x0(nt.magnitudes, scheme, rounding, bits, signs=nt.signs, sigma=sigma / nt.M)
        points.append((sigma, sw.best_x0 * nt.M))
    return points


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    r_squared: float


def linear_fit(x, y, *, through_origin: bool = False) -> RegressionFit:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        raise DomainError("need at least 2 points for a fit")
    if through_origin:
        slope = float(x @ y / (x @ x))
        intercept = 0.0
    else:
        A = np.column_stack([x, np.ones_like(x)])
        (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return RegressionFit(float(slope), float(intercept), min(max(r2, 0.0), 1.0))


def fit_x0_regression(stats, scheme="exponential", rounding="ceil") -> RegressionFit:
    """Fit ``log2(mean x0/sigma)`` against bits for one method.

    The closed-form rule x0/sigma = 2^(2 - bits) corresponds to slope -1,
    intercept 2.
    """
    scheme, rounding = Scheme(scheme).value, Rounding(rounding).value
    rows = sorted((s.bits, s.mean_x0_sigma) for s in stats if s.scheme == scheme and s.rounding == rounding)
    if len({b for b, _ in rows}) < 4:
        raise DomainError(f"need at least 4 distinct bit levels, got {len(rows)}")
    b, v = np.array(rows).T
    return linear_fit(b, np.log2(v))


def emit_csv(results, path) -> Path:
    """Write stats with the fixed header; floats use ``repr`` so parsing is exact."""
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for s in results:
                w.writerow([s.dist, s.bits, s.scheme, s.rounding, repr(s.mean_rho), repr(s.std_rho),
                            repr(s.mean_x0_sigma), repr(s.std_x0_sigma), s.trials])
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write CSV {path}: {exc.strerror}") from exc
    return path


def read_csv(path) -> list[TrialStats]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise DomainError(f"{path}: unexpected header {reader.fieldnames}")
        out = []
        for row in reader:
            kw = {}
            for f in fields(TrialStats):
                v = row[f.name]
                kw[f.name] = int(v) if f.name in ("bits", "trials") else float(v) if f.name.startswith(("mean", "std")) else v
            out.append(TrialStats(**kw))
    return out
