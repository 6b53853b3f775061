import math

import numpy as np
import pytest
from scipy import stats as sps

from wquant.errors import DomainError
from wquant.experiments import (
    CSV_HEADER,
    DistributionSpec,
    TrialStats,
    emit_csv,
    fit_x0_regression,
    linear_fit,
    lookup,
    read_csv,
    run_table_experiment,
    sample,
    trial_seed,
    x0_vs_sigma_study,
)
from wquant.reference import BEST_X0_SIGMA


@pytest.mark.parametrize("b", [0.3, 1.0, 7.5])
def test_laplacian_variance(b):
    x = sample(DistributionSpec("laplacian", scale=b, seed=1))
    assert x.var() == pytest.approx(2 * b * b, rel=0.05)
    assert x.std() == pytest.approx(DistributionSpec("laplacian", scale=b).std, rel=0.05)


def test_gaussian_moments():
    x = sample(DistributionSpec("gaussian", scale=2.0, seed=4))
    assert x.std() == pytest.approx(2.0, rel=0.05)
    assert abs(sps.kurtosis(x)) < 0.2


def test_distributions_pass_goodness_of_fit():
    x = sample(DistributionSpec("laplacian", scale=1.5, seed=9))
    assert sps.kstest(x, sps.laplace(scale=1.5).cdf).pvalue > 1e-3
    g = sample(DistributionSpec("gaussian", scale=0.5, count=9999, seed=9))
    assert g.size == 9999
    assert sps.kstest(g, sps.norm(scale=0.5).cdf).pvalue > 1e-3


def test_sampling_is_seeded():
    a = sample(DistributionSpec(seed=42))
    np.testing.assert_array_equal(a, sample(DistributionSpec(seed=42)))
    assert not np.array_equal(a, sample(DistributionSpec(seed=43)))
    assert np.all(np.isfinite(a))


def test_trial_seeds_distinct():
    seeds = {trial_seed(0, t) for t in range(1000)} | {trial_seed(1, t) for t in range(1000)}
    assert len(seeds) == 2000


def test_spec_validation():
    with pytest.raises(DomainError):
        DistributionSpec(scale=0)
    with pytest.raises(ValueError):
        DistributionSpec(kind="cauchy")


@pytest.fixture(scope="module")
def small_table():
    return run_table_experiment(DistributionSpec(count=4000, seed=3), range(2, 7), trials=6)


def test_table_shape_and_order(small_table):
    assert len(small_table) == 30
    assert [s.bits for s in small_table[:6]] == [2] * 6
    assert [(s.scheme, s.rounding) for s in small_table[:3]] == [
        ("exponential", "mean"), ("exponential", "ceil"), ("exponential", "floor")]
    assert all(s.trials == 6 and s.std_rho >= 0 and s.std_x0_sigma >= 0 for s in small_table)


def test_two_bit_methods_coincide(small_table):
    for rounding in ("mean", "ceil", "floor"):
        a = lookup(small_table, 2, "linear", rounding)
        b = lookup(small_table, 2, "exponential", rounding)
        assert a.mean_rho == b.mean_rho and a.mean_x0_sigma == b.mean_x0_sigma


def test_table_reproducible(small_table):
    again = run_table_experiment(DistributionSpec(count=4000, seed=3), range(2, 7), trials=6, threads=3)
    assert again == small_table


def test_table_argument_checks():
    with pytest.raises(DomainError):
        run_table_experiment(trials=1)
    with pytest.raises(DomainError):
        run_table_experiment(bits_range=[1, 2], trials=2)


def test_table_runs_on_gaussian():
    st = run_table_experiment(DistributionSpec("gaussian", count=2000), [3, 4], trials=3)
    assert all(s.dist == "gaussian" and 0.9 < s.mean_rho < 1 for s in st)


def test_regression_on_published_values():
    published = [TrialStats("laplacian", b, "exponential", "ceil", 0, 0, BEST_X0_SIGMA[(b, "exponential", "ceil")][0], 0, 20)
                 for b in range(2, 7)]
    fit = fit_x0_regression(published)
    # np.polyfit on the same five points gives -0.94863 / 2.05876
    assert fit.slope == pytest.approx(-0.94863242, abs=1e-7)
    assert fit.intercept == pytest.approx(2.05876392, abs=1e-7)
    assert -1.15 <= fit.slope <= -0.80


def test_regression_exact_rule():
    rows = [TrialStats("laplacian", b, "exponential", "ceil", 0, 0, 2.0 ** (2 - b), 0, 2) for b in range(2, 9)]
    fit = fit_x0_regression(rows)
    assert fit.slope == pytest.approx(-1, abs=1e-12)
    assert fit.intercept == pytest.approx(2, abs=1e-12)
    assert fit.r_squared == pytest.approx(1, abs=1e-12)


def test_regression_needs_four_levels():
    rows = [TrialStats("laplacian", b, "exponential", "ceil", 0, 0, 0.5, 0, 2) for b in (2, 3, 4)]
    with pytest.raises(DomainError):
        fit_x0_regression(rows)


def test_fit_residuals_orthogonal(rng):
    x = rng.normal(size=50)
    y = 3 * x - 1 + rng.normal(size=50)
    fit = linear_fit(x, y)
    r = y - (fit.slope * x + fit.intercept)
    assert abs(r @ x) < 1e-9 and abs(r.sum()) < 1e-9
    assert 0 <= fit.r_squared <= 1
    f0 = linear_fit(x, y, through_origin=True)
    assert abs((y - f0.slope * x) @ x) < 1e-9


def test_x0_tracks_sigma():
    pts = x0_vs_sigma_study("laplacian", 2, experiments=100, count=4000)
    sig, x0 = np.array(pts).T
    fit = linear_fit(sig, x0, through_origin=True)
    assert fit.r_squared >= 0.9
    assert fit.slope == pytest.approx(1.13, rel=0.05)


def test_x0_sigma_ratio_scale_invariant():
    spec = DistributionSpec(count=3000, seed=5)
    from wquant.quantizer import normalize, sweep_x0
    ratios = []
    for c in (1.0, 0.01, 300.0):
        x = c * sample(spec)
        nt = normalize(x)
        sw = sweep_x0(nt.magnitudes, "exponential", "mean", 3, signs=nt.signs)
        ratios.append(sw.best_x0 * nt.M / x.std())
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-9)


def test_x0_study_repeatable():
    a = x0_vs_sigma_study(experiments=10, count=1000, seed=3)
    assert a == x0_vs_sigma_study(experiments=10, count=1000, seed=3)
    with pytest.raises(DomainError):
        x0_vs_sigma_study(experiments=5)


def test_csv_round_trip(tmp_path, small_table):
    path = emit_csv(small_table, tmp_path / "t.csv")
    assert read_csv(path) == small_table
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 31


def test_csv_empty(tmp_path):
    path = emit_csv([], tmp_path / "e.csv")
    assert path.read_text() == ",".join(CSV_HEADER) + "\n"
    assert read_csv(path) == []


def test_csv_error_names_path(tmp_path):
    with pytest.raises(OSError, match="missing"):
        emit_csv([], tmp_path / "missing" / "x.csv")


def test_csv_rejects_foreign_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DomainError):
        read_csv(p)
