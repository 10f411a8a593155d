import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from cyberdyn.binom_approx import (
    ApproxModel,
    critical_nu,
    integrate_nu,
    q_binom,
    save_drift_csv,
    theta_sigma,
)
from cyberdyn.graphgen import gen_er


def exact_pmf(d: int, alpha: Fraction, k: int) -> Fraction:
    return math.comb(d, k) * alpha**k * (1 - alpha) ** (d - k)


def exact_theta(nu: Fraction, d: int, sigma: Fraction) -> Fraction:
    sd = sigma * d
    total = Fraction(0)
    boundary = sd if sd.denominator == 1 else None
    lowest = int(sd) + 1
    for k in range(lowest, d + 1):
        total += exact_pmf(d, nu, k)
    if boundary is not None:
        total += Fraction(1, 2) * exact_pmf(d, nu, int(boundary))
    return total


# ---------------------------------------------------------------------------
# q_binom


def test_q_binom_symmetry():
    assert q_binom(2, 0.5, 1) == pytest.approx(0.5, abs=1e-15)


def test_q_binom_normalization():
    total = q_binom(100, 0.37, np.arange(101)).sum()
    assert total == pytest.approx(1.0, abs=1e-12)


def test_q_binom_exact_rational_oracle():
    expected = float(exact_pmf(40, Fraction(3, 10), 12))
    assert q_binom(40, 0.3, 12) == pytest.approx(expected, abs=1e-12)


def test_q_binom_large_d_stable():
    val = q_binom(10_000, 0.3, 3000)
    ref = stats.binom.pmf(3000, 10_000, 0.3)
    assert val == pytest.approx(ref, rel=1e-9)
    assert np.isfinite(q_binom(10_000, 0.3, np.arange(0, 10_001, 500))).all()


def test_q_binom_domain_errors():
    with pytest.raises(ValueError):
        q_binom(10, 0.5, 11)
    with pytest.raises(ValueError):
        q_binom(10, 0.5, -1)
    with pytest.raises(ValueError):
        q_binom(10, 1.5, 2)


def test_q_binom_degenerate_alpha():
    assert q_binom(10, 0.0, 0) == 1.0
    assert q_binom(10, 0.0, 3) == 0.0
    assert q_binom(10, 1.0, 10) == 1.0


# ---------------------------------------------------------------------------
# theta_sigma


def test_theta_symmetric_half():
    for d in (2, 10, 40):
        assert theta_sigma(0.5, d, 0.5) == pytest.approx(0.5, abs=1e-12)


def test_theta_degenerate_nu():
    assert theta_sigma(0.0, 40, 0.3) == 0.0
    assert theta_sigma(1.0, 40, 0.3) == 1.0


def test_theta_exact_rational_oracle():
    expected = float(exact_theta(Fraction(1, 4), 40, Fraction(3, 10)))
    assert expected == pytest.approx(0.23199492472396357, abs=1e-15)
    assert theta_sigma(0.25, 40, 0.3) == pytest.approx(expected, abs=1e-12)


def test_theta_nondecreasing_in_nu():
    nus = np.linspace(0.0, 1.0, 401)
    for d, sigma in ((7, 0.3), (40, 0.5), (40, 0.31), (120, 0.7)):
        vals = np.array([theta_sigma(x, d, sigma) for x in nus])
        assert np.all(np.diff(vals) >= -1e-12)


def test_theta_noninteger_threshold_has_no_boundary_term():
    # sigma*d = 12.4: the tail starts at 13 with no half-weight term
    val = theta_sigma(0.25, 40, 0.31)
    expected = float(
        sum(exact_pmf(40, Fraction(1, 4), k) for k in range(13, 41))
    )
    assert val == pytest.approx(expected, abs=1e-12)


# ---------------------------------------------------------------------------
# integrate_nu


def test_integrate_trivial_fixed_points():
    model = ApproxModel(mean_degree=40, sigma=0.5)
    assert np.all(integrate_nu(model, 0.0, horizon=2.0).nu == 0.0)
    assert np.all(integrate_nu(model, 1.0, horizon=2.0).nu == 1.0)


def test_integrate_basins_around_symmetric_root():
    model = ApproxModel(mean_degree=40, sigma=0.5)
    up = integrate_nu(model, 0.55, horizon=40.0)
    down = integrate_nu(model, 0.45, horizon=40.0)
    assert up.nu[-1] > 0.999
    assert down.nu[-1] < 0.001


# ---------------------------------------------------------------------------
# critical_nu


def test_critical_symmetric_even_degrees():
    for d in (2, 4, 40):
        root = critical_nu(ApproxModel(mean_degree=d, sigma=0.5))
        assert root == pytest.approx(0.5, abs=1e-9)


def test_critical_drifts_below_small_sigma():
    root = critical_nu(ApproxModel(mean_degree=40, sigma=0.3))
    assert root is not None and root < 0.3


def test_critical_against_dense_scan_oracle():
    model = ApproxModel(mean_degree=40, sigma=0.3)
    root = critical_nu(model)
    # independent dense scan using the library tail function
    nus = np.linspace(0.0, 1.0, 100_001)
    drift = (
        stats.binom.sf(12, 40, nus)
        + 0.5 * stats.binom.pmf(12, 40, nus)
        - nus
    )
    sign = np.sign(drift)
    idx = np.flatnonzero((sign[:-1] < 0) & (sign[1:] > 0))[-1]
    oracle = 0.5 * (nus[idx] + nus[idx + 1])
    assert root == pytest.approx(oracle, abs=1e-5)


def test_critical_no_interior_root():
    # drift nu^3 - nu is strictly negative on (0, 1)
    assert critical_nu(ApproxModel(mean_degree=3, sigma=0.9)) is None


def test_critical_converges_to_sigma_with_degree():
    gaps = [
        abs(critical_nu(ApproxModel(mean_degree=d, sigma=0.3)) - 0.3)
        for d in (10, 40, 160)
    ]
    assert gaps[0] > gaps[1] > gaps[2]


def test_model_from_graph_rounds_mean_degree():
    g = gen_er(100, 0.1, seed=5)
    model = ApproxModel.from_graph(g, 0.4)
    assert model.mean_degree == int(round(g.degrees.mean()))


def test_model_validation():
    with pytest.raises(ValueError):
        ApproxModel(mean_degree=0, sigma=0.5)
    with pytest.raises(ValueError):
        ApproxModel(mean_degree=10, sigma=1.0)


def test_drift_csv(tmp_path):
    path = tmp_path / "drift.csv"
    save_drift_csv(ApproxModel(mean_degree=20, sigma=0.4), path, points=101)
    lines = path.read_text().splitlines()
    assert lines[0] == "nu,drift"
    assert len(lines) == 102
