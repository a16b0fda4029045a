"""Frequency curves, nondegeneracy, and the persistence pipeline.

Oracle for the Monte-Carlo fraction: replay the sampling with the same rng
and count failures over an itertools mode enumeration.
"""
import itertools

import numpy as np
import pytest

from conftest import GOLDEN, MU0, OMEGA0, make_config, make_curve_family, \
    make_golden_family
from kamrev.diophantine import DiophantineParams
from kamrev.ruessmann import (FrequencyCurve, diophantine_fraction,
                              is_ruessmann_nondegenerate, persistence_pipeline,
                              uniform_grid)

DELTA = 1e-4


def drift_curve():
    return FrequencyCurve(
        lambda sigma, mu: np.array([1.0 + 0.3 * sigma[0],
                                    1.55 + mu[0] + 0.5 * sigma[0]]),
        box=[(0.0, 0.12)], n=2, m=1)


def elliptic_curve():
    # frequencies pinned near (1, golden) while mu sweeps the normal rotation
    return FrequencyCurve(
        lambda sigma, mu: np.array([1.0 + 0.2 * sigma[0],
                                    GOLDEN + 0.3 * sigma[0] + 0.8 * (mu[0] - 0.125)]),
        box=[(0.03, 0.22)], n=2, m=1)


def test_uniform_grid_covers_box():
    g = uniform_grid([(0.0, 1.0)], 5)
    assert g.shape == (5, 1)
    assert g[0, 0] == 0.0 and g[-1, 0] == 1.0
    g2 = uniform_grid([(0.0, 1.0), (2.0, 3.0)], 4)
    assert g2.shape == (16, 2)
    assert g2[:, 1].min() == 2.0 and g2[:, 1].max() == 3.0


def test_moment_curve_is_nondegenerate():
    curve = FrequencyCurve(
        lambda sigma, mu: np.array([1.0, mu[0], mu[0] ** 2, mu[0] ** 3]),
        box=[(0.5, 2.0)], n=4, m=1)
    rep = is_ruessmann_nondegenerate(curve, 64, seed=0)
    assert rep.nondegenerate and rep.rank == 4
    assert rep.normal is None


def test_degenerate_curves_produce_a_normal():
    const = FrequencyCurve(lambda sigma, mu: np.array([1.0, 2.0]),
                           box=[(0.0, 1.0)], n=2, m=1)
    rep = is_ruessmann_nondegenerate(const, 32)
    assert not rep.nondegenerate and rep.rank == 1
    assert abs(np.dot(rep.normal, [1.0, 2.0])) < 1e-9

    ray = FrequencyCurve(lambda sigma, mu: mu[0] * np.array([1.0, 2.0]),
                         box=[(0.5, 1.5)], n=2, m=1)
    rep2 = is_ruessmann_nondegenerate(ray, 32)
    assert not rep2.nondegenerate
    assert abs(np.dot(rep2.normal, [1.0, 2.0])) < 1e-9
    with pytest.raises(ValueError):
        is_ruessmann_nondegenerate(const, 1)


def test_diophantine_fraction_matches_replayed_sampling():
    curve = drift_curve()
    tau, gamma, kmax, samples, seed = 1.5, 5e-2, 6, 60, 11
    got = diophantine_fraction(curve, tau, gamma, kmax, samples, seed=seed)
    rng = np.random.default_rng(seed)
    mus = np.column_stack([rng.uniform(lo, hi, samples) for lo, hi in curve.box])
    modes = [k for k in itertools.product(range(-kmax, kmax + 1), repeat=2)
             if 0 < sum(abs(c) for c in k) <= kmax]
    bad = 0
    for mu in mus:
        omega = curve.at(mu)
        vals = [abs(np.dot(k, omega)) * sum(abs(c) for c in k) ** tau
                for k in modes]
        if min(vals) < gamma:
            bad += 1
    assert got == bad / samples


def test_fraction_grows_with_gamma():
    curve = drift_curve()
    fs = [diophantine_fraction(curve, 1.5, g, 16, 300, seed=5)
          for g in (1e-4, 1e-2, 0.3)]
    assert fs[0] <= fs[1] <= fs[2]
    assert fs[0] == 0.0  # the curve is built to clear tiny gamma everywhere


def test_pipeline_drift_family_accepts_and_rejects_deterministically():
    """omega2 passes through 8/5 at mu = 0.05: that grid point must fall."""
    fam = make_curve_family(delta=DELTA, order=12)
    curve = FrequencyCurve(
        lambda sigma, mu: np.array([1.0 + 0.3 * sigma[0],
                                    1.55 + mu[0] + 0.5 * sigma[0]]),
        box=[(0.0, 0.1)], n=2, m=1)
    params = DiophantineParams(1.5, 5e-3, 16)
    cfg = make_config(horizon=16, tol=1e-11)
    rep = persistence_pipeline(fam, curve, params, grid_count=3, config=cfg,
                               T=20.0)
    assert len(rep.points) == 3
    ok = rep.accepted()
    assert [bool(pt.accepted) for pt in rep.points] == [True, False, True]
    assert rep.rejected_fraction == pytest.approx(1 / 3)
    assert "SmallDivisor" in rep.points[1].reason
    for pt in ok:
        assert pt.margin > 0
        assert pt.torus_deviation < 1e-6
        assert pt.rotation_error < 1e-8
        assert pt.phi_residual <= 1e-12
        assert pt.upsilon_residual == 0.0  # no family parameters to identify
        # drift offset responds at first order to the forcing
        assert 0 < abs(pt.theta[0]) < 20 * DELTA
        # the accepted frequency sits where the curve says it should
        assert abs(pt.fsharp[0] - 1.0) < 20 * DELTA


def test_pipeline_identifies_family_parameter():
    """s = 1|that is, the curve box feeds the family's own parameter and the
    outer loop must undo the mu-shift."""
    fam = make_golden_family(delta=DELTA, order=8)
    curve = elliptic_curve()
    assert is_ruessmann_nondegenerate(curve, 32).nondegenerate
    params = DiophantineParams(1.5, 1e-2, 12)
    cfg = make_config(horizon=12, tol=1e-11)
    grid = np.array([[0.08], [0.125], [0.17]])
    rep = persistence_pipeline(fam, curve, params, grid=grid, config=cfg,
                               T=20.0)
    ok = rep.accepted()
    assert len(ok) == 3, [pt.reason for pt in rep.points]
    for pt in ok:
        assert pt.upsilon_residual <= 1e-12
        assert pt.phi_residual <= 1e-12
        assert pt.torus_deviation < 1e-6
        assert pt.rotation_error < 1e-8
        assert pt.margin > 0
        # frequency must lie on the curve up to the computed drift/parameter
        # (phi and upsilon residuals already enforce this; sanity-check scale)
        assert abs(pt.fsharp[1] - (GOLDEN + 0.8 * (pt.mu[0] - 0.125))) < 1e-2


def test_pipeline_rejects_everything_at_absurd_gamma():
    fam = make_curve_family(delta=DELTA, order=8)
    curve = drift_curve()
    params = DiophantineParams(1.2, 1.0, 8)
    cfg = make_config(tol=1e-11)
    rep = persistence_pipeline(fam, curve, params, grid_count=2, config=cfg,
                               T=5.0)
    assert rep.accepted() == []
    assert rep.rejected_fraction == 1.0
    for pt in rep.points:
        assert "margin" in pt.reason or "SmallDivisor" in pt.reason


def test_pipeline_validates_parameter_counts():
    fam = make_golden_family(delta=DELTA, order=8)  # s = 1
    bad_curve = FrequencyCurve(lambda sigma, mu: OMEGA0 + mu,
                               box=[(0.0, 0.1), (0.0, 0.1)], n=2, m=1)
    with pytest.raises(ValueError):
        persistence_pipeline(fam, bad_curve, DiophantineParams(1.5, 1e-2, 8))


def test_report_serialization_shapes():
    fam = make_curve_family(delta=DELTA, order=8)
    curve = drift_curve()
    params = DiophantineParams(1.5, 5e-3, 12)
    cfg = make_config(horizon=12, tol=1e-11)
    rep = persistence_pipeline(fam, curve, params, grid_count=2, config=cfg,
                               T=10.0)
    doc = rep.to_json()
    assert doc["rejectedFraction"] == rep.rejected_fraction
    assert len(doc["points"]) == 2
    for row in doc["points"]:
        assert set(row) >= {"mu", "accepted", "reason", "fsharp", "theta",
                            "margin"}
    rows = rep.to_csv_rows()
    assert len(rows) == 3 and rows[0][0] == "mu"  # header + one row per point
