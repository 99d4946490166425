import csv
import json
import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from afp import stability
from afp.energy import Coupling, dilate, evaluate
from afp.minimize import InitSpec, MinimizeConfig
from afp.solitons import PolyPair, nll_state
from afp.spectral import Grid
from afp.stability import (
    GammaScan,
    ScanPoint,
    Stability,
    UnsupportedTrapError,
    classify,
    empirical_lipschitz,
    exact_gamma_star,
    klt_bound,
    lgn_constant,
    nll_membership,
    phase_diagram,
    scan_gamma_star,
    tf_matched_width,
    tf_minimum,
    write_phase_json,
    write_scan_csv,
)

from conftest import gaussian, rel


def tf_numeric(g):
    """Minimize the radial TF functional over the multiplier, by quadrature."""
    r = np.linspace(0.0, 12.0, 120001)
    dr = r[1] - r[0]

    def energy(lam):
        rho = np.maximum(lam - r * r, 0.0)
        rho = rho / (np.sum(rho * 2 * np.pi * r) * dr)
        return np.sum((g * rho ** 2 + r * r * rho) * 2 * np.pi * r) * dr

    return minimize_scalar(energy, bounds=(0.05, 100.0), method="bounded", options={"xatol": 1e-10}).fun


# -- Thomas-Fermi ----------------------------------------------------------------------


@pytest.mark.parametrize("g", [1.0, 40 * math.pi, 300.0])
def test_tf_closed_form_against_numeric(g):
    t = tf_minimum(g)
    assert t.energy == pytest.approx((4 / 3) * math.sqrt(g / math.pi), rel=1e-14)
    assert t.radius == pytest.approx(math.sqrt(t.multiplier))
    assert rel(tf_numeric(g), t.energy) <= 1e-4


def test_tf_value_at_forty_pi():
    assert tf_minimum(40 * math.pi).energy == pytest.approx(8.43274, abs=1e-5)
    refined = tf_minimum(2 * math.pi * 1.18 * 10 + 20 * math.pi).energy
    assert refined == pytest.approx(8.80, abs=0.01) and refined < 9.066


def test_tf_density_is_normalized():
    t = tf_minimum(40 * math.pi)
    g = Grid(8.0, 512)
    assert g.h ** 2 * t.density(g).sum() == pytest.approx(1.0, rel=2e-3)


def test_tf_limits_and_errors():
    assert tf_minimum(1e-12).energy < 1e-6
    z = tf_minimum(5.0, "zero")
    assert z.energy == 0.0 and math.isinf(z.radius)
    with pytest.raises(UnsupportedTrapError):
        tf_minimum(1.0, "quartic")
    with pytest.raises(ValueError):
        tf_minimum(0.0)


def test_klt_bound():
    assert klt_bound(20 * math.pi, 20 * math.pi) == pytest.approx((4 / 3) * math.sqrt(40))
    assert klt_bound(8 * math.pi, -10 * math.pi) == -math.inf


def test_tf_matched_width():
    assert tf_matched_width(0.0, 0.0) == 1.0
    w = tf_matched_width(10.0, 0.0)
    assert w == pytest.approx(tf_minimum(2 * math.pi * 1.18 * 10).radius / math.sqrt(3))


# -- classification -----------------------------------------------------------------------


def test_classify_examples():
    assert classify(10.0, 20 * math.pi) is Stability.STABLE
    assert classify(100.0, -186 * math.pi) is Stability.STABLE
    assert classify(4.0, -8 * math.pi) is Stability.CRITICAL
    assert classify(4.0, -9 * math.pi) is Stability.UNSTABLE
    assert classify(1.0, -5.0, gamma_star=7.0) is Stability.STABLE
    with pytest.raises(ValueError):
        classify(1.0, 0.0)


def test_exact_gamma_star():
    assert exact_gamma_star(3.0) == pytest.approx(6 * math.pi)
    assert exact_gamma_star(-2.0) == pytest.approx(4 * math.pi)
    assert exact_gamma_star(1.5) is None


def test_nll_membership():
    g = Grid(32.0, 512)
    assert nll_membership(nll_state(PolyPair.parse("0,1", "1"), g), 2.0, 1e-3)
    assert not nll_membership(gaussian(Grid(8.0, 64)), 2.0, 1e-3)
    with pytest.raises(ValueError):
        nll_membership(gaussian(Grid(8.0, 64)), 2.0, 0.0)


def test_lgn_constant():
    assert rel(lgn_constant(), 0.931 * 2 * math.pi) <= 5e-3


# -- scans -----------------------------------------------------------------------------------


def test_scan_point_floors():
    ok = ScanPoint(2.0, 12.6, 4 * math.pi, 5.85, 0, True)
    bad = ScanPoint(2.0, 11.0, 4 * math.pi, 5.85, 0, True)
    assert ok.floor_consistent() and not bad.floor_consistent()


def test_empirical_lipschitz():
    pts = [ScanPoint(0.0, 5.85, 0, 5.85, 0, True), ScanPoint(2.0, 12.57, 4 * math.pi, 5.85, 0, True),
           ScanPoint(3.0, math.nan, 6 * math.pi, 5.85, 0, False, True), ScanPoint(4.0, 25.13, 8 * math.pi, 5.85, 0, True)]
    assert empirical_lipschitz(pts) == pytest.approx((25.13 - 12.57) / 2)
    assert math.isnan(empirical_lipschitz(pts[:1]))


def test_scan_validation():
    cfg = MinimizeConfig(max_iter=2)
    with pytest.raises(ValueError):
        scan_gamma_star([2.0, 0.0], cfg, Grid(8.0, 32))
    with pytest.raises(ValueError):
        scan_gamma_star([-1.0], cfg, Grid(8.0, 32))


def test_scan_flags_failures_and_continues(monkeypatch):
    real = stability.minimize_quotient

    def flaky(beta, cfg, grid):
        if beta == 1.0:
            raise RuntimeError("boom")
        return real(beta, cfg, grid)

    monkeypatch.setattr(stability, "minimize_quotient", flaky)
    cfg = MinimizeConfig(init=InitSpec.random(), max_iter=5, seeds=(0,))
    scan = scan_gamma_star([0.0, 1.0, 2.0], cfg, Grid(8.0, 32))
    assert [p.failed for p in scan] == [False, True, False]
    assert "boom" in scan[1].error and math.isnan(scan[1].gamma_star_estimate)
    doc = phase_diagram(scan)
    assert doc["points"][1]["gamma_star_estimate"] is None
    json.dumps(doc, allow_nan=False)


def test_scan_parallel_matches_serial():
    cfg = MinimizeConfig(init=InitSpec.random(), max_iter=5, seeds=(0,))
    g = Grid(8.0, 32)
    a = scan_gamma_star([0.0, 2.0], cfg, g, workers=1)
    b = scan_gamma_star([0.0, 2.0], cfg, g, workers=2)
    assert [p.gamma_star_estimate for p in a] == [p.gamma_star_estimate for p in b]


def test_scan_outputs(tmp_path):
    scan = GammaScan([ScanPoint(0.0, 5.85, 0.0, 5.85, 0, True), ScanPoint(2.0, 12.57, 4 * math.pi, 5.85, 0, True)])
    scan.lipschitz_k = empirical_lipschitz(scan)
    write_scan_csv(scan, tmp_path / "scan.csv")
    with open(tmp_path / "scan.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["beta", "gamma_star_estimate", "bogomolnyi_floor", "lgn_floor",
                       "vortex_count", "converged"]
    assert float(rows[2][1]) == 12.57
    write_phase_json(scan, tmp_path / "phase.json")
    doc = json.loads((tmp_path / "phase.json").read_text())
    assert doc["schema"] == "afp-phase-diagram/1"
    assert doc["points"][1]["exact_gamma_star"] == pytest.approx(4 * math.pi)
    assert doc["points"][0]["floor_consistent"] is True


def test_odd_beta_has_no_exact_minimizer():
    cfg = MinimizeConfig(init=InitSpec.random(), max_iter=400, value_tol=1e-9, seeds=(0,))
    res = stability.minimize_quotient(3.0, cfg, Grid(16.0, 128))
    assert rel(res.gamma_star_estimate, 6 * math.pi) <= 2e-2
    assert not nll_membership(res.u, 3.0, 1e-3)
    # the near-minimizer splits: a core carrying about 2/3 of the mass plus a diffuse remainder
    g = res.u.grid
    rho = np.abs(res.u.values) ** 2
    assert g.h ** 2 * rho[g.r2() < 16.0].sum() < 0.8


def test_nll_membership_needs_even_beta():
    u = nll_state(PolyPair.parse("0,1", "1"), Grid(32.0, 512))
    assert not nll_membership(u, 3.0, 1e-3) and not nll_membership(u, 0.0, 1e-3)


def test_energy_at_critical_coupling_vanishes_along_dilations():
    # beta = 1: the infimum is probed only through dilations of the quotient minimizer
    cfg = MinimizeConfig(init=InitSpec.random(), max_iter=400, value_tol=1e-9, seeds=(0,))
    res = stability.minimize_quotient(1.0, cfg, Grid(12.0, 128))
    u, gs = res.u, res.gamma_star_estimate
    scale = evaluate(u, Coupling(1.0)).kinetic_magnetic
    for lam in (0.5, 1.0, 1.5):
        e = evaluate(dilate(u, lam, tol=1e-3), Coupling(1.0, -gs, "zero")).total
        assert abs(e) <= 2e-3 * lam ** 2 * scale
    # slightly beyond the estimate the energy goes negative and scales like lambda^2 (unbounded below)
    c = Coupling(1.0, -1.01 * gs, "zero")
    e1 = evaluate(u, c).total
    e2 = evaluate(dilate(u, 1.5, tol=1e-3), c).total
    assert e1 < 0 and e2 == pytest.approx(2.25 * e1, rel=1e-2)
