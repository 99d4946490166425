"""Quick invariant self-test suite behind ``afp verify`` (coarse grids, a few seconds)."""

from __future__ import annotations

from dataclasses import dataclass
import math
import os
import tempfile
from typing import Callable

import numpy as np

from .energy import Coupling, dilate, diamagnetic_check, el_gradient, energy_value, evaluate, magnetic_energy
from .formats import read_afp1, write_afp1
from .minimize import count_vortices
from .poly import Poly, gcd
from .selfmag import curl_on_core, self_potential
from .solitons import (PolyPair, liouville_residual, nll_state, nll_superpotential,
                       random_pair, townes_profile, wronskian)
from .spectral import DensityField, Field, Grid, core_mask
from .stability import nll_membership, tf_minimum


@dataclass
class Check:
    name: str
    ok: bool
    detail: str


def _gaussian(grid: Grid, w: float = 1.0, phase: bool = False) -> Field:
    X, Y = grid.mesh()
    u = np.exp(-(X ** 2 + Y ** 2) / (2 * w * w)) / (math.sqrt(math.pi) * w)
    if phase:
        u = u * np.exp(1j * (0.3 * X - 0.2 * Y + 0.1 * X * Y))
    return Field(grid, u.astype(complex))


def check_self_field() -> Check:
    g = Grid(12.0, 256)
    rho = DensityField(g, np.exp(-g.r2()) / math.pi)
    curl = curl_on_core(self_potential(rho).A).values
    m = core_mask(g)
    err = np.linalg.norm((curl - 2 * math.pi * rho.values)[m]) / np.linalg.norm(2 * math.pi * rho.values[m])
    return Check("curl A = 2 pi rho", err <= 1e-6, f"rel err {err:.2e}")


def check_oscillator() -> Check:
    g = Grid(8.0, 64)
    e = evaluate(_gaussian(g), Coupling(0.0, 0.0, "harmonic")).total
    return Check("harmonic oscillator energy 2", abs(e - 2.0) <= 1e-10, f"E = {e:.12f}")


def check_versiera() -> Check:
    g = Grid(16.0, 256)
    u = nll_state(PolyPair.parse("0,1", "1"), g)
    rep = evaluate(u, Coupling(2.0))
    ok = abs(rep.kinetic_magnetic - 4 / 3) <= 2e-3 * 4 / 3 and abs(rep.l4norm - 1 / (3 * math.pi)) <= 2e-3 / (3 * math.pi)
    return Check("versiera energy 4/3 and int|u|^4 = 1/(3 pi)", ok,
                 f"E = {rep.kinetic_magnetic:.6f}, l4 = {rep.l4norm:.6f}")


def check_conjugation() -> Check:
    g = Grid(8.0, 64)
    u = _gaussian(g, phase=True)
    a = magnetic_energy(u, 3.0)
    b = magnetic_energy(Field(g, np.conj(u.values)), -3.0)
    return Check("conjugation symmetry", a == b, f"|diff| = {abs(a - b):.1e}")


def check_el_gradient() -> Check:
    g = Grid(8.0, 64)
    rng = np.random.default_rng(1)
    u = _gaussian(g, phase=True)
    d = Field(g, _gaussian(g, 1.5).values * (rng.normal() + 1j * rng.normal()))
    c = Coupling(2.5, 1.0, "harmonic")
    G = el_gradient(u, c).values
    eps = 1e-5
    fd = (energy_value(u.values + eps * d.values, g, c) - energy_value(u.values - eps * d.values, g, c)) / (2 * eps)
    an = 2 * g.h ** 2 * float(np.sum(np.conj(d.values) * G).real)
    err = abs(fd - an) / abs(an)
    return Check("EL gradient vs finite differences", err <= 1e-5, f"rel err {err:.1e}")


def check_diamagnetic() -> Check:
    g = Grid(8.0, 64)
    lhs, rhs = diamagnetic_check(_gaussian(g, phase=True), 2.0)
    return Check("diamagnetic inequality", lhs >= rhs, f"{lhs:.6f} >= {rhs:.6f}")


def check_scaling() -> Check:
    g = Grid(12.0, 128)
    u = _gaussian(g, 1.0, phase=False)
    e1 = magnetic_energy(u, 2.0)
    e2 = magnetic_energy(dilate(u, 2.0), 2.0)
    err = abs(e2 - 4 * e1) / (4 * e1)
    return Check("dilation scaling E[u_2] = 4 E[u]", err <= 1e-4, f"rel err {err:.1e}")


def check_liouville() -> Check:
    g = Grid(16.0, 512)
    pair = PolyPair.parse("1,0,0,1", "-2,1")
    res = liouville_residual(nll_superpotential(pair, g), wronskian(pair))
    return Check("Liouville equation for (z^3+1, z-2)", res <= 1e-5, f"residual {res:.1e}")


def check_nll() -> Check:
    g = Grid(24.0, 256)
    rng = np.random.default_rng(3)
    pair = random_pair(rng, 2)
    u = nll_state(pair, g)
    u = Field(g, u.values / math.sqrt(u.norm2()))
    return Check("random NLL state is Bogomolnyi-saturating", nll_membership(u, pair.beta, 1e-2), repr(pair))


def check_vortex_count() -> Check:
    g = Grid(16.0, 128)
    n = count_vortices(nll_state(PolyPair.parse("0,0,0,1", "1"), g))
    return Check("vortex ring (z^3, 1) has 2 vortices", n == 2, f"count {n}")


def check_poly() -> Check:
    a = Poly.parse("-1,0,1") * Poly.parse("2,1")
    b = Poly.parse("-1,0,1") * Poly.parse("3,-1")
    d = gcd(a, b)
    ok = d.degree == 2 and np.allclose(d.coeffs, [-1, 0, 1])
    return Check("polynomial gcd", ok, d.to_text())


def check_townes() -> Check:
    prof = townes_profile()
    rel = prof.c_lgn / (0.931 * 2 * math.pi) - 1
    return Check("Townes C_LGN = 0.931 x 2 pi", abs(rel) <= 5e-3, f"C_LGN = {prof.c_lgn:.6f} ({rel:+.1e})")


def check_tf() -> Check:
    t = tf_minimum(40 * math.pi)
    # independent check: minimize over the multiplier on a radial quadrature
    r = np.linspace(0, 10, 200001)
    dr = r[1] - r[0]

    def energy(lam):
        rho = np.maximum(lam - r * r, 0) / (2 * 40 * math.pi)
        mass = np.sum(rho * 2 * math.pi * r) * dr
        rho = rho / mass
        return np.sum((40 * math.pi * rho ** 2 + r * r * rho) * 2 * math.pi * r) * dr

    from scipy.optimize import minimize_scalar

    num = minimize_scalar(energy, bounds=(1.0, 30.0), method="bounded").fun
    ok = abs(t.energy - (4 / 3) * math.sqrt(40)) <= 1e-12 and abs(num - t.energy) <= 1e-4
    return Check("Thomas-Fermi closed form", ok, f"E = {t.energy:.6f}, numeric {num:.6f}")


def check_roundtrip() -> Check:
    g = Grid(4.0, 16)
    u = _gaussian(g, phase=True)
    with tempfile.TemporaryDirectory() as d:
        p = os.path.join(d, "f.bin")
        write_afp1(p, u)
        v = read_afp1(p)
    ok = v.grid == g and np.array_equal(v.values, u.values)
    return Check("AFP1 round trip", ok, "bit-exact" if ok else "mismatch")


CHECKS: tuple[Callable[[], Check], ...] = (
    check_self_field, check_oscillator, check_versiera, check_conjugation, check_el_gradient,
    check_diamagnetic, check_scaling, check_liouville, check_nll, check_vortex_count,
    check_poly, check_townes, check_tf, check_roundtrip,
)


def run_all() -> list[Check]:
    out = []
    for fn in CHECKS:
        try:
            out.append(fn())
        except Exception as exc:  # report, keep going
            out.append(Check(fn.__name__.removeprefix("check_"), False, f"{type(exc).__name__}: {exc}"))
    return out
