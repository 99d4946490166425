"""Exact self-dual solitons and the Townes profile.

Nonlinear-Landau-level states are built from a pair of coprime, linearly
independent complex polynomials ``(P, Q)`` with ``n = max(deg P, deg Q)``::

    u_{P,Q} = sqrt(2 / (pi beta)) * conj(P'Q - PQ') / (|P|^2 + |Q|^2),  beta = 2n
    psi_{P,Q} = log 8 - 2 log(|P|^2 + |Q|^2)

``psi_{P,Q}`` solves ``-Laplace(psi) = |f|^2 exp(psi)`` with ``f = P'Q - PQ'``.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.special import k0

from .poly import Poly, gcd
from .spectral import DensityField, Field, Grid, laplacian_array, taper

COPRIME_RTOL = 1e-9


class InvalidPairError(ValueError):
    pass


class VorticityBoundError(AssertionError):
    pass


class ShootingError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class PolyPair:
    p: Poly
    q: Poly

    def __post_init__(self):
        if self.p.is_zero() and self.q.is_zero():
            raise InvalidPairError("both polynomials are zero")
        if self.n_flux_half < 1:
            raise InvalidPairError("max(deg P, deg Q) must be at least 1")
        g = gcd(self.p, self.q, COPRIME_RTOL)
        if g.degree > 0:
            raise InvalidPairError(f"P and Q are not coprime (common factor {g.to_text()})")
        if _wronskian_raw(self.p, self.q).is_zero():
            raise InvalidPairError("P and Q are linearly dependent")

    @classmethod
    def parse(cls, p: str, q: str) -> "PolyPair":
        return cls(Poly.parse(p), Poly.parse(q))

    @property
    def n_flux_half(self) -> int:
        return max(self.p.degree, self.q.degree)

    @property
    def beta(self) -> float:
        return 2.0 * self.n_flux_half

    def transformed(self, matrix, scale: complex = 1.0) -> "PolyPair":
        """``(P, Q) -> scale * matrix @ (P, Q)``."""
        m = np.asarray(matrix, dtype=complex)
        p = self.p * (scale * m[0, 0]) + self.q * (scale * m[0, 1])
        q = self.p * (scale * m[1, 0]) + self.q * (scale * m[1, 1])
        return PolyPair(p, q)

    def __repr__(self) -> str:
        return f"PolyPair(p={self.p.to_text()!r}, q={self.q.to_text()!r})"


def random_su2(rng: np.random.Generator) -> np.ndarray:
    a, b = rng.normal(size=2) + 1j * rng.normal(size=2)
    nrm = math.sqrt(abs(a) ** 2 + abs(b) ** 2)
    a, b = a / nrm, b / nrm
    return np.array([[a, -np.conj(b)], [b, np.conj(a)]])


def random_pair(rng: np.random.Generator, n_flux_half: int, spread: float = 1.0,
                min_separation: float = 0.5) -> PolyPair:
    """Random valid pair with ``deg P = n_flux_half > deg Q``.

    Every gauge orbit has such a representative (an SU(2) rotation removes
    the leading coefficient of Q), so no state is excluded. P and Q are
    built from roots drawn uniformly in the disk of radius ``spread``; Q gets
    a leading coefficient of modulus in ``[e^-1/2, e^1/2]``. Roots of P and
    Q are kept ``min_separation * spread`` apart: nearly shared roots give
    nearly non-coprime pairs whose solitons concentrate below any fixed
    grid scale.
    """
    if n_flux_half < 1:
        raise ValueError("n_flux_half must be at least 1")

    def disk(k):
        r = spread * np.sqrt(rng.uniform(size=k))
        return r * np.exp(2j * np.pi * rng.uniform(size=k))

    while True:
        dq = int(rng.integers(0, n_flux_half))
        rp, rq = disk(n_flux_half), disk(dq)
        if dq and np.min(np.abs(rp[:, None] - rq[None, :])) < min_separation * spread:
            continue
        lead = math.exp(rng.uniform(-0.5, 0.5)) * np.exp(2j * np.pi * rng.uniform())
        p = Poly(np.poly(rp)[::-1])
        q = Poly(lead * np.poly(rq)[::-1]) if dq else Poly([lead])
        try:
            return PolyPair(p, q)
        except InvalidPairError:
            continue


def _wronskian_raw(p: Poly, q: Poly) -> Poly:
    w = p.derivative() * q - p * q.derivative()
    size = max(p.scale() * q.scale(), 1e-300)
    # leading terms cancel when deg P = deg Q
    return Poly(np.where(np.abs(w.coeffs) <= 1e-13 * size, 0, w.coeffs))


def wronskian(pair: PolyPair) -> Poly:
    """``f = P'Q - PQ'``; its degree is the vorticity of ``u_{P,Q}``."""
    f = _wronskian_raw(pair.p, pair.q)
    if f.is_zero():
        raise InvalidPairError("zero Wronskian: P and Q are linearly dependent")
    return f


def _z(grid: Grid) -> np.ndarray:
    X, Y = grid.mesh()
    return X + 1j * Y


def nll_state(pair: PolyPair, grid: Grid) -> Field:
    """Sample ``u_{P,Q}``; the analytic prefactor is used as is (no renormalization)."""
    z = _z(grid)
    P, Q, f = pair.p(z), pair.q(z), wronskian(pair)(z)
    beta = pair.beta
    u = math.sqrt(2.0 / (math.pi * beta)) * np.conj(f) / (np.abs(P) ** 2 + np.abs(Q) ** 2)
    out = Field(grid, u)
    out.meta.update(beta=beta, n_flux_half=pair.n_flux_half,
                    norm_deviation=out.norm2() - 1.0)
    return out


def nll_superpotential(pair: PolyPair, grid: Grid) -> DensityField:
    z = _z(grid)
    s = np.abs(pair.p(z)) ** 2 + np.abs(pair.q(z)) ** 2
    return DensityField(grid, math.log(8.0) - 2.0 * np.log(s))


def flux_integral(psi: DensityField, f: Poly) -> float:
    """``int |f|^2 exp(psi) / (8 pi)``; equals ``n_flux_half`` for exact solutions."""
    g = psi.grid
    return float(g.h ** 2 * np.sum(np.abs(f(_z(g))) ** 2 * np.exp(psi.values)) / (8.0 * math.pi))


def liouville_residual(psi: DensityField, f: Poly, core_fraction: float = 0.5,
                       exclude_cells: float = 3.0) -> float:
    """Relative L2 residual of ``-Laplace(psi) = |f|^2 exp(psi)`` on the core.

    ``psi`` grows logarithmically, so it is multiplied by a smooth window that
    equals one on ``r < core_fraction * L`` before the spectral Laplacian is
    taken. Disks of radius ``exclude_cells * h`` around the zeros of ``f`` are
    left out.
    """
    grid = psi.grid
    w = taper(grid, inner=core_fraction, outer=min(0.95, core_fraction + 0.4))
    lap = laplacian_array(psi.values * w, grid)
    z = _z(grid)
    src = np.abs(f(z)) ** 2 * np.exp(psi.values)
    mask = grid.r2() < (core_fraction * grid.L) ** 2
    for z0 in f.roots():
        mask &= np.abs(z - z0) > exclude_cells * grid.h
    res = (-lap - src)[mask]
    return float(np.linalg.norm(res) / np.linalg.norm(src[mask]))


def vorticity_bounds_check(pair: PolyPair) -> tuple[int, int, int]:
    """``(M, n - 1, 2n - 2)`` with ``M = deg f`` counted with multiplicity."""
    M = wronskian(pair).degree
    n = pair.n_flux_half
    lower, upper = n - 1, 2 * n - 2
    if not lower <= M <= upper:
        raise VorticityBoundError(f"vorticity {M} outside [{lower}, {upper}] for {pair!r}")
    return M, lower, upper


def gauge_orbit_test(pair1: PolyPair, pair2: PolyPair, grid: Grid, atol: float = 1e-10) -> bool:
    """True iff the two pairs give the same sampled state (sup norm within ``atol``)."""
    if pair1.n_flux_half != pair2.n_flux_half:
        return False
    u1, u2 = nll_state(pair1, grid), nll_state(pair2, grid)
    return bool(np.max(np.abs(u1.values - u2.values)) <= atol)


# -- Townes soliton -------------------------------------------------------------


def _townes_rhs(r, y):
    tau, dtau = y
    return [dtau, tau - tau ** 3 - dtau / r]


def _series_start(a: float, r0: float) -> list[float]:
    c = (a - a ** 3) / 4.0
    return [a + c * r0 ** 2, 2.0 * c * r0]


def _shoot(a: float, r_max: float, rtol: float):
    """Integrate from the origin; report ``+1`` if tau crosses zero (a too big),
    ``-1`` if it turns back up (a too small), ``0`` if neither before r_max."""

    def crosses(r, y):
        return y[0]

    def turns(r, y):
        return y[1]

    crosses.terminal = True
    crosses.direction = -1
    turns.terminal = True
    turns.direction = 1
    r0 = 1e-6
    sol = solve_ivp(_townes_rhs, (r0, r_max), _series_start(a, r0), method="DOP853",
                    rtol=rtol, atol=rtol * 1e-2, events=(crosses, turns), dense_output=True)
    if sol.t_events[0].size:
        return 1, sol
    if sol.t_events[1].size:
        return -1, sol
    return 0, sol


@dataclass(eq=False)
class TownesProfile:
    r: np.ndarray
    tau: np.ndarray
    dtau: np.ndarray
    u0: float
    l2sq: float
    c_lgn: float
    tail_constant: float
    r_cut: float
    ode_residual: float

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        spline = CubicHermiteSpline(self.r, self.tau, self.dtau)
        inner = spline(np.minimum(r, self.r_cut))
        tail = self.tail_constant * k0(np.maximum(r, self.r_cut))
        return np.where(r <= self.r_cut, inner, tail)

    def sample(self, grid: Grid, scale: float = 1.0) -> Field:
        """``tau(scale * |x|)`` on the grid (not normalized)."""
        return Field(grid, self(scale * np.sqrt(grid.r2())).astype(complex))


def townes_profile(tolerance: float = 1e-8, r_max: float = 30.0, dr: float = 2e-3) -> TownesProfile:
    """Positive radial solution of ``tau'' + tau'/r = tau - tau^3`` decaying at infinity.

    Shooting on ``tau(0)`` (bracket from a coarse scan of ``[1, 4]``, then
    bisection to machine precision). The integration is trusted up to the
    radius where the two bracketing solutions separate; beyond it the profile
    continues as ``C K0(r) ~ C sqrt(pi/2) r^(-1/2) exp(-r)``.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    rtol = 1e-12
    scan = np.linspace(1.0, 4.0, 31)
    kinds = [_shoot(a, r_max, rtol)[0] for a in scan]
    lo = hi = None
    for a0, a1, s0, s1 in zip(scan[:-1], scan[1:], kinds[:-1], kinds[1:]):
        if s0 == -1 and s1 == 1:
            lo, hi = a0, a1
            break
    if lo is None:
        raise ShootingError("coarse scan of tau(0) in [1, 4] did not bracket the Townes profile")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        kind, _ = _shoot(mid, r_max, rtol)
        if kind == 1:
            hi = mid
        elif kind == -1:
            lo = mid
        else:
            lo = hi = mid
            break
    _, sol_lo = _shoot(lo, r_max, rtol)
    _, sol_hi = _shoot(hi, r_max, rtol)
    r_end = min(sol_lo.t[-1], sol_hi.t[-1])
    r = np.arange(1, int(r_end / dr)) * dr
    y_lo, y_hi = sol_lo.sol(r), sol_hi.sol(r)
    tau = 0.5 * (y_lo[0] + y_hi[0])
    dtau = 0.5 * (y_lo[1] + y_hi[1])
    sep = np.abs(y_lo[0] - y_hi[0]) > 1e-4 * np.abs(tau)
    stop = int(np.argmax(sep)) if np.any(sep) else len(r)
    # keep a margin before the separation point
    stop = max(10, int(0.8 * stop))
    r, tau, dtau = r[:stop], tau[:stop], dtau[:stop]
    r_cut = float(r[-1])
    C = float(tau[-1] / k0(r_cut))

    # ODE residual by fourth-order differences of tau' on the mesh
    d2 = (-dtau[4:] + 8 * dtau[3:-1] - 8 * dtau[1:-3] + dtau[:-4]) / (12.0 * dr)
    rr, tt, dd = r[2:-2], tau[2:-2], dtau[2:-2]
    resid = float(np.max(np.abs(d2 + dd / rr - tt + tt ** 3)))

    u0 = 0.5 * (lo + hi)
    r = np.concatenate(([0.0], r))
    tau = np.concatenate(([u0], tau))
    dtau = np.concatenate(([0.0], dtau))
    spline = CubicHermiteSpline(r, tau, dtau)
    inner = quad(lambda s: spline(s) ** 2 * s, 0.0, r_cut, limit=400, epsabs=1e-13, epsrel=1e-13)[0]
    outer = quad(lambda s: (C * k0(s)) ** 2 * s, r_cut, np.inf, epsabs=1e-15)[0]
    l2sq = 2.0 * math.pi * (inner + outer)
    prof = TownesProfile(r=r, tau=tau, dtau=dtau, u0=u0, l2sq=l2sq,
                         c_lgn=l2sq / 2.0, tail_constant=C, r_cut=r_cut, ode_residual=resid)
    if resid > tolerance:
        raise ShootingError(f"Townes ODE residual {resid:.3g} exceeds tolerance {tolerance:.3g}")
    return prof


def townes_tail_check(prof: TownesProfile, r_min: float = 6.0) -> float:
    """Largest relative deviation of ``tau / K0`` from the tail constant ``C`` on ``r >= r_min``."""
    m = prof.r >= r_min
    r = prof.r[m]
    ratio = prof.tau[m] / k0(r)
    return float(np.max(np.abs(ratio / prof.tail_constant - 1.0)))
