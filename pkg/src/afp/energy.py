"""The average-field-Pauli energy, its Euler-Lagrange operator and exact identities.

For a normalized ``u`` with density ``rho = |u|^2``::

    E[u] = int |(-i grad + beta A[rho]) u|^2 + gamma |u|^4 + V |u|^2

Everything is discretized with the spectral derivative ``D`` of
:mod:`afp.spectral` and the free-space convolution for ``A``. The operator
returned by :func:`el_gradient` is the exact derivative of the *discrete*
energy (``dE = 2 Re <du, H[u] u>``), which the finite-difference tests rely
on.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
import math

import numpy as np
import scipy.fft as sfft

from .selfmag import superpotential
from .spectral import (
    DensityField,
    Field,
    Grid,
    _workers,
    band_limit,
    convolve_grad_perp_log_array,
    convolve_grad_perp_log_dot,
    div_array,
    grad_array,
)

NORM_TOL = 1e-6


class NonFiniteEnergyError(FloatingPointError):
    pass


class DilationError(ValueError):
    pass


NAMED_POTENTIALS = ("harmonic", "zero")


@dataclass
class Coupling:
    """Couplings ``(beta, gamma)`` and the trap ``V``.

    ``potential`` is ``"harmonic"`` (``V = r^2``), ``"zero"`` or a
    :class:`DensityField` sampled on the same grid as the state.
    """

    beta: float
    gamma: float = 0.0
    potential: DensityField | str = "zero"

    def __post_init__(self):
        if isinstance(self.potential, str) and self.potential not in NAMED_POTENTIALS:
            raise ValueError(f"unknown potential {self.potential!r}")

    def potential_values(self, grid: Grid) -> np.ndarray | None:
        V = self.potential
        if isinstance(V, str):
            return grid.r2() if V == "harmonic" else None
        if V.grid != grid:
            raise ValueError("potential sampled on a different grid")
        return V.values

    def with_gamma(self, gamma: float) -> "Coupling":
        return Coupling(self.beta, gamma, self.potential)


@dataclass
class EnergyReport:
    kinetic_magnetic: float
    quartic: float
    potential: float
    total: float
    l4norm: float
    bogomolnyi_defect: float
    el_residual: float
    multiplier: float
    norm: float
    normalized: bool

    def to_dict(self) -> dict:
        return asdict(self)


# -- discrete building blocks --------------------------------------------------


def _finite(name: str, value):
    if not np.all(np.isfinite(value)):
        raise NonFiniteEnergyError(f"non-finite value in the {name} term")
    return value


class _Magnetic:
    """Covariant derivatives ``c_j = (D_j + i beta A_j) u`` for ``beta >= 0``."""

    __slots__ = ("u", "grid", "beta", "rho", "a1", "a2", "c1", "c2")

    def __init__(self, u: np.ndarray, grid: Grid, beta: float):
        self.u, self.grid, self.beta = u, grid, beta
        self.rho = (u * np.conj(u)).real
        d1, d2 = grad_array(u, grid)
        if beta != 0:
            A1, A2 = convolve_grad_perp_log_array(self.rho, grid)
            self.a1, self.a2 = beta * A1, beta * A2
            self.c1 = d1 + 1j * self.a1 * u
            self.c2 = d2 + 1j * self.a2 * u
        else:
            self.a1 = self.a2 = None
            self.c1, self.c2 = d1, d2

    def kinetic(self) -> float:
        h2 = self.grid.h ** 2
        val = h2 * float(np.sum(self.c1.real ** 2 + self.c1.imag ** 2
                                + self.c2.real ** 2 + self.c2.imag ** 2))
        return _finite("magnetic kinetic", val)

    def apply(self) -> np.ndarray:
        """Derivative of the kinetic term, including the nonlocal response."""
        out = -div_array(self.c1, self.c2, self.grid)
        if self.beta == 0:
            return out
        out -= 1j * (self.a1 * self.c1 + self.a2 * self.c2)
        # F = beta A rho + J = Im(conj(u) c)
        cu = np.conj(self.u)
        f1 = (cu * self.c1).imag
        f2 = (cu * self.c2).imag
        s = convolve_grad_perp_log_dot(f1, f2, self.grid)
        out -= 2.0 * self.beta * s * self.u
        return out


def _oriented(u: np.ndarray, beta: float) -> tuple[np.ndarray, float, bool]:
    # conjugation symmetry: E_{-beta}[u] = E_{beta}[conj u]
    if beta < 0:
        return np.conj(u), -beta, True
    return u, beta, False


def energy_terms(u: np.ndarray, grid: Grid, c: Coupling) -> tuple[float, float, float]:
    """``(kinetic_magnetic, int |u|^4, int V|u|^2)`` for a raw array."""
    v, beta, _ = _oriented(u, c.beta)
    mag = _Magnetic(v, grid, beta)
    h2 = grid.h ** 2
    l4 = _finite("quartic", h2 * float(np.sum(mag.rho ** 2)))
    V = c.potential_values(grid)
    pot = 0.0 if V is None else _finite("potential", h2 * float(np.sum(V * mag.rho)))
    return mag.kinetic(), l4, pot


def energy_value(u: np.ndarray, grid: Grid, c: Coupling) -> float:
    kin, l4, pot = energy_terms(u, grid, c)
    return kin + c.gamma * l4 + pot


def apply_h(u: np.ndarray, grid: Grid, c: Coupling):
    """``(H[u] u, (kinetic, l4, potential))`` for a raw array."""
    v, beta, flipped = _oriented(u, c.beta)
    mag = _Magnetic(v, grid, beta)
    h2 = grid.h ** 2
    hu = mag.apply()
    if c.gamma != 0:
        hu += 2.0 * c.gamma * mag.rho * v
    V = c.potential_values(grid)
    pot = 0.0
    if V is not None:
        hu += V * v
        pot = h2 * float(np.sum(V * mag.rho))
    l4 = h2 * float(np.sum(mag.rho ** 2))
    parts = (mag.kinetic(), _finite("quartic", l4), _finite("potential", pot))
    _finite("Euler-Lagrange", hu)
    return (np.conj(hu) if flipped else hu), parts


def multiplier_and_residual(u: np.ndarray, hu: np.ndarray, grid: Grid) -> tuple[float, float]:
    h2 = grid.h ** 2
    nrm = h2 * float(np.sum(np.abs(u) ** 2))
    if nrm == 0:
        return 0.0, 0.0
    lam = h2 * float(np.sum(np.conj(u) * hu).real) / nrm
    # measured on the band-limited space where the discrete problem lives
    res = math.sqrt(h2 * float(np.sum(np.abs(band_limit(hu - lam * u, grid)) ** 2)))
    return lam, res


# -- public operations --------------------------------------------------------------


def el_gradient(u: Field, c: Coupling) -> Field:
    """``H[u] u``: the Euler-Lagrange operator applied to ``u``.

    ``-(grad + i beta A)^2 u - 2 beta (grad_perp log * (beta A rho + J)) u
    + 2 gamma |u|^2 u + V u``.
    """
    hu, _ = apply_h(u.values, u.grid, c)
    return Field(u.grid, hu)


def evaluate(u: Field, c: Coupling) -> EnergyReport:
    grid = u.grid
    hu, (kin, l4, pot) = apply_h(u.values, grid, c)
    norm = u.norm2()
    lam, res = multiplier_and_residual(u.values, hu, grid)
    quartic = c.gamma * l4
    total = _finite("total", kin + quartic + pot)
    return EnergyReport(
        kinetic_magnetic=kin,
        quartic=quartic,
        potential=pot,
        total=total,
        l4norm=l4,
        bogomolnyi_defect=kin - 2.0 * math.pi * abs(c.beta) * l4,
        el_residual=res,
        multiplier=lam,
        norm=norm,
        normalized=abs(norm - 1.0) <= NORM_TOL,
    )


def _interp_matrix(grid: Grid, scale: float) -> np.ndarray:
    """Rows evaluate the trigonometric interpolant at ``scale * x_i``."""
    n, L = grid.n, grid.L
    k = 2.0 * np.pi * sfft.fftfreq(n, d=grid.h)
    k[n // 2] = 0.0  # Nyquist coefficient is dropped below
    pts = scale * grid.x
    M = np.exp(1j * np.outer(pts + L, k)) / n
    M[np.abs(pts) >= L, :] = 0.0
    return M


def dilate(u: Field, scale: float, tol: float = 1e-6) -> Field:
    """``u_s(x) = s u(s x)`` by trigonometric interpolation.

    Preserves the L2 norm; raises :class:`DilationError` when the dilated
    state does not fit in the box (norm changes by more than ``tol``).
    """
    if not (scale > 0 and np.isfinite(scale)):
        raise ValueError(f"dilation factor must be positive, got {scale}")
    if scale == 1.0:
        return Field(u.grid, u.values.copy(), dict(u.meta))
    grid = u.grid
    uh = sfft.fft2(u.values, workers=_workers())
    uh[grid.n // 2, :] = 0.0
    uh[:, grid.n // 2] = 0.0
    M = _interp_matrix(grid, scale)
    out = Field(grid, scale * (M @ uh @ M.T))
    n0, n1 = u.norm2(), out.norm2()
    if n0 > 0 and abs(n1 - n0) > tol * n0:
        raise DilationError(
            f"dilation by {scale} loses L2 mass: {n0:.9g} -> {n1:.9g}; enlarge the box")
    return out


def magnetic_energy(u: Field, beta: float) -> float:
    """``E_{beta,0,0}[u]``."""
    return energy_terms(u.values, u.grid, Coupling(beta))[0]


def diamagnetic_check(u: Field, beta: float) -> tuple[float, float]:
    """``(E_{beta,0,0}[u], int |grad |u||^2)``; the first dominates the second."""
    lhs = magnetic_energy(u, beta)
    modulus = np.abs(u.values).astype(complex)
    rhs = energy_terms(modulus, u.grid, Coupling(0.0))[0]
    return lhs, rhs


def susy_factorization_check(u: Field, beta: float) -> float:
    """Discrepancy in the supersymmetric factorization of the kinetic energy.

    Compares ``int |(grad + i beta A)u|^2 - B|u|^2`` (with ``B = 2 pi beta rho``)
    against ``int |(d1 - i d2)(exp(-psi/2) u)|^2 exp(psi)`` where ``psi`` is
    the superpotential of ``rho = |u|^2``. Negative ``beta`` is mapped by
    complex conjugation.
    """
    if beta == 0:
        raise ValueError("susy factorization needs beta != 0")
    v, b, _ = _oriented(u.values, beta)
    grid = u.grid
    if not np.any(v):
        return 0.0
    h2 = grid.h ** 2
    mag = _Magnetic(v, grid, b)
    lhs = mag.kinetic() - 2.0 * math.pi * b * h2 * float(np.sum(mag.rho ** 2))

    psi = superpotential(DensityField(grid, mag.rho), b).values
    # grad psi from -grad_perp(psi)/2 = beta A: d1 psi = -2 beta A2, d2 psi = 2 beta A1
    dbar_psi = -2.0 * mag.a2 - 1j * (2.0 * mag.a1)
    d1, d2 = grad_array(v, grid)
    g = np.exp(-psi / 2.0)
    dbar_g = g * ((d1 - 1j * d2) - 0.5 * dbar_psi * v)
    rhs = h2 * float(np.sum(np.abs(dbar_g) ** 2 * np.exp(psi)))
    return abs(lhs - rhs)
