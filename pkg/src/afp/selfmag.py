"""Magnetic self-interaction: vector potential, superpotential and current."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import (
    DensityField,
    Field,
    VectorField,
    core_mass_fraction,
    free_space_convolve,
    grad_array,
    integrate,
    taper,
)


@dataclass(eq=False)
class SelfPotential:
    """``A[rho] = grad_perp(log|x|) * rho``, stored without the factor beta.

    Its curl is ``2 pi rho`` and it is divergence free (Coulomb gauge).
    """

    A: VectorField
    source: DensityField
    total_mass: float

    @property
    def core_mass_fraction(self) -> float:
        return self.A.meta["core_mass_fraction"]


def self_potential(rho: DensityField) -> SelfPotential:
    if np.any(rho.values < 0):
        raise ValueError("self_potential: density has negative entries")
    A = free_space_convolve("grad_perp_log", rho)
    return SelfPotential(A=A, source=rho, total_mass=A.meta["mass"])


def curl_on_core(A: VectorField) -> DensityField:
    """``d1 A2 - d2 A1``, exact on the core ``r < L/2``.

    ``A`` decays only like ``1/r``, so its periodic extension jumps at the box
    edge; it is multiplied by a smooth window equal to one on the core before
    the spectral derivatives are taken. Values outside the core are not
    meaningful.
    """
    w = taper(A.grid, inner=0.5, outer=0.99)
    d1 = grad_array(A.y * w, A.grid)[0]
    d2 = grad_array(A.x * w, A.grid)[1]
    return DensityField(A.grid, d1 - d2)


def superpotential(rho: DensityField, beta: float) -> DensityField:
    """``psi = -2 beta (log|x| * rho)``, so that ``-grad_perp(psi)/2 = beta A[rho]``.

    The additive constant is the one fixed by the free-space Green's function:
    ``psi(x) + 2 beta M log|x| -> 0`` as ``|x| -> inf`` for mass ``M``.
    """
    if beta == 0:
        return DensityField(rho.grid, np.zeros_like(rho.values),
                            {"mass": integrate(rho), "core_mass_fraction": core_mass_fraction(rho)})
    w = free_space_convolve("log", rho)
    return DensityField(rho.grid, -2.0 * beta * w.values, dict(w.meta))


def current_arrays(u: np.ndarray, grid) -> tuple[np.ndarray, np.ndarray]:
    # Real and imaginary parts differentiated separately so that u -> conj(u)
    # flips the sign bit-for-bit.
    a, b = u.real, u.imag
    a1, a2 = grad_array(a, grid)
    b1, b2 = grad_array(b, grid)
    return a * b1 - b * a1, a * b2 - b * a2


def current(u: Field) -> VectorField:
    """Probability current ``J[u] = (i/2)(u grad(conj u) - conj(u) grad u) = Im(conj(u) grad u)``."""
    j1, j2 = current_arrays(u.values, u.grid)
    return VectorField(u.grid, j1, j2)
