"""Uniform square grids, spectral calculus and free-space convolution.

Fields live on the box ``[-L, L)^2`` sampled at ``x_i = -L + i h`` with
``h = 2L/n``; array index ``[i, j]`` is the node ``(x_i, y_j)``. Derivatives
use Fourier multipliers on the periodic extension, integrals are the plain
Riemann sum ``h^2 * sum``, and long-range kernels are applied aperiodically by
zero padding to a ``(2n)^2`` grid.

The two supported kernels, ``log|x|`` and ``grad_perp log|x| = x_perp/|x|^2``,
are split Ewald-style at a screening length ``sigma = 3h``::

    log|x| = [log|x| + E1(|x|^2/sigma^2)/2] + [-E1(|x|^2/sigma^2)/2]
             smooth far part                   singular, short-ranged

The smooth part is sampled on the padded grid (its origin value is the finite
limit; zero for the odd kernel). The short-ranged part is applied through its
exact Fourier symbol ``-2 pi (1 - exp(-sigma^2 k^2/4)) / k^2``. This keeps the
convolution spectrally accurate where plain punctured sampling of the
singular kernel is only second order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
import os

import numpy as np
import scipy.fft as sfft
from scipy.special import exp1

__all__ = [
    "Grid",
    "Field",
    "DensityField",
    "VectorField",
    "integrate",
    "gradient",
    "laplacian",
    "divergence",
    "free_space_convolve",
    "taper",
    "core_mass_fraction",
    "KERNELS",
]

KERNELS = ("grad_perp_log", "log")

# Screening length of the Ewald split, in grid spacings.
SCREEN_CELLS = 3.0


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("AFP_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Grid:
    """Square computational box ``[-L, L)^2`` with ``n`` nodes per side."""

    L: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.L) and self.L > 0):
            raise ValueError(f"box half-width must be positive, got {self.L}")
        n = int(self.n)
        if n != self.n or n < 16 or n & (n - 1):
            raise ValueError(f"n must be a power of two >= 16, got {self.n}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "n", n)

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def x(self) -> np.ndarray:
        return _axis(self.n, self.L)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return _mesh(self.n, self.L)

    def r2(self) -> np.ndarray:
        X, Y = _mesh(self.n, self.L)
        return X * X + Y * Y

    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Angular wavenumbers ``(k1, k2)`` broadcastable against a field."""
        return _wavenumbers(self.n, self.L)

    def zeros(self, dtype=float) -> np.ndarray:
        return np.zeros((self.n, self.n), dtype=dtype)

    @property
    def origin_index(self) -> int:
        return self.n // 2


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@lru_cache(maxsize=16)
def _axis(n: int, L: float) -> np.ndarray:
    return _readonly(-L + (2.0 * L / n) * np.arange(n))


@lru_cache(maxsize=16)
def _mesh(n: int, L: float) -> tuple[np.ndarray, np.ndarray]:
    x = _axis(n, L)
    X, Y = np.meshgrid(x, x, indexing="ij")
    return _readonly(X), _readonly(Y)


@lru_cache(maxsize=16)
def _wavenumbers(n: int, L: float) -> tuple[np.ndarray, np.ndarray]:
    k = 2.0 * np.pi * sfft.fftfreq(n, d=2.0 * L / n)
    return _readonly(k[:, None].copy()), _readonly(k[None, :].copy())


@lru_cache(maxsize=16)
def _derivative_symbols(n: int, L: float) -> tuple[np.ndarray, np.ndarray]:
    # Nyquist mode dropped so that first derivatives map real to real.
    k1, k2 = _wavenumbers(n, L)
    d1 = 1j * k1.copy()
    d2 = 1j * k2.copy()
    d1[n // 2, 0] = 0.0
    d2[0, n // 2] = 0.0
    return _readonly(d1), _readonly(d2)


def _check_values(values: np.ndarray, grid: Grid, what: str) -> None:
    if values.shape != (grid.n, grid.n):
        raise ValueError(f"{what}: expected shape {(grid.n, grid.n)}, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what}: non-finite entries")


@dataclass(eq=False)
class Field:
    """Complex samples of a wavefunction on a grid."""

    grid: Grid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        _check_values(self.values, self.grid, "Field")

    def density(self) -> "DensityField":
        return DensityField(self.grid, np.abs(self.values) ** 2)

    def conj(self) -> "Field":
        return Field(self.grid, np.conj(self.values), dict(self.meta))

    def norm2(self) -> float:
        """``int |u|^2``."""
        return float(self.grid.h ** 2 * np.sum(np.abs(self.values) ** 2))

    def normalized(self) -> "Field":
        return Field(self.grid, self.values / np.sqrt(self.norm2()), dict(self.meta))


@dataclass(eq=False)
class DensityField:
    """Real samples (a density, a potential or a superpotential)."""

    grid: Grid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values)
        if np.iscomplexobj(vals):
            raise TypeError("DensityField values must be real")
        self.values = vals.astype(float, copy=False)
        _check_values(self.values, self.grid, "DensityField")


@dataclass(eq=False)
class VectorField:
    """Two real components per node."""

    grid: Grid
    x: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        _check_values(self.x, self.grid, "VectorField.x")
        _check_values(self.y, self.grid, "VectorField.y")

    def norm_l2(self) -> float:
        return float(np.sqrt(self.grid.h ** 2 * np.sum(self.x ** 2 + self.y ** 2)))


# -- quadrature and derivatives ------------------------------------------------


def integrate(f: DensityField | np.ndarray, grid: Grid | None = None) -> float:
    """Riemann sum ``h^2 * sum(values)``."""
    if isinstance(f, DensityField):
        grid, values = f.grid, f.values
    else:
        values = np.asarray(f)
        if grid is None:
            raise TypeError("grid required when integrating a bare array")
    if not np.all(np.isfinite(values)):
        raise ValueError("integrate: non-finite entries")
    return float(grid.h ** 2 * np.sum(values))


@lru_cache(maxsize=16)
def _real_derivative_symbols(n: int, L: float) -> tuple[np.ndarray, np.ndarray]:
    d1, _ = _derivative_symbols(n, L)
    k2 = 2.0 * np.pi * sfft.rfftfreq(n, d=2.0 * L / n)
    d2 = 1j * k2[None, :]
    d2[0, -1] = 0.0
    return d1, _readonly(d2)


def grad_array(values: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    w = _workers()
    if not np.iscomplexobj(values):
        d1, d2 = _real_derivative_symbols(grid.n, grid.L)
        vh = sfft.rfft2(values, workers=w)
        s = (grid.n, grid.n)
        return sfft.irfft2(d1 * vh, s=s, workers=w), sfft.irfft2(d2 * vh, s=s, workers=w)
    d1, d2 = _derivative_symbols(grid.n, grid.L)
    vh = sfft.fft2(values, workers=w)
    return sfft.ifft2(d1 * vh, workers=w), sfft.ifft2(d2 * vh, workers=w)


def div_array(v1: np.ndarray, v2: np.ndarray, grid: Grid) -> np.ndarray:
    d1, d2 = _derivative_symbols(grid.n, grid.L)
    w = _workers()
    out = sfft.ifft2(d1 * sfft.fft2(v1, workers=w) + d2 * sfft.fft2(v2, workers=w), workers=w)
    if not (np.iscomplexobj(v1) or np.iscomplexobj(v2)):
        return out.real
    return out


def laplacian_array(values: np.ndarray, grid: Grid) -> np.ndarray:
    k1, k2 = _wavenumbers(grid.n, grid.L)
    w = _workers()
    out = sfft.ifft2(-(k1 * k1 + k2 * k2) * sfft.fft2(values, workers=w), workers=w)
    return out if np.iscomplexobj(values) else out.real


def band_limit(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Remove the Nyquist row and column of the spectrum.

    The derivative ``D`` annihilates these modes, so the discrete problem
    lives on their orthogonal complement; a state with Nyquist content would
    carry quartic weight at zero kinetic cost.
    """
    w = _workers()
    vh = sfft.fft2(values, workers=w)
    vh[grid.n // 2, :] = 0.0
    vh[:, grid.n // 2] = 0.0
    return sfft.ifft2(vh, workers=w)


def gradient(u: Field) -> tuple[Field, Field]:
    """Spectral partial derivatives ``(d1 u, d2 u)``."""
    g1, g2 = grad_array(u.values, u.grid)
    return Field(u.grid, g1), Field(u.grid, g2)


def divergence(v1: Field, v2: Field) -> Field:
    return Field(v1.grid, div_array(v1.values, v2.values, v1.grid))


def laplacian(f: Field | DensityField) -> Field | DensityField:
    out = laplacian_array(f.values, f.grid)
    return type(f)(f.grid, out)


def taper(grid: Grid, inner: float = 0.5, outer: float = 0.9) -> np.ndarray:
    """Smooth radial cutoff: 1 for ``r <= inner*L``, 0 for ``r >= outer*L``.

    Multiplying a slowly decaying or growing function by this window makes
    its periodic extension smooth, so spectral derivatives are exact on the
    inner disk.
    """
    r = np.sqrt(grid.r2())
    t = np.clip((r - inner * grid.L) / ((outer - inner) * grid.L), 0.0, 1.0)

    def bump(s):
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out

    a, b = bump(1.0 - t), bump(t)
    return a / (a + b)


def core_mask(grid: Grid, radius_fraction: float = 0.5) -> np.ndarray:
    return grid.r2() < (radius_fraction * grid.L) ** 2


def core_mass_fraction(rho: DensityField | np.ndarray, grid: Grid | None = None) -> float:
    """Fraction of the total mass of ``rho`` that lies inside ``r < L/2``."""
    if isinstance(rho, DensityField):
        grid, values = rho.grid, rho.values
    else:
        values = rho
    total = np.sum(values)
    if total == 0:
        return 1.0
    return float(np.sum(values[core_mask(grid)]) / total)


# -- free-space convolution -------------------------------------------------------


@lru_cache(maxsize=8)
def _padded_symbols(n: int, L: float, kernel_id: str):
    """Transforms (rfft layout) of the sampled far part plus the near symbol."""
    h = 2.0 * L / n
    N = 2 * n
    sigma = SCREEN_CELLS * h
    m = np.arange(N)
    d = np.where(m < n, m, m - N) * h
    D1, D2 = np.meshgrid(d, d, indexing="ij")
    d2 = D1 * D1 + D2 * D2
    safe = np.where(d2 == 0, 1.0, d2)
    k1 = (2.0 * np.pi * sfft.fftfreq(N, d=h))[:, None]
    k2 = (2.0 * np.pi * sfft.rfftfreq(N, d=h))[None, :]
    kk = k1 * k1 + k2 * k2
    kk_safe = np.where(kk == 0, 1.0, kk)
    # Fourier symbol of the screened (near) part of log|x|.
    near = np.where(kk == 0, -np.pi * sigma * sigma / 2.0,
                    -2.0 * np.pi * (-np.expm1(-sigma * sigma * kk / 4.0)) / kk_safe)
    w = _workers()
    if kernel_id == "log":
        far = np.where(d2 == 0, np.log(sigma) - np.euler_gamma / 2.0,
                       0.5 * np.log(safe) + 0.5 * exp1(safe / (sigma * sigma)))
        sym = h * h * sfft.rfft2(far, workers=w) + near
        return (_readonly(sym),)
    if kernel_id == "grad_perp_log":
        fac = np.where(d2 == 0, 0.0, -np.expm1(-d2 / (sigma * sigma)) / safe)
        # grad_perp = (-d2, d1); near symbol of grad_perp g is (-i k2, i k1) g_hat
        i1 = 1j * np.broadcast_to(k1, kk.shape).copy()
        i2 = 1j * np.broadcast_to(k2, kk.shape).copy()
        i1[n, :] = 0.0
        i2[:, -1] = 0.0
        s1 = h * h * sfft.rfft2(-D2 * fac, workers=w) - i2 * near
        s2 = h * h * sfft.rfft2(D1 * fac, workers=w) + i1 * near
        return _readonly(s1), _readonly(s2)
    raise ValueError(f"unknown kernel {kernel_id!r}; expected one of {KERNELS}")


def _pad_rfft(values: np.ndarray, n: int) -> np.ndarray:
    return sfft.rfft2(values, s=(2 * n, 2 * n), workers=_workers())


def _crop_irfft(spec: np.ndarray, n: int) -> np.ndarray:
    return sfft.irfft2(spec, s=(2 * n, 2 * n), workers=_workers())[:n, :n]


def convolve_log_array(rho: np.ndarray, grid: Grid) -> np.ndarray:
    (sym,) = _padded_symbols(grid.n, grid.L, "log")
    return _crop_irfft(sym * _pad_rfft(rho, grid.n), grid.n)


def convolve_grad_perp_log_array(rho: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    s1, s2 = _padded_symbols(grid.n, grid.L, "grad_perp_log")
    rh = _pad_rfft(rho, grid.n)
    return _crop_irfft(s1 * rh, grid.n), _crop_irfft(s2 * rh, grid.n)


def convolve_grad_perp_log_dot(f1: np.ndarray, f2: np.ndarray, grid: Grid) -> np.ndarray:
    """Scalar ``(K * F)(x) = int K(x - y) . F(y) dy`` with ``K = grad_perp log``."""
    s1, s2 = _padded_symbols(grid.n, grid.L, "grad_perp_log")
    return _crop_irfft(s1 * _pad_rfft(f1, grid.n) + s2 * _pad_rfft(f2, grid.n), grid.n)


def free_space_convolve(kernel_id: str, rho: DensityField, core_tol: float = 1e-6):
    """Aperiodic convolution of ``rho`` with ``log|x|`` or ``grad_perp log|x|``.

    Returns a :class:`VectorField` for ``"grad_perp_log"`` and a
    :class:`DensityField` for ``"log"``. ``meta`` records the total mass,
    the fraction inside the core ``r < L/2`` and a ``warning`` flag set when
    more than ``core_tol`` of the mass lies outside it.
    """
    if kernel_id not in KERNELS:
        raise ValueError(f"unknown kernel {kernel_id!r}; expected one of {KERNELS}")
    grid = rho.grid
    frac = core_mass_fraction(rho)
    meta = {
        "kernel": kernel_id,
        "mass": integrate(rho),
        "core_mass_fraction": frac,
        "warning": bool(1.0 - frac > core_tol),
    }
    if kernel_id == "log":
        return DensityField(grid, convolve_log_array(rho.values, grid), meta)
    a1, a2 = convolve_grad_perp_log_array(rho.values, grid)
    return VectorField(grid, a1, a2, meta)
