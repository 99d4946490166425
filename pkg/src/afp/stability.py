"""Phase diagram: critical-coupling scans, NLL membership, Thomas-Fermi bounds.

Closed-form Thomas-Fermi minimum for ``int g rho^2 + r^2 rho`` with
``int rho = 1`` (derived from the Lagrange condition ``2 g rho + r^2 = lambda``
on the support)::

    rho = (lambda - r^2)_+ / (2 g),   lambda = 2 sqrt(g / pi),
    E   = (4/3) sqrt(g / pi),          radius = sqrt(lambda).

For the zero trap the infimum is 0 (spread the mass out).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
import csv
import enum
from functools import lru_cache
import json
import logging
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .energy import Coupling, evaluate
from .minimize import MinimizeConfig, minimize_quotient
from .spectral import Field, Grid

log = logging.getLogger(__name__)


class UnsupportedTrapError(ValueError):
    pass


# -- Thomas-Fermi -------------------------------------------------------------------


@dataclass(frozen=True)
class TFComparator:
    g_effective: float
    trap: str
    energy: float
    radius: float
    multiplier: float

    def density(self, grid: Grid) -> np.ndarray:
        if self.trap != "harmonic":
            return np.zeros((grid.n, grid.n))
        return np.maximum(self.multiplier - grid.r2(), 0.0) / (2.0 * self.g_effective)


def tf_minimum(g: float, trap: str = "harmonic") -> TFComparator:
    """Minimum of the Thomas-Fermi functional ``int g rho^2 + V rho`` over probability densities."""
    if not isinstance(trap, str) or trap not in ("harmonic", "zero"):
        raise UnsupportedTrapError(
            f"tf_minimum: trap {trap!r} not supported (closed forms exist for 'harmonic' and 'zero')")
    if not g > 0:
        raise ValueError(f"tf_minimum: coefficient g must be positive, got {g}")
    if trap == "zero":
        return TFComparator(g, trap, 0.0, math.inf, 0.0)
    lam = 2.0 * math.sqrt(g / math.pi)
    return TFComparator(g, trap, (4.0 / 3.0) * math.sqrt(g / math.pi), math.sqrt(lam), lam)


REFINED_TF_CONSTANT = 1.18


def tf_matched_width(beta: float, gamma: float) -> float:
    """Width ``w`` of ``exp(-r^2 / 2w^2)`` with the same ``<r^2>`` as the harmonic TF profile.

    Uses the refined coefficient ``2 pi 1.18 |beta| + gamma``; ``<r^2> = R^2/3``
    for the TF profile. Falls back to the oscillator width 1 when the
    coefficient is not positive.
    """
    g = 2.0 * math.pi * REFINED_TF_CONSTANT * abs(beta) + gamma
    if g <= 0:
        return 1.0
    return max(1.0, tf_minimum(g).radius / math.sqrt(3.0))


def klt_bound(gamma_star: float, gamma: float, trap: str = "harmonic") -> float:
    """Lower bound on the ground-state energy from the TF problem with ``gamma* + gamma``."""
    g = gamma_star + gamma
    if g <= 0:
        return -math.inf
    return tf_minimum(g, trap).energy


# -- classification ------------------------------------------------------------------


class Stability(str, enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    CRITICAL = "critical"


def exact_gamma_star(beta: float) -> float | None:
    """``2 pi |beta|`` where it is known exactly (``|beta| >= 2``), else ``None``."""
    return 2.0 * math.pi * abs(beta) if abs(beta) >= 2 else None


def classify(beta: float, gamma: float, gamma_star: float | None = None,
             rel_margin: float = 0.02) -> Stability:
    if gamma_star is None:
        gamma_star = exact_gamma_star(beta)
        if gamma_star is None:
            raise ValueError("classify: gamma_star estimate needed for |beta| < 2")
    margin = rel_margin * gamma_star + 1e-6
    if abs(gamma + gamma_star) <= margin:
        return Stability.CRITICAL
    if gamma > -gamma_star + margin:
        return Stability.STABLE
    return Stability.UNSTABLE


def nll_membership(u: Field, beta: float, tol: float = 1e-3) -> bool:
    """Whether ``u`` is a normalized NLL state at coupling ``beta``, up to ``tol``.

    NLL states exist only for ``beta`` a positive even integer. At other
    couplings near-minimizers approach the Bogomolnyi bound without reaching
    it, so the defect alone cannot tell them apart on a finite grid.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    n = round(abs(beta) / 2.0)
    if n < 1 or abs(abs(beta) - 2.0 * n) > tol:
        return False
    rep = evaluate(u, Coupling(beta))
    return (abs(rep.bogomolnyi_defect) <= tol * rep.kinetic_magnetic
            and abs(rep.norm - 1.0) <= tol)


# -- gamma* scans --------------------------------------------------------------------------


@lru_cache(maxsize=1)
def lgn_constant() -> float:
    from .solitons import townes_profile

    return townes_profile().c_lgn


@dataclass
class ScanPoint:
    beta: float
    gamma_star_estimate: float
    bogomolnyi_floor: float
    lgn_floor: float
    vortex_count: int
    converged: bool
    failed: bool = False
    error: str = ""

    def floor_consistent(self, tol: float = 1e-3) -> bool:
        floor = max(self.bogomolnyi_floor, self.lgn_floor)
        return self.gamma_star_estimate >= floor - tol * (floor + 1.0)


class GammaScan(list):
    """List of :class:`ScanPoint` with the empirical Lipschitz constant ``lipschitz_k``."""

    lipschitz_k: float = math.nan


def _scan_one(args) -> ScanPoint:
    beta, cfg, grid, lgn = args
    floor = 2.0 * math.pi * beta
    try:
        res = minimize_quotient(beta, cfg, grid)
    except Exception as exc:  # one bad point must not kill the scan
        log.warning("scan: beta=%g failed: %s", beta, exc)
        return ScanPoint(beta, math.nan, floor, lgn, 0, False, True, f"{type(exc).__name__}: {exc}")
    return ScanPoint(beta, res.gamma_star_estimate, floor, lgn, res.vortex_count, res.converged)


def empirical_lipschitz(points: Sequence[ScanPoint]) -> float:
    ok = [p for p in points if not p.failed]
    slopes = [abs(b.gamma_star_estimate - a.gamma_star_estimate) / (b.beta - a.beta)
              for a, b in zip(ok, ok[1:]) if b.beta > a.beta]
    return max(slopes) if slopes else math.nan


def scan_gamma_star(betas: Sequence[float], cfg: MinimizeConfig, grid: Grid,
                    workers: int = 1) -> GammaScan:
    """One quotient minimization per ``beta``; failures are flagged, not raised."""
    betas = [float(b) for b in betas]
    if any(b < 0 for b in betas):
        raise ValueError("scan_gamma_star: betas must be non-negative")
    if betas != sorted(betas):
        raise ValueError("scan_gamma_star: betas must be sorted")
    lgn = lgn_constant()
    jobs = [(b, cfg, grid, lgn) for b in betas]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            points = list(ex.map(_scan_one, jobs))  # map keeps beta order
    else:
        points = [_scan_one(j) for j in jobs]
    out = GammaScan(points)
    out.lipschitz_k = empirical_lipschitz(points)
    return out


SCAN_COLUMNS = ("beta", "gamma_star_estimate", "bogomolnyi_floor", "lgn_floor",
                "vortex_count", "converged")


def write_scan_csv(points: Sequence[ScanPoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCAN_COLUMNS)
        for p in points:
            w.writerow([repr(p.beta), repr(p.gamma_star_estimate), repr(p.bogomolnyi_floor),
                        repr(p.lgn_floor), p.vortex_count, int(p.converged)])


def phase_diagram(points: GammaScan) -> dict:
    rows = []
    for p in points:
        d = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in asdict(p).items()}
        d["floor_consistent"] = None if p.failed else p.floor_consistent()
        d["exact_gamma_star"] = exact_gamma_star(p.beta)
        rows.append(d)
    return {
        "schema": "afp-phase-diagram/1",
        "lipschitz_k": None if math.isnan(points.lipschitz_k) else points.lipschitz_k,
        "lgn_constant": points[0].lgn_floor if points else None,
        "points": rows,
    }


def write_phase_json(points: GammaScan, path: str | Path) -> None:
    data = phase_diagram(points)
    Path(path).write_text(json.dumps(data, indent=2, allow_nan=False))
