"""Run artifacts: JSON report, CSV/PGM/AFP1 fields, iteration logs and figures."""

from __future__ import annotations

import csv
import json
import math
import platform
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .formats import write_afp1, write_csv
from .spectral import DensityField, Field, Grid

RESULT_SCHEMA = "afp-result/1"
PHASE_DENSITY_CUTOFF = 1e-4

# field names of result.json, fixed by the schema
RESULT_KEYS = ("schema", "command", "status", "report", "diagnostics", "heatmaps", "provenance")


def versions() -> dict:
    import scipy

    return {"afp": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def grid_info(grid: Grid) -> dict:
    return {"n": grid.n, "L": grid.L, "h": grid.h}


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(data: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(_json_safe(data), indent=2, sort_keys=False, allow_nan=False) + "\n")


# -- PGM heatmaps -------------------------------------------------------------------


def write_pgm16(values: np.ndarray, path: str | Path, lo: float | None = None,
                hi: float | None = None) -> tuple[float, float]:
    """Binary 16-bit PGM (P5) with a linear map of ``[lo, hi]`` onto ``[0, 65535]``.

    ``values[i, j]`` is the sample at ``(x_i, y_j)``; the image has ``x``
    along columns and ``y`` increasing upwards. Returns the ``(lo, hi)`` used.
    """
    v = np.asarray(values, dtype=float)
    lo = float(v.min()) if lo is None else lo
    hi = float(v.max()) if hi is None else hi
    span = hi - lo
    scaled = np.zeros_like(v) if span <= 0 else (v - lo) / span
    img = np.rint(np.clip(scaled, 0.0, 1.0) * 65535).astype(">u2").T[::-1]
    n_y, n_x = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{n_x} {n_y}\n65535\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())
    return lo, hi


def read_pgm16(path: str | Path) -> np.ndarray:
    """Inverse of :func:`write_pgm16` up to the linear map: raw integers indexed ``[i, j]``."""
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    n_x, n_y = (int(t) for t in parts[1].split())
    if int(parts[2]) != 65535:
        raise ValueError(f"{path}: expected a 16-bit PGM")
    img = np.frombuffer(parts[3], dtype=">u2").reshape(n_y, n_x)
    return img[::-1].T.astype(np.int64)


def masked_phase(u: Field, cutoff: float = PHASE_DENSITY_CUTOFF) -> np.ndarray:
    """Phase of ``u`` where the density exceeds ``cutoff * max``, else 0."""
    rho = np.abs(u.values) ** 2
    return np.where(rho > cutoff * rho.max(), np.angle(u.values), 0.0)


# -- iteration logs ----------------------------------------------------------------------


def write_iterations_csv(rows: Iterable[Sequence[float]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("iter", "energy", "residual", "step"))
        for it, e, r, s in rows:
            w.writerow((int(it), repr(float(e)), repr(float(r)), repr(float(s))))


# -- figures ----------------------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_state(u: Field, path: str | Path, title: str = "") -> None:
    """Density and phase side by side, phase masked where the density is negligible."""
    plt = _pyplot()
    g = u.grid
    rho = np.abs(u.values) ** 2
    phase = np.ma.masked_where(rho <= PHASE_DENSITY_CUTOFF * rho.max(), np.angle(u.values))
    ext = (-g.L, g.L - g.h, -g.L, g.L - g.h)
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.6), constrained_layout=True)
    im = axes[0].imshow(rho.T, origin="lower", extent=ext, cmap="viridis")
    fig.colorbar(im, ax=axes[0], shrink=0.85, label=r"$|u|^2$")
    axes[0].set_title("density")
    im = axes[1].imshow(phase.T, origin="lower", extent=ext, cmap="twilight",
                        vmin=-np.pi, vmax=np.pi, interpolation="nearest")
    fig.colorbar(im, ax=axes[1], shrink=0.85, label=r"$\arg u$")
    axes[1].set_title("phase")
    for ax in axes:
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    if title:
        fig.suptitle(title)
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_history(history: Sequence[float], path: str | Path, label: str = "energy") -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.5, 3.2), constrained_layout=True)
    h = np.asarray(history, dtype=float)
    ax.plot(np.arange(len(h)), h, lw=1.0)
    ax.set_xlabel("iteration")
    ax.set_ylabel(label)
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_gamma_scan(points, path: str | Path) -> None:
    """Estimated critical coupling against beta with the two lower floors."""
    plt = _pyplot()
    ok = [p for p in points if not p.failed]
    b = np.array([p.beta for p in ok])
    fig, ax = plt.subplots(figsize=(4.5, 3.4), constrained_layout=True)
    if len(ok):
        bb = np.linspace(0.0, max(b.max(), 2.0) * 1.05, 200)
        ax.plot(bb, 2 * np.pi * bb, "--", c="0.5", lw=1, label=r"$2\pi\beta$")
        ax.axhline(ok[0].lgn_floor, ls=":", c="0.5", lw=1, label=r"$C_{\rm LGN}$")
        ax.plot(b, [p.gamma_star_estimate for p in ok], "o-", c="C3", ms=4, label="estimate")
    ax.set_xlabel(r"$\beta$")
    ax.set_ylabel(r"$\hat\gamma^*(\beta)$")
    ax.legend(frameon=False)
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_townes(profile, path: str | Path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.5, 3.2), constrained_layout=True)
    ax.semilogy(profile.r, np.maximum(profile.tau, 1e-300), lw=1.2)
    ax.axvline(profile.r_cut, ls=":", c="0.5", lw=1)
    ax.set_xlabel("r")
    ax.set_ylabel(r"$\tau(r)$")
    ax.set_ylim(1e-12, 10)
    fig.savefig(path, dpi=120)
    plt.close(fig)


# -- bundle ------------------------------------------------------------------------------


def write_state_outputs(out: Path, u: Field, figure_title: str = "") -> dict:
    """density.csv, density.pgm, phase.pgm, field.bin and state.png; returns heatmap ranges."""
    out.mkdir(parents=True, exist_ok=True)
    rho = np.abs(u.values) ** 2
    write_csv(out / "density.csv", DensityField(u.grid, rho))
    dlo, dhi = write_pgm16(rho, out / "density.pgm")
    plo, phi = write_pgm16(masked_phase(u), out / "phase.pgm", -math.pi, math.pi)
    write_afp1(out / "field.bin", u)
    plot_state(u, out / "state.png", figure_title)
    return {
        "density": {"file": "density.pgm", "min": dlo, "max": dhi},
        "phase": {"file": "phase.pgm", "min": plo, "max": phi,
                  "density_cutoff": PHASE_DENSITY_CUTOFF},
    }


def result_document(command: str, status: str, report: dict | None, diagnostics: dict,
                    heatmaps: dict | None, config: dict, grid: Grid | None) -> dict:
    return {
        "schema": RESULT_SCHEMA,
        "command": command,
        "status": status,
        "report": report,
        "diagnostics": diagnostics,
        "heatmaps": heatmaps,
        "provenance": {
            "config": config,
            "grid": grid_info(grid) if grid is not None else None,
            "versions": versions(),
        },
    }
