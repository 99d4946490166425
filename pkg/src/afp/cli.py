"""Command-line entry point: ``afp {minimize,soliton,scan-gamma,verify,townes}``.

Exit status: 0 success, 1 usage error, 2 unstable coupling, 3 non-convergence
(or a failed verification).
"""

from __future__ import annotations

import argparse
from dataclasses import asdict, dataclass, field
import logging
import math
import os
from pathlib import Path
import sys
import time

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_UNSTABLE, EXIT_NOT_CONVERGED = 0, 1, 2, 3
COMMANDS = ("minimize", "soliton", "scan-gamma", "verify", "townes")

log = logging.getLogger("afp")


class UsageError(ValueError):
    pass


# -- configuration --------------------------------------------------------------------


@dataclass
class RunConfig:
    command: str
    n: int = 256
    L: float = 12.0
    beta: float = 0.0
    gamma: float = 0.0
    potential: str = "harmonic"
    init: str = "gaussian"
    noise: float = 0.3
    p: str = "0,1"
    q: str = "1"
    verify: bool = False
    betas: str = "0,2,4"
    seeds: int = 5
    max_iter: int = 10000
    grad_tol: float = 1e-5
    precondition: bool = True
    method: str = "cg"
    out: str = "afp-out"
    seed: int = 0
    workers: int = 1
    config: str | None = None
    extra: dict = field(default_factory=dict)

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        return d


# flag dest -> (type, RunConfig field)
_KEYS = {
    "n": int, "L": float, "beta": float, "gamma": float, "potential": str, "init": str,
    "noise": float, "p": str, "q": str, "verify": None, "betas": str, "seeds": int,
    "max_iter": int, "grad_tol": float, "precondition": None, "method": str, "out": str,
    "seed": int, "workers": int,
}
_ALIASES = {"box": "L", "max-iter": "max_iter", "grad-tol": "grad_tol"}


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config_file(path: str | Path) -> dict:
    """``key=value`` lines; ``#`` starts a comment. Keys are flag names."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lstrip("-")
        key = _ALIASES.get(key, key.replace("-", "_"))
        if not sep or key not in _KEYS:
            raise UsageError(f"{path}:{num}: expected key=value with a known key, got {line!r}")
        out[key] = value.strip()
    return out


def _coerce(key: str, value):
    typ = _KEYS[key]
    if isinstance(value, str):
        if typ is None:
            return _parse_bool(value)
        try:
            return typ(value)
        except ValueError as exc:
            raise UsageError(f"{key}: cannot parse {value!r}") from exc
    return value


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="afp", description="Average-field-Pauli energy: minimizers, solitons, critical coupling.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, grid=True):
        sp.add_argument("--config", help="key=value file; flags given on the command line win")
        sp.add_argument("--out", help="output directory (default afp-out)")
        if grid:
            sp.add_argument("--n", type=int, help="grid points per side, power of two >= 16")
            sp.add_argument("--box", dest="L", type=float, help="half-width L of the box [-L, L)^2")

    def solver(sp):
        sp.add_argument("--max-iter", dest="max_iter", type=int)
        sp.add_argument("--grad-tol", dest="grad_tol", type=float)
        sp.add_argument("--no-precondition", dest="precondition", action="store_const", const=False)
        sp.add_argument("--method", choices=("cg", "sd"))
        sp.add_argument("--seed", type=int)

    sp = sub.add_parser("minimize", help="minimize E_{beta,gamma,V} on the unit sphere")
    common(sp)
    solver(sp)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--gamma", type=float, help="raw value, e.g. 62.832 for 20*pi")
    sp.add_argument("--potential", help="harmonic | zero | file:<path> (AFP1 or CSV)")
    sp.add_argument("--init", help="gaussian[:width] | random[:seed] | soliton:P/Q | file:<path>")
    sp.add_argument("--noise", type=float, help="symmetry-breaking noise added to a Gaussian init")

    sp = sub.add_parser("soliton", help="build the exact state u_{P,Q} and check it")
    common(sp)
    sp.add_argument("--p", help="coefficients of P, lowest degree first, e.g. '0,1'")
    sp.add_argument("--q", help="coefficients of Q, e.g. '1'")
    sp.add_argument("--verify", action="store_const", const=True, help="exit 3 unless all checks pass")

    sp = sub.add_parser("scan-gamma", help="estimate gamma*(beta) on a list of beta values")
    common(sp)
    solver(sp)
    sp.add_argument("--betas", help="comma-separated, sorted, non-negative")
    sp.add_argument("--seeds", type=int, help="multi-start count per beta (default 5)")
    sp.add_argument("--workers", type=int, help="parallel beta points")

    sp = sub.add_parser("verify", help="run the invariant self-test suite")
    common(sp, grid=False)

    sp = sub.add_parser("townes", help="solve for the Townes profile and C_LGN")
    common(sp, grid=False)
    return p


def resolve_config(argv: list[str] | None) -> tuple[RunConfig, bool]:
    """Merge defaults, the optional config file and flags (flags win), then validate."""
    ns = build_parser().parse_args(argv)
    values = {}
    if getattr(ns, "config", None):
        values.update({k: _coerce(k, v) for k, v in read_config_file(ns.config).items()})
    for key in _KEYS:
        v = getattr(ns, key, None)
        if v is not None:
            values[key] = v
    cfg = RunConfig(command=ns.command, config=getattr(ns, "config", None), **values)
    validate(cfg)
    return cfg, ns.verbose


def validate(cfg: RunConfig) -> None:
    from .spectral import Grid
    from .minimize import InitSpec
    from .solitons import PolyPair

    if cfg.command not in COMMANDS:
        raise UsageError(f"unknown command {cfg.command!r}")
    try:
        Grid(cfg.L, cfg.n)
    except ValueError as exc:
        raise UsageError(f"grid: {exc}") from exc
    for name in ("beta", "gamma", "noise", "grad_tol"):
        if not math.isfinite(getattr(cfg, name)):
            raise UsageError(f"{name} must be finite")
    if cfg.max_iter < 1:
        raise UsageError("max_iter must be >= 1")
    if not cfg.grad_tol > 0:
        raise UsageError("grad_tol must be positive")
    if cfg.seeds < 1 or cfg.workers < 1:
        raise UsageError("seeds and workers must be >= 1")
    if cfg.command == "minimize":
        if cfg.potential not in ("harmonic", "zero") and not cfg.potential.startswith("file:"):
            raise UsageError(f"potential must be harmonic, zero or file:<path>, got {cfg.potential!r}")
        try:
            InitSpec.parse(cfg.init)
        except ValueError as exc:
            raise UsageError(f"init: {exc}") from exc
    if cfg.command == "soliton":
        try:
            PolyPair.parse(cfg.p, cfg.q)
        except ValueError as exc:
            raise UsageError(f"soliton pair: {exc}") from exc
    if cfg.command == "scan-gamma":
        betas = _betas(cfg)
        if any(b < 0 for b in betas) or betas != sorted(betas):
            raise UsageError("betas must be non-negative and sorted")


def _betas(cfg: RunConfig) -> list[float]:
    try:
        return [float(t) for t in cfg.betas.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"betas: {exc}") from exc


def parse_potential(spec: str, grid):
    """``harmonic`` / ``zero`` (named forms) or ``file:<path>`` loaded onto ``grid``."""
    from .formats import MAGIC, GridMismatchError, read_afp1, read_csv_density
    from .spectral import DensityField

    if spec in ("harmonic", "zero"):
        return spec
    if not spec.startswith("file:"):
        raise UsageError(f"unknown potential {spec!r}")
    path = Path(spec[5:])
    if not path.is_file():
        raise UsageError(f"potential file {path} not found")
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        f = read_afp1(path)
        if f.grid != grid:
            raise GridMismatchError(
                f"potential {path}: grid (n={f.grid.n}, L={f.grid.L}) does not match (n={grid.n}, L={grid.L})")
        if np.max(np.abs(f.values.imag)) > 0:
            raise ValueError(f"potential {path}: values must be real")
        return DensityField(grid, f.values.real.copy())
    return read_csv_density(path, grid)


def potential_values(spec, grid) -> np.ndarray:
    if spec == "harmonic":
        return grid.r2()
    if spec == "zero":
        return np.zeros((grid.n, grid.n))
    return spec.values


# -- commands --------------------------------------------------------------------------


def _minimize_config(cfg: RunConfig, init_text: str | None = None, **extra):
    from .minimize import InitSpec, MinimizeConfig

    init = InitSpec.parse(init_text or cfg.init)
    if init.kind == "gaussian":
        init = InitSpec.gaussian(init.width, noise=cfg.noise, seed=cfg.seed)
    elif init.kind == "random" and ":" not in cfg.init:
        init = InitSpec.random(cfg.seed)
    return MinimizeConfig(init=init, max_iter=cfg.max_iter, grad_tol=cfg.grad_tol,
                          precondition=cfg.precondition, method=cfg.method,
                          seeds=tuple(range(cfg.seed, cfg.seed + cfg.seeds)), **extra)


def cmd_minimize(cfg: RunConfig, out: Path) -> int:
    from .energy import Coupling
    from .minimize import UnstableCouplingError, minimize_energy
    from .outputs import plot_history, result_document, write_iterations_csv, write_json, write_state_outputs
    from .spectral import Grid
    from .stability import classify, exact_gamma_star, klt_bound

    grid = Grid(cfg.L, cfg.n)
    pot = parse_potential(cfg.potential, grid)
    coupling = Coupling(cfg.beta, cfg.gamma, pot)
    mcfg = _minimize_config(cfg)
    try:
        res = minimize_energy(coupling, mcfg, grid)
    except UnstableCouplingError as exc:
        print(f"minimize_energy: unstable coupling: {exc}", file=sys.stderr)
        write_json(result_document("minimize", "unstable-coupling", None, {"error": str(exc)},
                                   None, cfg.echo(), grid), out / "result.json")
        return EXIT_UNSTABLE
    heat = write_state_outputs(out, res.u, f"beta={cfg.beta:g}, gamma={cfg.gamma:g}, E={res.report.total:.6g}")
    write_iterations_csv(res.log_rows, out / "iterations.csv")
    plot_history(res.energy_history, out / "history.png")
    gs = exact_gamma_star(cfg.beta)
    diag = {
        "iterations": res.iterations,
        "converged": res.converged,
        "stop_reason": res.reason,
        "vortex_count": res.vortex_count,
        "classification": classify(cfg.beta, cfg.gamma, gs).value if gs is not None else None,
        "klt_bound": (klt_bound(gs, cfg.gamma, cfg.potential)
                      if gs is not None and cfg.potential in ("harmonic", "zero") else None),
        "init": mcfg.init.describe(),
    }
    status = "ok" if res.converged else "not-converged"
    write_json(result_document("minimize", status, res.report.to_dict(), diag, heat, cfg.echo(), grid),
               out / "result.json")
    print(f"energy {res.report.total:.10g}  residual {res.report.el_residual:.3e}  "
          f"iterations {res.iterations}  vortices {res.vortex_count}  [{status}]")
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_soliton(cfg: RunConfig, out: Path) -> int:
    from .energy import Coupling, evaluate
    from .outputs import result_document, write_json, write_state_outputs
    from .solitons import (PolyPair, flux_integral, liouville_residual, nll_state,
                           nll_superpotential, wronskian)
    from .spectral import Grid
    from .minimize import count_vortices
    from .stability import nll_membership

    grid = Grid(cfg.L, cfg.n)
    pair = PolyPair.parse(cfg.p, cfg.q)
    u = nll_state(pair, grid)
    beta = pair.beta
    rep = evaluate(u, Coupling(beta, -2.0 * math.pi * beta))
    psi = nll_superpotential(pair, grid)
    f = wronskian(pair)
    liou = liouville_residual(psi, f)
    member = nll_membership(u, beta, 1e-3)
    diag = {
        "p": pair.p.to_text(), "q": pair.q.to_text(), "beta": beta,
        "n_flux_half": pair.n_flux_half,
        "vorticity": f.degree,
        "wronskian_roots": [[float(z.real), float(z.imag)] for z in f.roots()],
        "liouville_residual": liou,
        "flux_integral": flux_integral(psi, f),
        "nll_membership": member,
        "vortex_count": count_vortices(u),
        "self_dual_energy": rep.total,
    }
    heat = write_state_outputs(out, u, f"P={pair.p.to_text()}, Q={pair.q.to_text()}")
    ok = member and liou <= 1e-6
    status = "ok" if (ok or not cfg.verify) else "verification-failed"
    write_json(result_document("soliton", status, rep.to_dict(), diag, heat, cfg.echo(), grid),
               out / "result.json")
    print(f"beta {beta:g}  NLL {member}  liouville {liou:.3e}  flux {diag['flux_integral']:.6f}  "
          f"defect {rep.bogomolnyi_defect:.3e}")
    if cfg.verify and not ok:
        print("soliton --verify: NLL membership or Liouville residual check failed", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_scan(cfg: RunConfig, out: Path) -> int:
    from .outputs import plot_gamma_scan, result_document, write_json
    from .spectral import Grid
    from .stability import phase_diagram, scan_gamma_star, write_phase_json, write_scan_csv

    grid = Grid(cfg.L, cfg.n)
    # random smooth starts suit the quotient; stop a seed once its value stalls
    mcfg = _minimize_config(cfg, "random" if cfg.init == "gaussian" else cfg.init,
                            value_tol=1e-6, stall_window=50)
    pts = scan_gamma_star(_betas(cfg), mcfg, grid, workers=cfg.workers)
    write_scan_csv(pts, out / "scan.csv")
    write_phase_json(pts, out / "phase_diagram.json")
    plot_gamma_scan(pts, out / "gamma_scan.png")
    failed = [p.beta for p in pts if p.failed]
    diag = phase_diagram(pts)
    status = "ok" if not failed else "partial"
    write_json(result_document("scan-gamma", status, None, diag, None, cfg.echo(), grid), out / "result.json")
    for p in pts:
        print(f"beta {p.beta:g}  gamma* <= {p.gamma_star_estimate:.6g}  "
              f"floors {p.bogomolnyi_floor:.6g}/{p.lgn_floor:.6g}  vortices {p.vortex_count}")
    print(f"empirical Lipschitz K = {pts.lipschitz_k:.4g}")
    return EXIT_OK if not failed else EXIT_NOT_CONVERGED


def cmd_townes(cfg: RunConfig, out: Path) -> int:
    from .outputs import plot_townes, result_document, write_json
    from .solitons import townes_profile, townes_tail_check

    prof = townes_profile()
    np.savetxt(out / "townes.csv", np.column_stack([prof.r, prof.tau, prof.dtau]),
               delimiter=",", header="r,tau,dtau", comments="")
    plot_townes(prof, out / "townes.png")
    diag = {
        "u0": prof.u0, "l2sq": prof.l2sq, "c_lgn": prof.c_lgn,
        "c_lgn_over_2pi": prof.c_lgn / (2 * math.pi),
        "tail_constant": prof.tail_constant, "r_cut": prof.r_cut,
        "ode_residual": prof.ode_residual, "tail_check": townes_tail_check(prof),
    }
    write_json(result_document("townes", "ok", None, diag, None, cfg.echo(), None), out / "result.json")
    print(f"tau(0) {prof.u0:.13f}  C_LGN {prof.c_lgn:.9f} = {prof.c_lgn / (2 * math.pi):.6f} x 2pi")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    from .outputs import result_document, write_json
    from .verify import run_all

    results = run_all()
    for r in results:
        print(f"[{'PASS' if r.ok else 'FAIL'}] {r.name}: {r.detail}")
    ok = all(r.ok for r in results)
    diag = {"checks": [asdict(r) for r in results]}
    write_json(result_document("verify", "ok" if ok else "failed", None, diag, None, cfg.echo(), None),
               out / "result.json")
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


_DISPATCH = {"minimize": cmd_minimize, "soliton": cmd_soliton, "scan-gamma": cmd_scan,
             "verify": cmd_verify, "townes": cmd_townes}


def run(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"cannot create output directory {out}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not os.access(out, os.W_OK):
        print(f"output directory {out} is not writable", file=sys.stderr)
        return EXIT_USAGE
    t0 = time.perf_counter()
    code = _DISPATCH[cfg.command](cfg, out)
    log.info("%s finished in %.1f s (exit %d)", cfg.command, time.perf_counter() - t0, code)
    return code


def main(argv: list[str] | None = None) -> int:
    from .formats import FormatError, GridMismatchError

    try:
        cfg, verbose = resolve_config(argv)
    except UsageError as exc:
        print(f"afp: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if cfg.workers > 1 and "AFP_THREADS" not in os.environ and cfg.command != "scan-gamma":
        os.environ["AFP_THREADS"] = str(cfg.workers)
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(cfg)
    except (UsageError, GridMismatchError, FormatError) as exc:
        print(f"afp {cfg.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
