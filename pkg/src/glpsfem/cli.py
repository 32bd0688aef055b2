"""Command-line front end: ``glps-fem convergence|solve|infsup``."""
from __future__ import annotations

import argparse
import logging
import shlex
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import (
    assemble,
    darcy_reference_problem,
    stokes_reference_problem,
    write_matrix_market,
)
from .mesh import write_vtk
from .solver import MAX_INFSUP_CELLS, inf_sup_estimate, solve
from .stabilization import DEFAULTS, StabilizationParams
from .verification import ErrorReport, compute_errors, mesh_hierarchy

MAX_LEVELS = 8
EXPORTS = ("csv", "vtk", "mm")

# published benchmark errors (u L2, grad u L2, p L2) for the Stokes case at h = 1/64
STOKES_REFERENCE_ROW = (0.0182, 0.3933, 0.2027)

log = logging.getLogger("glpsfem")


@dataclass
class RunConfig:
    command: str
    problem: str
    levels: int
    beta: float
    zeta: float
    perturb: bool
    out: Path
    exports: frozenset
    quad_degree: int
    argv: tuple = ()

    @property
    def params(self) -> StabilizationParams:
        return StabilizationParams(self.beta, self.zeta)

    @property
    def header(self) -> str:
        return "glps-fem " + shlex.join(self.argv)


def _exports(text: str) -> frozenset:
    items = frozenset(s.strip() for s in text.split(",") if s.strip())
    bad = items - set(EXPORTS)
    if bad:
        raise argparse.ArgumentTypeError(
            f"unknown export(s) {', '.join(sorted(bad))}; choose from {','.join(EXPORTS)}"
        )
    return items


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="glps-fem",
        description="P1/P1 vertex-patch stabilized finite elements for Darcy and Stokes.",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=["convergence", "solve", "infsup"])
    ap.add_argument("--problem", choices=["darcy", "stokes"], default="darcy")
    ap.add_argument("--levels", type=int, default=None,
                    help="number of refinement levels (default 5, or 3 for infsup)")
    ap.add_argument("--beta", type=float, default=None,
                    help="stabilization scale (default 10 for darcy, 1 for stokes)")
    ap.add_argument("--zeta", type=float, default=None,
                    help="Nitsche penalty (stokes only, default 2)")
    ap.add_argument("--perturb", action="store_true",
                    help="randomly perturb interior vertices of every level")
    ap.add_argument("--out", type=Path, default=Path("glps-out"))
    ap.add_argument("--export", type=_exports, default=frozenset({"csv"}),
                    help="comma separated subset of csv,vtk,mm (default csv)")
    ap.add_argument("--quad-degree", type=int, default=6)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def parse_config(argv) -> RunConfig:
    ap = build_parser()
    ns = ap.parse_args(argv)
    beta0, zeta0 = DEFAULTS[ns.problem]
    levels = ns.levels if ns.levels is not None else (3 if ns.command == "infsup" else 5)
    if not 1 <= levels <= MAX_LEVELS:
        ap.error(f"--levels must be between 1 and {MAX_LEVELS}")
    if not 1 <= ns.quad_degree <= 8:
        ap.error("--quad-degree must be between 1 and 8")
    if ns.problem == "darcy" and ns.zeta not in (None, 0.0):
        ap.error("--zeta only applies to the stokes problem")
    logging.basicConfig(
        level=logging.INFO if ns.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    return RunConfig(
        command=ns.command,
        problem=ns.problem,
        levels=levels,
        beta=beta0 if ns.beta is None else ns.beta,
        zeta=zeta0 if ns.zeta is None else ns.zeta,
        perturb=ns.perturb,
        out=ns.out,
        exports=ns.export,
        quad_degree=ns.quad_degree,
        argv=tuple(argv),
    )


def _problem(name):
    return darcy_reference_problem() if name == "darcy" else stokes_reference_problem()


def oscillation_indicator(mesh, pressure, problem) -> float:
    """Largest nodal pressure jump along an edge over the exact pressure range."""
    p = pressure.nodal
    jump = np.abs(p[mesh.edges[:, 0]] - p[mesh.edges[:, 1]]).max()
    x, y = mesh.vertices.T
    exact = problem.pressure(x, y)
    return float(jump / (exact.max() - exact.min()))


def _solve_levels(cfg: RunConfig, out_lines: list):
    problem = _problem(cfg.problem)
    report = ErrorReport(cfg.problem)
    indicators = []
    for k, mesh, h_nom in mesh_hierarchy(cfg.levels, perturb=cfg.perturb):
        log.info("level %d: %d cells", k, mesh.n_cells)
        try:
            system = assemble(mesh, cfg.params, problem, cfg.quad_degree)
            sol = solve(system)
        except Exception as exc:
            raise RuntimeError(f"level {k} ({mesh.n_cells} cells): {exc}") from exc
        row = compute_errors(sol, problem, mesh, cfg.params, cfg.problem, cfg.quad_degree, k, h_nom)
        report.rows.append(row)
        indicators.append(oscillation_indicator(mesh, sol.pressure, problem))
        if "vtk" in cfg.exports:
            x, y = mesh.vertices.T
            write_vtk(
                cfg.out / f"solution_{k}.vtk", mesh,
                {"velocity": sol.velocity.nodal, "pressure": sol.pressure.nodal,
                 "pressure_exact": problem.pressure(x, y)},
                title=cfg.header,
            )
        if "mm" in cfg.exports:
            write_matrix_market(system, cfg.out, f"system_{k}")
    if max(indicators) > 1.0:
        msg = (f"pressure oscillation indicator {max(indicators):.3g} exceeds 1; "
               f"the discrete pressure is unstable (beta={cfg.beta:g})")
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        out_lines.append(f"WARNING: {msg}")
    return report, indicators


def _fitted_order(report: ErrorReport, name: str) -> float:
    e = report.column(name)
    h = report.column("h_nominal")
    if len(e) < 2 or np.any(e <= 0):
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


def reference_comparison(report: ErrorReport, tol: float = 0.25) -> str:
    """Say which level, if any, matches the Stokes reference errors within ``tol``."""
    ref = np.array(STOKES_REFERENCE_ROW)
    best, best_dev = None, np.inf
    for r in report.rows:
        got = np.array([r.err_u_l2, r.err_u_h1, r.err_p_l2])
        dev = float(np.max(np.abs(got - ref) / ref))
        if dev < best_dev:
            best, best_dev = r, dev
    if best_dev <= tol:
        return (f"reference magnitudes matched at level {best.level} "
                f"({best.cells} cells), max relative deviation {best_dev:.2f}")
    return (f"no level matches the reference magnitudes {STOKES_REFERENCE_ROW} within "
            f"{tol:.0%}; closest is level {best.level} ({best.cells} cells) with max "
            f"relative deviation {best_dev:.2f}; orders alone are assessed")


def run_convergence(cfg: RunConfig) -> int:
    cfg.out.mkdir(parents=True, exist_ok=True)
    lines = [f"# {cfg.header}"]
    report, indicators = _solve_levels(cfg, lines)
    if "csv" in cfg.exports:
        report.to_csv(cfg.out / "convergence.csv", header_comment=cfg.header)
    lines.append(report.summary())
    if len(report.rows) > 1:
        names = ["err_u_l2", "err_u_h1", "err_p_l2", "err_triple"]
        finest = ", ".join(f"{n}={report.orders(n)[-1]:.3f}" for n in names)
        fitted = ", ".join(f"{n}={_fitted_order(report, n):.3f}" for n in names)
        lines.append(f"finest-ratio orders: {finest}")
        lines.append(f"least-squares orders: {fitted}")
    if cfg.problem == "stokes":
        lines.append(reference_comparison(report))
    lines.append("pressure oscillation indicator per level: "
                 + " ".join(f"{v:.3g}" for v in indicators))
    text = "\n".join(lines) + "\n"
    (cfg.out / "summary.txt").write_text(text)
    print(text, end="")
    return 0


def run_solve(cfg: RunConfig) -> int:
    """Solve on the finest requested level only and export that level."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    problem = _problem(cfg.problem)
    *_, (k, mesh, h_nom) = mesh_hierarchy(cfg.levels, perturb=cfg.perturb)
    system = assemble(mesh, cfg.params, problem, cfg.quad_degree)
    sol = solve(system)
    row = compute_errors(sol, problem, mesh, cfg.params, cfg.problem, cfg.quad_degree, k, h_nom)
    report = ErrorReport(cfg.problem, [row])
    if "csv" in cfg.exports:
        report.to_csv(cfg.out / "convergence.csv", header_comment=cfg.header)
    if "vtk" in cfg.exports:
        write_vtk(cfg.out / f"solution_{k}.vtk", mesh,
                  {"velocity": sol.velocity.nodal, "pressure": sol.pressure.nodal},
                  title=cfg.header)
    if "mm" in cfg.exports:
        write_matrix_market(system, cfg.out, f"system_{k}")
    ind = oscillation_indicator(mesh, sol.pressure, problem)
    text = (f"# {cfg.header}\n{report.summary()}\n"
            f"residual {sol.residual:.3e}, mean(p_h) {sol.mean_violation:.3e}, "
            f"oscillation indicator {ind:.3g}\n")
    if ind > 1.0:
        warnings.warn(f"pressure oscillation indicator {ind:.3g} exceeds 1", RuntimeWarning)
    (cfg.out / "summary.txt").write_text(text)
    print(text, end="")
    return 0


def run_infsup(cfg: RunConfig) -> int:
    problem = _problem(cfg.problem)
    meshes = list(mesh_hierarchy(cfg.levels, perturb=cfg.perturb))
    largest = meshes[-1][1].n_cells
    if largest > MAX_INFSUP_CELLS:
        raise ValueError(
            f"refusing inf-sup sweep: level {cfg.levels - 1} has {largest} cells, "
            f"the dense estimate is capped at {MAX_INFSUP_CELLS} cells (use --levels <= 4)"
        )
    cfg.out.mkdir(parents=True, exist_ok=True)
    rows = []
    for k, mesh, _ in meshes:
        gamma = inf_sup_estimate(assemble(mesh, cfg.params, problem, cfg.quad_degree))
        rows.append((k, mesh.n_cells, gamma))
    text = "\n".join([f"# {cfg.header}", "level,cells,gamma_h"]
                     + [f"{k},{c},{g!r}" for k, c, g in rows]) + "\n"
    if "csv" in cfg.exports:
        (cfg.out / "infsup.csv").write_text(text)
    print(text, end="")
    return 0


COMMANDS = {"convergence": run_convergence, "solve": run_solve, "infsup": run_infsup}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    cfg = parse_config(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[cfg.command](cfg)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"glps-fem: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
