"""Run configuration, orchestration and serialization.

Config files are flat ``key = value`` text with dotted keys::

    domain.type = disk
    domain.radius = 1
    grid.h = 0.015625
    problem.alpha = 10
    problem.area_fraction = 0.5
    optimizer.restarts = 8
    optimizer.seed = 0
    output.dir = runs/ball
    checks = bounds, nesting, descent, fixed_point, annular, free_boundary

Every file written here is a deterministic function of (config, seed) except
the ``wall_time`` line of the report.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .analysis import (
    InvariantViolation,
    annular_check,
    base_eigenpair,
    check_descent,
    check_nesting,
    check_perturbation_bounds,
    convexity_check,
    estimate_exceptional_set,
    extract_free_boundary,
    fixed_point_certificate,
    level_tie_fraction,
    lobe_containment,
    symmetry_metrics,
)
from .discretization import assemble
from .eigensolver import DEFAULT_TOL, EigenConvergenceError, smallest_eigenpair
from .geometry import DegenerateGridError, DomainSpec, GridDomain, measure, parse_pgm, rasterize
from .optimizer import (
    DEFAULT_MAX_OUTER,
    Configuration,
    DegenerateAreaError,
    OptimizationResult,
    find_alpha_bar,
    multistart,
)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 1, 2, 3

# checks whose outcome is a pass/fail; the rest only report numbers
HARD_CHECKS = ("bounds", "nesting", "descent", "fixed_point", "annular", "free_boundary",
               "exceptional_set")
SOFT_CHECKS = ("symmetry", "convexity", "lobes", "tie_fraction")
ALL_CHECKS = HARD_CHECKS + SOFT_CHECKS
DEFAULT_CHECKS = ("bounds", "nesting", "descent", "fixed_point", "free_boundary")


class ConfigError(ValueError):
    pass


def fmt(x) -> str:
    """Round-trip text for scalars."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if x is None:
        return ""
    return str(x)


# --- configuration ---------------------------------------------------------------


def parse_kv(text: str) -> dict:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {n}: empty key")
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = value
    return out


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.replace(",", " ").split()]


@dataclass
class RunConfig:
    domain: DomainSpec
    h: float
    alpha: float = 1.0
    area_fraction: float = 0.5
    restarts: int = 8
    seed: int = 0
    eigen_tol: float = DEFAULT_TOL
    max_outer: int = DEFAULT_MAX_OUTER
    alpha_tol: float = 1e-6
    output_dir: Path = Path("out")
    checks: tuple = DEFAULT_CHECKS
    sweep_alpha: tuple = ()
    sweep_fraction: tuple = ()
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not (np.isfinite(self.h) and self.h > 0):
            raise ConfigError("grid.h must be positive")
        if not 0 < self.area_fraction < 1:
            raise ConfigError("degenerate area fraction: problem.area_fraction must lie in (0, 1)")
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ConfigError("problem.alpha must be non-negative")
        if self.restarts < 1:
            raise ConfigError("optimizer.restarts must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("optimizer.seed must be a 64-bit unsigned integer")
        unknown = [c for c in self.checks if c not in ALL_CHECKS]
        if unknown:
            raise ConfigError(f"unknown checks {unknown}; known: {', '.join(ALL_CHECKS)}")
        for f in self.sweep_fraction:
            if not 0 < f < 1:
                raise ConfigError("degenerate area fraction in sweep.fraction")

    @classmethod
    def from_mapping(cls, kv: dict, base_dir: Path = Path(".")) -> "RunConfig":
        kv = dict(kv)

        def take(key, conv=str, default=None):
            if key not in kv:
                if default is None:
                    raise ConfigError(f"missing key {key!r}")
                return default
            raw = kv.pop(key)
            try:
                return conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{key}: cannot parse {raw!r}") from exc

        for key in ("sweep.alpha", "sweep.fraction"):
            if key in kv and not kv[key].strip():
                raise ConfigError(f"empty sweep grid: {key} has no values")
        try:
            kind = take("domain.type")
            if kind == "rectangle":
                spec = DomainSpec.rectangle(take("domain.width", float), take("domain.height", float))
            elif kind == "disk":
                spec = DomainSpec.disk(take("domain.radius", float, 1.0))
            elif kind == "annulus":
                spec = DomainSpec.annulus(take("domain.a", float))
            elif kind == "dumbbell":
                spec = DomainSpec.dumbbell(take("domain.handle", float))
            elif kind == "polygon":
                xs = _floats(take("domain.vertices"))
                spec = DomainSpec.polygon(list(zip(xs[0::2], xs[1::2])))
            elif kind == "mask_file":
                p = Path(take("domain.path"))
                spec = DomainSpec.mask_file(p if p.is_absolute() else base_dir / p)
            else:
                raise ConfigError(f"unknown domain.type {kind!r}")
            out = Path(take("output.dir", str, "out"))
            cfg = cls(
                domain=spec,
                h=take("grid.h", float),
                alpha=take("problem.alpha", float, 1.0),
                area_fraction=take("problem.area_fraction", float),
                restarts=take("optimizer.restarts", int, 8),
                seed=take("optimizer.seed", int, 0),
                eigen_tol=take("tolerance.eigen", float, DEFAULT_TOL),
                max_outer=take("optimizer.max_outer", int, DEFAULT_MAX_OUTER),
                alpha_tol=take("tolerance.alpha", float, 1e-6),
                output_dir=out if out.is_absolute() else base_dir / out,
                checks=tuple(c.strip() for c in take("checks", str, ",".join(DEFAULT_CHECKS)).split(",")
                             if c.strip()),
                sweep_alpha=tuple(_floats(take("sweep.alpha", str, " "))),
                sweep_fraction=tuple(_floats(take("sweep.fraction", str, " "))),
                center=tuple(_floats(take("symmetry.center", str, "0 0"))),
            )
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        if kv:
            raise ConfigError(f"unknown keys: {', '.join(sorted(kv))}")
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_mapping(parse_kv(text), base_dir=path.parent)


# --- atomic writers -------------------------------------------------------------


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def mask_pgm_text(config: Configuration, domain: GridDomain) -> str:
    grid = np.where(domain.interior, 128, 0)
    rows, cols = domain.rows[config.cells], domain.cols[config.cells]
    grid[rows, cols] = 255
    lines = [
        "P2",
        f"# h={fmt(domain.h)} t={fmt(config.t)} A={fmt(config.measure)}",
        f"# origin={fmt(domain.origin[0])} {fmt(domain.origin[1])}",
        f"{domain.nx} {domain.ny}",
        "255",
    ]
    lines += [" ".join(str(v) for v in row) for row in grid]
    return "\n".join(lines) + "\n"


def write_mask_pgm(config: Configuration, domain: GridDomain, path):
    atomic_write(path, mask_pgm_text(config, domain))


def read_mask_pgm(path, domain: GridDomain) -> Configuration:
    """Cells marked 255 in a mask written by :func:`write_mask_pgm`."""
    import re

    pix, comments = parse_pgm(path)
    if pix.shape != domain.interior.shape:
        raise ValueError(f"mask is {pix.shape[1]}x{pix.shape[0]}, domain is {domain.nx}x{domain.ny}")
    if np.any((pix > 0) != domain.interior):
        raise ValueError("mask interior does not match the domain")
    m = re.search(r"t=(\S+)", " ".join(comments))
    t = float(m.group(1)) if m else float("nan")
    cells = domain.cell_index[pix == 255]
    return Configuration.from_cells(domain, cells, t)


def u_csv_text(u: np.ndarray, domain: GridDomain) -> str:
    lines = ["cell_x,cell_y,u"]
    lines += [f"{fmt(x)},{fmt(y)},{fmt(v)}" for (x, y), v in zip(domain.centers, u)]
    return "\n".join(lines) + "\n"


def free_boundary_csv_text(fb) -> str:
    lines = ["segment_id,vertex_id,x,y,grad_mag,flagged"]
    for s, (seg, g, fl) in enumerate(zip(fb.segments, fb.grad_mag, fb.flagged)):
        for v, ((x, y), gm, f) in enumerate(zip(seg, g, fl)):
            lines.append(f"{s},{v},{fmt(x)},{fmt(y)},{fmt(gm)},{int(bool(f))}")
    return "\n".join(lines) + "\n"


def read_free_boundary_csv(path) -> list[np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        return []
    seg = data[:, 0].astype(int)
    return [data[seg == s][:, 2:4] for s in np.unique(seg)]


# --- reports --------------------------------------------------------------------


@dataclass
class RunReport:
    values: dict = field(default_factory=dict)  # ordered scalar fields
    checks: dict = field(default_factory=dict)  # name -> {"status": pass/fail/info, ...}
    files: list = field(default_factory=list)
    wall_time: float = 0.0
    status: int = EXIT_OK
    failed: list = field(default_factory=list)

    def text(self) -> str:
        lines = [f"{k} = {fmt(v)}" for k, v in self.values.items()]
        for name, entry in self.checks.items():
            for k, v in entry.items():
                lines.append(f"check.{name}.{k} = {fmt(v)}")
        lines.append(f"status = {self.status}")
        lines.append(f"failed = {','.join(self.failed)}")
        lines.append(f"files = {','.join(self.files)}")
        lines.append(f"wall_time = {self.wall_time:.3f}")
        return "\n".join(lines) + "\n"


def _record(report: RunReport, name: str, ok: Optional[bool], **diag):
    entry = {"status": "info" if ok is None else ("pass" if ok else "fail")}
    entry.update(diag)
    report.checks[name] = entry
    if ok is False:
        report.failed.append(name)


def run_checks(cfg: RunConfig, domain: GridDomain, result: OptimizationResult, report: RunReport,
               base=None):
    """Run the requested analysis checks; returns the free boundary if built."""
    if base is None and ({"bounds", "nesting"} & set(cfg.checks)):
        base = base_eigenpair(domain, tol=cfg.eigen_tol)
    if base is not None:
        report.values["mu1"] = base.mu1
        report.values["mu2"] = base.mu2
        report.values["psi_max"] = base.M
    fb = None
    for name in cfg.checks:
        if name == "bounds":
            b = check_perturbation_bounds(result, base, domain)
            _record(report, name, b.ok, lam_minus_mu1=b.lam_minus_mu1,
                    mu1_minus_shifted=b.mu1_minus_shifted, u_mass_Dc=b.u_mass_Dc,
                    sup_diff=b.sup_diff, ratio_alpha=b.ratio_alpha, ratio_area=b.ratio_area,
                    gap_ratio=b.gap_ratio)
        elif name == "nesting":
            n = check_nesting(result, base, domain, strict=False)
            _record(report, name, n.ok, eps=n.eps, lower_violations=n.lower_violations,
                    upper_violations=n.upper_violations, delta=n.delta)
        elif name == "descent":
            _record(report, name, check_descent(result))
        elif name == "fixed_point":
            ok = fixed_point_certificate(result, domain, cfg.eigen_tol) if result.converged else None
            _record(report, name, ok)
        elif name == "annular":
            a = annular_check(result, domain, cfg.center)
            hard = cfg.domain.kind == "disk"
            _record(report, name, a.ok(domain.h) if hard else None, variation=a.variation,
                    boundary_layer=a.contains_boundary_layer)
        elif name in ("free_boundary", "exceptional_set"):
            if fb is None:
                fb = extract_free_boundary(result, domain)
            if name == "free_boundary":
                two = fb.all_two_sided()
                _record(report, name, bool(two.all()) if fb.n_vertices else None,
                        segments=len(fb.segments), closed=sum(fb.closed), vertices=fb.n_vertices,
                        flagged=int(fb.all_flagged().sum()))
            elif fb.n_vertices == 0:
                _record(report, name, None, note="empty free boundary")
            else:
                levels = [8 * domain.h, 4 * domain.h, 2 * domain.h]
                ex = estimate_exceptional_set(fb, domain, levels, strict=False)
                _record(report, name, all(ex.nested), e_proxy=int(ex.E_proxy.sum()))
        elif name == "symmetry":
            s = symmetry_metrics(result, domain, cfg.center)
            _record(report, name, None, dominant_N=s.dominant_N, beta_estimate=s.beta_estimate,
                    dominance=s.dominance(),
                    **{f"reflection_{i}": v for i, v in enumerate(s.reflection_score.values())})
        elif name == "convexity":
            c = convexity_check(result, domain)
            _record(report, name, None, violations=c.violations)
        elif name == "lobes":
            lr = lobe_containment(result, domain)
            _record(report, name, None, contained=lr.contained, lobe=lr.lobe, stray=lr.stray,
                    handle_interior=lr.handle_interior, opposite_lobe=lr.opposite_lobe,
                    reflection_score=lr.reflection_score)
        elif name == "tie_fraction":
            _record(report, name, None, fraction=level_tie_fraction(result))
    return fb


def _result_values(report: RunReport, cfg: RunConfig, domain: GridDomain, result: OptimizationResult):
    report.values.update({
        "domain": cfg.domain.kind,
        "h": domain.h,
        "cells": domain.n_cells,
        "area": measure(domain),
        "alpha": result.alpha,
        "A_target": result.A_target,
        "seed": cfg.seed,
        "restarts": cfg.restarts,
        "Lambda": result.Lambda,
        "realized_measure": result.realized_measure,
        "t": result.config.t,
        "converged": result.converged,
        "cycled": result.cycled,
        "iterations": result.iterations,
        "restart_id": result.restart_id,
        "residual": result.residual,
        "failed_restarts": len(result.failures),
    })


def _finish(report: RunReport, result: OptimizationResult):
    if report.failed:
        report.status = EXIT_INVARIANT
    elif not result.converged:
        report.status = EXIT_CONVERGENCE


def run_solve(cfg: RunConfig) -> RunReport:
    start = time.perf_counter()
    domain = rasterize(cfg.domain, cfg.h)
    A = cfg.area_fraction * measure(domain)
    result = multistart(domain, cfg.alpha, A, n_restarts=cfg.restarts, seed=cfg.seed,
                        tol=cfg.eigen_tol, max_outer=cfg.max_outer)
    report = RunReport()
    _result_values(report, cfg, domain, result)
    fb = run_checks(cfg, domain, result, report)
    if fb is None:
        fb = extract_free_boundary(result, domain)
    out = Path(cfg.output_dir)
    write_mask_pgm(result.config, domain, out / "mask.pgm")
    atomic_write(out / "u.csv", u_csv_text(result.u, domain))
    atomic_write(out / "free_boundary.csv", free_boundary_csv_text(fb))
    report.files = ["mask.pgm", "u.csv", "free_boundary.csv", "report.txt"]
    _finish(report, result)
    report.wall_time = time.perf_counter() - start
    atomic_write(out / "report.txt", report.text())
    return report


def run_verify(cfg: RunConfig) -> RunReport:
    """Re-run the checks on the artifacts of an earlier solve."""
    start = time.perf_counter()
    domain = rasterize(cfg.domain, cfg.h)
    out = Path(cfg.output_dir)
    mask = out / "mask.pgm"
    if not mask.exists():
        raise ConfigError(f"no solve artifacts in {out}")
    config = read_mask_pgm(mask, domain)
    eig = smallest_eigenpair(assemble(domain, config.cells, cfg.alpha), tol=cfg.eigen_tol)
    A = cfg.area_fraction * measure(domain)
    # a stored optimum must be a fixed point; the history is its own eigenvalue
    result = OptimizationResult(Lambda=eig.lam, config=config, u=eig.u, history=[eig.lam],
                                converged=True, alpha=cfg.alpha, A_target=A, residual=eig.residual)
    report = RunReport()
    _result_values(report, cfg, domain, result)
    checks = tuple(cfg.checks) if "fixed_point" in cfg.checks else tuple(cfg.checks) + ("fixed_point",)
    run_checks(replace(cfg, checks=checks), domain, result, report)
    report.files = ["verify.txt"]
    _finish(report, result)
    report.wall_time = time.perf_counter() - start
    atomic_write(out / "verify.txt", report.text())
    return report


SWEEP_COLUMNS = ("alpha", "fraction", "Lambda", "dominant_N", "beta_estimate", "converged", "status")


def _sweep_row(args) -> dict:
    cfg, alpha, frac = args
    row = {"alpha": alpha, "fraction": frac, "Lambda": None, "dominant_N": None,
           "beta_estimate": None, "converged": None, "status": "ok"}
    try:
        domain = rasterize(cfg.domain, cfg.h)
        res = multistart(domain, alpha, frac * measure(domain), n_restarts=cfg.restarts,
                         seed=cfg.seed, tol=cfg.eigen_tol, max_outer=cfg.max_outer)
        row.update(Lambda=res.Lambda, converged=res.converged)
        if cfg.domain.kind == "annulus":
            s = symmetry_metrics(res, domain, cfg.center)
            row.update(dominant_N=s.dominant_N, beta_estimate=s.beta_estimate)
        if not res.converged:
            row["status"] = "not_converged"
    except (RuntimeError, ValueError, ArithmeticError) as exc:
        row["status"] = f"error: {type(exc).__name__}"
        logger.warning("sweep row alpha=%g fraction=%g failed: %s", alpha, frac, exc)
    return row


def sweep_csv_text(rows: list) -> str:
    lines = [",".join(SWEEP_COLUMNS)]
    lines += [",".join(fmt(r[c]) for c in SWEEP_COLUMNS) for r in rows]
    return "\n".join(lines) + "\n"


def run_sweep(cfg: RunConfig, threads: Optional[int] = None) -> list:
    alphas = cfg.sweep_alpha or (cfg.alpha,)
    fracs = cfg.sweep_fraction or (cfg.area_fraction,)
    if not alphas or not fracs:
        raise ConfigError("empty sweep grid")
    jobs = [(cfg, float(a), float(f)) for a in alphas for f in fracs]
    threads = threads or membrane_threads()
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    rows.sort(key=lambda r: (r["alpha"], r["fraction"]))
    atomic_write(Path(cfg.output_dir) / "sweep.csv", sweep_csv_text(rows))
    return rows


def run_alphabar(cfg: RunConfig) -> dict:
    domain = rasterize(cfg.domain, cfg.h)
    A = cfg.area_fraction * measure(domain)
    abar = find_alpha_bar(domain, A, tol=cfg.alpha_tol, n_restarts=cfg.restarts, seed=cfg.seed)
    lam = multistart(domain, abar, A, n_restarts=cfg.restarts, seed=cfg.seed).Lambda
    out = {"alpha_bar": abar, "Lambda": lam, "defect": lam - abar, "A_target": A}
    atomic_write(Path(cfg.output_dir) / "alphabar.txt",
                 "".join(f"{k} = {fmt(v)}\n" for k, v in out.items()))
    return out


# --- command line ------------------------------------------------------------------


def membrane_threads() -> int:
    raw = os.environ.get("MEMBRANE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"MEMBRANE_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ConfigError("MEMBRANE_THREADS must be at least 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="membrane", description="Composite membrane optimizer")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("solve", "optimize one configuration and write artifacts"),
                        ("verify", "re-check the artifacts of an earlier solve"),
                        ("sweep", "phase table over sweep.alpha x sweep.fraction"),
                        ("alphabar", "find the alpha with Lambda(alpha, A) = alpha")):
        sp_ = sub.add_parser(name, help=help_)
        sp_.add_argument("--config", required=True)
        sp_.add_argument("--seed", type=int)
        sp_.add_argument("--out")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        membrane_threads()
        cfg = RunConfig.from_file(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, output_dir=Path(args.out))
        if args.command == "solve":
            rep = run_solve(cfg)
        elif args.command == "verify":
            rep = run_verify(cfg)
        elif args.command == "sweep":
            rows = run_sweep(cfg)
            sys.stdout.write(sweep_csv_text(rows))
            return EXIT_OK
        else:
            out = run_alphabar(cfg)
            print(f"alpha_bar = {fmt(out['alpha_bar'])}")
            return EXIT_OK
    except (ConfigError, DegenerateAreaError, DegenerateGridError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (EigenConvergenceError, RuntimeError) as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    print(f"Lambda = {fmt(rep.values['Lambda'])}")
    for name in rep.failed:
        print(f"FAILED invariant: {name}", file=sys.stderr)
    return rep.status


if __name__ == "__main__":
    sys.exit(main())
