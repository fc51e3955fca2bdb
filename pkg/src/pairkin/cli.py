"""Configuration-driven command line front end.

Subcommands: decay, eps-sweep, oracle-check, inequalities, print-config.
Configuration is INI-style (sections of key=value); every value has a
default visible via `pairkin print-config`.  Exit codes: 0 pass, 1 config
error, 2 invariant violation, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from configparser import ConfigParser
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .diagnostics import CsvSink, decay_rate_fit, delta_sweep, verify_inequalities
from .equilibria import diffusion_coefficient
from .oracle import PicardConfig, PicardConvergenceError, picard_solve
from .phase import (
    equilibrium_state,
    gaussian_grid,
    make_initial_condition,
    moments,
    parse_profile,
    random_bounded_state,
    species_norm_sq,
    state_diff,
    weighted_norm_sq,
)
from .rd import RDError, RDState, rd_run
from .solver import (
    BoundViolation,
    ConservationDrift,
    ModelParams,
    NumericalBlowup,
    SolverConfig,
    run,
)

OUTDIR_ENV = "PAIRKIN_OUTDIR"


class ConfigError(Exception):
    pass


@dataclass
class ModelSection:
    epsilon: float = 1.0
    sigma: float = 1.0
    d: int = 1
    rho_m: float = 0.5
    rho_M: float = 2.0
    delta: float = 0.05


@dataclass
class GridSection:
    nx: int = 64
    n_v: int = 64
    v_max: float = 8.0
    temperature1: float = 1.0
    temperature2: float = 1.0


@dataclass
class SolverSection:
    dt: float = 0.002
    t_final: float = 10.0
    cadence: int = 25
    splitting: str = "strang"
    bound_tol: float = 1e-8
    conservation_tol: float = 1e-10


@dataclass
class ExperimentSection:
    kind: str = "decay"
    profile1: str = "cosine:base=1.1,amplitude=0.5,mode=1"
    profile2: str = "cosine:base=0.9,amplitude=0.2,mode=2"
    seed: int = 0
    output_dir: str = "pairkin-out"
    threads: int = 0   # informational; execution is single-process deterministic


@dataclass
class EpsSweepSection:
    eps_list: str = "0.4,0.2,0.1,0.05,0.025"
    t_final: float = 0.5
    dt_scale: float = 0.2
    rd_dt: float = 0.0005


@dataclass
class OracleSection:
    horizon: float = 0.1
    dt: float = 0.001
    tol: float = 1e-10
    max_iterations: int = 50
    time_nodes: int = 64


@dataclass
class InequalitiesSection:
    n_states: int = 100
    seed: int = 1234
    margin: float = 0.05


@dataclass
class ExperimentConfig:
    model: ModelSection = field(default_factory=ModelSection)
    grid: GridSection = field(default_factory=GridSection)
    solver: SolverSection = field(default_factory=SolverSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    eps_sweep: EpsSweepSection = field(default_factory=EpsSweepSection)
    oracle: OracleSection = field(default_factory=OracleSection)
    inequalities: InequalitiesSection = field(default_factory=InequalitiesSection)

    def section(self, name: str):
        if name not in {f.name for f in fields(self)}:
            raise ConfigError(f"unknown config section [{name}]")
        return getattr(self, name)

    def set_value(self, section: str, key: str, raw: str) -> None:
        sec = self.section(section)
        if key not in {f.name for f in fields(sec)}:
            raise ConfigError(f"unknown config key {section}.{key}")
        current = getattr(sec, key)
        try:
            value = type(current)(raw) if not isinstance(current, str) else raw
        except ValueError as exc:
            raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
        setattr(sec, key, value)

    def as_dict(self) -> dict:
        return {
            f.name: {g.name: getattr(getattr(self, f.name), g.name)
                     for g in fields(getattr(self, f.name))}
            for f in fields(self)
        }

    def to_ini(self) -> str:
        lines = ["# pairkin experiment configuration (defaults shown by print-config)"]
        for f in fields(self):
            lines.append(f"[{f.name}]")
            sec = getattr(self, f.name)
            for g in fields(sec):
                lines.append(f"{g.name} = {getattr(sec, g.name)}")
            lines.append("")
        return "\n".join(lines)

    def validate(self) -> None:
        m, g, s = self.model, self.grid, self.solver
        problems = []
        if m.epsilon <= 0:
            problems.append("model.epsilon must be > 0")
        if m.sigma < 0:
            problems.append("model.sigma must be >= 0")
        if m.d not in (1, 2):
            problems.append("model.d must be 1 or 2")
        if not (0 < m.rho_m <= m.rho_M):
            problems.append("need 0 < rho_m <= rho_M")
        if m.delta <= 0:
            problems.append("model.delta must be > 0")
        if g.nx < 4:
            problems.append("grid.nx must be >= 4")
        if g.n_v < 4 or g.n_v % 2:
            problems.append("grid.n_v must be even and >= 4")
        if g.v_max <= 0 or g.temperature1 <= 0 or g.temperature2 <= 0:
            problems.append("grid.v_max and temperatures must be > 0")
        if s.dt <= 0 or s.t_final <= 0:
            problems.append("solver.dt and solver.t_final must be > 0")
        if s.cadence < 1:
            problems.append("solver.cadence must be >= 1")
        if s.splitting not in ("strang", "lie"):
            problems.append("solver.splitting must be strang or lie")
        if self.oracle.horizon <= 0 or self.oracle.dt <= 0:
            problems.append("oracle.horizon and oracle.dt must be > 0")
        if self.oracle.time_nodes < 8:
            problems.append("oracle.time_nodes must be >= 8")
        if self.inequalities.n_states < 1:
            problems.append("inequalities.n_states must be >= 1")
        if problems:
            raise ConfigError("; ".join(problems))


def load_config(path: str | None, overrides: list[str]) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path is not None:
        parser = ConfigParser()
        parser.optionxform = str   # rho_m / rho_M differ only by case
        read = parser.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path}")
        for section in parser.sections():
            for key, raw in parser.items(section):
                cfg.set_value(section, key, raw)
    for item in overrides:
        target, _, raw = item.partition("=")
        section, _, key = target.partition(".")
        if not raw or not key:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        cfg.set_value(section.strip(), key.strip(), raw.strip())
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# shared experiment plumbing
# ---------------------------------------------------------------------------

def _resolve_outdir(cfg: ExperimentConfig, cli_override: str | None) -> Path:
    outdir = cli_override or os.environ.get(OUTDIR_ENV) or cfg.experiment.output_dir
    path = Path(outdir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _build_grid(cfg: ExperimentConfig):
    g, m = cfg.grid, cfg.model
    return gaussian_grid(m.d, g.nx, g.n_v if m.d == 1 else _per_dim(g.n_v, m.d),
                         g.v_max, g.temperature1, g.temperature2)


def _per_dim(n_v: int, d: int) -> int:
    per = round(n_v ** (1.0 / d))
    if per**d != n_v or per % 2:
        raise ConfigError(
            f"grid.n_v={n_v} is not an even-per-dimension tensor count for d={d}"
        )
    return per


def _build_initial(cfg: ExperimentConfig, grid):
    p1 = parse_profile(cfg.experiment.profile1)
    p2 = parse_profile(cfg.experiment.profile2)
    try:
        return make_initial_condition(p1, p2, grid, cfg.model.rho_m, cfg.model.rho_M)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _grid_hashes(grid) -> dict:
    def digest(*arrays):
        blob = hashlib.sha256()
        for a in arrays:
            blob.update(np.ascontiguousarray(a).tobytes())
        return blob.hexdigest()

    return {
        "spatial": digest(grid.x1d),
        "velocity": digest(grid.v, grid.w),
        "chi1": digest(grid.chi1.values),
        "chi2": digest(grid.chi2.values),
    }


def _write_manifest(outdir: Path, cfg: ExperimentConfig, grid, extra=None) -> None:
    manifest = {
        "package_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "config": cfg.as_dict(),
        "grid_hashes": _grid_hashes(grid),
    }
    if extra:
        manifest.update(extra)
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _write_gnuplot(path: Path, lines: list[str]) -> None:
    header = ["set datafile separator ','", "set key autotitle columnhead"]
    path.write_text("\n".join(header + lines) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def run_decay(cfg: ExperimentConfig, outdir: Path) -> int:
    grid = _build_grid(cfg)
    _write_manifest(outdir, cfg, grid)
    params = ModelParams(cfg.model.epsilon, cfg.model.sigma)
    F0 = _build_initial(cfg, grid)
    scfg = SolverConfig(
        dt=cfg.solver.dt, t_final=cfg.solver.t_final, cadence=cfg.solver.cadence,
        splitting=cfg.solver.splitting, rho_m=cfg.model.rho_m, rho_M=cfg.model.rho_M,
        bound_tol=cfg.solver.bound_tol, conservation_tol=cfg.solver.conservation_tol,
        delta=cfg.model.delta,
    )
    with CsvSink(outdir / "diagnostics.csv") as sink:
        _, records = run(F0, params, scfg, grid, sink=sink)

    lines = [f"decay run: sigma={params.sigma} epsilon={params.epsilon} "
             f"T={scfg.t_final} dt={scfg.dt} nx={grid.nx} n_v={grid.n_v}"]
    m0 = records[0].massdiff
    drift = max(abs(r.massdiff - m0) for r in records)
    margins = [
        min(r.r1min - cfg.model.rho_m for r in records),
        min(cfg.model.rho_M - r.r1max for r in records),
        min(r.r2min - 1.0 / cfg.model.rho_M for r in records),
        min(1.0 / cfg.model.rho_m - r.r2max for r in records),
    ]
    lines.append(f"max conservation drift: {drift:.3e} (tolerance "
                 f"{scfg.conservation_tol:g}*(1+|m0|), m0={m0:.6g})")
    lines.append(f"min bound margins (r1 low/high, r2 low/high): "
                 + " ".join(f"{x:.3e}" for x in margins))
    if records[0].Gamma < 1e-13:
        lines.append("already at equilibrium: Gamma(0) ~ 0, no decay rate fitted")
    elif sum(r.t >= 0.5 * scfg.t_final and r.Gamma > 0 for r in records) < 10:
        lines.append("too few records in the tail window for a decay-rate fit "
                     "(need >= 10; lower solver.cadence or extend t_final)")
    else:
        window = (0.5 * scfg.t_final, scfg.t_final)
        fit_g = decay_rate_fit(records, window, "Gamma")
        fit_n = decay_rate_fit(records, window, "dist2")
        gam = [r.Gamma for r in records]
        slack = 1e-12 * abs(gam[0])
        monotone = all(b - a <= slack for a, b in zip(gam, gam[1:]))
        lines.append(f"Gamma decay rate (tail half): {fit_g.rate:.6g} "
                     f"R^2={fit_g.r_squared:.6f}")
        lines.append(f"|F-Finf|^2 decay rate (tail half): {fit_n.rate:.6g} "
                     f"R^2={fit_n.r_squared:.6f}")
        lines.append(f"Gamma monotone nonincreasing at delta={cfg.model.delta}: {monotone}")
        lines.append("delta sweep (delta, monotone, rate):")
        for row in delta_sweep(records):
            lines.append(f"  {row.delta:<6g} {str(row.monotone):<5s} {row.rate:.6g}")
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")
    _write_gnuplot(outdir / "decay.gp", [
        "set logscale y",
        "set xlabel 't'",
        "plot 'diagnostics.csv' using 1:6 with lines, '' using 1:7 with lines",
    ])
    print("\n".join(lines))
    return 0


def run_eps_sweep(cfg: ExperimentConfig, outdir: Path) -> int:
    sigma = cfg.model.sigma
    if sigma <= 0.0:
        raise ConfigError(
            "eps-sweep requires fixed sigma > 0: the reaction-diffusion limit "
            "is taken at fixed positive scattering rate"
        )
    eps_list = [float(tok) for tok in cfg.eps_sweep.eps_list.split(",") if tok.strip()]
    if len(eps_list) < 2 or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("eps_sweep.eps_list must be a strictly decreasing list")
    grid = _build_grid(cfg)
    _write_manifest(outdir, cfg, grid)
    F0 = _build_initial(cfg, grid)
    T = cfg.eps_sweep.t_final

    D1 = diffusion_coefficient(grid.chi1, sigma)
    D2 = diffusion_coefficient(grid.chi2, sigma)
    mac0 = moments(F0, grid)
    rd_final, _ = rd_run(RDState(mac0.rho1.copy(), mac0.rho2.copy()),
                         T, cfg.eps_sweep.rd_dt, D1, D2, grid)
    h = grid.cell_volume

    def l2(a):
        return math.sqrt(h * float(np.sum(a * a)))

    rows = []
    finals = {}
    for eps in eps_list:
        dt_eps = min(cfg.solver.dt, cfg.eps_sweep.dt_scale * eps**2 / sigma)
        n_steps = max(1, int(round(T / dt_eps)))
        scfg = SolverConfig(
            dt=T / n_steps, t_final=T, cadence=n_steps,
            splitting=cfg.solver.splitting, rho_m=cfg.model.rho_m,
            rho_M=cfg.model.rho_M, bound_tol=cfg.solver.bound_tol,
            conservation_tol=cfg.solver.conservation_tol, delta=cfg.model.delta,
        )
        F_T, _ = run(F0, ModelParams(eps, sigma), scfg, grid)
        mac = moments(F_T, grid)
        err1 = l2(mac.rho1 - rd_final.rho1)
        err2 = l2(mac.rho2 - rd_final.rho2)
        micro1 = math.sqrt(species_norm_sq(
            F_T.f1 - mac.rho1[..., None] * grid.chi1.values, grid.chi1, grid))
        micro2 = math.sqrt(species_norm_sq(
            F_T.f2 - mac.rho2[..., None] * grid.chi2.values, grid.chi2, grid))
        rows.append((eps, err1, err2, micro1, micro2, scfg.dt))
        finals[eps] = (F_T, mac)

    with open(outdir / "sweep.csv", "w") as fh:
        fh.write("eps,err_rho1,err_rho2,micro1,micro2,dt\n")
        for row in rows:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")

    lines = [f"eps sweep at sigma={sigma}, T={T}: D1={D1:.6g} D2={D2:.6g}"]
    lines.append(f"{'eps':>8} {'err_rho1':>12} {'err_rho2':>12} {'micro1':>12} {'micro2':>12}")
    for eps, e1, e2, m1, m2, _ in rows:
        lines.append(f"{eps:>8g} {e1:>12.4e} {e2:>12.4e} {m1:>12.4e} {m2:>12.4e}")

    def orders(idx):
        out = []
        for (ea, *ra), (eb, *rb) in zip(rows, rows[1:]):
            ratio = ra[idx] / rb[idx] if rb[idx] > 0 else math.inf
            out.append(math.log(ratio) / math.log(ea / eb))
        return out

    lines.append("observed order per refinement (err_rho1): "
                 + " ".join(f"{o:.2f}" for o in orders(0)))
    lines.append("observed order per refinement (micro1):   "
                 + " ".join(f"{o:.2f}" for o in orders(2)))
    micro_ratios = [a[3] / b[3] for a, b in zip(rows, rows[1:])]
    lines.append("micro1 Richardson ratios: " + " ".join(f"{r:.3f}" for r in micro_ratios))

    # first-moment flux against the limiting Fick law at the smallest epsilon
    eps_min = eps_list[-1]
    F_T, mac = finals[eps_min]
    flux_lines = []
    for f, chi, rho_rd, theta, name in (
        (F_T.f1, grid.chi1, rd_final.rho1, grid.chi1.temperature_like, "species1"),
        (F_T.f2, grid.chi2, rd_final.rho2, grid.chi2.temperature_like, "species2"),
    ):
        rho_hat = np.fft.fftn(rho_rd, axes=grid.spatial_axes)
        err_num = 0.0
        err_den = 0.0
        for a in range(grid.d):
            J_a = f @ (grid.w * grid.v[:, a])
            shape = [1] * grid.d
            shape[a] = grid.nx
            ka = grid.k1d.reshape(shape)
            grad_a = np.fft.ifftn(2j * math.pi * ka * rho_hat, axes=grid.spatial_axes).real
            target = -(theta / sigma) * grad_a
            err_num += h * float(np.sum((J_a / eps_min - target) ** 2))
            err_den += h * float(np.sum(target**2))
        rel = math.sqrt(err_num / err_den) if err_den > 0 else math.inf
        flux_lines.append(f"flux check {name} at eps={eps_min}: relative L2 error {rel:.3e}")
    lines.extend(flux_lines)

    decreasing = all(a[1] > b[1] and a[2] > b[2] for a, b in zip(rows, rows[1:]))
    lines.append(f"errors strictly decreasing along eps list: {decreasing}")
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")
    _write_gnuplot(outdir / "sweep.gp", [
        "set logscale xy",
        "set xlabel 'epsilon'",
        "plot 'sweep.csv' using 1:2 with linespoints, '' using 1:4 with linespoints",
    ])
    print("\n".join(lines))
    return 0 if decreasing else 2


def run_oracle_check(cfg: ExperimentConfig, outdir: Path) -> int:
    grid = _build_grid(cfg)
    _write_manifest(outdir, cfg, grid)
    params = ModelParams(cfg.model.epsilon, cfg.model.sigma)
    F0 = _build_initial(cfg, grid)
    ocfg = cfg.oracle
    pconf = PicardConfig(max_iterations=ocfg.max_iterations, tol=ocfg.tol,
                         time_nodes=ocfg.time_nodes)
    ref, info = picard_solve(F0, ocfg.horizon, params, grid, pconf, return_info=True)
    eq = equilibrium_state(F0, grid)

    sups, l2s = [], []
    for dt in (ocfg.dt, 0.5 * ocfg.dt):
        n_steps = max(1, int(round(ocfg.horizon / dt)))
        scfg = SolverConfig(
            dt=ocfg.horizon / n_steps, t_final=ocfg.horizon, cadence=n_steps,
            rho_m=cfg.model.rho_m, rho_M=cfg.model.rho_M, delta=cfg.model.delta,
        )
        F_T, _ = run(F0, params, scfg, grid)
        diff = state_diff(F_T, ref)
        sups.append(max(float(np.max(np.abs(diff.f1))), float(np.max(np.abs(diff.f2)))))
        l2s.append(math.sqrt(weighted_norm_sq(diff, eq, grid)))

    threshold = max(10.0 * ocfg.dt**2, 50.0 * ocfg.tol)  # order-2 splitting + Picard tol
    ratio = sups[0] / sups[1] if sups[1] > 0 else math.inf
    ok = sups[0] <= threshold
    lines = [
        f"oracle check: horizon={ocfg.horizon} dt={ocfg.dt} "
        f"picard iterations={info.iterations} residual={info.residuals[-1]:.3e}",
        f"sup discrepancy at dt:   {sups[0]:.6e}   weighted-L2: {l2s[0]:.6e}",
        f"sup discrepancy at dt/2: {sups[1]:.6e}   weighted-L2: {l2s[1]:.6e}",
        f"dt-halving ratio: {ratio:.3f} (order-2 splitting gives ~4)",
        f"pass threshold {threshold:.3e}: {'PASS' if ok else 'FAIL'}",
    ]
    (outdir / "report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0 if ok else 2


def run_inequality_battery(cfg: ExperimentConfig, outdir: Path) -> int:
    grid = _build_grid(cfg)
    _write_manifest(outdir, cfg, grid)
    rng = np.random.default_rng(cfg.inequalities.seed)
    names = None
    min_margins = None
    n_fail = 0
    with open(outdir / "margins.csv", "w") as fh:
        for i in range(cfg.inequalities.n_states):
            F = random_bounded_state(grid, cfg.model.rho_m, cfg.model.rho_M, rng,
                                     margin=cfg.inequalities.margin)
            eq = equilibrium_state(F, grid)
            rep = verify_inequalities(F, eq, grid)
            if names is None:
                names = [c.name for c in rep.checks]
                fh.write("state," + ",".join(names) + "\n")
                min_margins = [math.inf] * len(names)
            fh.write(f"{i}," + ",".join(f"{c.margin:.17g}" for c in rep.checks) + "\n")
            min_margins = [min(m, c.margin) for m, c in zip(min_margins, rep.checks)]
            if not rep.ok:
                n_fail += 1
    lines = [f"inequality battery on {cfg.inequalities.n_states} random "
             f"bound-respecting states (seed {cfg.inequalities.seed})"]
    for name, m in zip(names, min_margins):
        lines.append(f"min margin {name}: {m:.6e}")
    lines.append(f"states with failures: {n_fail}")
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0 if n_fail == 0 else 2


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pairkin", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("decay", "entropy decay experiment with full diagnostics"),
        ("eps-sweep", "macroscopic-limit sweep against the reaction-diffusion solver"),
        ("oracle-check", "cross-validate the integrator against the Picard oracle"),
        ("inequalities", "structural inequality battery on random states"),
        ("print-config", "print the effective configuration"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a single config value")
        if name != "print-config":
            p.add_argument("--output-dir", default=None,
                           help=f"output directory (overrides config and ${OUTDIR_ENV})")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config, args.set)
        if args.command == "print-config":
            print(cfg.to_ini())
            return 0
        cfg.experiment.kind = args.command.replace("-", "_")
        outdir = _resolve_outdir(cfg, args.output_dir)
        dispatch = {
            "decay": run_decay,
            "eps-sweep": run_eps_sweep,
            "oracle-check": run_oracle_check,
            "inequalities": run_inequality_battery,
        }
        return dispatch[args.command](cfg, outdir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (BoundViolation, ConservationDrift) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2
    except (NumericalBlowup, PicardConvergenceError, RDError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
