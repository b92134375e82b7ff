"""Command line front end: ``repsc <command> --config run.ini --out DIR``.

Every command parses and validates the whole configuration before doing any
work; all violations are reported together and the process exits with
status 2.  Tolerance misses exit with 3 and numerical breakdowns
(aliasing, grid overflow, non-convergence) with 4.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .dynamics import ComovingState, EvolveConfig, evolve, trajectory_row, write_trajectory_csv
from .errors import AliasingError, ConfigError, GridOverflowError, RepscError, ToleranceError
from .ewrecon import (extract_xray_samples, perpendicular, resolve_jobs, velocity_sweep)
from .lattice import (GridSpec, PacketSpec, WaveFunction, make_packet, observable_moment,
                      spectral_mass_outside, write_snapshot)
from .mehler import (carlson_beurling_check, classical_position, free_propagate_factored,
                     free_propagate_kinetic_form, heisenberg_position, random_packets, scaling_ratios)
from .potentials import PotentialSpec, RegularPart, SingularPart, eval_potential
from .radon import (Sinogram, fbp_invert, relative_l2_error, uniform_angles, write_sinogram_csv,
                    xray_forward)
from .scatter import ScatterConfig, scattering_apply, write_scatter_report

COMMANDS = ("mehler-check", "evolve", "scatter", "sweep", "reconstruct")


# ---------------------------------------------------------------------------
# configuration

def _floats(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(x) for x in text.replace(";", ",").split(","))


def _optional_float(text: str) -> Optional[float]:
    text = text.strip().lower()
    return None if text in ("", "none") else float(text)


@dataclass(frozen=True)
class MehlerSection:
    times: tuple = (-1.5, -1.0, -0.5, -0.1, 0.1, 0.5, 1.0, 1.5)
    states: int = 50
    seed: int = 20240611
    tolerance: float = 1e-10
    heisenberg_times: tuple = (-1.0, -0.5, 0.0, 0.5, 1.0)
    heisenberg_tolerance: float = 1e-6
    growth_times: tuple = (0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)
    growth_range: tuple = (1.9, 2.1)
    scaling_lambdas: tuple = (0.25, 0.5, 2.0, 4.0)
    scaling_tolerance: float = 1e-6
    scaling_points: int = 1 << 20
    scaling_half_width: float = 16384.0
    cb_lambdas: tuple = (0.1, 1.0, 10.0)
    cb_spread: float = 1e-6


@dataclass(frozen=True)
class SweepSection:
    speeds: tuple = (5.0, 10.0, 20.0, 40.0)
    direction: tuple = (1.0, 0.0)
    axis: str = "perp"
    tolerance: float = 0.05
    max_speed: float = 200.0
    psi_center: Optional[tuple] = None


@dataclass(frozen=True)
class ReconstructSection:
    mode: str = "synthetic"
    directions: int = 8
    offsets: tuple = (-3.5, 3.5, 29.0)
    packet_width: float = 2.0
    speed: float = 40.0
    field_points: int = 128
    field_half_width: float = 6.0
    ground_truth: bool = True
    tolerance: float = 0.05
    deconvolve: bool = True
    regularization: float = 1e-4


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec
    potential: PotentialSpec
    packet: PacketSpec
    dynamics: EvolveConfig
    duration: float
    record_every: int
    scatter: ScatterConfig
    mehler: MehlerSection
    sweep: SweepSection
    reconstruct: ReconstructSection
    figures: bool = True
    warnings: tuple = ()
    source: dict = field(default_factory=dict, compare=False, repr=False)


def _section(cp, name):
    return cp[name] if cp.has_section(name) else {}


def _get(sec, key, conv, default, errors, where):
    if key not in sec:
        return default
    try:
        return conv(sec[key])
    except (ValueError, TypeError) as exc:
        errors.append(f"[{where}] {key}: cannot parse {sec[key]!r} ({exc})")
        return default


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _build(errors, where, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError as exc:
        errors.extend(f"[{where}] {v}" for v in exc.violations)
    except (ValueError, TypeError) as exc:
        errors.append(f"[{where}] {exc}")
    return None


KNOWN = {
    "grid": {"dim", "points", "half_width"},
    "potential": {"regular", "regular_strength", "regular_decay", "regular_width", "singular",
                  "singular_strength", "singular_exponent", "singular_radius"},
    "packet": {"center", "velocity", "width", "profile", "support", "order"},
    "dynamics": {"duration", "dt", "fine_dt", "fine_window", "horizon", "max_scale", "aliasing_budget",
                 "mollify_radius", "check_every", "record_every", "splitting"},
    "scatter": {"t_max", "cook_tol", "dt", "step_length", "t_min", "t_gap", "interaction_radius",
                "use_modifier", "cauchy_check", "aliasing_budget", "mollify_radius", "check_every"},
    "mehler": set(MehlerSection.__dataclass_fields__),
    "sweep": set(SweepSection.__dataclass_fields__),
    "reconstruct": set(ReconstructSection.__dataclass_fields__),
    "output": {"figures"},
}


def parse_config(text: str) -> RunConfig:
    """Parse and cross-validate a configuration; raises one :class:`ConfigError` listing every problem."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}")
    errors: list = []
    for name in cp.sections():
        if name not in KNOWN:
            errors.append(f"unknown section [{name}]")
            continue
        for key in cp[name]:
            if key not in KNOWN[name]:
                errors.append(f"[{name}] unknown key {key!r}")

    g = _section(cp, "grid")
    dim = _get(g, "dim", int, 1, errors, "grid")
    grid = _build(errors, "grid", GridSpec, dim, _get(g, "points", int, 256, errors, "grid"),
                  _get(g, "half_width", float, 10.0, errors, "grid"), 1.0)

    p = _section(cp, "potential")
    reg = sing = None
    rkind = p.get("regular", "none").strip()
    if rkind != "none":
        reg = _build(errors, "potential", RegularPart, rkind,
                     _get(p, "regular_strength", float, 1.0, errors, "potential"),
                     _get(p, "regular_decay", float, 1.0, errors, "potential"),
                     _get(p, "regular_width", float, 1.0, errors, "potential"))
        if rkind == "custom":
            errors.append("[potential] custom regular parts are only available from Python")
    skind = p.get("singular", "none").strip()
    if skind != "none":
        sing = _build(errors, "potential", SingularPart, skind,
                      _get(p, "singular_strength", float, 1.0, errors, "potential"),
                      _get(p, "singular_exponent", float, 0.25, errors, "potential"),
                      _get(p, "singular_radius", float, 1.0, errors, "potential"))
    potential = PotentialSpec(reg, sing)

    k = _section(cp, "packet")
    zero = (0.0,) * max(dim, 1)
    packet = _build(errors, "packet", PacketSpec,
                    _get(k, "center", _floats, zero, errors, "packet"),
                    _get(k, "velocity", _floats, zero, errors, "packet"),
                    _get(k, "width", float, 1.0, errors, "packet"),
                    k.get("profile", "gaussian").strip(),
                    _get(k, "support", float, 4.0, errors, "packet"),
                    _get(k, "order", float, 8.0, errors, "packet"))
    if packet is not None and len(packet.center) != dim:
        errors.append(f"[packet] center has {len(packet.center)} components, grid dim is {dim}")

    d = _section(cp, "dynamics")
    duration = _get(d, "duration", float, 1.0, errors, "dynamics")
    record_every = _get(d, "record_every", int, 10, errors, "dynamics")
    dyn = _build(errors, "dynamics", EvolveConfig,
                 dt=_get(d, "dt", float, 0.01, errors, "dynamics"),
                 fine_dt=_get(d, "fine_dt", _optional_float, None, errors, "dynamics"),
                 fine_window=_get(d, "fine_window", float, 0.0, errors, "dynamics"),
                 horizon=_get(d, "horizon", float, 10.0, errors, "dynamics"),
                 max_scale=_get(d, "max_scale", float, 1e12, errors, "dynamics"),
                 aliasing_budget=_get(d, "aliasing_budget", float, 1e-10, errors, "dynamics"),
                 mollify_radius=_get(d, "mollify_radius", float, 0.0, errors, "dynamics"),
                 check_every=_get(d, "check_every", int, 50, errors, "dynamics"),
                 splitting=d.get("splitting", "strang").strip())
    if dyn is not None and abs(duration) > dyn.horizon:
        errors.append(f"[dynamics] duration {duration:g} exceeds horizon {dyn.horizon:g}")
    if record_every < 1:
        errors.append("[dynamics] record_every must be at least 1")

    s = _section(cp, "scatter")
    scat = _build(errors, "scatter", ScatterConfig,
                  t_max=_get(s, "t_max", float, 3.0, errors, "scatter"),
                  cook_tol=_get(s, "cook_tol", float, 1e-6, errors, "scatter"),
                  dt=_get(s, "dt", float, 0.02, errors, "scatter"),
                  step_length=_get(s, "step_length", float, 0.05, errors, "scatter"),
                  t_min=_get(s, "t_min", float, 0.5, errors, "scatter"),
                  t_gap=_get(s, "t_gap", float, 0.25, errors, "scatter"),
                  interaction_radius=_get(s, "interaction_radius", _optional_float, None, errors, "scatter"),
                  use_modifier=_get(s, "use_modifier", _bool, True, errors, "scatter"),
                  cauchy_check=_get(s, "cauchy_check", _bool, True, errors, "scatter"),
                  aliasing_budget=_get(s, "aliasing_budget", float, 1e-10, errors, "scatter"),
                  mollify_radius=_get(s, "mollify_radius", float, 0.0, errors, "scatter"),
                  check_every=_get(s, "check_every", int, 50, errors, "scatter"))
    if scat is not None and math.cosh(2 * min(2 * scat.t_max, 350.0)) > 1e300:
        errors.append("[scatter] t_max too large for double precision frame parameters")

    m = _section(cp, "mehler")
    md = MehlerSection()
    mehler = MehlerSection(
        times=_get(m, "times", _floats, md.times, errors, "mehler"),
        states=_get(m, "states", int, md.states, errors, "mehler"),
        seed=_get(m, "seed", int, md.seed, errors, "mehler"),
        tolerance=_get(m, "tolerance", float, md.tolerance, errors, "mehler"),
        heisenberg_times=_get(m, "heisenberg_times", _floats, md.heisenberg_times, errors, "mehler"),
        heisenberg_tolerance=_get(m, "heisenberg_tolerance", float, md.heisenberg_tolerance, errors, "mehler"),
        growth_times=_get(m, "growth_times", _floats, md.growth_times, errors, "mehler"),
        growth_range=_get(m, "growth_range", _floats, md.growth_range, errors, "mehler"),
        scaling_lambdas=_get(m, "scaling_lambdas", _floats, md.scaling_lambdas, errors, "mehler"),
        scaling_tolerance=_get(m, "scaling_tolerance", float, md.scaling_tolerance, errors, "mehler"),
        scaling_points=_get(m, "scaling_points", int, md.scaling_points, errors, "mehler"),
        scaling_half_width=_get(m, "scaling_half_width", float, md.scaling_half_width, errors, "mehler"),
        cb_lambdas=_get(m, "cb_lambdas", _floats, md.cb_lambdas, errors, "mehler"),
        cb_spread=_get(m, "cb_spread", float, md.cb_spread, errors, "mehler"))
    if any(t == 0 for t in mehler.times):
        errors.append("[mehler] times must be nonzero (both factorisations are singular at t = 0)")
    if len(mehler.growth_range) != 2:
        errors.append("[mehler] growth_range needs two values")
    if mehler.states < 1:
        errors.append("[mehler] states must be at least 1")
    if any(lam == 0 for lam in mehler.scaling_lambdas + mehler.cb_lambdas):
        errors.append("[mehler] scaling factors must be nonzero")

    w = _section(cp, "sweep")
    sd = SweepSection()
    sweep = SweepSection(
        speeds=_get(w, "speeds", _floats, sd.speeds, errors, "sweep"),
        direction=_get(w, "direction", _floats, sd.direction, errors, "sweep"),
        axis=w.get("axis", sd.axis).strip(),
        tolerance=_get(w, "tolerance", float, sd.tolerance, errors, "sweep"),
        max_speed=_get(w, "max_speed", float, sd.max_speed, errors, "sweep"),
        psi_center=_get(w, "psi_center", _floats, None, errors, "sweep") or None)
    for i, sp in enumerate(sweep.speeds):
        if not 0 < sp <= sweep.max_speed:
            errors.append(f"[sweep] speeds row {i}: |v| = {sp:g} outside (0, max_speed = {sweep.max_speed:g}]")
    if cp.has_section("sweep"):
        if len(sweep.direction) != dim or not np.linalg.norm(sweep.direction) > 0:
            errors.append(f"[sweep] direction must be a nonzero vector with {dim} components")
        if sweep.axis != "perp" and not (sweep.axis.isdigit() and int(sweep.axis) < dim):
            errors.append(f"[sweep] axis must be 'perp' or an axis index below {dim}")
        if sweep.axis == "perp" and dim != 2:
            errors.append("[sweep] axis = perp requires dim = 2")

    r = _section(cp, "reconstruct")
    rd = ReconstructSection()
    recon = ReconstructSection(
        mode=r.get("mode", rd.mode).strip(),
        directions=_get(r, "directions", int, rd.directions, errors, "reconstruct"),
        offsets=_get(r, "offsets", _floats, rd.offsets, errors, "reconstruct"),
        packet_width=_get(r, "packet_width", float, rd.packet_width, errors, "reconstruct"),
        speed=_get(r, "speed", float, rd.speed, errors, "reconstruct"),
        field_points=_get(r, "field_points", int, rd.field_points, errors, "reconstruct"),
        field_half_width=_get(r, "field_half_width", float, rd.field_half_width, errors, "reconstruct"),
        ground_truth=_get(r, "ground_truth", _bool, rd.ground_truth, errors, "reconstruct"),
        tolerance=_get(r, "tolerance", float, rd.tolerance, errors, "reconstruct"),
        deconvolve=_get(r, "deconvolve", _bool, rd.deconvolve, errors, "reconstruct"),
        regularization=_get(r, "regularization", float, rd.regularization, errors, "reconstruct"))
    if cp.has_section("reconstruct"):
        if recon.mode not in ("synthetic", "scattering"):
            errors.append(f"[reconstruct] mode must be synthetic or scattering (got {recon.mode!r})")
        if len(recon.offsets) != 3 or recon.offsets[2] < 4 or recon.offsets[0] >= recon.offsets[1]:
            errors.append("[reconstruct] offsets must be 'min, max, count' with count >= 4")
        if recon.directions < 1:
            errors.append("[reconstruct] directions must be positive")
        if dim != 2:
            errors.append("[reconstruct] reconstruction requires dim = 2")
        if recon.mode == "scattering" and potential.singular is not None:
            errors.append("[reconstruct] scattering mode needs a potential without singular part")
        _build(errors, "reconstruct", GridSpec, 2, recon.field_points, recon.field_half_width, 1.0)

    figures = _get(_section(cp, "output"), "figures", _bool, True, errors, "output")
    if errors:
        raise ConfigError(errors)
    return RunConfig(grid, potential, packet, dyn, duration, record_every, scat, mehler, sweep, recon,
                     figures, _coupling_warnings(potential, dyn, scat),
                     {sec: dict(cp[sec]) for sec in cp.sections()})


def _coupling_warnings(potential: PotentialSpec, dyn: EvolveConfig, scat: ScatterConfig) -> tuple:
    # strong coupling is allowed, but a potential phase of order one per step
    # makes the splitting error dominate; say so instead of refusing
    strength = sum(abs(part.strength) for part in (potential.regular, potential.singular) if part is not None)
    out = []
    for name, dt in (("dynamics", dyn.dt), ("scatter", scat.dt)):
        if strength * dt > 0.5:
            out.append(f"[{name}] coupling {strength:g} with dt = {dt:g} gives a potential phase of "
                       f"{strength * dt:.2g} per step; expect reduced splitting accuracy or lower dt")
    return tuple(out)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    return parse_config(text)


# ---------------------------------------------------------------------------
# output helpers

def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    return "%.17g" % x


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def write_dat(path, columns: dict) -> None:
    """Whitespace separated columns with a ``#`` header, readable by gnuplot."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[n], dtype=float) for n in names])
    with open(path, "w") as fh:
        fh.write("# " + " ".join(names) + "\n")
        for row in data:
            fh.write(" ".join("%.17g" % x for x in row) + "\n")


@dataclass
class CheckLog:
    """Named pass/fail checks; the summary is written as ``checks.csv``."""

    rows: list = field(default_factory=list)

    def add(self, name: str, value: float, limit: float, ok: bool) -> None:
        self.rows.append((name, value, limit, bool(ok)))

    def failures(self) -> list:
        return [r[0] for r in self.rows if not r[3]]

    def write(self, out: Path) -> None:
        write_table(out / "checks.csv", ["check", "value", "limit", "pass"], self.rows)

    def finish(self, out: Path) -> None:
        self.write(out)
        bad = self.failures()
        if bad:
            raise ToleranceError("failed checks: " + ", ".join(bad))


def _plots():
    from . import plotting
    return plotting


# ---------------------------------------------------------------------------
# commands

def cmd_mehler_check(cfg: RunConfig, out: Path, jobs: int = 1) -> CheckLog:
    """Agreement, unitarity, Heisenberg, scaling and Carlson-Beurling reports."""
    mc = cfg.mehler
    log = CheckLog()
    packet = make_packet(cfg.grid, cfg.packet)
    states = random_packets(cfg.grid, mc.states, mc.seed)
    for i, st in enumerate(states):
        alias = spectral_mass_outside(st.values, cfg.grid)
        if alias > cfg.dynamics.aliasing_budget:
            raise AliasingError(f"random state {i}: spectral mass {alias:.3g} beyond 0.8 cutoff; refine the grid")
    agree_rows, unit_rows = [], []
    for t in mc.times:
        worst = worst_unit = 0.0
        for psi in states:
            a = free_propagate_factored(psi, t)
            b = free_propagate_kinetic_form(psi, t)
            diff = float(np.sqrt(np.sum(np.abs(a.values - b.values) ** 2) * b.grid.cell_volume))
            worst = max(worst, diff)
            worst_unit = max(worst_unit, abs(a.norm() - 1), abs(b.norm() - 1))
        agree_rows.append((t, worst))
        unit_rows.append((t, worst_unit))
    write_table(out / "agreement.csv", ["t", "max_l2_difference"], agree_rows)
    write_table(out / "unitarity.csv", ["t", "max_norm_defect"], unit_rows)
    agree = max(r[1] for r in agree_rows)
    unit = max(r[1] for r in unit_rows)
    log.add("mehler_agreement", agree, mc.tolerance, agree < mc.tolerance)
    log.add("unitarity", unit, mc.tolerance, unit < mc.tolerance)

    x0 = observable_moment(packet, "x", 0)
    p0 = observable_moment(packet, "p", 0)
    h_rows = []
    for t in mc.heisenberg_times:
        xt = heisenberg_position(packet, t, 0) if t != 0 else x0
        h_rows.append((t, xt, classical_position(x0, p0, t), abs(xt - classical_position(x0, p0, t))))
    g_rows = [(t, heisenberg_position(packet, t, 0)) for t in mc.growth_times]
    gt = np.array([r[0] for r in g_rows])
    gx = np.array([r[1] for r in g_rows])
    if np.all(gx > 0):
        slope = float(np.polyfit(gt, np.log(gx), 1)[0])
    else:
        slope = float("nan")
    write_table(out / "heisenberg.csv", ["t", "x_mean", "classical", "residual"], h_rows)
    write_dat(out / "heisenberg_growth.dat", {"t": gt, "x_mean": gx})
    hres = max(r[3] for r in h_rows)
    log.add("heisenberg_residual", hres, mc.heisenberg_tolerance, hres < mc.heisenberg_tolerance)
    lo, hi = mc.growth_range
    log.add("growth_exponent", slope, hi, lo <= slope <= hi)

    bracket = lambda x: 1.0 / (1.0 + np.sum(x ** 2, axis=-1))
    gauss = lambda x: np.exp(-np.sum(x ** 2, axis=-1))
    s_rows = []
    grids = [(1, GridSpec(1, mc.scaling_points, mc.scaling_half_width, 1.0), "bracket", bracket),
             (2, GridSpec(2, 512, 16.0, 1.0), "gaussian", gauss)]
    for n, grid, name, func in grids:
        for row in scaling_ratios(func, grid, mc.scaling_lambdas):
            s_rows.append((n, name, row.lam, row.l2_ratio, row.l2_expected, row.h2_ratio, row.h2_expected,
                           row.worst))
    write_table(out / "scaling.csv", ["n", "m", "lambda", "l2_ratio", "l2_expected", "h2_ratio",
                                      "h2_expected", "relative_error"], s_rows)
    sworst = max(r[-1] for r in s_rows)
    log.add("scaling_laws", sworst, mc.scaling_tolerance, sworst < mc.scaling_tolerance)

    cb = carlson_beurling_check(bracket, mc.cb_lambdas, GridSpec(1, 4096, 40.0, 1.0))
    write_table(out / "carlson_beurling.csv", ["lambda", "kernel_l1", "bound", "ratio"],
                [(lam, k, b, k / b) for lam, k, b in zip(cb.lambdas, cb.kernel_l1, cb.bound)])
    log.add("carlson_beurling_uniform", cb.spread, mc.cb_spread, cb.uniform and cb.spread < mc.cb_spread)

    if cfg.figures:
        pl = _plots()
        pl.semilogy_series(out / "agreement.png", [r[0] for r in agree_rows],
                           {"factored vs kinetic": [r[1] for r in agree_rows],
                            "norm defect": [r[1] for r in unit_rows]}, "t", "L2 difference")
        pl.semilogy_series(out / "heisenberg_growth.png", gt, {"<x>(t)": gx}, "t", "<x>")
    log.finish(out)
    return log


def _packet_state(cfg: RunConfig) -> ComovingState:
    return ComovingState.from_packet(cfg.grid, cfg.packet, cfg.dynamics.aliasing_budget)


def cmd_evolve(cfg: RunConfig, out: Path, jobs: int = 1) -> CheckLog:
    """Trajectory CSV/dat of ``exp(-itH)`` applied to the configured packet, plus snapshots."""
    state = _packet_state(cfg)
    rows = [trajectory_row(state)]

    def observer(s, i):
        if i % cfg.record_every == 0:
            rows.append(trajectory_row(s))

    dyn = replace(cfg.dynamics, check_every=1)
    final = evolve(state, cfg.duration, cfg.potential, dyn, observer=observer)
    if rows[-1][0] != final.theta:
        rows.append(trajectory_row(final))
    dim = cfg.grid.dim
    write_trajectory_csv(out / "trajectory.csv", rows, dim)
    arr = np.array(rows, dtype=float)
    write_dat(out / "trajectory.dat", {"t": arr[:, 0], "norm": arr[:, 1], "x0": arr[:, 2]})
    write_snapshot(out / "final_profile.snap", WaveFunction(cfg.grid, final.phi))
    write_table(out / "final_frame.csv", ["theta", "dilation"] + [f"center{j}" for j in range(dim)]
                + [f"velocity{j}" for j in range(dim)],
                [(final.theta, final.dilation, *final.center, *final.velocity)])
    try:
        write_snapshot(out / "final_state.snap", final.to_wavefunction())
    except GridOverflowError:
        pass  # frame offset too large for a plain lattice sample; the profile and frame suffice
    log = CheckLog()
    drift = float(np.max(np.abs(arr[:, 1] - arr[0, 1])))
    log.add("norm_drift", drift, 1e-8, drift < 1e-8)
    if cfg.figures:
        _plots().line_series(out / "trajectory.png", arr[:, 0], {"<x_0>": arr[:, 2]}, "t", "<x_0>")
    log.finish(out)
    return log


def cmd_scatter(cfg: RunConfig, out: Path, jobs: int = 1) -> CheckLog:
    """``S`` applied to the configured packet; report CSV and outgoing snapshots."""
    state = _packet_state(cfg)
    res = scattering_apply(state, cfg.potential, cfg.scatter)
    v = np.array(state.velocity)
    speed = float(np.linalg.norm(v))
    direction = v / speed if speed > 0 else v
    write_scatter_report(out / "scatter_report.csv", [dict(
        v_mag=speed, direction=direction, T_used=res.T_used, cook_tail_past=res.cook_tail_past,
        cook_tail_future=res.cook_tail_future, unitarity_defect=res.unitarity_defect)])
    write_snapshot(out / "outgoing_profile.snap", WaveFunction(cfg.grid, res.state.phi))
    try:
        write_snapshot(out / "outgoing_state.snap", res.outgoing)
    except GridOverflowError:
        pass
    log = CheckLog()
    log.add("unitarity_defect", res.unitarity_defect, 1e-5, res.unitarity_defect < 1e-5)
    log.finish(out)
    return log


def _sweep_axis(cfg: RunConfig):
    vhat = np.array(cfg.sweep.direction, dtype=float)
    vhat /= np.linalg.norm(vhat)
    if cfg.sweep.axis == "perp":
        return vhat, perpendicular(vhat)
    return vhat, int(cfg.sweep.axis)


def cmd_sweep(cfg: RunConfig, out: Path, jobs: int = 1) -> CheckLog:
    """Velocity sweep of the commutator pairing against the quadrature oracle."""
    vhat, axis = _sweep_axis(cfg)
    rest = replace(cfg.packet, velocity=(0.0,) * cfg.grid.dim)
    phi = make_packet(cfg.grid, rest)
    if cfg.sweep.psi_center is not None:
        psi = make_packet(cfg.grid, replace(rest, center=tuple(cfg.sweep.psi_center)))
    else:
        psi = phi
    res = velocity_sweep(phi, psi, axis, vhat, cfg.potential, cfg.sweep.speeds, cfg.scatter, jobs=jobs,
                         center_phi=rest.center, center_psi=cfg.sweep.psi_center or rest.center)
    res.write_csv(out / "sweep.csv")
    res.write_gnuplot(out / "sweep.dat")
    log = CheckLog()
    if cfg.potential.is_zero:
        zero = all(r.pairing == 0 for r in res.rows)
        log.add("zero_potential", 0.0 if zero else 1.0, 0.0, zero)
    else:
        final = float(res.rel_errors[-1])
        log.add("sweep_tail_decreasing", final, cfg.sweep.tolerance, res.tail_decreasing())
        log.add("sweep_final_relative_error", final, cfg.sweep.tolerance, final < cfg.sweep.tolerance)
        if cfg.figures:
            _plots().loglog_series(out / "sweep.png", res.speeds, {"relative error": res.rel_errors},
                                   "|v|", "relative error", slope_ref=-1.0)
    log.finish(out)
    return log


def _offsets(rc: ReconstructSection) -> np.ndarray:
    return np.linspace(rc.offsets[0], rc.offsets[1], int(rc.offsets[2]))


def _xray_job(args):
    V, vhat, offsets, rc, grid, scfg = args
    xs = extract_xray_samples(V, np.array(vhat), offsets, rc.packet_width, rc.speed, grid, scfg,
                              deconvolve=rc.deconvolve, reg=rc.regularization)
    return xs.values


def cmd_reconstruct(cfg: RunConfig, out: Path, jobs: int = 1) -> CheckLog:
    """X-ray samples (synthetic or from scattering) and their filtered back-projection."""
    rc = cfg.reconstruct
    target = GridSpec(2, rc.field_points, rc.field_half_width, 1.0)
    angles = uniform_angles(rc.directions)
    offsets = _offsets(rc)
    truth = eval_potential(cfg.potential, target.points_array())
    if rc.mode == "synthetic":
        sino = xray_forward(truth, target, angles, offsets, jobs=jobs)
    else:
        tasks = [(cfg.potential, (math.cos(th), math.sin(th)), offsets, rc, cfg.grid, cfg.scatter)
                 for th in angles]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
                rows = list(ex.map(_xray_job, tasks))
        else:
            rows = [_xray_job(t) for t in tasks]
        sino = Sinogram(angles, offsets, np.array(rows))
    write_sinogram_csv(out / "sinogram.csv", sino)
    field_vals = fbp_invert(sino, target, allow_sparse=True, jobs=jobs)
    write_snapshot(out / "reconstruction.snap", WaveFunction(target, field_vals.astype(complex)))
    log = CheckLog()
    if rc.ground_truth:
        err = relative_l2_error(field_vals, truth)
        write_table(out / "error_report.csv", ["mode", "directions", "relative_l2_error"],
                    [(rc.mode, rc.directions, err)])
        log.add("reconstruction_error", err, rc.tolerance, err < rc.tolerance)
    else:
        write_table(out / "error_report.csv", ["mode", "directions", "relative_l2_error"],
                    [(rc.mode, rc.directions, "n/a")])
    if cfg.figures:
        pl = _plots()
        ext = (-rc.field_half_width, rc.field_half_width, -rc.field_half_width, rc.field_half_width)
        panels = {"reconstruction": field_vals}
        if rc.ground_truth:
            panels = {"truth": truth, "reconstruction": field_vals}
        pl.comparison_images(out / "reconstruction.png", panels, ext)
        pl.sinogram_image(out / "sinogram.png", sino)
    log.finish(out)
    return log


HANDLERS = {
    "mehler-check": cmd_mehler_check,
    "evolve": cmd_evolve,
    "scatter": cmd_scatter,
    "sweep": cmd_sweep,
    "reconstruct": cmd_reconstruct,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="repsc", description="Scattering toolkit for H0 = p^2 - x^2.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="INI configuration file")
    ap.add_argument("--out", required=True, help="output directory (created if missing)")
    ap.add_argument("--jobs", type=int, default=None, help="worker count (default: $REPSC_JOBS or 1)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        jobs = resolve_jobs(args.jobs)
        cfg = load_config(args.config)
        for note in cfg.warnings:
            print(f"repsc: warning: {note}", file=sys.stderr)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        HANDLERS[args.command](cfg, out, jobs)
    except RepscError as exc:
        label = type(exc).__name__
        if isinstance(exc, ConfigError):
            print(f"repsc: configuration rejected ({len(exc.violations)} problem(s)):", file=sys.stderr)
            for v in exc.violations:
                print(f"  - {v}", file=sys.stderr)
        else:
            print(f"repsc: {label}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
