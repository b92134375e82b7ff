"""Wave operators, the scattering operator and the modified free dynamics.

All operators act on :class:`~repsc.dynamics.ComovingState` objects (plain
:class:`~repsc.lattice.WaveFunction` inputs are wrapped).  Truncation times are
chosen from the Cook integrand ``t -> ||V exp(-i t H0) phi||`` so that the
neglected tail is below ``ScatterConfig.cook_tol``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad

from .dynamics import (ComovingState, EvolveConfig, _as_state, _kinetic_increment, _Propagator,
                       evolve, free_flow)
from .errors import ConfigError, ConvergenceError
from .lattice import WaveFunction, lattice_inner
from .potentials import PotentialSpec, eval_regular
from .quadrature import weighted_norm


@dataclass(frozen=True)
class ScatterConfig:
    """Truncation and stepping controls for W+-, S and the modified operators.

    ``step_length`` is the physical distance the frame travels per fine step
    while the packet crosses the interaction region (``|a(t)| <= reach``).
    ``interaction_radius`` overrides the automatic estimate of ``reach``.
    """

    t_max: float = 3.0
    cook_tol: float = 1e-6
    dt: float = 0.02
    step_length: float = 0.05
    t_min: float = 0.5
    t_gap: float = 0.25
    interaction_radius: Optional[float] = None
    use_modifier: bool = True
    cauchy_check: bool = True
    aliasing_budget: float = 1e-10
    mollify_radius: float = 0.0
    check_every: int = 50
    panel_nodes: int = 8

    def __post_init__(self):
        errors = []
        if not self.cook_tol > 0:
            errors.append(f"cook_tol must be positive (got {self.cook_tol})")
        if not self.t_max > 0:
            errors.append(f"t_max must be positive (got {self.t_max})")
        if not 0 < self.t_min <= self.t_max:
            errors.append("t_min must lie in (0, t_max]")
        if not self.t_gap > 0:
            errors.append("t_gap must be positive")
        if not self.dt > 0 or not self.step_length > 0:
            errors.append("dt and step_length must be positive")
        if errors:
            raise ConfigError(errors)


def _speed(state: ComovingState) -> float:
    return float(np.linalg.norm(state.velocity))


def interaction_reach(state: ComovingState, V: PotentialSpec, cfg: ScatterConfig) -> float:
    """Physical distance from the origin within which the packet feels ``V``."""
    if cfg.interaction_radius is not None:
        return cfg.interaction_radius
    g = state.grid
    extent = g.half_width * abs(g.scale)
    r = 0.0
    if V.singular is not None:
        r = max(r, V.singular.radius)
    if V.regular is not None:
        r = max(r, 6 * V.regular.width if V.regular.kind == "gaussian" else 10.0)
    return extent + r


def evolve_config(state: ComovingState, V: PotentialSpec, cfg: ScatterConfig, horizon: float) -> EvolveConfig:
    """Fine steps while the frame crosses the interaction region, coarse elsewhere."""
    v = _speed(state)
    kw = dict(dt=cfg.dt, horizon=max(horizon, cfg.dt), aliasing_budget=cfg.aliasing_budget,
              mollify_radius=cfg.mollify_radius, check_every=cfg.check_every,
              max_scale=max(1e12, math.cosh(2 * min(horizon, 300.0)) * 1.01))
    if v > 0:
        fine = min(cfg.dt, cfg.step_length / (2 * v))
        window = 0.5 * math.asinh(interaction_reach(state, V, cfg) / v)
        kw.update(fine_dt=fine, fine_window=window, fine_center=0.0)
    return EvolveConfig(**kw)


def _members(state: ComovingState):
    flat = state.phi.reshape((-1,) + state.grid.shape)
    return list(flat)


def cook_integrand(psi, t: float, V: PotentialSpec, modified: bool = False, parts: str = "all",
                   method: str = "auto") -> float:
    """``|| W exp(-i t H0) psi ||`` with ``W = V`` (or ``V - V_reg(a(t))`` if ``modified``).

    ``a(t)`` is the frame's classical orbit.  For batched states the maximum
    over the batch is returned.
    """
    state, _ = _as_state(psi)
    th1 = state.theta + t
    moved = free_flow(state, t)
    c = math.cosh(2 * th1)
    a = state.frame_position(th1)
    sub = float(eval_regular(V, a[None, :])[0]) if modified and V.regular is not None else 0.0
    return max(weighted_norm(m, state.grid, c, a, V, subtract=sub, parts=parts, method=method)
               for m in _members(moved))


def _tail_beyond(f, t_end: float, direction: int, h: float = 0.25) -> float:
    """Exponential extrapolation of ``int_{t_end}^{inf} f`` from two samples."""
    f1 = f(t_end)
    if f1 == 0:
        return 0.0
    f0 = f(t_end - direction * h)
    if f0 <= f1:
        return math.inf
    rate = math.log(f0 / f1) / h
    return f1 / rate


def cook_tail(psi, V: PotentialSpec, T: float, t_end: float, direction: int = 1,
              modified: bool = False, epsabs: float = 1e-10) -> float:
    """``int_{|t| >= T} ||W exp(-i t H0) psi|| dt`` on one side (``direction`` = +-1).

    Quadrature up to ``t_end`` plus an exponential extrapolation of the rest.
    """
    if direction not in (1, -1):
        raise ConfigError("direction must be +1 or -1")
    f = lambda s: cook_integrand(psi, direction * s, V, modified)
    body = 0.0
    if t_end > T:
        body = quad(f, T, t_end, epsabs=epsabs, epsrel=1e-8, limit=200)[0]
    return body + _tail_beyond(f, max(t_end, T), 1)


def _cook_profile(state: ComovingState, V: PotentialSpec, cfg: ScatterConfig, direction: int,
                  modified: bool) -> tuple[np.ndarray, np.ndarray]:
    """Candidate truncation times and the Cook tail beyond each one."""
    Ts = np.arange(cfg.t_min, cfg.t_max + 1e-9, cfg.t_gap)
    f = lambda s: cook_integrand(state, direction * s, V, modified)
    x, w = np.polynomial.legendre.leggauss(cfg.panel_nodes)
    pieces = []
    for a, b in zip(Ts[:-1], Ts[1:]):
        h = 0.5 * (b - a)
        pieces.append(h * sum(wi * f(a + h * (1 + xi)) for xi, wi in zip(x, w)))
    tails = np.empty(len(Ts))
    tails[-1] = _tail_beyond(f, Ts[-1], 1)
    for i in range(len(Ts) - 2, -1, -1):
        tails[i] = tails[i + 1] + pieces[i]
    return Ts, tails


def modifier_phase(v, V: PotentialSpec, t: float, x0=None) -> float:
    """``int_0^t V_reg(cosh(2s) x0 + sinh(2s) v) ds``."""
    if V.regular is None or V.regular.strength == 0 or t == 0:
        return 0.0
    v = np.asarray(v, dtype=float)
    x0 = np.zeros_like(v) if x0 is None else np.asarray(x0, dtype=float)
    f = lambda s: float(eval_regular(V, (math.cosh(2 * s) * x0 + math.sinh(2 * s) * v)[None, :])[0])
    return quad(f, 0.0, t, epsabs=1e-13, epsrel=1e-11, limit=400)[0]


def modifier_tail(v, V: PotentialSpec, T: float) -> float:
    """``int_T^inf V_reg(sinh(2s) v) ds`` via ``u = sinh(2s) |v|`` (``T >= 0``)."""
    v = np.asarray(v, dtype=float)
    speed = float(np.linalg.norm(v))
    if V.regular is None or speed == 0:
        return 0.0
    vhat = v / speed
    f = lambda u: float(eval_regular(V, (u * vhat)[None, :])[0]) / (2 * math.hypot(speed, u))
    return quad(f, math.sinh(2 * T) * speed, np.inf, epsabs=1e-14, epsrel=1e-11, limit=400)[0]


def total_modifier(v, V: PotentialSpec, absolute: bool = True) -> float:
    """``int_R |V_reg(sinh(2s) v)| ds`` (or the signed integral)."""
    v = np.asarray(v, dtype=float)
    speed = float(np.linalg.norm(v))
    if V.regular is None:
        return 0.0
    if speed == 0:
        return math.inf
    vhat = v / speed
    g = (lambda u: abs(float(eval_regular(V, (u * vhat)[None, :])[0]))) if absolute else \
        (lambda u: float(eval_regular(V, (u * vhat)[None, :])[0]))
    f = lambda u: g(u) / (2 * math.hypot(speed, u))
    return (quad(f, -np.inf, 0, epsabs=1e-14, limit=400)[0]
            + quad(f, 0, np.inf, epsabs=1e-14, limit=400)[0])


@dataclass(frozen=True, eq=False)
class WaveResult:
    state: ComovingState
    T_used: float
    cook_tail: float
    cauchy_difference: float
    phase_correction: float


@dataclass(frozen=True, eq=False)
class ScatterResult:
    """``S phi`` together with the truncation diagnostics."""

    state: ComovingState
    T_used: float
    cook_tail_past: float
    cook_tail_future: float
    unitarity_defect: float
    phase_correction: float
    cauchy_difference: float

    @property
    def outgoing(self) -> WaveFunction:
        return self.state.to_wavefunction()


def _use_modifier(state: ComovingState, V: PotentialSpec, cfg: ScatterConfig) -> bool:
    return cfg.use_modifier and V.regular is not None and _speed(state) > 0


def _choose_T(tails: Sequence[np.ndarray], Ts: np.ndarray, cfg: ScatterConfig) -> int:
    worst = np.max(np.vstack(tails), axis=0)
    ok = np.nonzero(worst <= cfg.cook_tol)[0]
    if len(ok) == 0:
        raise ConvergenceError(f"Cook tail {worst[-1]:.3g} still above {cfg.cook_tol:g} at "
                               f"t_max = {cfg.t_max:g}", tail=float(worst[-1]))
    # the tail at T - gap bounds the Cauchy step between T - gap and T
    return min(int(ok[0]) + 1, len(Ts) - 1)


def _wave_at(state: ComovingState, sign: int, T: float, V: PotentialSpec, cfg: ScatterConfig) -> ComovingState:
    ecfg = evolve_config(state, V, cfg, T)
    moved = free_flow(state, sign * T)
    return evolve(moved, -sign * T, V, ecfg)


def _distance(x: ComovingState, y: ComovingState) -> float:
    d = x.phi - y.phi
    return float(np.max(np.sqrt(np.real(lattice_inner(d, d, x.grid)))))


def wave_operator_apply(psi, sign: int, V: PotentialSpec, cfg: ScatterConfig | None = None,
                        modified: bool | None = None):
    """``W_sign psi`` truncated at the Cook-selected ``T``.

    ``sign=+1`` gives ``exp(iTH) exp(-iTH0)``, ``sign=-1`` the ``-T`` version.
    With ``modified`` (default: ``cfg.use_modifier`` for boosted states) the
    scalar modifier tail beyond ``T`` is folded in, which accelerates
    convergence for power-law regular parts.  Returns the same type as ``psi``.
    """
    cfg = cfg or ScatterConfig()
    if sign not in (1, -1):
        raise ConfigError("sign must be +1 or -1")
    state, plain = _as_state(psi)
    if V.is_zero:
        out = state.with_phi(state.phi.copy())
        return out.to_wavefunction() if plain else WaveResult(out, 0.0, 0.0, 0.0, 0.0)
    use_mod = _use_modifier(state, V, cfg) if modified is None else modified
    Ts, tails = _cook_profile(state, V, cfg, sign, use_mod)
    k = _choose_T([tails], Ts, cfg)
    T = float(Ts[k])
    out = _wave_at(state, sign, T, V, cfg)
    corr = modifier_tail(np.array(state.velocity) * sign, V, T) if use_mod else 0.0
    # W_+- ~ W(+-T) exp(+-i int_T^inf V_reg(sinh(2s)v) ds)
    out = out.with_phi(out.phi * np.exp(1j * sign * corr))
    cauchy = math.nan
    if cfg.cauchy_check:
        prev = _wave_at(state, sign, float(Ts[k - 1]), V, cfg)
        corr_prev = modifier_tail(np.array(state.velocity) * sign, V, float(Ts[k - 1])) if use_mod else 0.0
        prev = prev.with_phi(prev.phi * np.exp(1j * sign * corr_prev))
        cauchy = _distance(out, prev)
    if plain:
        return out.to_wavefunction()
    return WaveResult(out, T, float(tails[k]), cauchy, corr)


def _scatter_at(state: ComovingState, T: float, V: PotentialSpec, cfg: ScatterConfig) -> ComovingState:
    ecfg = evolve_config(state, V, cfg, 2 * T)
    moved = free_flow(state, -T)
    mid = evolve(moved, 2 * T, V, ecfg)
    return free_flow(mid, -T)


def scattering_apply(psi, V: PotentialSpec, cfg: ScatterConfig | None = None,
                     T: float | None = None) -> ScatterResult:
    """``S psi = W_+^* W_- psi`` as ``exp(iTH0) exp(-2iTH) exp(iTH0) psi``.

    Both truncations share the same ``T`` (the larger of the two Cook
    selections unless ``T`` is given).  For boosted states with a regular
    part, the modifier tails ``int_{|s| > T} V_reg(sinh(2s) v) ds`` are
    applied as a global phase.
    """
    cfg = cfg or ScatterConfig()
    state, _ = _as_state(psi)
    if V.is_zero:
        return ScatterResult(state.with_phi(state.phi.copy()), 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    use_mod = _use_modifier(state, V, cfg)
    if T is None:
        Ts, fut = _cook_profile(state, V, cfg, 1, use_mod)
        _, past = _cook_profile(state, V, cfg, -1, use_mod)
        k = _choose_T([fut, past], Ts, cfg)
        T = float(Ts[k])
        tail_f, tail_p = float(fut[k]), float(past[k])
    else:
        k = None
        tail_f = tail_p = math.nan
    out = _scatter_at(state, T, V, cfg)
    v = np.array(state.velocity)
    corr = (modifier_tail(v, V, T) + modifier_tail(-v, V, T)) if use_mod else 0.0
    out = out.with_phi(out.phi * np.exp(-1j * corr))
    cauchy = math.nan
    if cfg.cauchy_check and k is not None:
        Tp = float(Ts[k - 1])
        prev = _scatter_at(state, Tp, V, cfg)
        cp = (modifier_tail(v, V, Tp) + modifier_tail(-v, V, Tp)) if use_mod else 0.0
        cauchy = _distance(out, prev.with_phi(prev.phi * np.exp(-1j * cp)))
    n0 = np.atleast_1d(state.norm())
    n1 = np.atleast_1d(out.norm())
    defect = float(np.max(np.abs(n1 - n0)))
    return ScatterResult(out, T, tail_p, tail_f, defect, corr, cauchy)


def modified_wave_operator_apply(psi, sign: int, v, V: PotentialSpec, cfg: ScatterConfig | None = None,
                                 T: float | None = None) -> ComovingState:
    """``Omega_v^sign psi ~ exp(i sign T H) U_v(-sign T) psi`` with
    ``U_v(t) = exp(-itH0) exp(-i int_0^t V_reg(sinh(2s) v) ds)``."""
    cfg = cfg or ScatterConfig()
    state, plain = _as_state(psi)
    if T is None:
        Ts, tails = _cook_profile(state, V, cfg, sign, modified=True)
        T = float(Ts[_choose_T([tails], Ts, cfg)])
    out = _wave_at(state, sign, T, V, cfg)
    phase = modifier_phase(v, V, sign * T)
    out = out.with_phi(out.phi * np.exp(-1j * phase))
    return out.to_wavefunction() if plain else out


def panel_integral(f, edges: Sequence[float], nodes: int = 12) -> float:
    """Composite Gauss-Legendre rule over consecutive ``edges``."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        h = 0.5 * (b - a)
        total += h * sum(wi * f(a + h * (1 + xi)) for xi, wi in zip(x, w))
    return total


def _geometric_edges(width: float, t_far: float) -> list:
    edges = [0.0]
    h = width / 2
    while edges[-1] + h < t_far:
        edges.append(edges[-1] + h)
        h *= 1.6
    edges.append(t_far)
    return edges


def _half_line(f, width: float, t_far: float, nodes: int) -> float:
    """``int_0^inf f``: geometric panels to ``t_far`` plus an exponential tail."""
    return panel_integral(f, _geometric_edges(width, t_far), nodes) + _tail_beyond(f, t_far, 1, h=0.5)


def singular_propagation_integral(state: ComovingState, V: PotentialSpec, t_far: float = 4.0,
                                  nodes: int = 12) -> float:
    """``int ||V_sing exp(-itH0) psi|| dt`` over the whole line.

    The integrand peaks while the frame crosses the support (a window of
    width ``~ R / |v|``) and then decays exponentially through the spreading
    of the packet.
    """
    if V.singular is None:
        return 0.0
    speed = _speed(state)
    if speed == 0:
        raise ConfigError("propagation integral needs a boosted state")
    width = 0.5 * math.asinh(V.singular.radius / speed)
    total = 0.0
    for sgn in (1, -1):
        total += _half_line(lambda t: cook_integrand(state, sgn * t, V, parts="singular"),
                            width, t_far, nodes)
    return total


def regular_propagation_integral(state: ComovingState, V: PotentialSpec, t_far: float = 12.0,
                                 nodes: int = 12) -> float:
    """``int ||(V_reg(x) - V_reg(a(t))) exp(-itH0) psi|| dt`` over the whole line."""
    if V.regular is None:
        return 0.0
    speed = _speed(state)
    width = 0.5 * math.asinh(1.0 / speed) if speed > 0 else 0.5
    total = 0.0
    for sgn in (1, -1):
        total += _half_line(lambda t: cook_integrand(state, sgn * t, V, modified=True, parts="regular"),
                            width, t_far, nodes)
    return total


def modified_deviation(state: ComovingState, V: PotentialSpec, cfg: ScatterConfig | None = None,
                       T: float | None = None) -> float:
    """``sup_t ||(exp(-itH) Omega_v^- - U_v(t)) psi||`` over ``t in [-T, T]``.

    The interacting run starts at ``-T`` from ``U_v(-T) psi`` and is compared
    node by node with ``U_v(t) psi`` in the shared comoving frame.
    """
    cfg = cfg or ScatterConfig()
    T = cfg.t_max if T is None else T
    v = np.array(state.velocity)
    ecfg = evolve_config(state, V, cfg, 2 * T)
    start = free_flow(state, -T)
    phase0 = modifier_phase(v, V, -T)
    base = state.phi
    prop = _Propagator(state.grid, None, ecfg)
    worst = [0.0]

    def observer(s: ComovingState, i: int):
        free = prop.from_chi(prop.kinetic(prop.to_chi(base), _kinetic_increment(0.0, s.theta)))
        d = s.phi * np.exp(-1j * phase0) - free * np.exp(-1j * modifier_phase(v, V, s.theta))
        worst[0] = max(worst[0], float(np.sqrt(np.real(lattice_inner(d, d, s.grid)))))

    evolve(start, 2 * T, V, ecfg, observer=observer)
    return worst[0]


SCATTER_FIELDS = ("v_mag", "direction", "T_used", "cook_tail_past", "cook_tail_future",
                  "unitarity_defect")


def write_scatter_report(path, rows: Sequence[dict]) -> None:
    """CSV with the columns of :data:`SCATTER_FIELDS`; ``direction`` is space separated."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCATTER_FIELDS)
        for r in rows:
            w.writerow(["%.17g" % r["v_mag"], " ".join("%.17g" % x for x in r["direction"]),
                        "%.17g" % r["T_used"], "%.17g" % r["cook_tail_past"],
                        "%.17g" % r["cook_tail_future"], "%.17g" % r["unitarity_defect"]])
