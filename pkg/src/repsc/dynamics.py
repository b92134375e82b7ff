"""Split-step propagation for ``H = H0 + V`` in a comoving frame.

A state is stored as ``psi = T(a, k) M_b D_c phi`` where

* ``phi`` lives on a fixed lattice (``ComovingState.grid``),
* ``D_c`` is the unitary dilation ``phi(X) -> c^{-n/2} phi(X / c)`` with
  ``c = cosh(2 theta)``,
* ``M_b`` multiplies by ``exp(i b |X|^2)`` with ``b = tanh(2 theta) / 2``,
* ``T(a, k) = exp(i (k.X - a.P))`` is the Weyl translation along the
  classical orbit ``a = cosh(2 theta) x0 + sinh(2 theta) v``,
  ``k = sinh(2 theta) x0 + cosh(2 theta) v``.

The free flow only changes ``theta`` and applies the kinetic multiplier
``exp(-i dtau p^2)`` with ``dtau = (tanh(2 theta') - tanh(2 theta)) / 2``
to ``phi``, so the lattice never has to follow the exponential spreading
or the packet velocity.  The potential acts as ``V(c X + a)`` on ``phi``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.fft

from .errors import AliasingError, ConfigError, GridOverflowError
from .lattice import (GridSpec, PacketSpec, WaveFunction, _broadcast, _phases, dft,
                      edge_mass, fourier_multiply, lattice_inner, make_packet,
                      spectral_mass_outside)
from .potentials import PotentialSpec, eval_potential

PotentialLike = Union[PotentialSpec, Callable[[np.ndarray], np.ndarray], None]


@dataclass(frozen=True)
class EvolveConfig:
    """Time stepping controls.

    Steps of size ``fine_dt`` are used for ``|theta - fine_center| <= fine_window``
    and ``dt`` elsewhere; ``fine_dt=None`` means uniform ``dt``.
    ``max_scale`` bounds ``cosh(2 theta)`` over a run.
    """

    dt: float = 0.01
    fine_dt: Optional[float] = None
    fine_window: float = 0.0
    fine_center: float = 0.0
    horizon: float = 10.0
    max_scale: float = 1e12
    aliasing_budget: float = 1e-10
    mollify_radius: float = 0.0
    check_every: int = 50
    splitting: str = "strang"

    def __post_init__(self):
        errors = []
        if not self.dt > 0:
            errors.append(f"dt must be positive (got {self.dt})")
        if self.fine_dt is not None and not self.fine_dt > 0:
            errors.append(f"fine_dt must be positive (got {self.fine_dt})")
        if self.fine_window < 0:
            errors.append("fine_window must be nonnegative")
        if not self.horizon >= self.dt:
            errors.append(f"horizon {self.horizon} shorter than dt {self.dt}")
        if not self.max_scale >= 1:
            errors.append("max_scale must be at least 1")
        if math.cosh(2 * min(self.horizon, 350.0)) > self.max_scale:
            errors.append(f"horizon {self.horizon} exceeds max_scale {self.max_scale:g} "
                          f"(cosh(2T) = {math.cosh(2 * min(self.horizon, 350.0)):.3g})")
        if not self.aliasing_budget > 0:
            errors.append("aliasing_budget must be positive")
        if self.mollify_radius < 0:
            errors.append("mollify_radius must be nonnegative")
        if self.check_every < 1:
            errors.append("check_every must be at least 1")
        if self.splitting != "strang":
            errors.append(f"only strang splitting is supported (got {self.splitting!r})")
        if errors:
            raise ConfigError(errors)


@dataclass(frozen=True, eq=False)
class ComovingState:
    """``psi = T(a, k) M_b D_c phi`` (see module docstring).

    ``phi`` may carry leading batch axes; all members of a batch share the frame.
    """

    grid: GridSpec
    phi: np.ndarray = field(repr=False)
    theta: float = 0.0
    center: tuple = ()
    velocity: tuple = ()

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=complex)
        if phi.shape[phi.ndim - self.grid.dim:] != self.grid.shape:
            raise ConfigError(f"phi shape {phi.shape} does not end with grid shape {self.grid.shape}")
        object.__setattr__(self, "phi", phi)
        n = self.grid.dim
        for name in ("center", "velocity"):
            val = tuple(float(x) for x in (getattr(self, name) or (0.0,) * n))
            if len(val) != n:
                raise ConfigError(f"frame {name} must have {n} components")
            object.__setattr__(self, name, val)

    # frame parameters
    @property
    def dilation(self) -> float:
        return math.cosh(2 * self.theta)

    @property
    def chirp(self) -> float:
        return math.tanh(2 * self.theta) / 2

    def frame_position(self, theta: float | None = None) -> np.ndarray:
        th = self.theta if theta is None else theta
        x0, v = np.array(self.center), np.array(self.velocity)
        return math.cosh(2 * th) * x0 + math.sinh(2 * th) * v

    def frame_momentum(self, theta: float | None = None) -> np.ndarray:
        th = self.theta if theta is None else theta
        x0, v = np.array(self.center), np.array(self.velocity)
        return math.sinh(2 * th) * x0 + math.cosh(2 * th) * v

    @property
    def batch_shape(self) -> tuple:
        return self.phi.shape[:self.phi.ndim - self.grid.dim]

    def with_phi(self, phi: np.ndarray, theta: float | None = None) -> "ComovingState":
        return replace(self, phi=phi, theta=self.theta if theta is None else theta)

    def norm(self) -> np.ndarray | float:
        nrm = np.sqrt(np.real(lattice_inner(self.phi, self.phi, self.grid)))
        return float(nrm) if nrm.ndim == 0 else nrm

    @classmethod
    def from_wavefunction(cls, psi: WaveFunction) -> "ComovingState":
        return cls(psi.grid, psi.values.copy())

    @classmethod
    def from_packet(cls, grid: GridSpec, spec: PacketSpec, aliasing_budget: float = 1e-10,
                    tail_budget: float = 1e-10) -> "ComovingState":
        """``exp(i v.x) Phi0(x - x0)`` with the boost carried by the frame.

        The lattice holds ``Phi0(x - x0)``, so ``|v|`` is not limited by the
        momentum cutoff.
        """
        rest = replace(spec, velocity=(0.0,) * len(spec.velocity))
        base = make_packet(grid, rest, aliasing_budget, tail_budget)
        return cls(grid, base.values, 0.0, (0.0,) * grid.dim, tuple(spec.velocity))

    def to_wavefunction(self, tail_budget: float = 1e-10) -> WaveFunction:
        """Samples of ``psi`` on the lattice dilated by ``cosh(2 theta)``."""
        if self.batch_shape:
            raise ConfigError("to_wavefunction needs an unbatched state")
        g = self.grid
        c, b = self.dilation, self.chirp
        a, k = self.frame_position(), self.frame_momentum()
        shift = a / c
        if np.any(np.abs(shift) > 0.5 * g.half_width * abs(g.scale)):
            raise GridOverflowError(f"frame offset {shift} too large to materialise on this lattice")
        K = g.momenta()
        phase = sum(K[i] * shift[i] for i in range(g.dim))
        shifted = fourier_multiply(self.phi, g, np.exp(-1j * phase))
        if edge_mass(shifted, g) > tail_budget:
            raise GridOverflowError("materialised state reaches the lattice edge")
        out = g.with_scale(g.scale * c)
        X = out.coords()
        Y2 = sum((X[i] - a[i]) ** 2 for i in range(g.dim))
        kx = sum(k[i] * X[i] for i in range(g.dim))
        vals = shifted * c ** (-g.dim / 2) * np.exp(1j * (b * Y2 + kx - 0.5 * float(k @ a)))
        return WaveFunction(out, vals)

    def moments(self) -> dict:
        """Physical moments ``<X_j>, <P_j>, <X_j^2>, <P_j^2>`` and ``<H0>``."""
        if self.batch_shape:
            raise ConfigError("moments need an unbatched state")
        g = self.grid
        c, b = self.dilation, self.chirp
        a, k = self.frame_position(), self.frame_momentum()
        dv = g.cell_volume
        phi = self.phi
        nrm2 = float(np.real(np.vdot(phi, phi)) * dv)
        Y = g.coords()
        K = g.momenta()
        spec = dft(phi, g)
        out = {"norm": math.sqrt(nrm2), "x": [], "p": [], "x2": [], "p2": []}
        for j in range(g.dim):
            y = float(np.real(np.vdot(phi, Y[j] * phi)) * dv) / nrm2
            y2 = float(np.real(np.vdot(phi, Y[j] ** 2 * phi)) * dv) / nrm2
            p = float(np.sum(K[j] * np.abs(spec) ** 2) * g.momentum_cell) / nrm2
            p2 = float(np.sum(K[j] ** 2 * np.abs(spec) ** 2) * g.momentum_cell) / nrm2
            pphi = dft(K[j] * spec, g, inverse=True)
            sym = 2 * float(np.real(np.vdot(Y[j] * phi, pphi)) * dv) / nrm2
            X1 = a[j] + c * y
            X2 = a[j] ** 2 + 2 * a[j] * c * y + c ** 2 * y2
            P1 = k[j] + p / c + 2 * b * c * y
            P2 = (k[j] ** 2 + 2 * k[j] * (p / c + 2 * b * c * y) + p2 / c ** 2
                  + 4 * b ** 2 * c ** 2 * y2 + 2 * b * sym)
            out["x"].append(X1)
            out["p"].append(P1)
            out["x2"].append(X2)
            out["p2"].append(P2)
        out["h0"] = sum(out["p2"]) - sum(out["x2"])
        out["scale"] = c * g.scale
        return out


def time_mesh(t0: float, t1: float, cfg: EvolveConfig) -> np.ndarray:
    """Nodes in ``theta`` from ``t0`` to ``t1`` (either direction).

    The mesh is built on the sorted interval and reversed for backward runs,
    so a forward run followed by a backward run retraces the same nodes.
    """
    if t0 == t1:
        return np.array([t0])
    lo, hi = min(t0, t1), max(t0, t1)
    breaks = [lo, hi]
    if cfg.fine_dt is not None and cfg.fine_window > 0:
        for p in (cfg.fine_center - cfg.fine_window, cfg.fine_center + cfg.fine_window):
            if lo < p < hi:
                breaks.append(p)
    breaks = sorted(breaks)
    nodes = [lo]
    for a, b in zip(breaks[:-1], breaks[1:]):
        mid = 0.5 * (a + b)
        fine = (cfg.fine_dt is not None and abs(mid - cfg.fine_center) <= cfg.fine_window)
        h = cfg.fine_dt if fine else cfg.dt
        m = max(1, int(math.ceil((b - a) / h - 1e-9)))
        nodes.extend(a + (b - a) * np.arange(1, m + 1) / m)
    nodes = np.array(nodes)
    nodes[-1] = hi
    return nodes if t1 > t0 else nodes[::-1].copy()


def _kinetic_increment(th0: float, th1: float) -> float:
    """``(tanh(2 th1) - tanh(2 th0)) / 2`` without cancellation."""
    return math.sinh(2 * (th1 - th0)) / (2 * math.cosh(2 * th0) * math.cosh(2 * th1))


class _Propagator:
    """Work arrays for one lattice; ``chi = pre-phase * phi`` is evolved internally."""

    def __init__(self, grid: GridSpec, potential: PotentialLike, cfg: EvolveConfig):
        self.grid = grid
        self.cfg = cfg
        n, N = grid.dim, grid.points
        pre, _ = _phases(N)
        self.pre = np.ones(grid.shape, dtype=complex)
        for ax in range(n):
            self.pre = self.pre * _broadcast(pre, ax, n)
        self.k2 = grid.momentum_squared()
        self.axes = tuple(range(-n, 0))
        self.points = grid.points_array()
        self.potential = potential
        self.zero = potential is None or (isinstance(potential, PotentialSpec) and potential.is_zero)

    def potential_values(self, theta: float, a: np.ndarray) -> np.ndarray:
        c = math.cosh(2 * theta)
        pts = c * self.points + a
        V = self.potential
        vals = eval_potential(V, pts) if isinstance(V, PotentialSpec) else np.asarray(V(pts), float)
        if self.cfg.mollify_radius > 0:
            # physical momenta are lattice momenta divided by c
            r = self.cfg.mollify_radius
            vals = np.real(fourier_multiply(vals, self.grid, np.exp(-0.5 * r ** 2 * self.k2 / c ** 2)))
        return vals

    def kinetic(self, chi: np.ndarray, dtau: float) -> np.ndarray:
        if dtau == 0:
            return chi
        spec = scipy.fft.fftn(chi, axes=self.axes)
        spec *= np.exp(-1j * dtau * self.k2)
        return scipy.fft.ifftn(spec, axes=self.axes)

    def to_chi(self, phi: np.ndarray) -> np.ndarray:
        return phi * self.pre

    def from_chi(self, chi: np.ndarray) -> np.ndarray:
        return chi * np.conj(self.pre)


def _as_state(psi) -> tuple[ComovingState, bool]:
    if isinstance(psi, ComovingState):
        return psi, False
    if isinstance(psi, WaveFunction):
        return ComovingState.from_wavefunction(psi), True
    raise ConfigError(f"cannot propagate object of type {type(psi).__name__}")


def _run(state: ComovingState, nodes: np.ndarray, potential: PotentialLike, cfg: EvolveConfig,
         observer: Optional[Callable[[ComovingState, int], None]] = None) -> ComovingState:
    if len(nodes) < 2:
        return state.with_phi(state.phi.copy())
    peak = float(np.max(np.abs(nodes)))
    if math.cosh(2 * min(peak, 350.0)) > cfg.max_scale:
        raise ConfigError(f"run reaches theta = {peak:g}, beyond max_scale {cfg.max_scale:g}")
    prop = _Propagator(state.grid, potential, cfg)
    chi = prop.to_chi(state.phi)
    steps = np.diff(nodes)
    weights = np.zeros(len(nodes))
    weights[:-1] += steps / 2
    weights[1:] += steps / 2

    def phase(i):
        if prop.zero:
            return
        a = state.frame_position(nodes[i])
        nonlocal chi
        chi = chi * np.exp(-1j * weights[i] * prop.potential_values(nodes[i], a))

    phase(0)
    for i in range(len(steps)):
        chi = prop.kinetic(chi, _kinetic_increment(nodes[i], nodes[i + 1]))
        phase(i + 1)
        last = i == len(steps) - 1
        if (i + 1) % cfg.check_every == 0 or last:
            phi = prop.from_chi(chi)
            _check(phi, state.grid, cfg.aliasing_budget, nodes[i + 1])
            if observer is not None:
                observer(state.with_phi(phi, float(nodes[i + 1])), i + 1)
    return state.with_phi(prop.from_chi(chi), float(nodes[-1]))


def _check(phi: np.ndarray, grid: GridSpec, budget: float, theta: float) -> None:
    flat = phi.reshape((-1,) + grid.shape)
    for member in flat:
        alias = spectral_mass_outside(member, grid)
        if alias > budget:
            raise AliasingError(f"spectral mass {alias:.3g} beyond 0.8 cutoff at theta={theta:.4g}; "
                                "refine the lattice")
        tail = edge_mass(member, grid)
        if tail > budget:
            raise GridOverflowError(f"edge mass {tail:.3g} at theta={theta:.4g}; enlarge the lattice")


def free_flow(psi, t: float):
    """Exact ``exp(-i t H0)`` in the comoving frame (only ``theta`` and ``phi`` change)."""
    state, plain = _as_state(psi)
    th1 = state.theta + t
    prop = _Propagator(state.grid, None, EvolveConfig())
    phi = prop.from_chi(prop.kinetic(prop.to_chi(state.phi), _kinetic_increment(state.theta, th1)))
    out = state.with_phi(phi, th1)
    return out.to_wavefunction() if plain else out


def full_step(psi, dt: float, potential: PotentialLike, cfg: EvolveConfig | None = None):
    """One Strang step ``e^{-i dt V/2} e^{-i dt H0} e^{-i dt V/2}`` (interaction picture)."""
    cfg = cfg or EvolveConfig(dt=abs(dt) or 1.0, horizon=max(abs(dt), 1.0))
    state, plain = _as_state(psi)
    out = _run(state, np.array([state.theta, state.theta + dt]), potential, cfg)
    return out.to_wavefunction() if plain else out


def evolve(psi, T: float, potential: PotentialLike, cfg: EvolveConfig,
           observer: Optional[Callable[[ComovingState, int], None]] = None):
    """``exp(-i T H) psi`` by Strang splitting on :func:`time_mesh` nodes.

    ``WaveFunction`` inputs are returned as ``WaveFunction`` on the dilated
    lattice; :class:`ComovingState` inputs stay in the frame.  ``observer``
    is called with the current state every ``cfg.check_every`` steps.
    """
    if abs(T) > cfg.horizon + 1e-12:
        raise ConfigError(f"|T| = {abs(T):g} exceeds the configured horizon {cfg.horizon:g}")
    state, plain = _as_state(psi)
    out = _run(state, time_mesh(state.theta, state.theta + T, cfg), potential, cfg, observer)
    return out.to_wavefunction() if plain else out


TRAJECTORY_FIELDS = ("t", "norm", "x", "p", "h0", "scale")


def trajectory_row(state: ComovingState, t0: float = 0.0) -> list:
    m = state.moments()
    return [state.theta - t0, m["norm"], *m["x"], *m["p"], m["h0"], m["scale"]]


def trajectory_header(dim: int) -> list:
    return (["t", "norm"] + [f"x{j}" for j in range(dim)] + [f"p{j}" for j in range(dim)]
            + ["h0", "scale_factor"])


def write_trajectory_csv(path, rows: Sequence[Sequence[float]], dim: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(dim))
        for row in rows:
            w.writerow(["%.17g" % x for x in row])
