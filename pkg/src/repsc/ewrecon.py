"""High-velocity limits of ``[S, p]`` and X-ray samples of the potential.

For packets ``Phi_v = exp(i v.x) Phi0`` the pairing
``|v| (i [S, p_e] Phi_v, Psi_v)`` tends to

    1/2 int dt { (V_s(x + vhat t) p_e Phi0, Psi0) - (V_s(x + vhat t) Phi0, p_e Psi0)
                 + (i (d_e V_reg)(x + vhat t) Phi0, Psi0) }

as ``|v| -> inf``.  :func:`limit_rhs_quadrature` evaluates the right-hand
side after exchanging the ``t`` integral with the ``x`` integral, so only line
integrals of ``V_s`` and ``d_e V_reg`` are needed (closed forms where
available).  No propagator is involved, which makes it an independent check of
:func:`commutator_pairing`.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad
from scipy.interpolate import CubicSpline
from scipy.special import gamma, hyp2f1

from .dynamics import ComovingState
from .errors import ConfigError, ConvergenceError
from .lattice import (GridSpec, PacketSpec, WaveFunction, apply_momentum, lattice_inner,
                      make_packet)
from .potentials import PotentialSpec, grad_regular
from .quadrature import BandLimited
from .scatter import ScatterConfig, scattering_apply


def _direction(j, n: int) -> np.ndarray:
    if np.ndim(j) == 0:
        if not 0 <= int(j) < n:
            raise ConfigError(f"axis {j} out of range for dim {n}")
        e = np.zeros(n)
        e[int(j)] = 1.0
        return e
    e = np.asarray(j, dtype=float)
    if e.shape != (n,) or not np.isclose(np.linalg.norm(e), 1.0):
        raise ConfigError("direction must be a unit vector of the grid dimension")
    return e


def perpendicular(vhat) -> np.ndarray:
    """Unit vector obtained by rotating ``vhat`` through +90 degrees (n = 2)."""
    vhat = np.asarray(vhat, dtype=float)
    if vhat.shape != (2,):
        raise ConfigError("perpendicular direction only defined for n = 2")
    return np.array([-vhat[1], vhat[0]])


def commutator_pairings(phis: Sequence[np.ndarray], psis: Sequence[np.ndarray], grid: GridSpec, j,
                        velocity, V: PotentialSpec, cfg: ScatterConfig | None = None) -> np.ndarray:
    """Batched ``|v| (i [S, p_e] Phi_v, Psi_v)`` for pairs of rest profiles.

    The ``v_e`` contributions cancel identically, leaving

        i |v| [ ((S - 1)(p_e Phi0)_v, Psi_v) - ((S - 1) Phi_v, (p_e Psi0)_v) ]

    which is evaluated in the comoving frame (origin ``0``, velocity ``v``)
    with one batched scattering run over all states.
    """
    cfg = cfg or ScatterConfig()
    v = np.asarray(velocity, dtype=float)
    speed = float(np.linalg.norm(v))
    phis = np.asarray(phis, dtype=complex)
    psis = np.asarray(psis, dtype=complex)
    if phis.shape != psis.shape or phis.shape[1:] != grid.shape:
        raise ConfigError("pairing states must share the grid shape")
    m = len(phis)
    if V.is_zero:
        return np.zeros(m, dtype=complex)
    e = _direction(j, grid.dim)
    pphi = apply_momentum(phis, grid, e)
    ppsi = apply_momentum(psis, grid, e)
    state = ComovingState(grid, np.concatenate([pphi, phis]), 0.0, None, tuple(v))
    res = scattering_apply(state, V, cfg)
    out = res.state.phi
    first = lattice_inner(out[:m] - pphi, psis, grid)
    second = lattice_inner(out[m:] - phis, ppsi, grid)
    return 1j * speed * (first - second)


def commutator_pairing(phi0: WaveFunction, psi0: WaveFunction, j, velocity, V: PotentialSpec,
                       cfg: ScatterConfig | None = None) -> complex:
    """``|v| (i [S, p_j] Phi_v, Psi_v)`` for rest profiles ``phi0``, ``psi0``."""
    if phi0.grid != psi0.grid:
        raise ConfigError("Phi0 and Psi0 must live on the same grid")
    return complex(commutator_pairings([phi0.values], [psi0.values], phi0.grid, j, velocity, V, cfg)[0])


def singular_line_integral(V: PotentialSpec, n: int, s: np.ndarray) -> np.ndarray:
    """``int V_s(x + vhat t) dt`` as a function of the distance ``s`` of the line from 0."""
    s = np.abs(np.asarray(s, dtype=float))
    sing = V.singular
    out = np.zeros_like(s)
    if sing is None:
        return out
    R = sing.radius
    inside = s < R
    T = np.sqrt(R ** 2 - s[inside] ** 2)
    if sing.kind == "coulomb":
        alpha = n / 2 - sing.exponent
        ss = s[inside]
        with np.errstate(divide="ignore", invalid="ignore"):
            out[inside] = sing.strength * 2 * T * ss ** (-alpha) * hyp2f1(0.5, alpha / 2, 1.5, -T ** 2 / ss ** 2)
        at0 = inside.copy()
        at0[inside] = ss == 0
        if np.any(at0):
            out[at0] = sing.strength * 2 * R ** (1 - alpha) / (1 - alpha)
    else:
        from .potentials import radial_singular
        for i in np.nonzero(inside)[0]:
            si = s[i]
            f = lambda t: float(radial_singular(sing, n, np.array([math.hypot(si, t)]))[0])
            out[i] = 2 * quad(f, 0, math.sqrt(R ** 2 - si ** 2), limit=200)[0]
    return out


def gradient_line_integral(V: PotentialSpec, points: np.ndarray, vhat, e) -> np.ndarray:
    """``G(x) = int (e . grad V_reg)(x + vhat t) dt`` at ``points`` of shape ``(..., n)``.

    Closed forms for the power and Gaussian families; a spline over the
    transverse coordinate (from adaptive quadrature) otherwise.  Only the
    component of ``e`` perpendicular to ``vhat`` contributes.
    """
    pts = np.asarray(points, dtype=float)
    reg = V.regular
    if reg is None:
        return np.zeros(pts.shape[:-1])
    vhat = np.asarray(vhat, dtype=float)
    e = np.asarray(e, dtype=float)
    xperp = pts - (pts @ vhat)[..., None] * vhat
    s2 = np.sum(xperp ** 2, axis=-1)
    proj = xperp @ e
    c = reg.strength
    if reg.kind == "power":
        eps = reg.decay
        k = math.sqrt(math.pi) * gamma((eps + 1) / 2) / gamma(eps / 2 + 1)
        return -c * eps * proj * (1 + s2) ** (-(eps + 1) / 2) * k
    if reg.kind == "gaussian":
        rho = reg.width
        return -2 * c * proj * math.sqrt(math.pi) / rho * np.exp(-s2 / rho ** 2)
    # custom: tabulate along the transverse line through the origin
    n = pts.shape[-1]
    if n != 2:
        raise ConfigError("custom gradient line integrals are implemented for n = 2")
    perp = perpendicular(vhat)
    smax = float(np.sqrt(s2.max())) + 1.0
    table_s = np.linspace(-smax, smax, 401)

    def G(sv):
        f = lambda t: float(grad_regular(V, (sv * perp + t * vhat)[None, :])[0] @ e)
        return quad(f, -np.inf, np.inf, limit=400)[0]

    spline = CubicSpline(table_s, [G(sv) for sv in table_s])
    return spline(xperp @ perp)


def limit_rhs_quadrature(phi0: WaveFunction, psi0: WaveFunction, j, vhat, V: PotentialSpec,
                         radial_nodes: int = 48, line_nodes: int = 160) -> complex:
    """Right-hand side of the high-velocity limit, by direct quadrature.

    The regular term is a lattice sum of the gradient line integral against
    ``Phi0 conj(Psi0)``.  The singular term integrates the line integral of
    ``V_s`` in the transverse coordinate ``s``; it has a cusp at ``s = 0`` and
    a square-root edge at ``s = R``, each removed by a change of variables.
    The band-limited packets are evaluated by trigonometric interpolation.
    """
    g = phi0.grid
    if psi0.grid != g:
        raise ConfigError("Phi0 and Psi0 must live on the same grid")
    n = g.dim
    vhat = np.asarray(vhat, dtype=float)
    vhat = vhat / np.linalg.norm(vhat)
    e = _direction(j, n)
    total = 0.0 + 0.0j
    if V.regular is not None:
        G = gradient_line_integral(V, g.points_array(), vhat, e)
        total += 0.5j * np.sum(G * phi0.values * np.conj(psi0.values)) * g.cell_volume
    if V.singular is not None and V.singular.strength != 0:
        if n != 2:
            raise ConfigError("singular line integrals are implemented for n = 2")
        pphi = apply_momentum(phi0.values, g, e)
        ppsi = apply_momentum(psi0.values, g, e)
        R = V.singular.radius
        x, wx = np.polynomial.legendre.leggauss(radial_nodes)
        # inner panel s = (R/2) u^4 smooths the cusp on the axis; outer panel
        # s = R cos(phi) absorbs the square-root edge of the support
        u, wu = (x + 1) / 2, wx / 2
        phi, wphi = (x + 1) * math.pi / 6, wx * math.pi / 6
        s = np.concatenate([0.5 * R * u ** 4, R * np.cos(phi)[::-1]])
        ws = np.concatenate([wu * 2 * R * u ** 3, (wphi * R * np.sin(phi))[::-1]])
        s = np.concatenate([-s[::-1], s])
        ws = np.concatenate([ws[::-1], ws])
        reach = g.half_width * abs(g.scale) * math.sqrt(2)
        t, wt = np.polynomial.legendre.leggauss(line_nodes)
        t = t * reach
        wt = wt * reach
        perp = perpendicular(vhat)
        pts = (s[:, None, None] * perp + t[None, :, None] * vhat).reshape(-1, 2)
        vals = [BandLimited(f, g).scattered(pts).reshape(len(s), len(t)) for f in (phi0.values, pphi, psi0.values, ppsi)]
        F = vals[1] * np.conj(vals[2]) - vals[0] * np.conj(vals[3])
        h = F @ wt
        XV = singular_line_integral(V, n, s)
        total += 0.5 * np.sum(ws * XV * h)
    return complex(total)


@dataclass(frozen=True)
class SweepRow:
    speed: float
    vhat: tuple
    j: tuple
    center_phi: tuple
    center_psi: tuple
    pairing: complex
    oracle: complex

    @property
    def abs_error(self) -> float:
        return abs(self.pairing - self.oracle)

    @property
    def rel_error(self) -> float:
        return self.abs_error / abs(self.oracle) if self.oracle != 0 else (0.0 if self.pairing == 0 else math.inf)


@dataclass(frozen=True)
class SweepResult:
    rows: tuple

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(sorted(self.rows, key=lambda r: r.speed)))

    @property
    def speeds(self) -> np.ndarray:
        return np.array([r.speed for r in self.rows])

    @property
    def abs_errors(self) -> np.ndarray:
        return np.array([r.abs_error for r in self.rows])

    @property
    def rel_errors(self) -> np.ndarray:
        return np.array([r.rel_error for r in self.rows])

    def tail_decreasing(self, k: int = 3) -> bool:
        tail = self.rel_errors[-k:]
        return bool(np.all(np.diff(tail) < 0)) or bool(np.all(self.abs_errors[-k:] == 0))

    def converged(self, tol: float = 0.05) -> bool:
        return self.tail_decreasing() and self.rel_errors[-1] < tol

    def write_csv(self, path) -> None:
        n = len(self.rows[0].vhat) if self.rows else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["v_mag"] + [f"vhat{i}" for i in range(n)] + [f"j{i}" for i in range(n)]
                       + ["re_pairing", "im_pairing", "re_oracle", "im_oracle", "abs_error"])
            for r in self.rows:
                w.writerow(["%.17g" % x for x in (r.speed, *r.vhat, *r.j, r.pairing.real, r.pairing.imag,
                                                  r.oracle.real, r.oracle.imag, r.abs_error)])

    def write_gnuplot(self, path) -> None:
        """Two columns: ``|v|`` and the relative error."""
        with open(path, "w") as fh:
            fh.write("# v_mag rel_error\n")
            for r in self.rows:
                fh.write("%.17g %.17g\n" % (r.speed, r.rel_error))


def resolve_jobs(jobs: Optional[int] = None) -> int:
    if jobs is None:
        jobs = int(os.environ.get("REPSC_JOBS", "1") or 1)
    if jobs < 1:
        raise ConfigError(f"jobs must be at least 1 (got {jobs})")
    return jobs


def _sweep_job(args):
    phi, psi, grid, e, velocity, V, cfg = args
    return complex(commutator_pairings([phi], [psi], grid, e, velocity, V, cfg)[0])


def velocity_sweep(phi0: WaveFunction, psi0: WaveFunction, j, vhat, V: PotentialSpec,
                   speeds: Sequence[float], cfg: ScatterConfig | None = None,
                   jobs: Optional[int] = None, center_phi=None, center_psi=None) -> SweepResult:
    """Pairings at each ``|v|`` in ``speeds`` next to the oracle value.

    Rows are independent; with ``jobs > 1`` they run in worker processes and
    are merged in speed order.
    """
    cfg = cfg or ScatterConfig()
    g = phi0.grid
    vhat = np.asarray(vhat, dtype=float)
    vhat = vhat / np.linalg.norm(vhat)
    e = _direction(j, g.dim)
    speeds = [float(s) for s in speeds]
    if any(s <= 0 for s in speeds):
        raise ConfigError("sweep speeds must be positive")
    oracle = limit_rhs_quadrature(phi0, psi0, e, vhat, V)
    tasks = [(phi0.values, psi0.values, g, e, tuple(s * vhat), V, cfg) for s in speeds]
    jobs = resolve_jobs(jobs)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
            values = list(ex.map(_sweep_job, tasks))
    else:
        values = [_sweep_job(t) for t in tasks]
    cphi = tuple(center_phi) if center_phi is not None else ()
    cpsi = tuple(center_psi) if center_psi is not None else ()
    rows = [SweepRow(s, tuple(vhat), tuple(e), cphi, cpsi, val, oracle) for s, val in zip(speeds, values)]
    return SweepResult(tuple(rows))


@dataclass(frozen=True)
class XRaySampleSet:
    """Estimated ``XV(vhat, y)`` at transverse offsets ``y`` along ``perpendicular(vhat)``."""

    vhat: tuple
    offsets: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    width: float
    smeared: np.ndarray = field(repr=False)
    max_imag_residue: float = 0.0


def _gaussian_deconvolve(offsets: np.ndarray, g: np.ndarray, sigma: float, reg: float) -> np.ndarray:
    """Undo convolution with a normalised Gaussian of std ``sigma`` (Tikhonov, ``reg``)."""
    h = offsets[1] - offsets[0]
    m = len(offsets)
    pad = 2 * m
    G = np.fft.rfft(g, pad)
    k = 2 * np.pi * np.fft.rfftfreq(pad, d=h)
    K = np.exp(-0.5 * (sigma * k) ** 2)
    return np.fft.irfft(G * K / (K ** 2 + reg), pad)[:m]


def extract_xray_samples(V: PotentialSpec, vhat, offsets: Sequence[float], width: float, speed: float,
                         grid: GridSpec, cfg: ScatterConfig | None = None, deconvolve: bool = True,
                         reg: float = 1e-4, max_feature_ratio: float = 1.0) -> XRaySampleSet:
    """X-ray samples of a smooth ``V`` from pairings at a single large ``|v|``.

    Gaussian packets of width parameter ``width`` are centred at ``y e``
    (``e`` perpendicular to ``vhat``) and paired with themselves along ``e``.
    In the limit the pairing equals ``(i/2) d/dy (XV * rho)(y)`` where ``rho``
    is the transverse packet density, so the samples are integrated in ``y``
    (offsets must start outside the support of ``XV``) and optionally
    deconvolved.
    """
    if V.singular is not None and V.singular.strength != 0:
        raise ConfigError("X-ray extraction requires a potential without singular part")
    if grid.dim != 2:
        raise ConfigError("X-ray extraction is implemented for n = 2")
    offsets = np.asarray(offsets, dtype=float)
    if offsets.ndim != 1 or len(offsets) < 4 or not np.allclose(np.diff(offsets), offsets[1] - offsets[0]):
        raise ConfigError("offsets must be a uniform list of at least four values")
    sigma = 1 / (math.sqrt(2) * width)
    if V.regular is not None and V.regular.kind == "gaussian" and sigma > max_feature_ratio * V.regular.width:
        raise ConfigError(f"packet spread {sigma:.3g} exceeds the potential feature scale {V.regular.width:g}")
    vhat = np.asarray(vhat, dtype=float)
    vhat = vhat / np.linalg.norm(vhat)
    e = perpendicular(vhat)
    packets = [make_packet(grid, PacketSpec(tuple(y * e), (0.0, 0.0), width)).values for y in offsets]
    vals = commutator_pairings(packets, packets, grid, e, speed * vhat, V, cfg)
    deriv = -2j * vals
    residue = float(np.max(np.abs(deriv.imag))) / max(1e-300, float(np.max(np.abs(deriv.real))))
    smeared = cumulative_trapezoid(deriv.real, offsets, initial=0.0)
    est = _gaussian_deconvolve(offsets, smeared, sigma, reg) if deconvolve else smeared
    return XRaySampleSet(tuple(vhat), offsets, est, width, smeared, residue)
