"""Short-range potentials ``V = V_reg + V_sing``.

Regular parts are C1 with ``|d^b V| <= C <x>^{-eps-|b|}`` for ``|b| <= 1``;
singular parts are compactly supported and L^q integrable, e.g. the
Coulomb-like family ``c |x|^{-n/2 + eps_s}`` on ``|x| <= R``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import gamma

from .errors import ConfigError

REGULAR_KINDS = ("power", "gaussian", "custom")
SINGULAR_KINDS = ("coulomb", "bump")


@dataclass(frozen=True)
class RegularPart:
    """Regular part.

    ``power``: ``c <x>^{-decay}``; ``gaussian``: ``c exp(-|x|^2 / width^2)``;
    ``custom``: ``func(points)`` and ``grad(points)`` supplied by the caller,
    with ``decay`` the claimed exponent.
    """

    kind: str = "power"
    strength: float = 1.0
    decay: float = 1.0
    width: float = 1.0
    func: Optional[Callable] = field(default=None, compare=False)
    grad: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        errors = []
        if self.kind not in REGULAR_KINDS:
            errors.append(f"unknown regular kind {self.kind!r}")
        if not self.decay > 0:
            errors.append(f"regular decay must be positive (got {self.decay})")
        if not self.width > 0:
            errors.append(f"regular width must be positive (got {self.width})")
        if self.kind == "custom" and (self.func is None or self.grad is None):
            errors.append("custom regular part needs func and grad")
        if errors:
            raise ConfigError(errors)


@dataclass(frozen=True)
class SingularPart:
    """Compactly supported singular part.

    ``coulomb``: ``c |x|^{-n/2 + exponent}`` for ``|x| <= radius``;
    ``bump``: ``c exp(1 - 1/(1 - |x|^2/radius^2))`` (smooth, same support).
    """

    kind: str = "coulomb"
    strength: float = 1.0
    exponent: float = 0.25
    radius: float = 1.0

    def __post_init__(self):
        errors = []
        if self.kind not in SINGULAR_KINDS:
            errors.append(f"unknown singular kind {self.kind!r}")
        if self.kind == "coulomb" and not self.exponent > 0:
            errors.append(f"singular exponent must be positive (got {self.exponent})")
        if not self.radius > 0:
            errors.append(f"singular radius must be positive (got {self.radius})")
        if errors:
            raise ConfigError(errors)


@dataclass(frozen=True)
class PotentialSpec:
    regular: Optional[RegularPart] = None
    singular: Optional[SingularPart] = None

    @property
    def is_zero(self) -> bool:
        return ((self.regular is None or self.regular.strength == 0)
                and (self.singular is None or self.singular.strength == 0))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return eval_potential(self, points)

    def scaled(self, factor: float) -> "PotentialSpec":
        """Same families with every coupling multiplied by ``factor``."""
        from dataclasses import replace
        reg = None if self.regular is None else replace(
            self.regular, strength=self.regular.strength * factor)
        if reg is not None and reg.kind == "custom":
            f, g = reg.func, reg.grad
            reg = replace(reg, func=lambda p: factor * f(p), grad=lambda p: factor * g(p))
        sing = None if self.singular is None else replace(
            self.singular, strength=self.singular.strength * factor)
        return PotentialSpec(reg, sing)


def _r2(points: np.ndarray) -> np.ndarray:
    return np.sum(np.asarray(points, dtype=float) ** 2, axis=-1)


def eval_regular(spec: PotentialSpec, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    reg = spec.regular
    if reg is None:
        return np.zeros(points.shape[:-1])
    if reg.kind == "power":
        return reg.strength * (1.0 + _r2(points)) ** (-reg.decay / 2)
    if reg.kind == "gaussian":
        return reg.strength * np.exp(-_r2(points) / reg.width ** 2)
    return np.asarray(reg.func(points), dtype=float)


def grad_regular(spec: PotentialSpec, points: np.ndarray) -> np.ndarray:
    """Analytic gradient of the regular part, shape ``(..., n)``."""
    points = np.asarray(points, dtype=float)
    reg = spec.regular
    if reg is None:
        return np.zeros(points.shape)
    if reg.kind == "power":
        f = -reg.strength * reg.decay * (1.0 + _r2(points)) ** (-reg.decay / 2 - 1)
        return f[..., None] * points
    if reg.kind == "gaussian":
        f = -2.0 * reg.strength / reg.width ** 2 * np.exp(-_r2(points) / reg.width ** 2)
        return f[..., None] * points
    return np.asarray(reg.grad(points), dtype=float)


def radial_singular(sing: SingularPart, n: int, r: np.ndarray) -> np.ndarray:
    """Singular profile as a function of ``r = |x|`` (zero outside the support)."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r <= sing.radius
    if sing.kind == "coulomb":
        with np.errstate(divide="ignore"):
            out[inside] = sing.strength * r[inside] ** (-n / 2 + sing.exponent)
    else:
        inner = r < sing.radius
        out[inner] = sing.strength * np.exp(1.0 - 1.0 / (1.0 - (r[inner] / sing.radius) ** 2))
    return out


def eval_singular(spec: PotentialSpec, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    sing = spec.singular
    if sing is None:
        return np.zeros(points.shape[:-1])
    r = np.sqrt(_r2(points))
    if sing.kind == "coulomb" and sing.exponent < points.shape[-1] / 2 and np.any(r == 0):
        raise ConfigError("potential evaluated exactly at the singular point x = 0")
    return radial_singular(sing, points.shape[-1], r)


def eval_potential(spec: PotentialSpec, points: np.ndarray) -> np.ndarray:
    """``V(x)`` at ``points`` of shape ``(..., n)``."""
    return eval_regular(spec, points) + eval_singular(spec, points)


def unit_sphere_area(n: int) -> float:
    return 2 * np.pi ** (n / 2) / gamma(n / 2)


def required_q(n: int) -> float:
    """Integrability exponent for the singular class (2.5 stands in for any q > 2 at n = 4)."""
    if n < 1:
        raise ConfigError(f"dimension must be positive (got {n})")
    if n <= 3:
        return 2.0
    if n == 4:
        return 2.5
    return n / 2


def lq_norm_exact(sing: SingularPart, n: int, q: float) -> float:
    """Closed-form L^q norm of the Coulomb-like part (inf if not integrable)."""
    if sing.kind != "coulomb":
        raise ConfigError("closed-form L^q norm only for the coulomb family")
    beta = q * (sing.exponent - n / 2) + n
    if beta <= 0:
        return np.inf
    return float(abs(sing.strength) * (unit_sphere_area(n) * sing.radius ** beta / beta) ** (1 / q))


def discrete_lq_norm(sing: SingularPart, n: int, q: float, points: int) -> float:
    """L^q norm by point sampling on an offset lattice covering the support."""
    L = 1.05 * sing.radius
    h = 2 * L / points
    ax = (np.arange(points) - points / 2 + 0.5) * h
    r2 = sum(np.meshgrid(*([ax ** 2] * n), indexing="ij"))
    vals = radial_singular(sing, n, np.sqrt(r2))
    return float((np.sum(np.abs(vals) ** q) * h ** n) ** (1 / q))


def classify_q(spec: PotentialSpec, n: int, refinements: Sequence[int] = (128, 256, 512, 1024),
               cauchy_tol: float = 0.01) -> float:
    """Required ``q`` for dimension ``n``; checks the singular part is in ``L^q``.

    For ``n <= 2`` the discrete norm must also settle under grid refinement
    (relative change between the last two refinements below ``cauchy_tol``).
    """
    q = required_q(n)
    sing = spec.singular
    if sing is None or sing.strength == 0:
        return q
    if sing.kind == "coulomb" and not np.isfinite(lq_norm_exact(sing, n, q)):
        raise ConfigError(f"singular part is not in L^{q:g} for n = {n}")
    if n <= 2:
        norms = [discrete_lq_norm(sing, n, q, N) for N in refinements]
        change = abs(norms[-1] - norms[-2]) / norms[-1]
        if change > cauchy_tol:
            raise ConfigError(
                f"discrete L^{q:g} norm not converged under refinement (change {change:.3g})")
    return q


@dataclass(frozen=True)
class DecayReport:
    value_slope: float
    grad_slope: float
    declared: float
    ok: bool


def _loglog_slope(r: np.ndarray, f: np.ndarray) -> float:
    f = np.abs(f)
    if np.any(f <= 1e-300):
        return -np.inf
    return float(np.polyfit(np.log(np.sqrt(1 + r ** 2)), np.log(f), 1)[0])


def validate_regular_decay(spec: PotentialSpec, sample_radii: Sequence[float] | None = None,
                           n: int = 2, tol: float = 0.1, strict: bool = True) -> DecayReport:
    """Fit decay exponents of ``V_reg`` and ``|grad V_reg|`` along a ray.

    Passes when the fitted exponents are at least ``eps`` and ``eps + 1``
    within ``tol``.  Also cross-checks the analytic gradient against central
    differences.
    """
    if spec.regular is None:
        raise ConfigError("no regular part to validate")
    radii = np.asarray(sample_radii if sample_radii is not None else np.logspace(1, 3, 25))
    direction = np.ones(n) / np.sqrt(n)
    pts = radii[:, None] * direction
    vals = eval_regular(spec, pts)
    grads = grad_regular(spec, pts)
    h = 1e-5 * np.maximum(1.0, radii)[:, None]
    fd = (eval_regular(spec, pts + h * direction) - eval_regular(spec, pts - h * direction)) / (2 * h[:, 0])
    along = grads @ direction
    scale = np.maximum(np.abs(along), 1e-300)
    if np.any(np.abs(fd - along) > 1e-4 * scale + 1e-12 * np.abs(vals).max()):
        raise ConfigError("analytic gradient of the regular part disagrees with finite differences")
    vs = _loglog_slope(radii, vals)
    gs = _loglog_slope(radii, np.linalg.norm(grads, axis=-1))
    eps = spec.regular.decay
    ok = (-vs >= eps - tol) and (-gs >= eps + 1 - tol)
    report = DecayReport(vs, gs, eps, ok)
    if strict and not ok:
        raise ConfigError(
            f"regular part decays like <x>^{vs:.3g} (gradient {gs:.3g}); declared eps = {eps:g}")
    return report
