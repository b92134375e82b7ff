"""Potential-weighted norms ``|| W psi ||`` for comoving states.

When the frame dilation ``c`` makes the lattice spacing coarse compared with
the features of ``V`` (or when ``V`` is singular), plain lattice sums are
useless.  The density ``|psi|^2`` is band-limited on the lattice, so it can be
evaluated anywhere by trigonometric interpolation; the potential is then
integrated with nodes adapted to it: Gauss-Jacobi in the radius around the
singular point and Gauss-Legendre boxes for unresolved regular cores.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import ConfigError
from .lattice import GridSpec, dft
from .potentials import PotentialSpec, eval_regular, radial_singular


class BandLimited:
    """Trigonometric interpolant of lattice samples ``phi`` (physical coordinates)."""

    def __init__(self, phi: np.ndarray, grid: GridSpec):
        self.grid = grid
        n = grid.dim
        self.k = grid.momentum_axis()
        self.coef = dft(phi, grid) * (abs(grid.momentum_spacing) / math.sqrt(2 * math.pi)) ** n
        self.half = grid.half_width * abs(grid.scale)

    def _basis(self, y: np.ndarray) -> np.ndarray:
        # geometric recurrence along the uniform momentum axis (much cheaper than exp)
        E = np.empty((len(y), len(self.k)), dtype=complex)
        E[:, 0] = np.exp(1j * y * self.k[0])
        E[:, 1:] = np.exp(1j * y * (self.k[1] - self.k[0]))[:, None]
        E = np.cumprod(E, axis=1)
        E[np.abs(y) > self.half] = 0.0
        return E

    def tensor(self, axes: list[np.ndarray]) -> np.ndarray:
        """Values on the tensor product of per-axis coordinates."""
        if self.grid.dim == 1:
            return self._basis(axes[0]) @ self.coef
        return self._basis(axes[0]) @ self.coef @ self._basis(axes[1]).T

    def scattered(self, pts: np.ndarray) -> np.ndarray:
        """Values at scattered points of shape ``(M, n)``."""
        if self.grid.dim == 1:
            return self._basis(pts[:, 0]) @ self.coef
        return np.sum((self._basis(pts[:, 0]) @ self.coef) * self._basis(pts[:, 1]), axis=1)


@lru_cache(maxsize=64)
def _jacobi(m: int, beta: float):
    x, w = roots_jacobi(m, 0.0, beta)
    return x, w


@lru_cache(maxsize=16)
def _legendre(m: int):
    return roots_legendre(m)


def _directions(n: int, m: int) -> tuple[np.ndarray, float]:
    if n == 1:
        return np.array([[1.0], [-1.0]]), 1.0
    if n == 2:
        ang = 2 * math.pi * (np.arange(m) + 0.5) / m
        return np.stack([np.cos(ang), np.sin(ang)], axis=1), 2 * math.pi / m
    raise ConfigError("adapted quadrature supports n = 1 and 2")


def regular_scale(spec: PotentialSpec) -> float:
    reg = spec.regular
    if reg is None:
        return np.inf
    return reg.width if reg.kind == "gaussian" else 1.0


def _density(interp: BandLimited, X: np.ndarray, c: float, a: np.ndarray) -> np.ndarray:
    n = X.shape[-1]
    return np.abs(interp.scattered((X - a) / c)) ** 2 / c ** n


def singular_contribution(interp: BandLimited, c: float, a: np.ndarray, spec: PotentialSpec,
                          subtract: float = 0.0, include_regular: bool = True,
                          radial_nodes: int = 48, angular_nodes: int = 64) -> float:
    """``int_{|X| <= R} (|W_reg + V_s|^2 - |W_reg|^2) rho dX`` by polar quadrature.

    ``W_reg = V_reg - subtract`` (or zero when ``include_regular`` is false).
    Radial weights absorb the power singularity of the Coulomb-like family.
    """
    sing = spec.singular
    if sing is None or sing.strength == 0:
        return 0.0
    n = interp.grid.dim
    R = sing.radius
    # preimage of the support on the lattice: centre -a/c, radius R/c
    if np.any(np.abs(a) / c - R / c > interp.half):
        return 0.0
    dirs, dw = _directions(n, angular_nodes)

    def radial_sum(beta, fn):
        x, w = _jacobi(radial_nodes, beta)
        r = R * (1 + x) / 2
        pts = (r[:, None, None] * dirs[None, :, :]).reshape(-1, n)
        vals = fn(r, pts).reshape(len(r), len(dirs))
        return (R / 2) ** (beta + 1) * float(np.sum(w[:, None] * vals) * dw)

    def wreg(pts):
        if not include_regular:
            return 0.0
        return eval_regular(spec, pts) - subtract

    total = 0.0
    if sing.kind == "coulomb":
        e = sing.exponent
        cs = sing.strength

        def sq(r, pts):
            return cs ** 2 * _density(interp, pts, c, a)

        total += radial_sum(2 * e - 1, sq)
        if include_regular and (spec.regular is not None or subtract != 0):
            def cross(r, pts):
                return 2 * cs * wreg(pts) * _density(interp, pts, c, a)

            total += radial_sum(n / 2 - 1 + e, cross)
    else:
        def smooth(r, pts):
            vs = radial_singular(sing, n, np.repeat(r, len(dirs)))
            return (2 * wreg(pts) * vs + vs ** 2) * _density(interp, pts, c, a)

        total += radial_sum(n - 1, smooth)
    return total


def regular_contribution(phi: np.ndarray, grid: GridSpec, interp: BandLimited | None, c: float,
                         a: np.ndarray, spec: PotentialSpec, subtract: float = 0.0,
                         box_nodes: int = 64) -> float:
    """``int |V_reg - subtract|^2 rho dX``: lattice sum, with a Gauss-Legendre box near
    the origin when the dilated lattice does not resolve the regular core."""
    n = grid.dim
    pts = c * grid.points_array() + a
    w2 = np.abs(eval_regular(spec, pts) - subtract) ** 2
    dens = np.abs(phi) ** 2
    h_phys = c * abs(grid.scale) * grid.spacing
    ell = regular_scale(spec)
    if spec.regular is None or h_phys <= ell / 4:
        return float(np.sum(w2 * dens) * grid.cell_volume)
    reach = c * grid.half_width * abs(grid.scale)
    B = max(8 * ell, 8 * h_phys) if spec.regular.kind != "gaussian" else 6 * ell
    if np.any(np.abs(a) - reach > B):
        return float(np.sum(w2 * dens) * grid.cell_volume)
    inside = np.all(np.abs(pts) <= B, axis=-1)
    outer = float(np.sum((w2 * dens)[~inside]) * grid.cell_volume)
    m = min(256, box_nodes * max(1, int(math.ceil(B / (8 * ell)))))
    x, w = _legendre(m)
    X = B * x
    if interp is None:
        interp = BandLimited(phi, grid)
    if n == 1:
        rho = np.abs(interp.tensor([(X - a[0]) / c])) ** 2 / c
        Vb = np.abs(eval_regular(spec, X[:, None]) - subtract) ** 2
        box = float(np.sum(w * Vb * rho) * B)
    else:
        rho = np.abs(interp.tensor([(X - a[0]) / c, (X - a[1]) / c])) ** 2 / c ** 2
        PX, PY = np.meshgrid(X, X, indexing="ij")
        Vb = np.abs(eval_regular(spec, np.stack([PX, PY], axis=-1)) - subtract) ** 2
        box = float(np.einsum("i,j,ij->", w, w, Vb * rho) * B * B)
    return outer + box


def weighted_norm(phi: np.ndarray, grid: GridSpec, c: float, a, spec: PotentialSpec,
                  subtract: float = 0.0, parts: str = "all", method: str = "auto") -> float:
    """``|| W psi ||`` for ``psi`` with lattice profile ``phi`` in a frame ``(c, a)``.

    ``W = (V_reg - subtract) + V_sing`` restricted to ``parts`` in
    ``{"all", "regular", "singular"}``.  ``method="grid"`` forces plain
    lattice sums (the reference used for checks at ``c = 1``).
    """
    if parts not in ("all", "regular", "singular"):
        raise ConfigError(f"unknown potential part {parts!r}")
    a = np.asarray(a, dtype=float)
    if method == "grid":
        pts = c * grid.points_array() + a
        W = np.zeros(grid.shape)
        if parts in ("all", "regular"):
            W = W + eval_regular(spec, pts) - subtract
        if parts in ("all", "singular") and spec.singular is not None:
            W = W + radial_singular(spec.singular, grid.dim, np.linalg.norm(pts, axis=-1))
        return float(np.sqrt(np.sum(np.abs(W * phi) ** 2) * grid.cell_volume))
    if method != "auto":
        raise ConfigError(f"unknown quadrature method {method!r}")
    interp = BandLimited(phi, grid)
    total = 0.0
    if parts in ("all", "regular") and (spec.regular is not None or subtract != 0):
        total += regular_contribution(phi, grid, interp, c, a, spec, subtract)
    if parts in ("all", "singular"):
        total += singular_contribution(interp, c, a, spec, subtract, include_regular=(parts == "all"))
    return math.sqrt(max(total, 0.0))
