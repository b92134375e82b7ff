"""Uniform lattices, wavefunctions and the unitary discrete Fourier transform.

Position samples sit on a half-offset lattice ``x_j = (j - N/2 + 1/2) dx`` so
that no sample ever coincides with the origin.  The momentum lattice carries
the same offset.  Physical coordinates are ``scale * x``; a dilation therefore
only rewrites ``GridSpec.scale`` and never resamples the values.

Inner products are linear in the first slot and antilinear in the second,
``(f, g) = sum f conj(g) dV``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.fft

from .errors import AliasingError, ConfigError, GridOverflowError

SNAPSHOT_MAGIC = "REPSC1"


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Cartesian lattice of ``points**dim`` samples on ``[-L, L]^dim``.

    Parameters
    ----------
    dim : int
        Spatial dimension (1 or 2 at runtime).
    points : int
        Samples per axis, a power of two and at least 8.
    half_width : float
        Lattice half width ``L``.
    scale : float
        Physical coordinate = ``scale * lattice coordinate``.  Negative values
        encode a reflection (produced by dilations with negative argument).
    """

    dim: int
    points: int
    half_width: float
    scale: float = 1.0

    def __post_init__(self):
        errors = []
        if self.dim not in (1, 2, 3):
            errors.append(f"dim must be 1 or 2 (got {self.dim})")
        if not (isinstance(self.points, (int, np.integer)) and self.points >= 8
                and _is_power_of_two(int(self.points))):
            errors.append(f"points must be a power of two >= 8 (got {self.points})")
        if not self.half_width > 0:
            errors.append(f"half_width must be positive (got {self.half_width})")
        if not (np.isfinite(self.scale) and self.scale != 0):
            errors.append(f"scale must be finite and nonzero (got {self.scale})")
        if errors:
            raise ConfigError(errors)

    @property
    def shape(self) -> tuple:
        return (self.points,) * self.dim

    @property
    def spacing(self) -> float:
        """Lattice spacing ``2L/N`` (unscaled)."""
        return 2.0 * self.half_width / self.points

    @property
    def physical_spacing(self) -> float:
        return abs(self.scale) * self.spacing

    @property
    def cell_volume(self) -> float:
        return self.physical_spacing ** self.dim

    @property
    def momentum_spacing(self) -> float:
        """Signed physical momentum spacing ``pi / (s L)``."""
        return np.pi / (self.scale * self.half_width)

    @property
    def momentum_cell(self) -> float:
        return abs(self.momentum_spacing) ** self.dim

    @property
    def cutoff(self) -> float:
        """Momentum cutoff ``pi N / (2 |s| L)``."""
        return np.pi * self.points / (2.0 * abs(self.scale) * self.half_width)

    def axis(self) -> np.ndarray:
        """Lattice coordinates along one axis (half-offset, unscaled)."""
        j = np.arange(self.points)
        return (j - self.points / 2 + 0.5) * self.spacing

    def physical_axis(self) -> np.ndarray:
        return self.scale * self.axis()

    def momentum_axis(self) -> np.ndarray:
        m = np.arange(self.points)
        return (m - self.points / 2 + 0.5) * self.momentum_spacing

    def coords(self) -> tuple:
        """Physical coordinate arrays, one per axis (``indexing='ij'``)."""
        ax = self.physical_axis()
        return tuple(np.meshgrid(*([ax] * self.dim), indexing="ij"))

    def points_array(self) -> np.ndarray:
        """Physical coordinates stacked on a trailing axis, shape ``(*shape, dim)``."""
        return np.stack(self.coords(), axis=-1)

    def momenta(self) -> tuple:
        ax = self.momentum_axis()
        return tuple(np.meshgrid(*([ax] * self.dim), indexing="ij"))

    def momentum_squared(self) -> np.ndarray:
        return _k2(self.points, self.dim, float(self.momentum_spacing) ** 2)

    def dual(self) -> "GridSpec":
        """Grid whose physical points are this grid's momenta."""
        s = np.pi * self.points / (2.0 * self.scale * self.half_width ** 2)
        return replace(self, scale=s)

    def with_scale(self, scale: float) -> "GridSpec":
        return replace(self, scale=scale)

    def same_lattice(self, other: "GridSpec") -> bool:
        return (self.dim, self.points, self.half_width) == (
            other.dim, other.points, other.half_width)


def make_grid(n: int, N: int, L: float) -> GridSpec:
    """Grid with unit scale factor; rejects invalid dimension, size or width."""
    if n not in (1, 2):
        raise ConfigError(f"dim must be 1 or 2 (got {n})")
    return GridSpec(int(n), int(N), float(L), 1.0)


@functools.lru_cache(maxsize=64)
def _phases(N: int):
    c = N / 2 - 0.5
    idx = np.arange(N)
    pre = np.exp(2j * np.pi * c * idx / N)
    post = np.exp(2j * np.pi * c * idx / N - 2j * np.pi * c * c / N)
    return pre, post


@functools.lru_cache(maxsize=32)
def _k2(N: int, dim: int, dk2: float) -> np.ndarray:
    m = (np.arange(N) - N / 2 + 0.5) ** 2 * dk2
    out = np.zeros((N,) * dim)
    for ax in range(dim):
        shape = [1] * dim
        shape[ax] = N
        out = out + m.reshape(shape)
    out.setflags(write=False)
    return out


def _broadcast(vec: np.ndarray, ax: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[ax] = vec.size
    return vec.reshape(shape)


def dft(values: np.ndarray, grid: GridSpec, inverse: bool = False) -> np.ndarray:
    """Unitary centred DFT over the trailing ``grid.dim`` axes.

    ``forward``: ``(2 pi)^{-n/2} sum_j exp(-i k_m x_j) f_j dx`` on physical
    coordinates; ``inverse`` is the adjoint with the dual grid's measure.
    Leading axes are treated as a batch.
    """
    values = np.asarray(values, dtype=complex)
    N, n = grid.points, grid.dim
    pre, post = _phases(N)
    axes = tuple(range(values.ndim - n, values.ndim))
    out = values
    if not inverse:
        for ax in axes:
            out = out * _broadcast(pre, ax, out.ndim)
        out = scipy.fft.fftn(out, axes=axes)
        for ax in axes:
            out = out * _broadcast(post, ax, out.ndim)
        return out * (grid.physical_spacing / np.sqrt(2 * np.pi)) ** n
    for ax in axes:
        out = out * _broadcast(post.conj(), ax, out.ndim)
    out = scipy.fft.ifftn(out, axes=axes)
    for ax in axes:
        out = out * _broadcast(pre.conj(), ax, out.ndim)
    # values live on the dual grid: its spacing is the momentum spacing here
    return out * (N * abs(grid.momentum_spacing) / np.sqrt(2 * np.pi)) ** n


def fourier_multiply(values: np.ndarray, grid: GridSpec, symbol: np.ndarray) -> np.ndarray:
    """Apply the Fourier multiplier ``symbol(k)`` (sampled on the momentum lattice)."""
    return dft(dft(values, grid) * symbol, grid, inverse=True)


@dataclass(frozen=True, eq=False)
class WaveFunction:
    """Complex samples ``psi(scale * x_j)`` on a :class:`GridSpec`."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != self.grid.shape:
            raise ConfigError(
                f"values shape {vals.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", vals)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell_volume))

    def normalize(self) -> "WaveFunction":
        return WaveFunction(self.grid, self.values / self.norm())

    def with_values(self, values: np.ndarray) -> "WaveFunction":
        return WaveFunction(self.grid, values)


def fourier(psi: WaveFunction, direction: str = "forward") -> WaveFunction:
    """Unitary Fourier transform; the result lives on ``psi.grid.dual()``.

    ``inverse`` expects momentum-space input (as produced by ``forward``) and
    returns position samples on the dual of the dual, i.e. the original grid.
    """
    if direction not in ("forward", "inverse"):
        raise ValueError(f"direction must be 'forward' or 'inverse', not {direction!r}")
    if direction == "forward":
        return WaveFunction(psi.grid.dual(), dft(psi.values, psi.grid))
    target = psi.grid.dual()
    # dft(inverse=True) expects the position grid it maps back to
    return WaveFunction(target, dft(psi.values, target, inverse=True))


def inner_product(phi: WaveFunction, psi: WaveFunction) -> complex:
    """``(phi, psi) = int phi conj(psi)``; linear in ``phi``."""
    if phi.grid != psi.grid:
        raise ConfigError("inner product of wavefunctions on different grids")
    return complex(np.vdot(psi.values, phi.values) * phi.grid.cell_volume)


def lattice_inner(f: np.ndarray, g: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Batched ``(f, g)`` over the trailing grid axes."""
    axes = tuple(range(-grid.dim, 0))
    return np.sum(f * np.conj(g), axis=axes) * grid.cell_volume


def apply_momentum(values: np.ndarray, grid: GridSpec, axis: int | Sequence[float]) -> np.ndarray:
    """Spectral ``p_j = -i d/dx_j``; ``axis`` may be an index or a direction vector."""
    ks = grid.momenta()
    if np.ndim(axis) == 0:
        if not 0 <= int(axis) < grid.dim:
            raise ConfigError(f"axis {axis} out of range for dim {grid.dim}")
        symbol = ks[int(axis)]
    else:
        e = np.asarray(axis, dtype=float)
        symbol = sum(e[i] * ks[i] for i in range(grid.dim))
    return fourier_multiply(values, grid, symbol)


def spectral_mass_outside(values: np.ndarray, grid: GridSpec, fraction: float = 0.8) -> float:
    """Relative spectral mass with ``max_j |k_j| > fraction * cutoff``."""
    spec = np.abs(dft(values, grid)) ** 2
    k = np.abs(grid.momentum_axis())
    outside = np.zeros(grid.shape, dtype=bool)
    for ax in range(grid.dim):
        outside |= _broadcast(k > fraction * grid.cutoff, ax, grid.dim)
    total = spec.sum()
    return float(spec[outside].sum() / total) if total > 0 else 0.0


def edge_mass(values: np.ndarray, grid: GridSpec, fraction: float = 0.9) -> float:
    """Relative position mass with ``max_j |x_j| > fraction * L`` (lattice units)."""
    dens = np.abs(values) ** 2
    x = np.abs(grid.axis())
    outside = np.zeros(grid.shape, dtype=bool)
    for ax in range(grid.dim):
        outside |= _broadcast(x > fraction * grid.half_width, ax, grid.dim)
    total = dens.sum()
    return float(dens[outside].sum() / total) if total > 0 else 0.0


@dataclass(frozen=True)
class PacketSpec:
    """Wave packet ``exp(i v.x) Phi0(x - x0)`` with momentum profile width ``width``.

    ``profile='gaussian'`` uses ``F Phi0 ~ exp(-|xi|^2 / (2 w^2))``.
    ``profile='compact'`` uses the C0-infinity bump
    ``exp(-order / (1 - |xi|^2 / R^2))`` with ``R = support * w``.
    """

    center: tuple = (0.0,)
    velocity: tuple = (0.0,)
    width: float = 1.0
    profile: str = "gaussian"
    support: float = 4.0
    order: float = 8.0

    def __post_init__(self):
        errors = []
        if len(self.center) != len(self.velocity):
            errors.append("packet center and velocity dimensions differ")
        if not self.width > 0:
            errors.append(f"packet width must be positive (got {self.width})")
        if self.profile not in ("gaussian", "compact"):
            errors.append(f"unknown packet profile {self.profile!r}")
        if not (self.support > 0 and self.order > 0):
            errors.append("bump support and order must be positive")
        if errors:
            raise ConfigError(errors)


def _bump(r: np.ndarray, order: float) -> np.ndarray:
    out = np.zeros_like(r)
    inside = r < 1.0
    out[inside] = np.exp(-order / (1.0 - r[inside] ** 2))
    return out


def packet_values(grid: GridSpec, spec: PacketSpec) -> np.ndarray:
    """Unnormalised packet samples (no validity checks)."""
    x0 = np.asarray(spec.center, dtype=float)
    v = np.asarray(spec.velocity, dtype=float)
    X = grid.coords()
    if spec.profile == "gaussian":
        r2 = sum((X[i] - x0[i]) ** 2 for i in range(grid.dim))
        phase = sum(v[i] * X[i] for i in range(grid.dim))
        return np.exp(-0.5 * spec.width ** 2 * r2 + 1j * phase)
    K = grid.momenta()
    r = np.sqrt(sum((K[i] - v[i]) ** 2 for i in range(grid.dim))) / (spec.support * spec.width)
    shift = sum(K[i] * x0[i] for i in range(grid.dim))
    return dft(_bump(r, spec.order) * np.exp(-1j * shift), grid, inverse=True)


def make_packet(grid: GridSpec, spec: PacketSpec, aliasing_budget: float = 1e-10,
                tail_budget: float = 1e-10) -> WaveFunction:
    """Normalised packet; rejects packets that alias or leave the window."""
    if len(spec.center) != grid.dim:
        raise ConfigError(f"packet has dimension {len(spec.center)}, grid has {grid.dim}")
    vmax = float(np.max(np.abs(spec.velocity))) if grid.dim else 0.0
    if vmax > 0.8 * grid.cutoff:
        raise AliasingError(
            f"velocity {vmax:g} exceeds 0.8 x momentum cutoff {0.8 * grid.cutoff:g}")
    vals = packet_values(grid, spec)
    tail = edge_mass(vals, grid)
    if tail > tail_budget:
        raise GridOverflowError(f"packet too wide for grid: edge mass {tail:.3g}")
    alias = spectral_mass_outside(vals, grid)
    if alias > aliasing_budget:
        raise AliasingError(f"packet spectral mass beyond 0.8 cutoff is {alias:.3g}")
    return WaveFunction(grid, vals).normalize()


_MOMENT_KINDS = ("x", "p", "x2", "p2")


def expectation(psi: WaveFunction, which: str, axis: int = 0) -> complex:
    """``(A psi, psi)`` for ``A`` in ``x, p, x2, p2`` along ``axis``."""
    if which not in _MOMENT_KINDS:
        raise ConfigError(f"unknown observable {which!r}")
    if not 0 <= axis < psi.grid.dim:
        raise ConfigError(f"axis {axis} out of range for dim {psi.grid.dim}")
    g = psi.grid
    if which in ("x", "x2"):
        X = g.coords()[axis]
        a_psi = psi.values * (X if which == "x" else X ** 2)
    else:
        K = g.momenta()[axis]
        a_psi = fourier_multiply(psi.values, g, K if which == "p" else K ** 2)
    return complex(np.vdot(psi.values, a_psi) * g.cell_volume)


def observable_moment(psi: WaveFunction, which: str, axis: int = 0,
                      residue_tol: float = 1e-10) -> float:
    """Real expectation value; raises if the imaginary residue is too large."""
    val = expectation(psi, which, axis)
    if abs(val.imag) > residue_tol * max(1.0, abs(val.real)):
        raise AliasingError(f"<{which}> has imaginary residue {val.imag:.3g}")
    return val.real


def write_snapshot(path, psi: WaveFunction) -> None:
    """Header ``REPSC1 n N L s`` then little-endian float64 (re, im) pairs."""
    g = psi.grid
    header = f"{SNAPSHOT_MAGIC} {g.dim} {g.points} {g.half_width!r} {g.scale!r}\n"
    data = np.empty(psi.values.size * 2, dtype="<f8")
    flat = np.ascontiguousarray(psi.values).ravel()
    data[0::2] = flat.real
    data[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(data.tobytes())


def read_snapshot(path) -> WaveFunction:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    parts = raw[:nl].decode("ascii").split()
    if len(parts) != 5 or parts[0] != SNAPSHOT_MAGIC:
        raise ConfigError(f"{path}: not a {SNAPSHOT_MAGIC} snapshot")
    grid = GridSpec(int(parts[1]), int(parts[2]), float(parts[3]), float(parts[4]))
    data = np.frombuffer(raw[nl + 1:], dtype="<f8")
    if data.size != 2 * grid.points ** grid.dim:
        raise ConfigError(f"{path}: payload size does not match header")
    vals = (data[0::2] + 1j * data[1::2]).reshape(grid.shape)
    return WaveFunction(grid, vals)


__all__ = [
    "GridSpec", "WaveFunction", "PacketSpec", "make_grid", "fourier", "dft",
    "fourier_multiply", "inner_product", "lattice_inner", "apply_momentum",
    "make_packet", "packet_values", "expectation", "observable_moment",
    "spectral_mass_outside", "edge_mass", "write_snapshot", "read_snapshot",
]
