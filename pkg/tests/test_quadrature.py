import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from repsc.errors import ConfigError
from repsc.lattice import make_grid
from repsc.potentials import PotentialSpec, RegularPart, SingularPart
from repsc.quadrature import BandLimited, weighted_norm

Y0 = np.array([0.4, -0.3])


def _gauss(grid):
    X = grid.coords()
    return np.exp(-0.5 * sum((X[i] - Y0[i]) ** 2 for i in range(2)))


def _density(X, c, a):
    """Physical density of the lattice profile ``exp(-|y - Y0|^2 / 2)`` in frame ``(c, a)``."""
    y = (np.asarray(X) - a) / c
    return np.exp(-np.sum((y - Y0) ** 2)) / c ** 2


def _polar_oracle(weight2, R, c, a, e):
    """``int_{|X| < R} weight2(r) rho dX`` with ``r^(2e)`` as radial variable."""
    def inner(s, th):
        r = s ** (1 / (2 * e))
        X = r * np.array([math.cos(th), math.sin(th)])
        return weight2(r) * _density(X, c, a) * r ** (2 - 2 * e) / (2 * e)
    return integrate.dblquad(inner, 0, 2 * math.pi, 0, R ** (2 * e), epsabs=1e-12, epsrel=1e-10)[0]


class TestBandLimited:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1, 2]))
    def test_interpolates_nodes(self, seed, n):
        g = make_grid(n, 16, 3.0)
        rng = np.random.default_rng(seed)
        phi = rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)
        interp = BandLimited(phi, g)
        pts = g.points_array().reshape(-1, n)
        np.testing.assert_allclose(interp.scattered(pts).reshape(g.shape), phi, atol=1e-10)

    def test_off_grid_gaussian(self):
        g = make_grid(2, 64, 8.0)
        interp = BandLimited(_gauss(g), g)
        rng = np.random.default_rng(1)
        pts = rng.uniform(-4, 4, size=(50, 2))
        ref = np.exp(-0.5 * np.sum((pts - Y0) ** 2, axis=1))
        np.testing.assert_allclose(interp.scattered(pts), ref, atol=1e-12)

    def test_tensor_matches_scattered(self):
        g = make_grid(2, 32, 6.0)
        interp = BandLimited(_gauss(g), g)
        ax0, ax1 = np.linspace(-2, 2, 5), np.linspace(-1, 3, 4)
        P0, P1 = np.meshgrid(ax0, ax1, indexing="ij")
        flat = interp.scattered(np.stack([P0.ravel(), P1.ravel()], axis=1)).reshape(5, 4)
        np.testing.assert_allclose(interp.tensor([ax0, ax1]), flat, atol=1e-13)


class TestSingularNorm:
    @pytest.mark.parametrize("c,a", [(1.0, (0.0, 0.0)), (3.0, (0.5, 0.2)), (40.0, (-10.0, 3.0))])
    def test_coulomb_against_polar_oracle(self, c, a):
        g = make_grid(2, 64, 8.0)
        e, R = 0.25, 1.0
        V = PotentialSpec(singular=SingularPart("coulomb", 1.5, e, R))
        a = np.array(a)
        got = weighted_norm(_gauss(g), g, c, a, V) ** 2
        ref = _polar_oracle(lambda r: (1.5 * r ** (e - 1)) ** 2, R, c, a, e)
        assert got == pytest.approx(ref, rel=1e-6)

    def test_coulomb_with_regular_cross_term(self):
        g = make_grid(2, 64, 8.0)
        e, R, c, a = 0.25, 1.0, 2.0, np.array([0.3, 0.0])
        reg = RegularPart("gaussian", 0.7, width=2.0)
        V = PotentialSpec(reg, SingularPart("coulomb", 1.0, e, R))
        got = weighted_norm(_gauss(g), g, c, a, V) ** 2
        vreg = lambda r: 0.7 * math.exp(-r ** 2 / 4)  # radial here, since the regular part is radial
        inside = _polar_oracle(lambda r: (r ** (e - 1) + vreg(r)) ** 2 - vreg(r) ** 2, R, c, a, e)
        outside = integrate.dblquad(
            lambda y, x: (0.7 * math.exp(-(x * x + y * y) / 4)) ** 2 * _density((x, y), c, a),
            -20, 20, -20, 20, epsabs=1e-12)[0]
        assert got == pytest.approx(inside + outside, rel=1e-6)

    def test_grid_method_agrees_for_smooth_bump(self):
        g = make_grid(2, 256, 8.0)
        V = PotentialSpec(singular=SingularPart("bump", 2.0, radius=1.5))
        phi = _gauss(g)
        assert weighted_norm(phi, g, 1.0, np.zeros(2), V) == pytest.approx(
            weighted_norm(phi, g, 1.0, np.zeros(2), V, method="grid"), rel=1e-6)


class TestRegularNorm:
    def test_resolved_lattice_sum(self):
        g = make_grid(2, 128, 8.0)
        V = PotentialSpec(regular=RegularPart("gaussian", 1.0, width=1.0))
        got = weighted_norm(_gauss(g), g, 1.0, np.zeros(2), V, parts="regular") ** 2
        # Gaussian integral in closed form: exp(-2|X|^2) exp(-|X - Y0|^2)
        ref = math.pi / 3 * math.exp(-2 / 3 * float(Y0 @ Y0))
        assert got == pytest.approx(ref, rel=1e-10)

    def test_unresolved_core_uses_box(self):
        g = make_grid(2, 64, 8.0)
        c, a = 20.0, np.array([5.0, -2.0])
        V = PotentialSpec(regular=RegularPart("gaussian", 1.0, width=0.5))
        got = weighted_norm(_gauss(g), g, c, a, V, parts="regular") ** 2
        ref = integrate.dblquad(lambda y, x: math.exp(-2 * (x * x + y * y) / 0.25) * _density((x, y), c, a),
                                -4, 4, -4, 4, epsabs=1e-14)[0]
        assert got == pytest.approx(ref, rel=1e-6)

    def test_subtracted_constant(self):
        g = make_grid(2, 64, 8.0)
        V = PotentialSpec(regular=RegularPart("power", 1.0, 1.0))
        phi = _gauss(g)
        a = np.array([30.0, 0.0])
        plain = weighted_norm(phi, g, 1.0, a, V, parts="regular")
        sub = weighted_norm(phi, g, 1.0, a, V, subtract=float(V(a[None, :])[0]), parts="regular")
        assert sub < 0.05 * plain


def test_unknown_options():
    g = make_grid(2, 16, 4.0)
    V = PotentialSpec(singular=SingularPart())
    with pytest.raises(ConfigError):
        weighted_norm(_gauss(g), g, 1.0, np.zeros(2), V, parts="both")
    with pytest.raises(ConfigError):
        weighted_norm(_gauss(g), g, 1.0, np.zeros(2), V, method="montecarlo")
