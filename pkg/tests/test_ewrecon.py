import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from repsc.errors import ConfigError
from repsc.ewrecon import (SweepResult, SweepRow, _gaussian_deconvolve, commutator_pairing,
                           extract_xray_samples, gradient_line_integral, limit_rhs_quadrature,
                           perpendicular, resolve_jobs, singular_line_integral, velocity_sweep)
from repsc.lattice import PacketSpec, make_grid, make_packet
from repsc.potentials import PotentialSpec, RegularPart, SingularPart, grad_regular, radial_singular
from repsc.scatter import ScatterConfig

GAUSS_V = PotentialSpec(regular=RegularPart("gaussian", 1.0, width=1.0))
COULOMB = PotentialSpec(singular=SingularPart("coulomb", 1.0, 0.25, 1.0))
CFG = ScatterConfig(t_max=4.0, aliasing_budget=1e-6)


@pytest.fixture(scope="module")
def grid():
    return make_grid(2, 128, 10.0)


@pytest.fixture(scope="module")
def packet(grid):
    return make_packet(grid, PacketSpec((0.0, 0.5), (0.0, 0.0), 1.0))


def _gaussian_rhs(y0, w=1.0, strength=1.0, rho=1.0):
    """Closed form for a Gaussian potential and a Gaussian packet paired with itself.

    The transverse density is normal with variance ``1 / (2 w^2)`` about ``y0``.
    """
    a, var = 1 / rho ** 2, 0.5 / w ** 2
    b = 1 + 2 * a * var
    moment = y0 / b * math.exp(-a * y0 ** 2 / b) / math.sqrt(b)
    return 0.5j * (-2 * strength * math.sqrt(math.pi) / rho) * moment


@settings(max_examples=30)
@given(st.floats(0, 2 * math.pi))
def test_perpendicular_is_orthonormal(angle):
    v = np.array([math.cos(angle), math.sin(angle)])
    p = perpendicular(v)
    assert p @ v == pytest.approx(0.0, abs=1e-15)
    assert np.linalg.norm(p) == pytest.approx(1.0)
    assert v[0] * p[1] - v[1] * p[0] == pytest.approx(1.0)


def test_perpendicular_needs_plane():
    with pytest.raises(ConfigError):
        perpendicular([1.0, 0.0, 0.0])


class TestLineIntegrals:
    @settings(max_examples=25, deadline=None)
    @given(st.floats(1e-3, 0.999))
    def test_coulomb_closed_form(self, s):
        sing = COULOMB.singular
        f = lambda t: float(radial_singular(sing, 2, np.array([math.hypot(s, t)]))[0])
        T = math.sqrt(1 - s * s)
        ref = 2 * integrate.quad(f, 0, T, epsabs=1e-13, limit=200)[0]
        assert singular_line_integral(COULOMB, 2, np.array([s]))[0] == pytest.approx(ref, rel=1e-9)

    def test_coulomb_limit_on_axis(self):
        # the line integral is Hoelder continuous at s = 0 with exponent 1/4
        s = np.array([0.0, 1e-4, 1e-8, 1e-12])
        vals = singular_line_integral(COULOMB, 2, s)
        assert vals[0] == pytest.approx(2 / 0.25, rel=1e-12)
        gaps = vals[0] - vals[1:]
        np.testing.assert_allclose(gaps[1:] / gaps[:-1], 10.0 ** -1, rtol=1e-2)
        assert singular_line_integral(COULOMB, 2, np.array([1.2]))[0] == 0.0

    def test_bump(self):
        V = PotentialSpec(singular=SingularPart("bump", 1.0, radius=1.0))
        # a line through the centre sees int exp(1 - 1/(1 - t^2)) dt
        ref = integrate.quad(lambda t: math.exp(1 - 1 / (1 - t * t)), -1, 1)[0]
        assert singular_line_integral(V, 2, np.array([0.0]))[0] == pytest.approx(ref, rel=1e-9)

    @pytest.mark.parametrize("V", [GAUSS_V, PotentialSpec(regular=RegularPart("power", 2.0, 1.5))])
    def test_gradient_closed_forms(self, V):
        vhat = np.array([0.6, 0.8])
        e = perpendicular(vhat)
        pts = np.array([[0.3, -0.2], [1.5, 0.7], [-2.0, 0.4]])
        got = gradient_line_integral(V, pts, vhat, e)
        for p, g in zip(pts, got):
            f = lambda t: float(grad_regular(V, (p + t * vhat)[None, :])[0] @ e)
            assert g == pytest.approx(integrate.quad(f, -np.inf, np.inf, limit=400)[0], rel=1e-8, abs=1e-12)

    def test_custom_spline_matches_closed_form(self):
        gauss = RegularPart("gaussian", 1.0, width=1.0)
        custom = PotentialSpec(regular=RegularPart(
            "custom", decay=1.0,
            func=lambda p: np.exp(-np.sum(p ** 2, axis=-1)),
            grad=lambda p: -2 * p * np.exp(-np.sum(p ** 2, axis=-1))[..., None]))
        pts = np.array([[0.2, 0.1], [0.0, -1.3]])
        vhat, e = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        np.testing.assert_allclose(gradient_line_integral(custom, pts, vhat, e),
                                   gradient_line_integral(PotentialSpec(regular=gauss), pts, vhat, e),
                                   atol=1e-6)

    def test_parallel_component_vanishes(self):
        vhat = np.array([1.0, 0.0])
        assert np.all(gradient_line_integral(GAUSS_V, np.array([[0.3, 0.5]]), vhat, vhat) == 0.0)


class TestOracle:
    @pytest.mark.parametrize("y0", [0.5, -1.0, 2.0])
    def test_gaussian_closed_form(self, grid, y0):
        phi = make_packet(grid, PacketSpec((0.0, y0), (0.0, 0.0), 1.0))
        got = limit_rhs_quadrature(phi, phi, (0.0, 1.0), (1.0, 0.0), GAUSS_V)
        assert got == pytest.approx(_gaussian_rhs(y0), rel=1e-10)

    def test_real_profiles_give_imaginary_value(self, grid, packet):
        V = PotentialSpec(GAUSS_V.regular, COULOMB.singular)
        got = limit_rhs_quadrature(packet, packet, (0.0, 1.0), (1.0, 0.0), V)
        assert abs(got.real) < 1e-12 * abs(got)
        assert abs(got.imag) > 0.1

    def test_linear_in_potential(self, grid, packet):
        V = PotentialSpec(GAUSS_V.regular, COULOMB.singular)
        one = limit_rhs_quadrature(packet, packet, 1, (1.0, 0.0), V)
        assert limit_rhs_quadrature(packet, packet, 1, (1.0, 0.0), V.scaled(-2.5)) == \
            pytest.approx(-2.5 * one, rel=1e-12)

    def test_singular_quadrature_converges(self, grid, packet):
        coarse = limit_rhs_quadrature(packet, packet, 1, (1.0, 0.0), COULOMB, radial_nodes=16)
        fine = limit_rhs_quadrature(packet, packet, 1, (1.0, 0.0), COULOMB, radial_nodes=96, line_nodes=320)
        assert coarse == pytest.approx(fine, rel=1e-12)

    def test_singular_needs_plane(self):
        g = make_grid(1, 64, 8.0)
        phi = make_packet(g, PacketSpec((0.0,), (0.0,), 1.0))
        with pytest.raises(ConfigError):
            limit_rhs_quadrature(phi, phi, 0, (1.0,), COULOMB)


class TestPairing:
    def test_zero_potential(self, packet):
        assert commutator_pairing(packet, packet, 1, (40.0, 0.0), PotentialSpec(), CFG) == 0.0

    def test_high_velocity_matches_oracle(self, packet):
        got = commutator_pairing(packet, packet, 1, (40.0, 0.0), GAUSS_V, CFG)
        assert got == pytest.approx(_gaussian_rhs(0.5), rel=0.02)

    def test_born_linearity(self, packet):
        small = commutator_pairing(packet, packet, 1, (20.0, 0.0), GAUSS_V.scaled(1e-3), CFG)
        double = commutator_pairing(packet, packet, 1, (20.0, 0.0), GAUSS_V.scaled(2e-3), CFG)
        assert double == pytest.approx(2 * small, rel=1e-3)

    def test_grid_mismatch(self, packet):
        other = make_packet(make_grid(2, 64, 10.0), PacketSpec((0.0, 0.0), (0.0, 0.0), 1.0))
        with pytest.raises(ConfigError):
            commutator_pairing(packet, other, 1, (10.0, 0.0), GAUSS_V, CFG)


class TestSweep:
    def test_parallel_rows_match_serial(self, packet):
        kw = dict(cfg=CFG, center_phi=(0.0, 0.5), center_psi=(0.0, 0.5))
        a = velocity_sweep(packet, packet, (0.0, 1.0), (1.0, 0.0), GAUSS_V, [20.0, 10.0], jobs=1, **kw)
        b = velocity_sweep(packet, packet, (0.0, 1.0), (1.0, 0.0), GAUSS_V, [10.0, 20.0], jobs=2, **kw)
        assert [r.pairing for r in a.rows] == [r.pairing for r in b.rows]
        assert list(a.speeds) == [10.0, 20.0]
        assert a.rel_errors[1] < a.rel_errors[0]

    def test_rejects_nonpositive_speed(self, packet):
        with pytest.raises(ConfigError):
            velocity_sweep(packet, packet, 1, (1.0, 0.0), GAUSS_V, [10.0, 0.0])

    def _result(self, errors):
        return SweepResult(tuple(SweepRow(float(5 * 2 ** i), (1.0, 0.0), (0.0, 1.0), (), (), 1j + e, 1j)
                                 for i, e in enumerate(errors)))

    def test_tail_heuristic(self):
        assert self._result([0.3, 0.2, 0.1, 0.04]).converged()
        assert not self._result([0.3, 0.1, 0.2, 0.04]).tail_decreasing()
        assert not self._result([0.3, 0.2, 0.1, 0.06]).converged()

    def test_outputs(self, tmp_path):
        res = self._result([0.3, 0.1])
        res.write_csv(tmp_path / "s.csv")
        res.write_gnuplot(tmp_path / "s.dat")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == ("v_mag,vhat0,vhat1,j0,j1,re_pairing,im_pairing,re_oracle,im_oracle,"
                            "abs_error")
        assert lines[2].split(",")[-1] == "0.10000000000000001"
        dat = np.loadtxt(tmp_path / "s.dat")
        np.testing.assert_allclose(dat, [[5, 0.3], [10, 0.1]])

    def test_jobs_from_environment(self, monkeypatch):
        monkeypatch.setenv("REPSC_JOBS", "3")
        assert resolve_jobs() == 3
        assert resolve_jobs(2) == 2
        with pytest.raises(ConfigError):
            resolve_jobs(0)


class TestXRay:
    def test_deconvolution_of_gaussian(self):
        y = np.linspace(-8, 8, 161)
        a, sigma = 1.0, 0.5
        blurred = np.exp(-y ** 2 / (2 * (a * a + sigma * sigma))) * a / math.hypot(a, sigma)
        sharp = _gaussian_deconvolve(y, blurred, sigma, 1e-10)
        np.testing.assert_allclose(sharp, np.exp(-y ** 2 / (2 * a * a)), atol=1e-4)

    @pytest.mark.parametrize("kw,match", [
        (dict(V=COULOMB), "singular"),
        (dict(offsets=[0.0, 1.0, 3.0, 4.0]), "uniform"),
        (dict(offsets=[0.0, 1.0]), "uniform"),
        (dict(width=0.2), "spread"),
    ])
    def test_validation(self, grid, kw, match):
        args = dict(V=GAUSS_V, vhat=(1.0, 0.0), offsets=np.linspace(-3, 3, 7), width=2.0,
                    speed=40.0, grid=grid, cfg=CFG)
        args.update(kw)
        with pytest.raises(ConfigError, match=match):
            extract_xray_samples(**args)
