import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import line_integral
from repsc.errors import ConfigError
from repsc.lattice import make_grid
from repsc.radon import (MIN_ANGLES, Sinogram, angular_upsample, fbp_invert, gaussian_phantom,
                         gaussian_xray, radon_plancherel_residual, ramp_filter, read_sinogram_csv,
                         relative_l2_error, uniform_angles, write_sinogram_csv, xray_forward)

CENTERS = ((0.5, -0.3), (-1.0, 0.8))
WIDTHS = (1.0, 0.6)
AMPS = (1.0, 0.5)
OFFSETS = np.linspace(-5, 5, 81)


@pytest.fixture(scope="module")
def grid():
    return make_grid(2, 128, 8.0)


@pytest.fixture(scope="module")
def phantom(grid):
    return gaussian_phantom(grid, CENTERS, WIDTHS, AMPS)


def _exact(angles, offsets=OFFSETS):
    return gaussian_xray(offsets, angles, CENTERS, WIDTHS, AMPS)


class TestForward:
    def test_gaussian_closed_form(self, grid, phantom):
        ang = uniform_angles(16)
        ref = _exact(ang)
        got = xray_forward(phantom, grid, ang, OFFSETS).values
        assert np.max(np.abs(got - ref)) < 1e-2 * ref.max()

    def test_bilinear_error_is_second_order(self):
        ang = uniform_angles(8)
        ref = _exact(ang)
        errs = []
        for m in (64, 128, 256):
            g = make_grid(2, m, 8.0)
            sino = xray_forward(gaussian_phantom(g, CENTERS, WIDTHS, AMPS), g, ang, OFFSETS)
            errs.append(np.max(np.abs(sino.values - ref)))
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(rates > 1.7), rates

    def test_non_gaussian_against_adaptive_quadrature(self):
        g = make_grid(2, 256, 6.0)
        f = lambda p: math.exp(-p[0] ** 4 - 2 * p[1] ** 2) * (1 + 0.5 * p[0])
        P = g.points_array()
        values = np.exp(-P[..., 0] ** 4 - 2 * P[..., 1] ** 2) * (1 + 0.5 * P[..., 0])
        ang, off = np.array([0.0, 0.7, 2.0]), np.array([-0.8, -0.35, 0.1, 0.55])
        got = xray_forward(values, g, ang, off).values
        for k, th in enumerate(ang):
            for i, s in enumerate(off):
                assert got[k, i] == pytest.approx(line_integral(f, th, s, 8.0), abs=2e-3)

    def test_unit_gaussian_to_tight_tolerance(self):
        # bilinear sampling is second order; the 1024 lattice brings it below 1e-4
        g = make_grid(2, 1024, 6.0)
        off = np.linspace(-3, 3, 25)
        sino = xray_forward(gaussian_phantom(g), g, uniform_angles(8), off)
        assert np.max(np.abs(sino.values - math.sqrt(math.pi) * np.exp(-off ** 2))) < 1e-4

    def test_disk_chords(self):
        g = make_grid(2, 256, 4.0)
        P = g.points_array()
        disk = (np.sum(P ** 2, axis=-1) <= 1).astype(float)
        off = np.linspace(-0.9, 0.9, 7)
        sino = xray_forward(disk, g, uniform_angles(8), off)
        # the indicator jumps, so the error is of the order of the lattice spacing
        assert np.max(np.abs(sino.values - 2 * np.sqrt(1 - off ** 2))) < 2 * g.physical_spacing

    def test_zero_field(self, grid):
        sino = xray_forward(np.zeros(grid.shape), grid, uniform_angles(4), OFFSETS)
        assert not np.any(sino.values)

    def test_symmetry_under_half_turn(self, grid, phantom):
        # values(theta + pi, s) = values(theta, -s)
        ang = np.array([0.3, 0.3 + math.pi])
        sino = xray_forward(phantom, grid, ang, OFFSETS)
        np.testing.assert_allclose(sino.values[1], sino.values[0][::-1], atol=1e-12)

    def test_parallel_jobs_identical(self, grid, phantom):
        ang = uniform_angles(8)
        a = xray_forward(phantom, grid, ang, OFFSETS, jobs=1).values
        b = xray_forward(phantom, grid, ang, OFFSETS, jobs=3).values
        assert np.array_equal(a, b)

    def test_rejects_field_on_boundary(self):
        g = make_grid(2, 32, 2.0)
        with pytest.raises(ConfigError, match="boundary"):
            xray_forward(gaussian_phantom(g), g, uniform_angles(4), np.linspace(-1, 1, 5))

    def test_rejects_offsets_outside_box(self, grid, phantom):
        with pytest.raises(ConfigError, match="offsets"):
            xray_forward(phantom, grid, uniform_angles(4), np.linspace(-9, 9, 5))


class TestRampFilter:
    def test_even_and_windowed(self):
        ds = 0.1
        H = ramp_filter(64, ds, cutoff=0.5)
        freq = np.abs(np.fft.fftfreq(len(H), d=ds))
        np.testing.assert_allclose(H[1:], H[1:][::-1], atol=1e-12)
        assert np.all(H[freq >= 0.5 * 0.5 / ds] == 0.0)

    def test_low_frequencies_follow_abs(self):
        ds = 0.1
        H = ramp_filter(256, ds, cutoff=0.9)
        freq = np.fft.fftfreq(len(H), d=ds)
        low = slice(2, 12)
        np.testing.assert_allclose(H[low], np.abs(freq[low]), rtol=0.05)


class TestFBP:
    def test_round_trip(self, grid, phantom):
        ang = uniform_angles(64)
        rec = fbp_invert(Sinogram(ang, OFFSETS, _exact(ang)), grid)
        assert relative_l2_error(rec, phantom) < 0.05

    def test_forward_then_invert(self, grid, phantom):
        ang = uniform_angles(64)
        rec = fbp_invert(xray_forward(phantom, grid, ang, OFFSETS), grid, jobs=2)
        assert relative_l2_error(rec, phantom) < 0.05

    @pytest.mark.parametrize("centers,widths,amps", [
        (((0.0, 0.0),), (1.0,), (1.0,)),
        (((1.2, -0.7),), (0.8,), (1.0,)),
        (((1.0, 0.5), (-1.0, -0.5)), (0.7, 0.7), (1.0, 1.0)),
    ], ids=["gaussian", "offset", "two-bump"])
    def test_smooth_phantoms(self, grid, centers, widths, amps):
        truth = gaussian_phantom(grid, centers, widths, amps)
        ang = uniform_angles(64)
        off = np.linspace(-6, 6, 128)
        rec = fbp_invert(xray_forward(truth, grid, ang, off), grid)
        assert relative_l2_error(rec, truth) < 0.05

    def test_zero_sinogram(self, grid):
        sino = Sinogram(uniform_angles(40), OFFSETS, np.zeros((40, len(OFFSETS))))
        assert not np.any(fbp_invert(sino, grid))

    def test_linear(self, grid):
        ang = uniform_angles(40)
        rng = np.random.default_rng(3)
        one, two = rng.normal(size=(2, 40, len(OFFSETS)))
        f = lambda v: fbp_invert(Sinogram(ang, OFFSETS, v), grid)
        combo = f(2.5 * one - 0.75 * two)
        np.testing.assert_allclose(combo, 2.5 * f(one) - 0.75 * f(two), atol=1e-10 * np.max(np.abs(combo)))

    def test_sparse_angles_refused(self, grid):
        ang = uniform_angles(MIN_ANGLES - 1)
        with pytest.raises(ConfigError, match="minimum"):
            fbp_invert(Sinogram(ang, OFFSETS, _exact(ang)), grid)

    def test_sparse_radial_field(self, grid):
        # a radial field has an angle-independent sinogram, so interpolation is exact
        truth = gaussian_phantom(grid)
        ang = uniform_angles(8)
        sino = Sinogram(ang, OFFSETS, gaussian_xray(OFFSETS, ang))
        rec = fbp_invert(sino, grid, allow_sparse=True)
        assert relative_l2_error(rec, truth) < 0.05

    def test_nonuniform_angles_refused(self, grid):
        ang = np.sort(np.random.default_rng(0).uniform(0, math.pi, 40))
        with pytest.raises(ConfigError, match="uniform"):
            fbp_invert(Sinogram(ang, OFFSETS, _exact(ang)), grid)

    def test_needs_plane(self):
        sino = Sinogram(uniform_angles(40), OFFSETS, np.zeros((40, len(OFFSETS))))
        with pytest.raises(ConfigError):
            fbp_invert(sino, make_grid(1, 64, 8.0))


class TestAngularUpsample:
    @settings(max_examples=20, deadline=None)
    @given(st.floats(-2, 2), st.floats(-2, 2), st.integers(5, 12))
    def test_exact_for_trigonometric_data(self, b, c, K):
        # even profiles carry even harmonics and odd profiles odd ones, as
        # required by XV(theta + pi, s) = XV(theta, -s)
        s = np.linspace(-3, 3, 31)
        even, odd = np.exp(-s ** 2), s * np.exp(-s ** 2)

        def data(th):
            th = np.asarray(th)[:, None]
            return even + b * np.cos(2 * th) * even + c * np.sin(th) * odd

        coarse = Sinogram(uniform_angles(K), s, data(uniform_angles(K)))
        fine = angular_upsample(coarse, 4 * K)
        np.testing.assert_allclose(fine.values, data(uniform_angles(4 * K)), atol=1e-12)

    def test_no_op_when_dense_enough(self):
        s = np.linspace(-1, 1, 5)
        sino = Sinogram(uniform_angles(8), s, np.ones((8, 5)))
        assert angular_upsample(sino, 8) is sino


class TestSinogram:
    def test_validation_lists_every_problem(self):
        with pytest.raises(ConfigError) as info:
            Sinogram([0.0, 1.0], [0.0, 1.0, 3.0], np.full((3, 3), np.nan))
        assert len(info.value.violations) == 3

    def test_csv_round_trip(self, tmp_path):
        ang = uniform_angles(6)
        sino = Sinogram(ang, OFFSETS, _exact(ang))
        write_sinogram_csv(tmp_path / "s.csv", sino)
        back = read_sinogram_csv(tmp_path / "s.csv")
        assert np.array_equal(back.angles, sino.angles)
        assert np.array_equal(back.offsets, sino.offsets)
        assert np.array_equal(back.values, sino.values)

    def test_reading_garbage(self, tmp_path):
        (tmp_path / "x.csv").write_text("foo,bar\n1,2\n")
        with pytest.raises(ConfigError):
            read_sinogram_csv(tmp_path / "x.csv")


class TestPlancherel:
    def test_closed_form_sinogram(self, grid, phantom):
        ang = uniform_angles(64)
        assert radon_plancherel_residual(phantom, grid, Sinogram(ang, OFFSETS, _exact(ang))) < 1e-3

    def test_lattice_sinogram(self, grid, phantom):
        ang = uniform_angles(64)
        assert radon_plancherel_residual(phantom, grid, xray_forward(phantom, grid, ang, OFFSETS)) < 1e-2

    def test_unit_gaussian_many_angles(self, grid):
        truth = gaussian_phantom(grid)
        sino = xray_forward(truth, grid, uniform_angles(128), np.linspace(-7, 7, 113))
        assert radon_plancherel_residual(truth, grid, sino) < 0.02

    def test_angle_refinement(self):
        # the angular rule converges geometrically for smooth fields, so the
        # residual drops until the offset sampling floor and then stays there
        g = make_grid(2, 128, 8.0)
        truth = gaussian_phantom(g, ((1.5, -0.3), (-1.0, 0.8)), (0.5, 0.6), (1.0, 0.5))
        off = np.linspace(-7, 7, 113)
        res = [radon_plancherel_residual(truth, g, xray_forward(truth, g, uniform_angles(k), off, order=3))
               for k in (4, 8, 16, 32, 64, 128)]
        assert res[0] > res[1] > res[2]
        assert all(b <= a * 1.01 for a, b in zip(res[2:], res[3:]))
        assert res[-1] < 1e-3

    def test_zero_field(self, grid):
        sino = Sinogram(uniform_angles(4), OFFSETS, np.zeros((4, len(OFFSETS))))
        assert radon_plancherel_residual(np.zeros(grid.shape), grid, sino) == 0.0


def test_relative_error_edge_cases():
    assert relative_l2_error(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_l2_error(np.ones(3), np.zeros(3)) == math.inf
    assert relative_l2_error(np.array([1.0, 1.1]), np.array([1.0, 1.0])) == pytest.approx(0.1 / math.sqrt(2))
