import subprocess
import sys
import textwrap
from pathlib import Path

import pytest

from repsc.cli import load_config, main, parse_config
from repsc.errors import ConfigError

EVOLVE = """
[grid]
dim = 2
points = 32
half_width = 6.0

[potential]
regular = gaussian
regular_strength = 1.0
regular_width = 1.0

[packet]
center = 0.0, 0.3
velocity = 1.0, 0.0
width = 1.0

[dynamics]
duration = 0.3
dt = 0.02
aliasing_budget = 1e-3
record_every = 5

[output]
figures = {figures}
"""


def _write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


def _run(tmp_path, command, text, out="out", capsys=None):
    code = main([command, "--config", str(_write(tmp_path, text)), "--out", str(tmp_path / out)])
    return code


class TestConfig:
    def test_defaults(self):
        cfg = parse_config("")
        assert cfg.grid.dim == 1 and cfg.grid.points == 256
        assert cfg.potential.regular is None and cfg.potential.singular is None

    def test_every_violation_is_listed(self):
        text = """
        [grid]
        dim = 2
        points = -4
        [dynamics]
        dt = -0.1
        duration = 50
        [sweep]
        speeds = 10, 500
        colour = red
        [bogus]
        x = 1
        """
        with pytest.raises(ConfigError) as info:
            parse_config(textwrap.dedent(text))
        joined = "\n".join(info.value.violations)
        assert len(info.value.violations) >= 5
        for needle in ("[grid]", "dt", "row 1", "colour", "[bogus]"):
            assert needle in joined

    def test_packet_dimension_checked(self):
        with pytest.raises(ConfigError, match="dimension"):
            parse_config("[grid]\ndim = 2\n[packet]\ncenter = 1.0\n")

    def test_speed_above_maximum_names_row(self):
        with pytest.raises(ConfigError, match=r"speeds row 2: \|v\| = 250"):
            parse_config("[grid]\ndim = 2\n[sweep]\nspeeds = 5, 10, 250\nmax_speed = 200\n")

    def test_zero_time_rejected(self):
        with pytest.raises(ConfigError, match="nonzero"):
            parse_config("[mehler]\ntimes = 0.0, 0.5\n")

    def test_scattering_reconstruction_rejects_singular_part(self):
        text = "[grid]\ndim = 2\n[potential]\nsingular = coulomb\n[reconstruct]\nmode = scattering\n"
        with pytest.raises(ConfigError, match="without singular part"):
            parse_config(text)

    def test_strong_coupling_warns_but_runs(self):
        cfg = parse_config("[potential]\nregular = gaussian\nregular_strength = 200\n[dynamics]\ndt = 0.01\n")
        assert any("[dynamics] coupling 200" in w for w in cfg.warnings)
        assert parse_config("[potential]\nregular = gaussian\n").warnings == ()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.ini")


class TestExitCodes:
    def test_bad_config_exits_two(self, tmp_path, capsys):
        code = _run(tmp_path, "evolve", "[grid]\npoints = 0\n[dynamics]\ndt = 0\n")
        err = capsys.readouterr().err
        assert code == 2
        assert "configuration rejected (2 problem(s))" in err
        assert not (tmp_path / "out").exists()

    def test_unresolved_lattice_exits_four(self, tmp_path, capsys):
        text = EVOLVE.format(figures="no").replace("points = 32", "points = 8").replace(
            "regular = gaussian", "singular = coulomb\nsingular_strength = 20.0\nregular = none")
        code = _run(tmp_path, "evolve", text)
        err = capsys.readouterr().err
        assert code == 4
        assert "AliasingError" in err or "GridOverflowError" in err

    def test_coarse_mehler_grid_names_aliasing(self, tmp_path, capsys):
        code = _run(tmp_path, "mehler-check", "[grid]\npoints = 8\nhalf_width = 10.0\n")
        assert code == 4
        assert "AliasingError" in capsys.readouterr().err

    def test_missed_tolerance_exits_three(self, tmp_path, capsys):
        text = """
        [grid]
        dim = 1
        points = 1024
        half_width = 20.0
        [packet]
        center = 1.0
        velocity = 0.5
        [mehler]
        times = -0.5, 0.5
        heisenberg_times = -0.5, 0.5
        growth_times = 0.25, 0.5, 0.75
        states = 2
        tolerance = 1e-30
        scaling_points = 65536
        scaling_half_width = 4096.0
        """
        code = _run(tmp_path, "mehler-check", text)
        assert code == 3
        assert "failed checks" in capsys.readouterr().err
        assert (tmp_path / "out" / "checks.csv").exists()

    def test_unknown_command(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["frobnicate", "--config", "x", "--out", str(tmp_path)])


class TestCommands:
    def test_evolve_outputs(self, tmp_path):
        assert _run(tmp_path, "evolve", EVOLVE.format(figures="yes")) == 0
        out = tmp_path / "out"
        for name in ("trajectory.csv", "trajectory.dat", "trajectory.png", "checks.csv",
                     "final_profile.snap", "final_frame.csv"):
            assert (out / name).exists(), name
        lines = (out / "trajectory.csv").read_text().splitlines()
        assert len(lines) >= 3

    def test_runs_are_byte_identical(self, tmp_path):
        text = EVOLVE.format(figures="no")
        assert _run(tmp_path, "evolve", text, out="a") == 0
        assert _run(tmp_path, "evolve", text, out="b") == 0
        for name in ("trajectory.csv", "trajectory.dat", "checks.csv", "final_frame.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_scatter(self, tmp_path):
        text = """
        [grid]
        dim = 2
        points = 64
        half_width = 8.0
        [potential]
        singular = bump
        singular_strength = 1.0
        singular_radius = 1.0
        [packet]
        center = 0.0, 0.0
        velocity = 10.0, 0.0
        width = 1.0
        [scatter]
        t_max = 4.0
        aliasing_budget = 1e-4
        [output]
        figures = no
        """
        assert _run(tmp_path, "scatter", text) == 0
        head = (tmp_path / "out" / "scatter_report.csv").read_text().splitlines()[0]
        assert head.startswith("v_mag,direction,T_used")

    def test_synthetic_reconstruction(self, tmp_path):
        text = """
        [grid]
        dim = 2
        points = 64
        half_width = 8.0
        [potential]
        regular = gaussian
        regular_width = 1.0
        [reconstruct]
        mode = synthetic
        directions = 64
        offsets = -5.5, 5.5, 89
        field_points = 64
        field_half_width = 6.0
        [output]
        figures = no
        """
        assert _run(tmp_path, "reconstruct", text) == 0
        assert (tmp_path / "out" / "sinogram.csv").exists()

    def test_zero_potential_scatter_is_identity(self, tmp_path):
        text = "[grid]\ndim = 2\npoints = 32\nhalf_width = 6.0\n[packet]\ncenter = 0, 0\nvelocity = 3, 0\n" \
               "[scatter]\naliasing_budget = 1e-4\n[output]\nfigures = no\n"
        assert _run(tmp_path, "scatter", text) == 0
        row = (tmp_path / "out" / "checks.csv").read_text().splitlines()[1].split(",")
        assert row[0] == "unitarity_defect" and float(row[1]) < 1e-10

    def test_zero_potential_sweep(self, tmp_path):
        text = "[grid]\ndim = 2\npoints = 32\nhalf_width = 6.0\n[packet]\ncenter = 0, 0.5\n" \
               "[scatter]\naliasing_budget = 1e-4\n[sweep]\nspeeds = 5, 10\n[output]\nfigures = no\n"
        assert _run(tmp_path, "sweep", text) == 0
        rows = (tmp_path / "out" / "sweep.csv").read_text().splitlines()[1:]
        assert len(rows) == 2
        assert all(float(x) == 0.0 for r in rows for x in r.split(",")[5:7])

    def test_reconstruction_without_ground_truth(self, tmp_path):
        text = ("[grid]\ndim = 2\npoints = 64\nhalf_width = 8.0\n[potential]\nregular = gaussian\n"
                "[reconstruct]\ndirections = 32\nfield_points = 64\nground_truth = no\n"
                "[output]\nfigures = no\n")
        assert _run(tmp_path, "reconstruct", text) == 0
        assert (tmp_path / "out" / "error_report.csv").read_text().splitlines()[1] == "synthetic,32,n/a"
        assert (tmp_path / "out" / "reconstruction.snap").exists()


@pytest.mark.slow
def test_default_mehler_config(tmp_path):
    root = Path(__file__).resolve().parent.parent
    code = main(["mehler-check", "--config", str(root / "configs" / "mehler.ini"), "--out", str(tmp_path)])
    assert code == 0
    for name in ("agreement.csv", "unitarity.csv", "heisenberg.csv", "scaling.csv", "carlson_beurling.csv"):
        assert (tmp_path / name).exists(), name


def test_module_entry_point(tmp_path):
    path = _write(tmp_path, "[grid]\npoints = -1\n")
    proc = subprocess.run([sys.executable, "-m", "repsc.cli", "evolve", "--config", str(path),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "points" in proc.stderr
