
import numpy as np
import pytest

import spinflow as sf
from spinflow import checks, cli, snapshots

NOOP = """\
grid.nx = 32
grid.ny = 32
grid.lx = 1.0
grid.ly = 1.0
coupling.kind = constant
initial.kind = constant
flow.kind = gradient
flow.t_end = 0.0
output.dir = out
"""

BUBBLE_LL = """\
grid.nx = 32
grid.ny = 32
grid.lx = 1.0
grid.ly = 1.0
coupling.kind = cosine-product
coupling.ax = 0.25
coupling.ay = 0.25
initial.kind = bubble
initial.px = 0.7
initial.py = 0.5
initial.scale = 0.12
flow.kind = landau-lifshitz
flow.dt_policy = cfl
flow.safety = 0.25
flow.t_end = 0.0015
flow.diagnostic_every = 10
flow.stationarity_tol = 0.0
diagnostics.radii = 0.2, 0.1
diagnostics.eps_conc = 4.0
output.dir = out
"""


def write_config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestRun:
    def test_noop_exits_zero_with_one_row(self, tmp_path):
        cfgpath = write_config(tmp_path, NOOP)
        code = cli.main(["run", cfgpath, "-o", str(tmp_path / "out")])
        assert code == cli.EXIT_OK
        ledger = (tmp_path / "out" / "ledger.csv").read_text().strip().split("\n")
        assert len(ledger) == 2   # header + single row
        assert (tmp_path / "out" / "snapshot_final.bin").exists()
        assert (tmp_path / "out" / "report.txt").exists()
        assert (tmp_path / "out" / "density_final.pgm").exists()

    def test_bubble_ll_energy_non_increasing(self, tmp_path):
        cfgpath = write_config(tmp_path, BUBBLE_LL)
        out = str(tmp_path / "out")
        code = cli.main(["run", cfgpath, "-o", out])
        assert code == cli.EXIT_OK
        rows = (tmp_path / "out" / "ledger.csv").read_text().strip().split("\n")[1:]
        e = np.array([float(r.split(",")[1]) for r in rows])
        assert np.all(np.diff(e) <= 1e-8 * e[0])

    def test_huge_dt_exits_blowup_with_partial_ledger(self, tmp_path):
        text = BUBBLE_LL.replace("flow.dt_policy = cfl", "flow.dt_policy = fixed") \
                        .replace("flow.safety = 0.25", "flow.dt = 1e306") \
                        .replace("flow.diagnostic_every = 10", "flow.diagnostic_every = 1")
        cfgpath = write_config(tmp_path, text)
        code = cli.main(["run", cfgpath, "-o", str(tmp_path / "out")])
        assert code == cli.EXIT_BLOWUP
        ledger = (tmp_path / "out" / "ledger.csv").read_text().strip().split("\n")
        assert len(ledger) >= 2   # header plus the pre-failure row

    def test_config_error_exit(self, tmp_path):
        cfgpath = write_config(tmp_path, NOOP + "urknown.key = 1\n")
        assert cli.main(["run", cfgpath]) == cli.EXIT_CONFIG

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["run", str(tmp_path / "none.cfg")]) == cli.EXIT_CONFIG

    def test_determinism_byte_identical_ledgers(self, tmp_path):
        text = BUBBLE_LL.replace(
            "initial.kind = bubble\ninitial.px = 0.7\ninitial.py = 0.5\n"
            "initial.scale = 0.12",
            "initial.kind = perturbed\ninitial.amplitude = 0.05\ninitial.seed = 4") \
            .replace("flow.t_end = 0.0015", "flow.t_end = 0.0005")
        cfgpath = write_config(tmp_path, text)
        cli.main(["run", cfgpath, "-o", str(tmp_path / "a")])
        cli.main(["run", cfgpath, "-o", str(tmp_path / "b")])
        assert (tmp_path / "a" / "ledger.csv").read_bytes() \
            == (tmp_path / "b" / "ledger.csv").read_bytes()

    def test_snapshot_cadence_files(self, tmp_path):
        text = BUBBLE_LL.replace("flow.t_end = 0.0015", "flow.t_end = 0.0004") \
                        + "flow.snapshot_every = 3\n"
        cfgpath = write_config(tmp_path, text)
        out = tmp_path / "out"
        assert cli.main(["run", cfgpath, "-o", str(out)]) == cli.EXIT_OK
        snaps = sorted(p.name for p in out.glob("snapshot_0*.bin"))
        assert snaps   # cadence snapshots written alongside the final one
        field = snapshots.read_snapshot(out / snaps[0])
        assert field.grid.nx == 32


class TestRelaxCommand:
    def test_perturbed_relax_converges(self, tmp_path):
        text = NOOP.replace("initial.kind = constant",
                            "initial.kind = perturbed\ninitial.amplitude = 0.02") \
                   + "relax.tol = 1e-8\n"
        cfgpath = write_config(tmp_path, text)
        out = tmp_path / "out"
        assert cli.main(["relax", cfgpath, "-o", str(out)]) == cli.EXIT_OK
        history = (out / "relax_history.csv").read_text().strip().split("\n")
        assert history[0] == "step,ps_norm"
        assert float(history[-1].split(",")[1]) < 1e-8
        assert (out / "snapshot_final.bin").exists()

    def test_not_converged_exit(self, tmp_path):
        text = NOOP.replace("initial.kind = constant",
                            "initial.kind = great-circle") \
                   .replace("coupling.kind = constant",
                            "coupling.kind = cosine\ncoupling.ax = 0.25") \
                   + "relax.tol = 1e-13\nrelax.max_steps = 5\n"
        cfgpath = write_config(tmp_path, text)
        assert cli.main(["relax", cfgpath, "-o", str(tmp_path / "out")]) \
            == cli.EXIT_NOT_CONVERGED


class TestCheckCommand:
    def test_constant_setup_passes(self, tmp_path):
        cfgpath = write_config(tmp_path, NOOP)
        assert cli.main(["check", cfgpath, "-o", str(tmp_path / "out")]) == cli.EXIT_OK
        table = (tmp_path / "out" / "check_report.txt").read_text()
        for name in ("unit-norm", "gradient-check", "variation-formula",
                     "hopf-identity", "dissipation-identity"):
            assert name in table

    def test_great_circle_setup_passes(self, tmp_path):
        text = NOOP.replace("initial.kind = constant", "initial.kind = great-circle") \
                   .replace("grid.nx = 32", "grid.nx = 64") \
                   .replace("grid.ny = 32", "grid.ny = 64") \
                   .replace("coupling.kind = constant",
                            "coupling.kind = cosine\ncoupling.ax = 0.25\ncoupling.ay = 0.25")
        cfgpath = write_config(tmp_path, text)
        assert cli.main(["check", cfgpath, "-o", str(tmp_path / "out")]) == cli.EXIT_OK

    def test_corrupted_coupling_gradient_fails_gradient_row(self, grid64):
        # fault injection: a wrong stored gradient must trip the fd-vs-pairing row
        good = sf.make_coupling(grid64, "cosine-product",
                                {"base": 1.0, "ax": 0.25, "ay": 0.25})
        corrupted = sf.Coupling(grid64, "custom-sampled", good.values,
                                1.5 * good.grad_x + 0.3, good.grad_y)
        field = sf.great_circle_field(grid64, phase=0.3)
        results = checks.run_identity_checks(grid64, corrupted, field)
        by_name = {r.name: r for r in results}
        assert not by_name["gradient-check"].passed


class TestBlowupExperiment:
    def test_fresh_bubble_detected(self, tmp_path):
        cfgpath = write_config(tmp_path, BUBBLE_LL.replace("flow.t_end = 0.0015",
                                                           "flow.t_end = 0.0004"))
        out = tmp_path / "out"
        assert cli.main(["blowup-experiment", cfgpath, "-o", str(out)]) == cli.EXIT_OK
        report = (out / "report.txt").read_text()
        assert "detected = true" in report
        assert "initial_distance" in report and "final_distance" in report
        assert "drift_t" in report

    def test_no_concentration_is_inconclusive(self, tmp_path):
        text = BUBBLE_LL.replace(
            "initial.kind = bubble\ninitial.px = 0.7\ninitial.py = 0.5\n"
            "initial.scale = 0.12",
            "initial.kind = constant") \
            .replace("flow.t_end = 0.0015", "flow.t_end = 0.0002")
        cfgpath = write_config(tmp_path, text)
        code = cli.main(["blowup-experiment", cfgpath, "-o", str(tmp_path / "out")])
        assert code == cli.EXIT_INCONCLUSIVE
        report = (tmp_path / "out" / "report.txt").read_text()
        assert "detected = false" in report

    def test_constant_coupling_notes_everywhere_critical(self, tmp_path):
        text = BUBBLE_LL.replace("coupling.kind = cosine-product", "coupling.kind = constant") \
                        .replace("coupling.ax = 0.25\ncoupling.ay = 0.25\n", "") \
                        .replace("flow.t_end = 0.0015", "flow.t_end = 0.0002")
        cfgpath = write_config(tmp_path, text)
        code = cli.main(["blowup-experiment", cfgpath, "-o", str(tmp_path / "out")])
        assert code == cli.EXIT_OK
        report = (tmp_path / "out" / "report.txt").read_text()
        assert "critical_set = everywhere" in report
        assert "initial_distance" not in report


class TestVersionAndUsage:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit):
            cli.main(["--version"])
        assert "spinflow" in capsys.readouterr().out
