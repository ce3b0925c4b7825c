import json
from pathlib import Path

import numpy as np
import pytest

from graphon_spde import cli
from graphon_spde.config import initial_from_name, parse_config
from graphon_spde.errors import ConfigError
from graphon_spde.grid import grid_function_from_csv, project_to_grid

BASE_CONFIG = """
[problem]
kernel = band:r=0.25
interaction = kuramoto
drift = zero
initial = parabola
T = 1.0

[noise]
family = periodic
s = 2.0
M = 16

[experiment]
mode = {mode}
{body}
trials = {trials}
seed = 42

[output]
directory = {out}
formats = csv,svg
"""


def write_config(tmp_path, mode="vary_n", body=None, trials=3, name="exp.ini"):
    if body is None:
        body = "dt = 0.25\nn_list = 8,16,32\nn_star = 512"
    text = BASE_CONFIG.format(mode=mode, body=body, trials=trials,
                              out=tmp_path / "out")
    path = tmp_path / name
    path.write_text(text)
    return path


class TestConfigParsing:
    def test_resolves_registered_kinds(self, tmp_path):
        cfg = parse_config(write_config(tmp_path))
        assert cfg.kernel_label == "band:r=0.25"
        assert cfg.noise_label == "periodic:s=2.0,M=16"
        assert cfg.n_list == (8, 16, 32)
        assert cfg.trials == 3

    def test_overrides_beat_file(self, tmp_path):
        cfg = parse_config(write_config(tmp_path),
                           overrides={"seed": 7, "trials": 5})
        assert cfg.seed == 7
        assert cfg.trials == 5

    def test_missing_required_key_is_anchored(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[problem]\nkernel = nosuch:r=1\n")
        with pytest.raises(ConfigError) as exc:
            parse_config(path)
        assert "kernel" in str(exc.value)
        assert "bad.ini" in str(exc.value)

    def test_compact_noise_spec(self, tmp_path):
        path = tmp_path / "n.ini"
        path.write_text(
            "[problem]\nT = 1.0\n[noise]\nspec = dirichlet:s=1.5,M=8\n"
        )
        cfg = parse_config(path)
        assert cfg.problem.noise.family == "dirichlet_sine"
        assert cfg.problem.noise.M == 8

    def test_initial_registry(self):
        f = initial_from_name("sine:k=2.0,amp=0.5")
        x = np.array([0.125])
        # amp * sin(2 pi k x) = 0.5 * sin(pi/2)
        assert f(x)[0] == pytest.approx(0.5)
        with pytest.raises(ConfigError):
            initial_from_name("hat")


class TestSimulate:
    def test_zero_dynamics_outputs_projected_initial(self, tmp_path):
        body = "n = 16\ndt = 0.25"
        path = write_config(tmp_path, mode="vary_n", body=body)
        # zero-out the dynamics: no interaction, trace-zero noise
        text = path.read_text().replace("interaction = kuramoto",
                                        "interaction = none")
        text = text.replace("M = 16", "M = 0").replace("mode = vary_n\n", "")
        path.write_text(text)
        rc = cli.main(["simulate", "--config", str(path)])
        assert rc == 0
        u = grid_function_from_csv((tmp_path / "out" / "final.csv").read_text())
        assert np.allclose(
            u.values, project_to_grid(initial_from_name("parabola"), 16).values,
            atol=1e-15,
        )

    def test_rerun_byte_identical_and_sidecar_replays(self, tmp_path):
        body = "n = 16\ndt = 0.25\nrecord = trajectory\nstride = 2"
        path = write_config(tmp_path, mode="vary_n", body=body)
        path.write_text(path.read_text().replace("mode = vary_n\n", ""))
        assert cli.main(["simulate", "--config", str(path)]) == 0
        out = tmp_path / "out" / "trajectory.csv"
        first = out.read_bytes()
        meta = json.loads((tmp_path / "out" / "trajectory.meta.json").read_text())
        assert meta["seed"] == 42 and "config_text" in meta
        # replay from the sidecar's embedded config
        replay_cfg = tmp_path / "replay.ini"
        replay_cfg.write_text(meta["config_text"])
        assert cli.main(["simulate", "--config", str(replay_cfg)]) == 0
        assert out.read_bytes() == first

    def test_trajectory_header_layout(self, tmp_path):
        body = "n = 4\ndt = 0.5\nrecord = trajectory"
        path = write_config(tmp_path, body=body)
        path.write_text(path.read_text().replace("mode = vary_n\n", ""))
        assert cli.main(["simulate", "--config", str(path)]) == 0
        lines = (tmp_path / "out" / "trajectory.csv").read_text().splitlines()
        assert lines[0] == "t,cell_0,cell_1,cell_2,cell_3"
        assert len(lines) == 4  # t=0, 0.5, 1.0


class TestConverge:
    def test_converge_n_writes_results(self, tmp_path):
        path = write_config(tmp_path, trials=3)
        rc = cli.main(["converge-n", "--config", str(path)])
        assert rc == 0
        csv_text = (tmp_path / "out" / "converge_n.csv").read_text()
        lines = csv_text.strip().splitlines()
        assert lines[0] == "mode,s,n,dt,trials,mse,std,stderr,seed"
        assert lines[-1].startswith("# slope=")
        svg = (tmp_path / "out" / "converge_n.svg").read_text()
        assert svg.startswith("<svg") and "slope" in svg

    def test_converge_dt_runs(self, tmp_path):
        body = "n = 32\ndt_list = 0.25,0.125\ndt_star = 0.03125"
        path = write_config(tmp_path, mode="vary_dt", body=body, trials=2)
        rc = cli.main(["converge-dt", "--config", str(path)])
        assert rc == 0
        assert (tmp_path / "out" / "converge_dt.csv").exists()

    def test_determinism_across_thread_counts(self, tmp_path):
        path = write_config(tmp_path, trials=4)
        assert cli.main(["converge-n", "--config", str(path), "--threads", "1"]) == 0
        first = (tmp_path / "out" / "converge_n.csv").read_bytes()
        assert cli.main(["converge-n", "--config", str(path), "--threads", "2"]) == 0
        assert (tmp_path / "out" / "converge_n.csv").read_bytes() == first

    def test_empty_n_list_config_error(self, tmp_path):
        body = "dt = 0.25\nn_list =\nn_star = 128"
        path = write_config(tmp_path, body=body)
        assert cli.main(["converge-n", "--config", str(path)]) == 2

    def test_mode_mismatch_config_error(self, tmp_path):
        path = write_config(tmp_path, mode="vary_n")
        assert cli.main(["converge-dt", "--config", str(path)]) == 2

    def test_marginal_reference_exits_three(self, tmp_path):
        # measuring right at n_star/2 forces the guard ratio to 1
        body = "dt = 0.25\nn_list = 8,16,32\nn_star = 64"
        path = write_config(tmp_path, body=body, trials=3)
        rc = cli.main(["converge-n", "--config", str(path)])
        assert rc == 3

    def test_invalid_config_exits_two(self, tmp_path):
        path = tmp_path / "broken.ini"
        path.write_text("[problem\nkernel = band\n")
        assert cli.main(["converge-n", "--config", str(path)]) == 2
        assert cli.main(["converge-n", "--config", str(tmp_path / "nope.ini")]) == 2


class TestCheckAndInfo:
    def test_check_passes_on_defaults(self, tmp_path, capsys):
        path = write_config(tmp_path, trials=3)
        rc = cli.main(["check", "--config", str(path), "--trials", "2000"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "kernel_bounds" in out and "sine_moment" in out
        assert "FAIL" not in out

    def test_check_trace_zero_noise(self, tmp_path):
        path = write_config(tmp_path, trials=3)
        path.write_text(path.read_text().replace("M = 16", "M = 0"))
        assert cli.main(["check", "--config", str(path)]) == 0

    def test_check_failure_exits_four(self, tmp_path, monkeypatch):
        path = write_config(tmp_path, trials=3)
        monkeypatch.setattr(
            cli, "_check_rows",
            lambda cfg, trials: [("rigged", "1", "<= 0", False)],
        )
        assert cli.main(["check", "--config", str(path)]) == 4

    def test_psi_command(self, tmp_path, capsys):
        path = write_config(tmp_path)
        rc = cli.main(["psi", "--config", str(path)])
        out = capsys.readouterr().out
        assert rc == 0
        assert "fitted slope" in out
        assert (tmp_path / "out" / "psi.csv").exists()

    def test_kernel_info(self, tmp_path, capsys):
        path = write_config(tmp_path)
        rc = cli.main(["kernel-info", "--config", str(path)])
        out = capsys.readouterr().out
        assert rc == 0
        assert "K1 = 0.5" in out
        assert "L1y_Linfx" in out

    def test_env_threads_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.ENV_THREADS, "2")
        path = write_config(tmp_path, trials=2)
        assert cli.main(["converge-n", "--config", str(path)]) == 0
