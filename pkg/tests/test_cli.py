from click.testing import CliRunner

from caliblab.cli import main

TINY_ORACLE = """
[experiment]
kind = oracle-verify

[oracle]
n_datasets = 3
max_points = 6
dims = 1
n_queries = 3
tolerance = 0.0001
"""

TINY_INTERVAL = """
[experiment]
kind = interval-sweep
replicates = 1
base_seed = 4
arms = dmixup-oracle

[distribution]
k = 2
alpha_grid = 0.5
n_train = 150

[train]
epochs = 2
batch_size = 50
hidden = 8

[metrics]
n_mc = 300
mix_cap = 0.2
"""


def _write(tmp_path, text, name="cfg.txt"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestRunCommand:
    def test_oracle_verify_succeeds(self, tmp_path):
        cfg = _write(tmp_path, TINY_ORACLE)
        out = tmp_path / "out"
        result = CliRunner().invoke(main, ["run", cfg, "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "status: ok" in result.output
        assert (out / "summary.csv").exists()
        assert (out / "record.json").exists()

    def test_failure_exit_code(self, tmp_path):
        cfg = _write(tmp_path, TINY_ORACLE.replace("tolerance = 0.0001", "tolerance = 0.0"))
        result = CliRunner().invoke(main, ["run", cfg, "--out", str(tmp_path / "o")])
        assert result.exit_code == 1
        assert "failure:" in result.output

    def test_config_error_exit_code(self, tmp_path):
        cfg = _write(tmp_path, "[experiment]\nkind = gaussian-sweep\nwat = 1\n")
        result = CliRunner().invoke(main, ["run", cfg, "--out", str(tmp_path / "o")])
        assert result.exit_code == 2
        assert "error:" in result.output

    def test_seed_and_replicates_overrides_change_output(self, tmp_path):
        cfg = _write(tmp_path, TINY_INTERVAL)
        runner = CliRunner()
        a = tmp_path / "a"
        b = tmp_path / "b"
        r1 = runner.invoke(main, ["run", cfg, "--out", str(a)])
        r2 = runner.invoke(main, ["run", cfg, "--out", str(b), "--seed", "99"])
        assert r1.exit_code == 0 and r2.exit_code == 0
        assert (a / "summary.csv").read_text() != (b / "summary.csv").read_text()

    def test_rerun_byte_identical(self, tmp_path):
        cfg = _write(tmp_path, TINY_INTERVAL)
        runner = CliRunner()
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert runner.invoke(main, ["run", cfg, "--out", str(a)]).exit_code == 0
        assert runner.invoke(main, ["run", cfg, "--out", str(b)]).exit_code == 0
        assert (a / "summary.csv").read_bytes() == (b / "summary.csv").read_bytes()

    def test_arms_override(self, tmp_path):
        cfg = _write(tmp_path, TINY_INTERVAL)
        out = tmp_path / "o"
        result = CliRunner().invoke(
            main, ["run", cfg, "--out", str(out), "--arms", "dmixup-oracle"]
        )
        assert result.exit_code == 0
        assert "dmixup-oracle" in (out / "summary.csv").read_text()
