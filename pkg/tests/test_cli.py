import subprocess
import sys

import pytest

from quadhog import cli
from quadhog.experiments import WORKERS_ENV


def args(*argv):
    return cli.build_parser().parse_args(list(argv))


def test_precedence(tmp_path, monkeypatch):
    cfg_file = tmp_path / "run.toml"
    cfg_file.write_text('seed = 3\nworkers = 2\n[noise]\ntrain_sizes = [400]\nfeature = "quad"\n')
    cfg = cli.config_from_args(args("noise", "--config", str(cfg_file)))
    assert (cfg.seed, cfg.workers, cfg.train_sizes, cfg.feature) == (3, 2, (400,), ("quad",))
    monkeypatch.setenv(WORKERS_ENV, "5")
    assert cli.config_from_args(args("noise", "--config", str(cfg_file))).workers == 5
    cfg = cli.config_from_args(args("noise", "--config", str(cfg_file), "--workers", "1", "--seed", "9",
                                    "--feature", "pixels", "--feature", "quad"))
    assert (cfg.workers, cfg.seed, cfg.feature) == (1, 9, ("pixels", "quad"))


def test_defaults_per_command():
    assert cli.config_from_args(args("sweep")).train_sizes == (300, 1500, 15000)
    assert cli.config_from_args(args("detect", "--c-grid", "0.5,2")).c_grid == (0.5, 2.0)


def test_unknown_key_is_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("learning_rate = 0.1\n")
    assert cli.main(["noise", "--config", str(bad)]) == 2
    assert "unknown keys" in capsys.readouterr().err


def test_invalid_value_is_config_error(capsys):
    assert cli.main(["noise", "--C", "-1"]) == 2


def test_failed_check_exit_code(capsys):
    # no quad row, so the quad checks cannot pass
    code = cli.main(["noise", "--feature", "pixels", "--train-sizes", "100", "--test-size", "100"])
    out = capsys.readouterr().out
    assert code == 1
    assert "FAIL" in out and "pixels" in out


def test_verify_subprocess():
    proc = subprocess.run([sys.executable, "-m", "quadhog.cli", "verify"], capture_output=True, text=True,
                          timeout=300)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert proc.stdout.count("PASS") == 2


def test_requires_subcommand():
    with pytest.raises(SystemExit):
        cli.main([])
