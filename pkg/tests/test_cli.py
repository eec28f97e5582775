import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from regensim import __version__
from regensim.cli import main
from regensim.errors import ConfigError, UnknownKind
from regensim.runner import KINDS, describe, parse_config

TWO_STATE = {"type": "ctmc", "Q": [[-1, 1], [2, -2]]}
OU = {"type": "ou", "theta": 1.0, "sigma": 1.4142135623730951, "delta": 0.5}

SMALL = {
    "occupation": {"kind": "occupation", "seed": 7, "T": 2000, "reps": 4,
                   "model": {"type": "ctmc", "Q": [[-2, 1, 1], [1, -3, 2], [0.5, 0.5, -1]]}},
    "batch-means": {"kind": "batch-means", "seed": 5, "T": 5000, "reps": 8, "model": TWO_STATE,
                    "functional": {"name": "indicator", "states": [1]}, "schedule": {"exponent": 0.5},
                    "tolerance": 0.5},
    "mse": {"kind": "mse", "seed": 6, "T": 2000, "reps": 100, "model": OU, "functional": {"name": "identity"},
            "schedule": {"exponent": 0.5}, "ratio_band": [0.5, 2.0]},
    "bm-clt": {"kind": "bm-clt", "seed": 8, "T": 2000, "reps": 200, "model": OU,
               "functional": {"name": "identity"}, "schedule": {"exponent": 0.5}},
    "splitting-verify": {"kind": "splitting-verify", "seed": 2024, "T": 20000, "model": TWO_STATE,
                         "functional": {"name": "indicator", "states": [1]}, "C": [0], "tolerance": 0.3},
    "fluctuation": {"kind": "fluctuation", "seed": 3, "T": 5000, "reps": 2, "model": TWO_STATE,
                    "functional": {"name": "indicator", "states": [1]}, "window_exponent": 0.9},
    "diffusion-regularity": {"kind": "diffusion-regularity", "seed": 0, "model": {"type": "sde", "name": "ou"},
                             "probes": [-3, -2, -1, 1, 2, 3]},
}


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def run_cli(tmp_path, doc, *extra, out="out"):
    out_dir = tmp_path / out
    code = main(["run", write_config(tmp_path, doc), "--out", str(out_dir), *extra])
    return code, out_dir


def read_dir(path):
    return {p.name: p.read_bytes() for p in sorted(Path(path).iterdir())}


@pytest.mark.parametrize("kind", KINDS)
def test_every_kind_runs(tmp_path, kind, capsys):
    code, out = run_cli(tmp_path, SMALL[kind])
    assert code == 0, capsys.readouterr()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["kind"] == kind and manifest["passed"] is True
    assert manifest["version"] == __version__
    assert set(manifest["artifacts"]) == set(os.listdir(out))
    printed = capsys.readouterr().out
    assert all(f"PASS  {name}" in printed for name in manifest["checks"])


def test_batch_means_csv(tmp_path):
    _, out = run_cli(tmp_path, SMALL["batch-means"])
    lines = (out / "batch_means.csv").read_text().splitlines()
    assert lines[0] == "T,ell,k,sigma2_hat,oracle_sigma2,seed"
    assert len(lines) == 1 + 8 + 1 and lines[-1].endswith(",mean")


def test_regeneration_log_csv(tmp_path):
    _, out = run_cli(tmp_path, SMALL["splitting-verify"])
    header = (out / "regeneration_log.csv").read_text().splitlines()[0]
    assert header == "n,S_n,R_n,rho_n,xi_n,first_cycle_flag"


def test_failed_check_exit_code(tmp_path, capsys):
    doc = dict(SMALL["batch-means"], tolerance=1e-9)
    code, out = run_cli(tmp_path, doc)
    assert code == 1 and "FAIL  relative-error" in capsys.readouterr().out
    assert json.loads((out / "manifest.json").read_text())["passed"] is False


@pytest.mark.parametrize("seed", [1, 99])
def test_deterministic_artifacts(tmp_path, seed):
    doc = SMALL["batch-means"]
    run_cli(tmp_path, doc, "--seed", str(seed), out="a")
    run_cli(tmp_path, doc, "--seed", str(seed), out="b")
    assert read_dir(tmp_path / "a") == read_dir(tmp_path / "b")


def test_threads_do_not_change_output(tmp_path):
    doc = SMALL["occupation"]
    run_cli(tmp_path, doc, "--threads", "1", out="one")
    run_cli(tmp_path, doc, "--threads", "2", out="two")
    assert read_dir(tmp_path / "one") == read_dir(tmp_path / "two")


def test_seed_override(tmp_path):
    doc = SMALL["batch-means"]
    run_cli(tmp_path, doc, out="a")
    run_cli(tmp_path, doc, "--seed", "6", out="b")
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["master_seed"] == 5 and mb["master_seed"] == 6
    assert ma["config_sha256"] != mb["config_sha256"]
    assert ma["replicate_seeds"] != mb["replicate_seeds"] and len(set(ma["replicate_seeds"])) == 8


@pytest.mark.parametrize(
    "patch,field",
    [
        ({"schedule": {"exponent": 1.5}}, "schedule.exponent"),
        ({"kind": "nonsense"}, "kind"),
        ({"model": {"type": "martian"}}, "model.type"),
        ({"reps": 0}, "reps"),
        ({"seed": -1}, "seed"),
        ({"T": -5}, "T"),
        ({"functional": {"name": "bogus"}}, "functional.name"),
        ({"model": {"type": "ctmc", "Q": [[-1, 2], [2, -2]]}}, "model.Q"),
    ],
)
def test_config_errors(tmp_path, capsys, patch, field):
    doc = dict(SMALL["batch-means"], **patch)
    with pytest.raises(ConfigError) as info:
        parse_config(doc)
    assert info.value.field == field
    code, _ = run_cli(tmp_path, doc)
    assert code == 2 and field in capsys.readouterr().err


def test_short_probe_grid(tmp_path, capsys):
    code, _ = run_cli(tmp_path, dict(SMALL["diffusion-regularity"], probes=[-1, 1]))
    assert code == 2 and "probes" in capsys.readouterr().err


def test_mse_needs_replicates(tmp_path):
    with pytest.raises(ConfigError) as info:
        parse_config(dict(SMALL["mse"], reps=50))
    assert info.value.field == "reps"


def test_missing_file(tmp_path):
    assert main(["run", str(tmp_path / "absent.json")]) == 2


def test_bad_threads(tmp_path):
    code, _ = run_cli(tmp_path, SMALL["occupation"], "--threads", "0")
    assert code == 2


def test_describe(capsys):
    assert main(["describe", "mse"]) == 0
    assert "2 sigma^4 ell / T" in capsys.readouterr().out
    assert main(["describe", "fluctuation"]) == 0
    assert "beta_T" in capsys.readouterr().out


@pytest.mark.parametrize("kind", KINDS)
def test_describe_every_kind(kind):
    text = describe(kind)
    assert "Pass" in text or "Checks" in text


def test_describe_unknown(capsys):
    assert main(["describe", "bogus"]) == 2
    assert "unknown experiment kind" in capsys.readouterr().err
    with pytest.raises(UnknownKind):
        describe("bogus")


def test_version(capsys):
    assert main(["version"]) == 0
    assert capsys.readouterr().out.strip() == __version__


def test_console_script(tmp_path):
    res = subprocess.run([sys.executable, "-m", "regensim.cli", "version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == __version__
