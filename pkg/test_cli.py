"""
Tests for configuration parsing, the run pipeline and its artifacts
"""
import json
import logging
import math

import numpy as np
import pytest
from scipy.special import erfc

from src.database import get_run, ledger_url
from src.errors import ConfigError
from src.main import main, parse_config, run
from src.schemas import RunStatusEnum

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

SMALL = {"nt": 17, "nx": 17}


def _config(tmp_path, subcommand, **overrides):
    return parse_config(overrides={"subcommand": subcommand, "output_dir": str(tmp_path), **SMALL, **overrides})


def _column(path, index):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)[:, index]


def test_parse_config_defaults_and_errors(tmp_path):
    config = parse_config(overrides={"subcommand": "invert", "case": "MMS-1", "alpha": 0.7})
    assert (config.epsilon, config.tol, config.max_iter) == (0.5, 1e-10, 60)

    with pytest.raises(ConfigError, match=r"alpha must lie in \(0,1\)"):
        parse_config(overrides={"subcommand": "invert", "alpha": 1.5})
    with pytest.raises(ConfigError, match=r"l0 must lie in \(0,pi\)"):
        parse_config(overrides={"subcommand": "invert", "l0": 0.0})

    path = tmp_path / "run.json"
    path.write_text(json.dumps({"subcommand": "invert", "case": "MMS-1", "bogus": 1}))
    with pytest.raises(ConfigError, match="unknown key 'bogus'"):
        parse_config(str(path))
    with pytest.raises(ConfigError):
        parse_config(str(tmp_path / "missing.json"))


def test_flags_override_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"subcommand": "forward", "case": "MMS-1", "nt": 9}))
    config = parse_config(str(path), {"nt": 17, "nx": None})
    assert config.nt == 17
    assert config.nx == 65


def test_invert_zero_data(tmp_path):
    """MMS-0 inverts to h = 0 with exit status 0"""
    logger.info("Testing invert on MMS-0...")
    exit_code, manifest = run(_config(tmp_path, "invert", case="MMS-0"))
    assert exit_code == 0
    assert manifest.status == RunStatusEnum.SUCCEEDED
    assert float(np.max(np.abs(_column(tmp_path / "h.csv", 2)))) <= 1e-12
    with open(tmp_path / "h.csv") as handle:
        assert handle.readline().strip() == "t,x,h"

    written = json.loads((tmp_path / "manifest.json").read_text())
    assert written["status"] == "SUCCEEDED"
    assert {f["path"] for f in written["files"]} >= {"h.csv", "convergence.json", "estimates.json"}
    logger.info("✓ h.csv all zeros")


def test_invert_manufactured_case(tmp_path):
    exit_code, _ = run(_config(tmp_path, "invert", case="MMS-1", dump_series=True, dump_coefficients=True))
    assert exit_code == 0
    convergence = json.loads((tmp_path / "convergence.json").read_text())
    assert convergence["converged"]
    assert all(r is None or r <= 0.6 for r in convergence["ratios"])
    assert convergence["method_selections"]["psi_xx"] == "numerical"

    estimates = json.loads((tmp_path / "estimates.json").read_text())
    assert all(check["holds"] for check in estimates["bound_checks"])
    assert (tmp_path / "series.csv").exists()
    k = _column(tmp_path / "coefficients.csv", 0)
    np.testing.assert_array_equal(k, np.arange(1, 17))


def test_invert_is_deterministic(tmp_path):
    outputs = []
    for name in ("a", "b"):
        run(_config(tmp_path / name, "invert", case="MMS-1"))
        outputs.append(((tmp_path / name / "h.csv").read_bytes(), (tmp_path / name / "convergence.json").read_bytes()))
    assert outputs[0] == outputs[1]


def test_non_convergence_exit_status(tmp_path):
    exit_code, manifest = run(_config(tmp_path, "invert", case="MMS-1", max_iter=1))
    assert exit_code == 2
    assert manifest.status == RunStatusEnum.NOT_CONVERGED
    assert (tmp_path / "h.csv").exists()


def test_failure_exit_status(tmp_path):
    exit_code, manifest = run(_config(tmp_path, "invert", case="MMS-9"))
    assert exit_code == 1
    assert manifest.status == RunStatusEnum.FAILED
    assert "RegistryError" in manifest.message
    assert json.loads((tmp_path / "manifest.json").read_text())["exit_code"] == 1


def test_forward_artifacts(tmp_path):
    exit_code, manifest = run(_config(tmp_path, "forward", case="MMS-1", dump_mode=1, dump_full=True))
    assert exit_code == 0
    for name in ("trace.csv", "mode_1.csv", "full.csv"):
        assert (tmp_path / name).exists()
    assert len(_column(tmp_path / "trace.csv", 2)) == 17 * 17
    records = {f.path: f for f in manifest.files}
    assert len(records["trace.csv"].sha256) == 64
    assert records["trace.csv"].bytes == (tmp_path / "trace.csv").stat().st_size


def test_synthesize_then_invert_from_file(tmp_path):
    exit_code, _ = run(_config(tmp_path / "syn", "synthesize", case="MMS-1"))
    assert exit_code == 0
    psi_file = tmp_path / "syn" / "psi.csv"
    exit_code, _ = run(_config(tmp_path / "inv", "invert", case="MMS-1", psi_file=str(psi_file)))
    assert exit_code == 0

    exit_code, manifest = run(_config(tmp_path / "bad", "invert", case="MMS-1", nt=9, psi_file=str(psi_file)))
    assert exit_code == 1
    assert "GridError" in manifest.message


def test_ledger_records_iterations(tmp_path):
    exit_code, manifest = run(_config(tmp_path, "invert", case="MMS-1"))
    record = get_run(ledger_url(str(tmp_path)), manifest.run_id)
    assert record["status"] == "SUCCEEDED"
    assert record["exit_code"] == exit_code
    convergence = json.loads((tmp_path / "convergence.json").read_text())
    assert len(record["iterations"]) == convergence["iterations"]


def test_verify_subcommand(tmp_path, capsys):
    code = main([
        "verify", "--case", "MMS-1", "--nt", "17", "--ladder-nx", "9", "17", "33",
        "--reference", "successive", "--output-dir", str(tmp_path),
    ])
    assert code == 0
    assert "observed order" in capsys.readouterr().out
    study = json.loads((tmp_path / "study.json").read_text())
    assert study["axis"] == "space"
    assert study["residual"] <= 1e-10


def test_check_conditions_prints_value(tmp_path, capsys):
    code = main(["check-conditions", "--case", "MMS-1", "--T", "2.0", "--nt", "9", "--nx", "9",
                 "--output-dir", str(tmp_path)])
    assert code == 0
    first = capsys.readouterr().out.splitlines()[0]
    assert float(first.split(":")[1]) > 1.0


def test_ml_eval_prints_twelve_digits(tmp_path, capsys):
    code = main(["ml-eval", "--alpha", "0.5", "--z", "-1", "--output-dir", str(tmp_path)])
    assert code == 0
    value = float(capsys.readouterr().out.strip())
    assert value == pytest.approx(math.e * erfc(1.0), rel=1e-11)


def test_ml_eval_accepts_alpha_one(tmp_path, capsys):
    """E_{1,1}(1) = e; only ml-eval admits alpha = 1"""
    code = main(["ml-eval", "--alpha", "1", "--z", "1", "--output-dir", str(tmp_path)])
    assert code == 0
    value = float(capsys.readouterr().out.strip())
    assert value == pytest.approx(math.e, rel=1e-11)

    with pytest.raises(ConfigError, match=r"alpha must lie in \(0,1\]"):
        parse_config(overrides={"subcommand": "ml-eval", "alpha": 1.5, "z": 1.0})
    with pytest.raises(ConfigError, match=r"alpha must lie in \(0,1\)"):
        parse_config(overrides={"subcommand": "invert", "alpha": 1.0})
    logger.info(f"✓ E_1(1) = {value:.12g}")


def test_malformed_psi_file_fails_cleanly(tmp_path):
    """A non-numeric psi cell is a data error with exit status 1 and a finished manifest"""
    psi_file = tmp_path / "psi.csv"
    psi_file.write_text("t,x,psi\n0,0,abc\n")
    exit_code, manifest = run(_config(tmp_path / "run", "invert", case="MMS-1", psi_file=str(psi_file)))
    assert exit_code == 1
    assert manifest.status == RunStatusEnum.FAILED
    assert "DataError" in manifest.message
    assert "malformed psi file" in manifest.message
    on_disk = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert on_disk["status"] == "FAILED"
    assert on_disk["exit_code"] == 1


def test_unexpected_error_finishes_manifest(tmp_path, monkeypatch):
    """Errors outside the package hierarchy still end the run as FAILED"""
    def explode(ctx):
        raise RuntimeError("solver blew up")

    monkeypatch.setattr("src.main._run_forward", explode)
    exit_code, manifest = run(_config(tmp_path, "forward", case="MMS-1"))
    assert exit_code == 1
    assert manifest.status == RunStatusEnum.FAILED
    assert manifest.message == "RuntimeError: solver blew up"
    on_disk = json.loads((tmp_path / "manifest.json").read_text())
    assert on_disk["status"] == "FAILED"
    assert on_disk["exit_code"] == 1
    assert on_disk["finished_at"] is not None
    record = get_run(ledger_url(str(tmp_path)), manifest.run_id)
    assert record["status"] == "FAILED"


def test_main_rejects_bad_config(tmp_path):
    assert main(["invert", "--case", "MMS-1", "--alpha", "1.5", "--output-dir", str(tmp_path)]) == 1
