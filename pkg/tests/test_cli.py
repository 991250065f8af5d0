"""Command line runner: config validation, reports, exit codes, determinism."""

import copy
import json

import pytest

from duality_lab.cli import main

SPACE2 = {"prob": [0.5, 0.5], "partitions": [[[0, 1]], [[0], [1]]]}
SPACE4 = {
    "prob": [0.25] * 4,
    "partitions": [[[0, 1, 2, 3]], [[0, 1], [2, 3]], [[0], [1], [2], [3]]],
}


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _fix_a_cfg():
    return {
        "version": "duality-lab/1",
        "space": copy.deepcopy(SPACE2),
        "market": {"dM": [[0.1, -0.1]], "lam": [[0.0, 0.0]]},
        "utility": {"kind": "log"},
        "tau": {"t": 0},
        "checks": ["duality"],
    }


def _stability_cfg():
    return {
        "version": "duality-lab/1",
        "space": copy.deepcopy(SPACE4),
        "market": {
            "dM": [[0.1, 0.1, -0.1, -0.1], [0.1, -0.1, 0.1, -0.1]],
            "lam": [[1.0] * 4, [1.0] * 4],
        },
        "utility": {"kind": "log"},
        "tau": {"t": 1},
        "sequence": {"delta": [[0.1] * 4, [0.1] * 4], "decay": "1/n",
                     "N_max": 16},
        "checks": ["duality", "stability", "nets"],
        "seed": 7,
    }


# --- validate -------------------------------------------------------------

def test_validate_ok(tmp_path, capsys):
    assert main(["validate", _write(tmp_path, _fix_a_cfg())]) == 0
    assert capsys.readouterr().out.strip() == "ok"


def test_validate_bad_probabilities(tmp_path, capsys):
    cfg = _fix_a_cfg()
    cfg["space"]["prob"] = [0.5, 0.6]
    assert main(["validate", _write(tmp_path, cfg)]) == 2
    assert "space" in capsys.readouterr().err


def test_validate_non_refining_partitions(tmp_path, capsys):
    cfg = _fix_a_cfg()
    cfg["space"] = {
        "prob": [0.25] * 4,
        "partitions": [
            [[0, 1, 2, 3]], [[0, 1], [2, 3]], [[0, 2], [1], [3]],
            [[0], [1], [2], [3]],
        ],
    }
    assert main(["validate", _write(tmp_path, cfg)]) == 2
    assert "refine" in capsys.readouterr().err


def test_validate_unknown_key_and_check(tmp_path, capsys):
    cfg = _fix_a_cfg()
    cfg["frobnicate"] = 1
    cfg["checks"] = ["duality", "telepathy"]
    assert main(["validate", _write(tmp_path, cfg)]) == 2
    err = capsys.readouterr().err
    assert "frobnicate" in err and "telepathy" in err


def test_validate_bad_version(tmp_path, capsys):
    cfg = _fix_a_cfg()
    cfg["version"] = "duality-lab/9"
    assert main(["validate", _write(tmp_path, cfg)]) == 2
    assert "version" in capsys.readouterr().err


def test_validate_bad_tau(tmp_path, capsys):
    cfg = _fix_a_cfg()
    cfg["tau"] = [0, 1]  # {tau = 0} is not measurable at time 0
    assert main(["validate", _write(tmp_path, cfg)]) == 2
    assert "stopping time" in capsys.readouterr().err


def test_validate_malformed_json(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["validate", str(path)]) == 2
    assert "JSON" in capsys.readouterr().err


def test_validate_reports_arbitrage(tmp_path, capsys):
    cfg = _fix_a_cfg()
    cfg["market"]["lam"] = [[20.0, 20.0]]  # drift overwhelms the noise
    assert main(["validate", _write(tmp_path, cfg)]) == 2
    assert "market" in capsys.readouterr().err


# --- run ------------------------------------------------------------------

def test_run_duality_fix_a(tmp_path):
    cfg = _write(tmp_path, _fix_a_cfg())
    assert main(["run", cfg, "--out", str(tmp_path / "out")]) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    dua = report["checks"]["duality"]
    # [DERIVED] driftless log problem: u(1) = 0, v(1) = V(1) = -1
    assert dua["u"][0] == pytest.approx(0.0, abs=1e-9)
    assert dua["v"][0] == pytest.approx(-1.0, abs=1e-9)
    assert dua["pass"] is True and report["pass"] is True
    # csv exists with only the header when no stability check ran
    lines = (tmp_path / "out" / "report.csv").read_text().splitlines()
    assert lines == ["n,dZ,dXT,dXtau,du,dv,dvprime,ducp"]


def test_run_numbers_have_12_significant_digits(tmp_path):
    cfg = _write(tmp_path, _fix_a_cfg())
    main(["run", cfg, "--out", str(tmp_path / "out")])
    text = (tmp_path / "out" / "report.json").read_text()
    report = json.loads(text)
    val = report["checks"]["duality"]["dual_relation_residual"]
    assert f"{val:.12g}" in text


def test_run_arbitrage_exits_3(tmp_path, capsys):
    cfg = _fix_a_cfg()
    cfg["market"]["lam"] = [[20.0, 20.0]]
    assert main(["run", _write(tmp_path, cfg)]) == 3
    assert "NFLVR check failed" in capsys.readouterr().err


def test_run_failing_tolerance_exits_1(tmp_path):
    cfg = _write(tmp_path, _fix_a_cfg())
    out = str(tmp_path / "out")
    assert main(["run", cfg, "--out", out, "--tol-scale", "1e-9"]) == 1
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["pass"] is False


def test_run_stability_writes_csv_rows(tmp_path):
    cfg = _write(tmp_path, _stability_cfg())
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out)]) == 0
    lines = (out / "report.csv").read_text().splitlines()
    assert len(lines) == 17  # header + one row per sequence index
    assert lines[0] == "n,dZ,dXT,dXtau,du,dv,dvprime,ducp"
    last = lines[-1].split(",")
    assert int(last[0]) == 16
    assert float(last[1]) <= 1e-3  # dZ at the final index
    report = json.loads((out / "report.json").read_text())
    assert set(report["checks"]) == {"duality", "stability", "nets"}
    assert report["checks"]["nets"]["convex_violations"] == 0


def test_run_deterministic_across_jobs(tmp_path):
    cfg = _write(tmp_path, _stability_cfg())
    outs = []
    for jobs, tag in ((1, "a"), (8, "b")):
        out = tmp_path / tag
        assert main(["run", cfg, "--out", str(out), "--jobs", str(jobs)]) == 0
        outs.append(
            ((out / "report.json").read_bytes(), (out / "report.csv").read_bytes())
        )
    assert outs[0] == outs[1]


def test_run_seed_override_recorded(tmp_path):
    cfg = _write(tmp_path, _fix_a_cfg())
    out = tmp_path / "out"
    main(["run", cfg, "--out", str(out), "--seed", "99"])
    report = json.loads((out / "report.json").read_text())
    assert report["seed"] == 99
