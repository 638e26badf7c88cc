import hashlib
import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from htcp.cli import config_hash, load_schema, main
from htcp.kernel import GridDensity
from htcp.validation import resolve_threads

PARETO = {"kind": "pareto_lomax", "alpha": 2.5, "scale": 1.0}


def write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return str(path)


def read(path):
    return json.loads(path.read_text())


def test_schema_is_valid():
    jsonschema.Draft202012Validator.check_schema(load_schema())


def test_verify_compound_tail_constant(tmp_path):
    cfg = {"command": "verify", "family": PARETO, "grid": {"origin": 0, "step": 0.05, "n_cells": 40000},
           "params": {"check": "theorem11", "lam": 1.0, "window": {"x_lo": 100, "x_hi": 800}}}
    out = tmp_path / "out"
    assert main(["verify", "--config", write(tmp_path, "c.json", cfg), "--out", str(out)]) == 0
    verdict = read(out / "verdict.json")
    assert abs(verdict["limit_estimate"] - 1) < 0.05 and verdict["passed"] is True
    assert verdict["config_hash"] == config_hash(cfg)
    assert verdict["tol"] == 0.05 and verdict["window"]["x_hi"] == 800
    assert (out / "report.csv").read_text().startswith("x,ratio\n")


def test_verdict_failure_exit_code(tmp_path):
    cfg = {"family": {"kind": "exponential", "rate": 1.0}, "grid": {"origin": 0, "step": 0.05, "n_cells": 1000},
           "params": {"check": "subexp", "window": {"x_lo": 5, "x_hi": 30}}}
    out = tmp_path / "out"
    assert main(["verify", "--config", write(tmp_path, "c.json", cfg), "--out", str(out)]) == 2
    assert read(out / "verdict.json")["verdict"] == "not subexponential"


def test_series_cap_error(tmp_path):
    cfg = {"family": {"kind": "exponential"}, "grid": {"origin": 0, "step": 0.01, "n_cells": 1000},
           "params": {"series": "poisson", "lam": 400, "t": 2}}
    out = tmp_path / "out"
    assert main(["compound", "--config", write(tmp_path, "c.json", cfg), "--out", str(out)]) == 1
    err = read(out / "error.json")
    assert err["error"] == "SeriesTruncationError" and err["cap"] == 512
    assert "512" in err["message"]
    assert any(f["path"] == "error.json" for f in read(out / "manifest.json")["files"])


def test_compound_outputs(tmp_path):
    cfg = {"family": {"kind": "exponential"}, "grid": {"origin": 0, "step": 0.01, "n_cells": 3000},
           "params": {"series": "negbin", "alpha": 1.0, "lam": 0.5}}
    out = tmp_path / "out"
    assert main(["compound", "--config", write(tmp_path, "c.json", cfg), "--out", str(out)]) == 0
    dens = GridDensity.from_csv(out / "density.csv")
    x = np.array([0.5, 5.0, 10.0])
    assert np.allclose(dens.value_at(x), 0.5 * np.exp(-0.5 * x), rtol=1e-2)
    side = read(out / "series_report.json")
    assert set(side) >= {"terms_used", "residual_weight", "defect", "atom", "config_hash"}
    assert side["atom"] == pytest.approx(0.5)


def test_walk_negative_steps(tmp_path):
    cfg = {"family": {"kind": "exponential"}, "grid": {"origin": -30, "step": 0.01, "n_cells": 6000},
           "params": {"shift": 0.5, "sign": -1, "spitzer_depth": 50}}
    out = tmp_path / "out"
    assert main(["walk", "--config", write(tmp_path, "c.json", cfg), "--out", str(out)]) == 0
    lines = (out / "pi_cdf.csv").read_text().splitlines()
    assert lines[0] == "x,F" and all(line.endswith(",1.0") for line in lines[1:])
    summary = read(out / "supremum.json")
    assert summary["atom"] == 1.0 and summary["B"] == 0.0


def test_walk_and_simulate_agree(tmp_path):
    cfg = {"family": {"kind": "exponential"}, "grid": {"origin": -40, "step": 0.01, "n_cells": 8000},
           "params": {"shift": 2.0, "spitzer_depth": 100, "mc_paths": 50000, "barrier": 40, "compare": True,
                      "ks_tolerance": 0.02, "seed": 5}}
    path = write(tmp_path, "c.json", cfg)
    assert main(["walk", "--config", path, "--out", str(tmp_path / "w")]) == 0
    assert main(["simulate", "--config", path, "--out", str(tmp_path / "s")]) == 0
    sim = read(tmp_path / "s" / "simulate.json")
    assert sim["comparison"]["passed"] and sim["seed"] == 5
    assert (tmp_path / "s" / "mc_cdf.csv").read_text().startswith("x,F\n")


def run_twice(tmp_path, command, cfg, *extra_a, extra_b=None):
    path = write(tmp_path, "c.json", cfg)
    main([command, "--config", path, "--out", str(tmp_path / "a"), *extra_a])
    main([command, "--config", path, "--out", str(tmp_path / "b"), *(extra_b if extra_b is not None else extra_a)])
    return (tmp_path / "a" / "manifest.json").read_bytes(), (tmp_path / "b" / "manifest.json").read_bytes()


def test_deterministic_outputs(tmp_path):
    cfg = {"family": PARETO, "grid": {"origin": 0, "step": 0.05, "n_cells": 4000},
           "params": {"check": "subexp", "window": {"x_lo": 20, "x_hi": 150}}}
    a, b = run_twice(tmp_path, "verify", cfg)
    assert a == b


def test_simulate_thread_count_does_not_matter(tmp_path):
    cfg = {"family": {"kind": "exponential"}, "grid": {"origin": -20, "step": 0.05, "n_cells": 800},
           "params": {"shift": 2.0, "mc_paths": 3000, "barrier": 20}}
    a, b = run_twice(tmp_path, "simulate", cfg, "--threads", "1", "--seed", "42", extra_b=["--threads", "4", "--seed", "42"])
    assert a == b


def test_seed_flag_overrides(tmp_path):
    cfg = {"family": {"kind": "exponential"}, "grid": {"origin": -20, "step": 0.05, "n_cells": 800},
           "params": {"shift": 2.0, "mc_paths": 3000, "barrier": 20, "seed": 1}}
    a, b = run_twice(tmp_path, "simulate", cfg, "--seed", "1", extra_b=["--seed", "2"])
    assert a != b


def test_manifest_hashes(tmp_path):
    cfg = {"family": {"kind": "exponential"}, "grid": {"origin": 0, "step": 0.1, "n_cells": 300}}
    out = tmp_path / "out"
    main(["compound", "--config", write(tmp_path, "c.json", cfg), "--out", str(out)])
    files = read(out / "manifest.json")["files"]
    assert {f["path"] for f in files} == {"density.csv", "series_report.json"}
    for f in files:
        assert hashlib.sha256((out / f["path"]).read_bytes()).hexdigest() == f["sha256"]


@pytest.mark.parametrize("text", ["{not json", json.dumps({"family": {"kind": "exponential"}}),
                                  json.dumps({"family": {"kind": "exponential"},
                                              "grid": {"origin": 0, "step": 0.1, "n_cells": 3}, "extra": 1}),
                                  json.dumps({"family": {"kind": "exponential", "shape": 1},
                                              "grid": {"origin": 0, "step": 0.1, "n_cells": 3}}),
                                  json.dumps({"family": {"kind": "exponential"},
                                              "grid": {"origin": 0, "step": 0.1, "n_cells": 3},
                                              "params": {"lambda": 1}})],
                         ids=["bad-json", "missing-grid", "unknown-key", "unknown-family-key", "unknown-param"])
def test_invalid_configs(tmp_path, text):
    assert main(["compound", "--config", write(tmp_path, "c.json", text), "--out", str(tmp_path / "o")]) == 64


def test_unreadable_config(tmp_path):
    assert main(["compound", "--config", str(tmp_path / "missing.json")]) == 64


def test_command_mismatch(tmp_path):
    cfg = {"command": "walk", "family": {"kind": "exponential"}, "grid": {"origin": 0, "step": 0.1, "n_cells": 3}}
    assert main(["compound", "--config", write(tmp_path, "c.json", cfg), "--out", str(tmp_path / "o")]) == 64


def test_threads_fallback():
    assert resolve_threads(None, {"HTCP_THREADS": "6"}) == 6
    assert resolve_threads(3, {"HTCP_THREADS": "6"}) == 3
    assert resolve_threads(None, {}) == 1


def test_bad_threads_env_is_an_error(tmp_path, monkeypatch):
    monkeypatch.setenv("HTCP_THREADS", "lots")
    cfg = {"family": {"kind": "exponential"}, "grid": {"origin": 0, "step": 0.1, "n_cells": 30}}
    out = tmp_path / "o"
    assert main(["compound", "--config", write(tmp_path, "c.json", cfg), "--out", str(out)]) == 1
    assert read(out / "error.json")["error"] == "GridError"


def test_module_entry_point(tmp_path):
    cfg = {"family": {"kind": "uniform", "low": 0, "high": 1}, "grid": {"origin": 0, "step": 0.25, "n_cells": 8}}
    path = write(tmp_path, "c.json", cfg)
    res = subprocess.run([sys.executable, "-m", "htcp", "compound", "--config", path, "--out", str(tmp_path / "o")],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
