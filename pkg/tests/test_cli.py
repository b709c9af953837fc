import json
import os

import pytest

from nhxxz.cli import COLUMNS, ConfigError, main, validate_config


def _write(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _run(tmp_path, command, cfg, out="out", extra=()):
    out_dir = str(tmp_path / out)
    code = main([command, "--config", _write(tmp_path, cfg), "--out", out_dir, *extra])
    return code, out_dir


def _manifest(out_dir):
    with open(os.path.join(out_dir, "manifest.json")) as fh:
        return json.load(fh)


CASES = {
    "phase-diagram": {"model": {"n": 6, "delta": [-0.5, 0.5], "g": [0.5, 1.5]}},
    "spectrum": {"model": {"n": 2, "delta": 0.5, "g": 2.0, "m": 1}},
    "bethe-solve": {"model": {"n": 8, "delta": 0.8, "g": 0.8}},
    "dynamics": {"model": {"n": 6, "delta": 0.8, "g": 0.8},
                 "dynamics": {"t_max": 2.0, "record_every": 25}},
    "compare": {"model": {"n": [6, 8], "delta": 0.8, "g": 0.8}},
    "scaling": {"model": {"n": {"start": 10, "stop": 16, "step": 2}, "delta": 0.8, "g": 0.8}},
}


@pytest.mark.parametrize("command", sorted(CASES))
def test_subcommands(tmp_path, command):
    code, out = _run(tmp_path, command, CASES[command])
    assert code == 0
    exp = command.replace("-", "_")
    man = _manifest(out)
    assert man["experiment"] == exp and man["n_failed"] == 0
    assert set(man["versions"]) == {"python", "numpy", "scipy", "nhxxz"}
    assert man["wall_time_seconds"] >= 0
    with open(os.path.join(out, man["table"])) as fh:
        lines = fh.read().splitlines()
    assert lines[0] == ",".join(COLUMNS[exp])
    assert len(lines) > 1


def test_spectrum_rows(tmp_path):
    code, out = _run(tmp_path, "spectrum", CASES["spectrum"])
    with open(os.path.join(out, "spectrum.csv")) as fh:
        rows = [l.split(",") for l in fh.read().splitlines()[1:]]
    assert len(rows) == 2
    ims = sorted(float(r[6]) for r in rows)
    assert ims[-1] == pytest.approx(0.866025403784, abs=1e-11)


def test_scaling_fit_in_manifest(tmp_path):
    _, out = _run(tmp_path, "scaling", CASES["scaling"])
    fit = _manifest(out)["fit"]
    assert set(fit) == {"model", "intercept", "slope", "r_squared"}
    assert all(p["m"] == 2 for p in _manifest(out)["points"])


def test_csv_byte_identical(tmp_path):
    cfg = CASES["compare"]
    _, a = _run(tmp_path, "compare", cfg, "a")
    _, b = _run(tmp_path, "compare", cfg, "b", ["--threads", "2"])
    for name in ("compare.csv",):
        assert open(os.path.join(a, name), "rb").read() == open(os.path.join(b, name), "rb").read()
    _, c = _run(tmp_path, "dynamics", CASES["dynamics"], "c")
    _, d = _run(tmp_path, "dynamics", CASES["dynamics"], "d")
    for name in ("dynamics.csv", "dynamics_0000.csv"):
        assert open(os.path.join(c, name), "rb").read() == open(os.path.join(d, name), "rb").read()


def test_grid_order_with_threads(tmp_path):
    _, out = _run(tmp_path, "phase-diagram", CASES["phase-diagram"], extra=["--threads", "3"])
    with open(os.path.join(out, "phase_diagram.csv")) as fh:
        keys = [tuple(l.split(",")[:2]) for l in fh.read().splitlines()[1:]]
    assert keys == [("-0.5", "0.5"), ("-0.5", "1.5"), ("0.5", "0.5"), ("0.5", "1.5")]
    assert _manifest(out)["threads"] == 3


def test_json_format(tmp_path):
    code, out = _run(tmp_path, "bethe-solve", CASES["bethe-solve"], extra=["--format", "json"])
    assert code == 0
    with open(os.path.join(out, "bethe_solve.json")) as fh:
        table = json.load(fh)
    assert table["columns"] == COLUMNS["bethe_solve"]
    assert table["rows"][0]["residual"] <= 1e-10
    with open(os.path.join(out, "bethe_state_0000.json")) as fh:
        assert len(json.load(fh)["roots"]) == 4


def test_point_failure_exit_1(tmp_path):
    cfg = {"model": {"n": 8, "delta": [0.8, 1.2], "g": 0.8}}
    code, out = _run(tmp_path, "bethe-solve", cfg)
    assert code == 1
    man = _manifest(out)
    assert man["n_failed"] == 1
    bad = [p for p in man["points"] if p["status"] == "failed"][0]
    assert bad["delta"] == 1.2 and "error" in bad


@pytest.mark.parametrize("cfg", [
    {"model": {"n": 8, "delta": 0.8, "g": 0.8}, "colour": 1},
    {"model": {"n": 8, "delta": 0.8, "g": 0.8, "size": 3}},
    {"model": {"n": 8, "delta": [], "g": 0.8}},
    {"model": {"n": {"start": 8, "stop": 6, "step": 2}, "delta": 0.8, "g": 0.8}},
    {"model": {"n": 7, "delta": 0.8, "g": 0.8}},
    {"model": {"n": 8, "delta": 0.8, "g": -1.0}},
    {"model": {"n": 8, "delta": "x", "g": 0.8}},
    {"model": {"n": 8, "g": 0.8}},
    {"model": {"n": 8, "delta": 0.8, "g": 0.8}, "solver": {"tol": 0}},
    {"model": {"n": 8, "delta": 0.8, "g": 0.8}, "solver": {"target": "biggest"}},
    {"model": {"n": 8, "delta": 0.8, "g": 0.8}, "output": {"format": "xml"}},
    {"model": {"n": 8, "delta": 0.8, "g": 0.8}, "experiment": "spectrum"},
])
def test_config_errors_exit_2(tmp_path, cfg):
    code, out = _run(tmp_path, "compare", cfg)
    assert code == 2
    assert not os.path.exists(os.path.join(out, "manifest.json"))


def test_dense_cap_checked_before_compute(tmp_path):
    cfg = {"model": {"n": 16, "delta": 0.8, "g": 0.8}}
    code, _ = _run(tmp_path, "spectrum", cfg)
    assert code == 2
    cfg["solver"] = {"dense_cap": 20000}
    with pytest.raises(ConfigError):
        validate_config({**cfg, "solver": {"dense_cap": 100}}, "spectrum")
    # targeted experiments are not capped
    validate_config({"model": {"n": 20, "delta": 0.8, "g": 0.8}}, "compare")


def test_malformed_and_missing(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{model: 1}")
    assert main(["compare", "--config", str(bad)]) == 2
    assert main(["compare", "--config", str(tmp_path / "none.json")]) == 2
    assert main(["compare", "--config", str(bad), "--threads", "0"]) == 2


def test_range_axis():
    cfg = validate_config({"model": {"n": 8, "delta": {"start": 0.1, "stop": 0.3, "step": 0.1},
                                     "g": [0.8, 1.0]}}, "compare")
    assert [p[:2] for p in cfg.grid] == [(0.1, 0.8), (0.1, 1.0), (0.2, 0.8), (0.2, 1.0),
                                         (0.3, 0.8), (0.3, 1.0)]
