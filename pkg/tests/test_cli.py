import json
import shutil
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import pytest

from stgeyer import FitResult, PointPattern, SpacetimeWindow, StudyReport
from stgeyer.cli import main
from stgeyer.fileio import (
    ConfigError,
    PatternFileError,
    load_config,
    read_pattern_csv,
    validate_config,
    write_pattern_csv,
)

DATA = Path(__file__).parent / "data"

MODEL1_CFG = {
    "model": {
        "beta": 70,
        "scales": [
            {"gamma": 0.5, "r": 0.1, "q": 0.05, "s": 1},
            {"gamma": 1.5, "r": 0.11, "q": 0.1, "s": 2},
        ],
    },
    "mcmc": {"n_steps": 20000, "burn_in": 20000},
    "seed": 3,
}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def with_(cfg, **sections):
    out = json.loads(json.dumps(cfg))
    out.update(sections)
    return out


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "stgeyer", *map(str, args)], capture_output=True, text=True
    )


# --- configuration -------------------------------------------------------------


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as info:
        validate_config(with_(MODEL1_CFG, colour="red"))
    assert info.value.kind == "validation"


def test_bad_radius_names_field():
    cfg = with_(MODEL1_CFG)
    cfg["model"]["scales"][0]["r"] = 0
    with pytest.raises(ConfigError) as info:
        validate_config(cfg)
    assert info.value.field == "model.scales[0].r"


def test_burn_in_cross_check():
    with pytest.raises(ConfigError, match="burn_in"):
        validate_config(with_(MODEL1_CFG, mcmc={"n_steps": 10, "burn_in": 20}))


def test_invalid_json_is_parse_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError) as info:
        load_config(p)
    assert info.value.kind == "parse"


# --- pattern files ---------------------------------------------------------------


def test_pattern_round_trip(tmp_path, rng):
    w = SpacetimeWindow((0, 2), (-1, 1), (0, 10))
    pat = PointPattern(w.lower + rng.random((25, 3)) * w.lengths, w)
    write_pattern_csv(tmp_path / "p.csv", pat)
    back = read_pattern_csv(tmp_path / "p.csv")
    assert back.window == w
    np.testing.assert_array_equal(back.points, pat.points)


def test_sidecar_window(tmp_path):
    (tmp_path / "p.csv").write_text("x,y,t\n1.5,0.5,3\n")
    (tmp_path / "p.csv.window.json").write_text(json.dumps({"x": [0, 2], "y": [0, 1], "t": [0, 5]}))
    pat = read_pattern_csv(tmp_path / "p.csv")
    assert pat.window.t_range == (0.0, 5.0)


@pytest.mark.parametrize(
    "body,line",
    [
        ("x,y,t\n0.1,0.2,0.3\n0.1,abc,0.3\n", 3),
        ("x,y,t\n0.1,0.2\n", 2),
        ("x,y,t\n0.1,0.2,0.3\n0.4,0.5,1.7\n", 3),
        ("x,y,t\n0.1,nan,0.3\n", 2),
        ("a,b,c\n", 1),
    ],
)
def test_malformed_rows_report_line(tmp_path, body, line):
    (tmp_path / "p.csv").write_text(body)
    with pytest.raises(PatternFileError) as info:
        read_pattern_csv(tmp_path / "p.csv", SpacetimeWindow())
    assert info.value.line == line


def test_missing_window_rejected(tmp_path):
    (tmp_path / "p.csv").write_text("x,y,t\n0.1,0.2,0.3\n")
    with pytest.raises(PatternFileError, match="window"):
        read_pattern_csv(tmp_path / "p.csv")


# --- commands ----------------------------------------------------------------------


def test_simulate_writes_pattern_and_trace(tmp_path):
    cfg = write_cfg(tmp_path, MODEL1_CFG)
    assert main(["simulate", "--config", cfg, "--out", tmp_path / "sim"]) == 0
    pat = read_pattern_csv(tmp_path / "sim" / "pattern.csv")
    assert len(pat) > 0 and np.all(pat.window.contains(pat.points))
    trace = (tmp_path / "sim" / "trace.csv").read_text().splitlines()
    assert trace[0] == "step,n_points,move,accepted" and len(trace) == 20001
    assert not list((tmp_path / "sim").glob("*.tmp"))


def test_simulate_bad_radius_exit_2(tmp_path, capsys):
    cfg = with_(MODEL1_CFG)
    cfg["model"]["scales"][0]["r"] = -0.1
    assert main(["simulate", "--config", write_cfg(tmp_path, cfg), "--out", tmp_path / "o"]) == 2
    assert "model.scales[0].r" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_parse_error_exit_1(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{")
    assert main(["simulate", "--config", p, "--out", tmp_path / "o"]) == 1


def test_simulate_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, MODEL1_CFG)
    for d in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--out", tmp_path / d]) == 0
    for f in ("pattern.csv", "trace.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_seed_flag_overrides_config(tmp_path):
    cfg = write_cfg(tmp_path, MODEL1_CFG)
    main(["simulate", "--config", cfg, "--out", tmp_path / "a"])
    main(["simulate", "--config", cfg, "--out", tmp_path / "b", "--seed", "4"])
    assert (tmp_path / "a" / "pattern.csv").read_bytes() != (tmp_path / "b" / "pattern.csv").read_bytes()


def test_simulate_refuses_overwrite(tmp_path):
    cfg = write_cfg(tmp_path, MODEL1_CFG)
    assert main(["simulate", "--config", cfg, "--out", tmp_path]) == 0
    assert main(["simulate", "--config", cfg, "--out", tmp_path]) == 2
    assert main(["simulate", "--config", cfg, "--out", tmp_path, "--overwrite"]) == 0


@pytest.mark.parametrize("method", ["pseudo", "logistic"])
def test_simulate_then_fit(tmp_path, method):
    cfg = write_cfg(tmp_path, with_(MODEL1_CFG, fit={"method": method}))
    main(["simulate", "--config", cfg, "--out", tmp_path / "sim"])
    out = tmp_path / "fit.json"
    assert main(["fit", "--config", cfg, "--pattern", tmp_path / "sim" / "pattern.csv", "--out", out]) == 0
    fit = FitResult.from_json(out.read_text())
    assert fit.method == method
    assert np.all(np.isfinite(fit.gamma_hat)) and np.all(fit.gamma_hat > 0)


def test_fit_malformed_csv_exit_1(tmp_path, capsys):
    cfg = write_cfg(tmp_path, MODEL1_CFG)
    pat = tmp_path / "p.csv"
    pat.write_text('# window: {"x": [0, 1], "y": [0, 1], "t": [0, 1]}\nx,y,t\n0.1,0.2,0.3\n0.2,oops,0.1\n')
    assert main(["fit", "--config", cfg, "--pattern", pat, "--out", tmp_path / "f.json"]) == 1
    assert "line 4" in capsys.readouterr().err


def test_fit_empty_pattern_exit_3(tmp_path):
    cfg = write_cfg(tmp_path, MODEL1_CFG)
    pat = tmp_path / "p.csv"
    pat.write_text('# window: {"x": [0, 1], "y": [0, 1], "t": [0, 1]}\nx,y,t\n')
    assert main(["fit", "--config", cfg, "--pattern", pat, "--out", tmp_path / "f.json"]) == 3


@pytest.mark.parametrize("method", ["pseudo", "logistic"])
def test_golden_fit(tmp_path, method):
    cfg = DATA / ("golden_config.json" if method == "pseudo" else "golden_config_logistic.json")
    out = tmp_path / "fit.json"
    assert main(["fit", "--config", cfg, "--pattern", DATA / "golden_pattern.csv", "--out", out]) == 0
    got = FitResult.from_json(out.read_text())
    want = FitResult.from_json((DATA / f"golden_fit_{method}.json").read_text())
    np.testing.assert_allclose(got.coefficients, want.coefficients, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(got.gamma_hat, want.gamma_hat, rtol=1e-10)
    assert got.beta_hat == pytest.approx(want.beta_hat, rel=1e-10)


def test_golden_pattern_regenerates(tmp_path):
    assert main(["simulate", "--config", DATA / "golden_config.json", "--out", tmp_path]) == 0
    assert (tmp_path / "pattern.csv").read_bytes() == (DATA / "golden_pattern.csv").read_bytes()


def test_profile_command(tmp_path):
    cand = [[{"r": 0.1, "q": 0.05, "s": 1}, {"r": 0.11, "q": 0.1, "s": 2}], [{"r": 0.2, "q": 0.05, "s": 1}, {"r": 0.11, "q": 0.1, "s": 2}]]
    cfg = write_cfg(tmp_path, with_(MODEL1_CFG, fit={"candidates": cand}))
    args = ["profile", "--config", cfg, "--pattern", DATA / "golden_pattern.csv"]
    assert main(args + ["--out", tmp_path / "a"]) == 0
    assert main(args + ["--out", tmp_path / "b"]) == 0
    for f in ("fit.json", "profile.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert len((tmp_path / "a" / "profile.csv").read_text().splitlines()) == 3


def test_profile_without_candidates_exit_2(tmp_path):
    cfg = write_cfg(tmp_path, MODEL1_CFG)
    args = ["profile", "--config", cfg, "--pattern", DATA / "golden_pattern.csv", "--out", tmp_path / "o"]
    assert main(args) == 2


def _study_cfg(tmp_path, n=2):
    return write_cfg(
        tmp_path,
        with_(MODEL1_CFG, mcmc={"n_steps": 5000, "burn_in": 5000}, study={"n_replicates": n, "svg": True}),
    )


def test_study_smoke_outputs(tmp_path):
    cfg = _study_cfg(tmp_path)
    assert main(["study", "--config", cfg, "--out", tmp_path / "s"]) == 0
    names = {p.name for p in (tmp_path / "s").iterdir()}
    assert names == {"report.json", "estimates.csv", "rmse.csv", "boxplot.csv", "boxplot.svg"}
    rep = StudyReport.from_json((tmp_path / "s" / "report.json").read_text())
    assert rep.n_replicates == 2 and len(rep.records) == 4
    assert (tmp_path / "s" / "boxplot.svg").read_text().startswith("<svg")


def test_study_refuses_existing_outputs(tmp_path):
    cfg = _study_cfg(tmp_path)
    assert main(["study", "--config", cfg, "--out", tmp_path / "s"]) == 0
    before = (tmp_path / "s" / "report.json").read_bytes()
    assert main(["study", "--config", cfg, "--out", tmp_path / "s"]) == 2
    assert (tmp_path / "s" / "report.json").read_bytes() == before
    assert main(["study", "--config", cfg, "--out", tmp_path / "s", "--overwrite"]) == 0


def test_concurrent_studies_identical(tmp_path):
    cfg = _study_cfg(tmp_path, n=3)
    outs = [tmp_path / f"s{i}" for i in range(3)]
    with ThreadPoolExecutor(3) as pool:
        codes = list(
            pool.map(lambda o: run_cli("study", "--config", cfg, "--out", o, "--threads", "2").returncode, outs)
        )
    assert codes == [0, 0, 0]
    for name in ("report.json", "estimates.csv", "rmse.csv", "boxplot.csv", "boxplot.svg"):
        blobs = {(o / name).read_bytes() for o in outs}
        assert len(blobs) == 1


def test_gnz_check_command(tmp_path, capsys):
    cfg = write_cfg(tmp_path, with_(MODEL1_CFG, gnz={"n_patterns": 2, "grid": [5, 5, 5]}))
    assert main(["gnz-check", "--config", cfg]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["n_patterns"] == 2 and len(summary["residuals"]) == 2
    assert main(["gnz-check", "--config", cfg, "--out", tmp_path / "g.json"]) == 0
    assert main(["gnz-check", "--config", cfg, "--out", tmp_path / "g2.json"]) == 0
    assert (tmp_path / "g.json").read_bytes() == (tmp_path / "g2.json").read_bytes()


def test_gnz_check_on_pattern(tmp_path, capsys):
    cfg = write_cfg(tmp_path, MODEL1_CFG)
    assert main(["gnz-check", "--config", cfg, "--pattern", DATA / "golden_pattern.csv"]) == 0
    assert json.loads(capsys.readouterr().out)["n_patterns"] == 1


def test_console_entry_point(tmp_path):
    exe = shutil.which("stgeyer")
    assert exe is not None
    res = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("simulate", "fit", "profile", "study", "gnz-check"):
        assert cmd in res.stdout
