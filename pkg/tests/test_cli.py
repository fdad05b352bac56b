import json
from pathlib import Path

import pytest

from axiswirl.cli import RunManifest, ManifestError, main
from axiswirl.grid import make_grid
from axiswirl.solver import Scenario, default_config, run_scenario
from axiswirl.store import history_from_bytes, history_to_bytes

BASE = """
[run]
name = {name}

[grid]
Nr = 32
Nz = 32
r_max = 0.5
z_min = -0.5
z_max = 0.5

[initial]
initial = {initial}
{params}

[solver]
duration = {duration}
cadence = 8

[sweep]
x03 = 0.0
radii = 0.125, 0.0625
R0 = 0.25
levels = 3

[criteria]
{criteria}

[corpus]
seed = 5eed
poincare = 6
nash = 6
embedding = 2
"""


def _manifest(tmp_path: Path, name="rigid", initial="rigid_rotation", params="omega = 1.0",
              duration=0.0625, criteria="") -> str:
    p = tmp_path / f"{name}.ini"
    p.write_text(BASE.format(name=name, initial=initial, params=params, duration=duration,
                             criteria=criteria), encoding="utf-8")
    return str(p)


def _tree(d: Path) -> dict:
    return {f.name: f.read_bytes() for f in sorted(d.iterdir())}


def test_full_pipeline_is_deterministic(tmp_path):
    m = _manifest(tmp_path)
    for out in ("a", "b"):
        for cmd in ("simulate", "diagnose", "decay-fit", "verify-inequalities"):
            assert main([cmd, "--manifest", m, "--out", str(tmp_path / out)]) == 0, cmd
    ta, tb = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert ta == tb
    summary = json.loads(ta["summary.json"])
    assert summary["drift"] < 1e-12 and not summary["aborted"]
    diag = json.loads(ta["diagnose.json"])
    assert diag["h_sanity"]
    assert ta["sweep.csv"].decode().startswith("t0,x03,R,")


def test_invalid_coupling_names_relation(tmp_path, capsys):
    m = _manifest(tmp_path, criteria="p = 3\nq = 3\ngamma = 0.5")
    assert main(["simulate", "--manifest", m, "--out", str(tmp_path / "o")]) == 2
    assert "3/p + 2/q = 2 - gamma" in capsys.readouterr().err
    with pytest.raises(ManifestError, match="alpha"):
        RunManifest.from_text(open(m).read().replace("p = 3\nq = 3", "alpha = 0.05"))


def test_coupling_fills_missing_exponent(tmp_path):
    m = RunManifest.load(_manifest(tmp_path, criteria="p = 4\ngamma = 0.25"))
    assert 3 / m.criteria.p + 2 / m.criteria.q == pytest.approx(1.75)


def test_zero_scenario_summary(tmp_path):
    m = _manifest(tmp_path, name="zero", initial="zero", params="", duration=0.01)
    out = tmp_path / "z"
    assert main(["simulate", "--manifest", m, "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["energy_initial"] == s["energy_final"] == s["drift"] == s["max_abs_velocity"] == 0.0


def test_solver_abort_exit_code(tmp_path):
    m = _manifest(tmp_path, name="hot", initial="gaussian_swirl",
                  params="swirl = 1e200\nsigma = 0.1", duration=0.001)
    out = tmp_path / "h"
    with pytest.warns(RuntimeWarning):
        code = main(["simulate", "--manifest", m, "--out", str(out)])
    assert code == 3
    s = json.loads((out / "summary.json").read_text())
    assert s["aborted"] and s["last_valid_time"] == 0.0


def test_diagnose_needs_history(tmp_path):
    m = _manifest(tmp_path)
    assert main(["diagnose", "--manifest", m, "--out", str(tmp_path / "empty")]) == 2


def test_sweep_outside_window(tmp_path):
    m = _manifest(tmp_path, duration=0.001)
    out = str(tmp_path / "short")
    assert main(["simulate", "--manifest", m, "--out", out]) == 0
    assert main(["diagnose", "--manifest", m, "--out", out]) == 2


def test_baseline_collision_needs_rebaseline(tmp_path):
    m = _manifest(tmp_path)
    out = tmp_path / "inq"
    assert main(["verify-inequalities", "--manifest", m, "--out", str(out)]) == 0
    locked = out / "baseline_5eed.json"
    locked.write_text(locked.read_text().replace('"corpus_seed"', '"tampered": 1, "corpus_seed"'))
    assert main(["verify-inequalities", "--manifest", m, "--out", str(out)]) == 2
    assert main(["verify-inequalities", "--manifest", m, "--out", str(out), "--rebaseline"]) == 0
    assert "tampered" not in locked.read_text()


def test_seed_flag(tmp_path):
    m = _manifest(tmp_path)
    out = tmp_path / "s"
    assert main(["verify-inequalities", "--manifest", m, "--out", str(out), "--seed", "beef"]) == 0
    assert (out / "baseline_beef.json").exists()
    assert main(["verify-inequalities", "--manifest", m, "--out", str(out), "--seed", "xyz"]) == 2


def test_bad_arguments(tmp_path):
    assert main(["simulate"]) == 2
    assert main(["explode", "--manifest", "x"]) == 2
    assert main(["simulate", "--manifest", str(tmp_path / "missing.ini")]) == 2


def test_history_bytes_roundtrip():
    g = make_grid(8, 8, 0.5, -0.5, 0.5)
    scn = Scenario("o", "oseen_swirl", {"kappa": 1.0}, grid=g, duration=0.002, cadence=2)
    h = run_scenario(scn, default_config(scn)).history
    data = history_to_bytes(h)
    back = history_from_bytes(data)
    assert history_to_bytes(back) == data
    assert list(back.times) == list(h.times)
    with pytest.raises(ValueError):
        history_from_bytes(b"NOPE" + data[4:])
    with pytest.raises(ValueError):
        history_from_bytes(data + b"\0")


def test_manifest_inline_comments(tmp_path):
    text = open(_manifest(tmp_path)).read().replace("cadence = 8", "cadence = 8   ; every 8th step")
    m = RunManifest.from_text(text.replace("Nr = 32", "Nr = 32  # radial nodes"))
    assert m.scenario.cadence == 8 and m.scenario.grid.Nr == 32
