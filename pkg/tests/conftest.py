import json
import os
from pathlib import Path

import numpy as np
import pytest

from axiswirl.grid import EVEN, ODD, Field2D, FlowState, make_grid
from axiswirl.quadrature import FlowHistory

BASELINES = Path(__file__).parent / "baselines"


def gamma_history(gamma_fn, N=64, r_max=0.5, T=0.0625, n_t=9):
    """History whose swirl is ``gamma_fn(R, Z, t) / r``; velocity b = 0."""
    g = make_grid(N, 2 * N, r_max, -r_max, r_max)
    R, Z = g.mesh()
    snaps = []
    for t in np.linspace(0.0, T, n_t):
        gam = np.asarray(gamma_fn(R, Z, t), dtype=float) * np.ones(g.shape)
        ut = np.zeros(g.shape)
        ut[1:] = gam[1:] / R[1:]
        snaps.append(FlowState(t, Field2D.zeros(g, ODD), Field2D(g, ut, ODD), Field2D.zeros(g),
                               Field2D.zeros(g)))
    return FlowHistory(snaps)


def check_baseline(name: str, values: dict, rtol: float) -> list[str]:
    """Compare against ``baselines/<name>.json``; AXISWIRL_REBASELINE=1 rewrites it."""
    path = BASELINES / f"{name}.json"
    if os.environ.get("AXISWIRL_REBASELINE") == "1" or not path.exists():
        path.write_text(json.dumps(values, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        if not os.environ.get("AXISWIRL_REBASELINE"):
            pytest.fail(f"baseline {path.name} was missing and has been written; rerun")
        return []
    locked = json.loads(path.read_text(encoding="utf-8"))
    bad = []
    for k, v in values.items():
        ref = locked.get(k)
        if ref is None or abs(v - ref) > rtol * abs(ref):
            bad.append(f"{k}: {v!r} vs locked {ref!r}")
    return bad


ACCEPTANCE_LINES: list[str] = []


def criterion(num: int, title: str, ok: bool, detail: str) -> None:
    """Record and print one acceptance line, then assert it."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d}: {title} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
