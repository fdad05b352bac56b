"""Command-line driver: ``axiswirl {simulate,diagnose,decay-fit,verify-inequalities}``.

Every command reads an INI manifest.  Sections:

``[run]``       name, out
``[grid]``      Nr, Nz, r_max, z_min, z_max
``[initial]``   initial condition id under ``initial =`` plus its parameters
``[solver]``    duration, cadence, t_start, dt, bc_outer, cfl_limit, advection, diffusion
``[sweep]``     x03 (list), radii (list), t0, besov, R0, levels
``[criteria]``  p, q, gamma, alpha, beta, tau, G_bound, K, N7
``[corpus]``    seed, poincare, nash, embedding, baseline_dir

Outputs carry no timestamps or absolute paths, so reruns are byte-identical.
Exit codes: 0 ok, 2 parse/precondition, 3 solver abort, 4 inequality failure.
"""
from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .harnack import (DecayParams, decay_envelope_check, decay_ladder, decay_report_json,
                      fit_decay_exponent, h_violations, ladder_to_csv, oscillation)
from .inequalities import (DEFAULT_SEED, run_embedding_corpus, run_nash_corpus,
                           run_poincare_corpus)
from .quadrature import (CoverageError, Cylinder, ExponentParams, cylinder_quantities,
                         sweep_to_csv, sweep_to_json)
from .solver import (EXACT, BlowUpError, CFLError, MemoryBudgetError, default_config,
                     kinetic_energy, load_scenario_file, run_scenario)
from .store import load_history, max_abs, save_history

EXIT_OK, EXIT_PARSE, EXIT_ABORT, EXIT_INEQ = 0, 2, 3, 4


class ManifestError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _criteria(sec) -> ExponentParams:
    """Fill in missing exponents so that ``3/p + 2/q = 2 - gamma`` holds."""
    g = float(sec.get("gamma", 0.5))
    p = sec.get("p")
    q = sec.get("q")
    if p is None and q is None:
        p = q = 5 / (2 - g)
    elif q is None:
        p = float(p)
        rest = 2 - g - 3 / p
        q = 2 / rest if rest > 0 else math.inf
    elif p is None:
        q = float(q)
        rest = 2 - g - 2 / q
        p = 3 / rest if rest > 0 else math.inf
    alpha = sec.get("alpha")
    return ExponentParams(p=float(p), q=float(q), gamma_exp=g, beta=float(sec.get("beta", 1 / 16)),
                          alpha=None if alpha is None else float(alpha),
                          tau=float(sec.get("tau", 0.5)), G_bound=float(sec.get("G_bound", 1.0)),
                          K=float(sec.get("K", 10.0)))


@dataclass
class RunManifest:
    name: str
    scenario: object
    solver_opts: dict
    criteria: ExponentParams
    x03: list = field(default_factory=lambda: [0.0])
    radii: list = field(default_factory=lambda: [0.25, 0.125])
    t0: float | None = None
    besov: bool = False
    R0: float = 0.25
    levels: int = 3
    N7: float = 0.1
    seed: int = DEFAULT_SEED
    corpus: dict = field(default_factory=lambda: {"poincare": 200, "nash": 200, "embedding": 24})
    out: str = "axiswirl_out"
    baseline_dir: str | None = None

    @classmethod
    def from_text(cls, text: str) -> "RunManifest":
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        cp.optionxform = str
        try:
            cp.read_string(text)
            scn, opts = load_scenario_file(text, is_text=True)
        except (configparser.Error, ValueError) as err:
            raise ManifestError(f"manifest: {err}") from err
        sec = lambda s: dict(cp[s]) if cp.has_section(s) else {}
        run, sw, cr, co = sec("run"), sec("sweep"), sec("criteria"), sec("corpus")
        try:
            crit = _criteria(cr)
        except ValueError as err:
            raise ManifestError(f"criteria: {err}") from err
        try:
            m = cls(name=run.get("name", scn.name), scenario=scn, solver_opts=opts, criteria=crit,
                    x03=_floats(sw.get("x03", "0")), radii=_floats(sw.get("radii", "0.25, 0.125")),
                    t0=None if sw.get("t0", "end") == "end" else float(sw["t0"]),
                    besov=sw.get("besov", "false").lower() in ("1", "true", "yes"),
                    R0=float(sw.get("R0", 0.25)), levels=int(sw.get("levels", 3)),
                    N7=float(cr.get("N7", 0.1)),
                    seed=int(co.get("seed", hex(DEFAULT_SEED)), 16),
                    corpus={k: int(co.get(k, d)) for k, d in
                            (("poincare", 200), ("nash", 200), ("embedding", 24))},
                    out=run.get("out", "axiswirl_out"), baseline_dir=co.get("baseline_dir"))
        except ValueError as err:
            raise ManifestError(f"manifest: {err}") from err
        if any(R <= 0 for R in m.radii) or m.R0 <= 0:
            raise ManifestError("sweep radii must be positive")
        if m.levels < 1:
            raise ManifestError("levels must be >= 1")
        return m

    @classmethod
    def load(cls, path: str) -> "RunManifest":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_text(fh.read())
        except OSError as err:
            raise ManifestError(f"cannot read manifest: {err}") from err


# ---------------------------------------------------------------------------
# helpers

def _write(out: str, name: str, text: str) -> None:
    with open(os.path.join(out, name), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _dump(obj) -> str:
    def clean(x):
        if isinstance(x, float) and not math.isfinite(x):
            return None
        if isinstance(x, (np.floating, np.integer, np.bool_)):
            return clean(x.item())
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        return x
    return json.dumps(clean(obj), indent=2, sort_keys=True) + "\n"


def _drift(m: RunManifest, hist) -> float:
    scn = m.scenario
    if scn.initial not in EXACT:
        return float("nan")
    worst = 0.0
    for s in hist.snapshots:
        ex = scn.fields_at(s.t)
        for f, e in zip((s.ur, s.utheta, s.u3), ex):
            worst = max(worst, max_abs(f.values - e))
    return worst


def _history(out: str):
    path = os.path.join(out, "history.bin")
    if not os.path.exists(path):
        raise ManifestError("no history in output directory; run 'simulate' first")
    return load_history(path)


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(m: RunManifest, out: str, **_) -> int:
    scn = m.scenario
    try:
        cfg = default_config(scn, **m.solver_opts)
    except (ValueError, CFLError) as err:
        raise ManifestError(f"solver: {err}") from err
    summary = {"name": m.name, "initial": scn.initial, "params": dict(scn.params),
               "grid": [scn.grid.Nr, scn.grid.Nz, scn.grid.r_max, scn.grid.z_min, scn.grid.z_max],
               "dt": cfg.dt, "steps": scn.steps(cfg.dt), "bc_outer": cfg.bc_outer,
               "diffusion": cfg.diffusion, "advection": cfg.advection}
    code = EXIT_OK
    try:
        res = run_scenario(scn, cfg)
        hist, log = res.history, res.log
        summary.update(aborted=False, max_rel_div=res.max_rel_div,
                       gamma_consistency=res.gamma_consistency)
    except CFLError as err:
        raise ManifestError(f"solver: {err}") from err
    except MemoryBudgetError as err:
        raise ManifestError(str(err)) from err
    except BlowUpError as err:
        hist, log = err.history, err.log
        summary.update(aborted=True, reason=str(err), last_valid_time=float(hist.times[-1]))
        code = EXIT_ABORT
    save_history(hist, os.path.join(out, "history.bin"))
    last = hist.snapshots[-1]
    for nm, f in (("ur", last.ur), ("utheta", last.utheta), ("u3", last.u3), ("pi", last.pi)):
        f.to_csv(os.path.join(out, f"final_{nm}.csv"))
    summary.update(n_snapshots=len(hist), t_final=float(hist.times[-1]),
                   energy_initial=kinetic_energy(hist.snapshots[0]),
                   energy_final=kinetic_energy(last), drift=_drift(m, hist),
                   max_abs_velocity=max(max_abs(last.ur.values), max_abs(last.utheta.values),
                                        max_abs(last.u3.values)))
    _write(out, "run.log", "\n".join(log) + "\n")
    _write(out, "summary.json", _dump(summary))
    return code


def cmd_diagnose(m: RunManifest, out: str, **_) -> int:
    hist = _history(out)
    t0 = float(hist.times[-1]) if m.t0 is None else m.t0
    P = m.criteria
    rows, flags, hv = [], [], []
    for x in m.x03:
        for R in m.radii:
            c = Cylinder(x, t0, R)
            try:
                q = cylinder_quantities(hist, c, P, with_besov=m.besov)
            except (CoverageError, ValueError) as err:
                raise ManifestError(f"sweep outside history: {err}") from err
            rows.append(q)
            if R <= 0.25:
                if q.G_alpha > P.G_bound:
                    flags.append({"x03": x, "R": R, "relation": "G_alpha > G_bound", "value": q.G_alpha})
                if q.A * q.omega**P.beta > P.K:
                    flags.append({"x03": x, "R": R, "relation": "A*omega^beta > K",
                                  "value": q.A * q.omega**P.beta})
            rec = oscillation(hist, c)
            v = h_violations(hist, c, rec)
            hv.append({"x03": x, "R": R, "a": rec.axis_constant_a, "degenerate": rec.degenerate,
                       "violations": v["violations"], "h_min": v["h_min"], "h_max": v["h_max"]})
    _write(out, "sweep.csv", sweep_to_csv(rows))
    _write(out, "sweep.json", sweep_to_json(rows, P))
    bad = [r for r in hv if r["violations"]]
    _write(out, "diagnose.json", _dump({"t0": t0, "flags": flags, "h_checks": hv,
                                        "h_sanity": not bad}))
    return EXIT_INEQ if bad else EXIT_OK


def cmd_decay_fit(m: RunManifest, out: str, **_) -> int:
    hist = _history(out)
    t0 = float(hist.times[-1]) if m.t0 is None else m.t0
    P = m.criteria
    dp0 = DecayParams(tau=P.tau, N7=m.N7, c_fit=0.0, K=P.K, beta=P.beta)
    report = {}
    for i, x in enumerate(m.x03):
        try:
            lad = decay_ladder(hist, x, m.R0, m.levels, t0, dp0)
            dp = fit_decay_exponent(lad, P.tau, m.N7, P.K, P.beta)
        except (CoverageError, ValueError) as err:
            raise ManifestError(f"decay ladder: {err}") from err
        env = decay_envelope_check(hist, dp, x03=x, r_out=min(m.R0, hist.grid.r_max))
        _write(out, f"ladder_{i}.csv", ladder_to_csv(lad))
        report[f"{x!r}"] = json.loads(decay_report_json(dp, env, {
            "contractions": [lv.contraction for lv in lad.levels[:-1]], "ratios": env.get("ratios")}))
    _write(out, "decay.json", _dump(report))
    return EXIT_OK


def cmd_verify_inequalities(m: RunManifest, out: str, rebaseline: bool = False, **_) -> int:
    seed = m.seed
    reps = [run_poincare_corpus(seed, m.corpus["poincare"]),
            run_nash_corpus(seed, m.corpus["nash"]),
            run_embedding_corpus(seed, m.corpus["embedding"])]
    for r in reps:
        _write(out, f"{r.name}.json", r.to_json())
        _write(out, f"{r.name}.csv", r.to_csv())
    summary = {r.name: {"probe_count": r.probe_count, "failures": len(r.failures),
                        "max_ratio": r.max_ratio} for r in reps}
    summary["nash"]["jensen_failures"] = len(reps[1].extra["jensen_failures"])
    summary["embedding"]["max_rescale_drift"] = reps[2].extra["max_rescale_drift"]
    summary["corpus_seed"] = f"{seed:#x}"
    text = _dump(summary)
    bdir = m.baseline_dir or out
    os.makedirs(bdir, exist_ok=True)
    bpath = os.path.join(bdir, f"baseline_{seed:x}.json")
    if os.path.exists(bpath) and not rebaseline:
        with open(bpath, encoding="utf-8") as fh:
            if fh.read() != text:
                raise ManifestError(f"corpus seed {seed:#x} collides with a locked baseline "
                                    f"that differs; pass --rebaseline to replace it")
    else:
        _write(bdir, os.path.basename(bpath), text)
    _write(out, "inequalities.json", text)
    hard = reps[0].failures or reps[1].failures or reps[1].extra["jensen_failures"]
    return EXIT_INEQ if hard else EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "diagnose": cmd_diagnose, "decay-fit": cmd_decay_fit,
            "verify-inequalities": cmd_verify_inequalities}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="axiswirl", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--manifest", required=True, help="INI manifest path")
    ap.add_argument("--out", help="output directory (overrides [run] out)")
    ap.add_argument("--seed", help="corpus seed in hex (overrides [corpus] seed)")
    ap.add_argument("--rebaseline", action="store_true", help="replace a locked corpus baseline")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_PARSE
    try:
        m = RunManifest.load(args.manifest)
        if args.seed is not None:
            try:
                m.seed = int(args.seed, 16)
            except ValueError as err:
                raise ManifestError(f"--seed must be hex, got {args.seed!r}") from err
        out = args.out or m.out
        os.makedirs(out, exist_ok=True)
        return COMMANDS[args.command](m, out, rebaseline=args.rebaseline)
    except ManifestError as err:
        print(f"axiswirl: error: {err}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
