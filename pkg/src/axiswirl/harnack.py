"""Oscillation of Gamma over parabolic cylinders and the Harnack-type checks.

Extrema are nodal.  "Off-axis" nodes are those with ``r >= dr``.  Because
Gamma vanishes on the axis and the axis lies in the closure of every
cylinder centred on it, the extrema are closed with the value 0, so
``m_R <= 0 <= M_R`` always.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.integrate import quad

from .grid import EVEN, Field2D
from .quadrature import Cylinder, FlowHistory, quantity_A, weight_omega, _TTOL

DEGENERATE_J = 1e-12


class DegenerateError(ValueError):
    """The oscillation vanishes, so h is undefined."""


class HarnackViolation(RuntimeError):
    """h <= 0 where the cut-off is positive; the discrete maximum principle failed."""


@dataclass
class OscillationRecord:
    R: float
    x03: float
    t0: float
    m_R: float
    M_R: float
    J_R: float
    axis_constant_a: float
    degenerate: bool
    n_nodes: int

    @property
    def upper_branch(self) -> bool:
        return self.M_R > -self.m_R


@dataclass
class DecayParams:
    tau: float = 0.5
    N7: float = 0.1
    c_fit: float = 0.0
    K: float = 10.0
    beta: float = 1 / 16
    intercept: float = 0.0
    levels_used: int = 0

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError(f"tau must lie strictly inside (0, 1), got {self.tau}")
        if not 0 < self.beta < 1 / 8:
            raise ValueError(f"beta must lie in (0, 1/8), got {self.beta}")
        if not 0 < self.N7 < 1:
            raise ValueError(f"N7 must lie in (0, 1), got {self.N7}")
        if self.c_fit < 0:
            raise ValueError("c_fit must be non-negative")


def lambda_floor(R: float, N7: float, tau: float) -> float:
    """``N7 * ln(100/R)**(tau - 1)``."""
    return N7 * math.log(100.0 / R) ** (tau - 1)


def _gamma_list(h: FlowHistory, source: str):
    if source == "evolved":
        if h.gamma_evolved is None:
            raise ValueError("history carries no evolved Gamma")
        return h.gamma_evolved
    return [s.gamma for s in h.snapshots]


def _closed_window(h: FlowHistory, c: Cylinder) -> np.ndarray:
    tol = _TTOL * max(1.0, abs(c.t0))
    m = (h.times >= c.t0 - c.R**2 - tol) & (h.times <= c.t0 + tol)
    idx = np.nonzero(m)[0]
    if idx.size == 0:
        idx = np.array([int(np.argmin(np.abs(h.times - c.t0)))])
    return idx


def _offaxis_mask(grid, x03, R):
    Rg, Zg = grid.mesh()
    m = Rg**2 + (Zg - x03) ** 2 <= R * R * (1 + 1e-12)
    m[0] = False
    return m


def oscillation(h: FlowHistory, c: Cylinder, source: str = "state") -> OscillationRecord:
    """Nodal inf/sup of Gamma over ``Q(c)`` minus the axis, closed with 0."""
    h.check(c)
    mask = _offaxis_mask(h.grid, c.x03, c.R)
    n = int(mask.sum())
    if n == 0:
        raise ValueError(f"no off-axis nodes inside radius {c.R} (dr={h.grid.dr})")
    gl = _gamma_list(h, source)
    vals = np.concatenate([np.asarray(gl[k].values)[mask] for k in _closed_window(h, c)])
    m = min(0.0, float(vals.min()))
    M = max(0.0, float(vals.max()))
    J = M - m
    deg = J <= DEGENERATE_J
    a = float("nan") if deg else 2 * max(M, -m) / J
    return OscillationRecord(c.R, c.x03, c.t0, m, M, J, a, deg, n)


def normalized_h(gamma: Field2D, rec: OscillationRecord) -> Field2D:
    """``h = 2(M - Gamma)/J`` on the upper branch, ``2(Gamma - m)/J`` otherwise.

    The axis row is set to ``rec.axis_constant_a``.
    """
    if rec.degenerate or rec.J_R <= 0:
        raise DegenerateError("J_R = 0; h is undefined")
    g = np.asarray(gamma.values)
    if rec.upper_branch:
        hv = 2 * (rec.M_R - g) / rec.J_R
    else:
        hv = 2 * (g - rec.m_R) / rec.J_R
    hv = np.array(hv)
    hv[0] = rec.axis_constant_a
    return Field2D(gamma.grid, hv, EVEN)


def h_violations(h: FlowHistory, c: Cylinder, rec: OscillationRecord | None = None,
                 source: str = "state", tol: float = 1e-12) -> dict:
    """Count nodes of ``Q(c)`` where ``h`` leaves ``[0, 2]`` or ``a < 1``."""
    rec = rec or oscillation(h, c, source)
    if rec.degenerate:
        return {"degenerate": True, "violations": 0, "a_ok": True, "h_min": None, "h_max": None}
    mask = _offaxis_mask(h.grid, c.x03, c.R)
    gl = _gamma_list(h, source)
    bad, lo, hi = 0, math.inf, -math.inf
    for k in _closed_window(h, c):
        hv = np.asarray(normalized_h(gl[k], rec).values)[mask]
        bad += int(np.sum((hv < -tol) | (hv > 2 + tol)))
        lo, hi = min(lo, float(hv.min())), max(hi, float(hv.max()))
    a_ok = rec.axis_constant_a >= 1 - 1e-12
    return {"degenerate": False, "violations": bad + (0 if a_ok else 1), "a_ok": a_ok,
            "h_min": lo, "h_max": hi, "a": rec.axis_constant_a}


# ---------------------------------------------------------------------------
# local maximum estimate

def _l2_gamma(h: FlowHistory, c: Cylinder, source: str) -> float:
    from .quadrature import _ball_integral_raw

    gl = _gamma_list(h, source)
    w = h.time_weights(c)
    tot = sum(wk * _ball_integral_raw(h.grid, np.asarray(gl[k].values) ** 2, c.x03, c.R)
              for k, wk in enumerate(w) if wk != 0.0)
    return math.sqrt(tot)


def verify_local_max(h: FlowHistory, c: Cylinder, source: str = "state") -> dict:
    """Empirical constant of the local maximum bound for Gamma.

    ``N_emp = sup_{Q(R/2)} |Gamma| / (((1 + A(R))/R)**2.5 * ||Gamma||_{L2(Q(R))})``
    """
    half = Cylinder(c.x03, c.t0, c.R / 2)
    h.check(c)
    l2 = _l2_gamma(h, c, source)
    if l2 == 0.0:
        return {"degenerate": True, "N_emp": None, "R": c.R}
    mask = _offaxis_mask(h.grid, half.x03, half.R)
    gl = _gamma_list(h, source)
    sup = max(float(np.max(np.abs(np.asarray(gl[k].values)[mask]))) for k in _closed_window(h, half))
    A = quantity_A(h, c)
    denom = ((1 + A) / c.R) ** 2.5 * l2
    return {"degenerate": False, "N_emp": sup / denom, "sup_half": sup, "l2": l2, "A": A, "R": c.R}


# ---------------------------------------------------------------------------
# cut-off profile and weak Harnack

def _smoothstep_down(s):
    return 1 - 3 * s**2 + 2 * s**3


def _kappa(rho, b):
    """1 on ``[0, 1/2]``, cubic C^1 bridge down to 0 at ``b``, 0 beyond."""
    rho = np.asarray(rho, dtype=float)
    s = np.clip((rho - 0.5) / (b - 0.5), 0.0, 1.0)
    return np.where(rho <= 0.5, 1.0, np.where(rho >= b, 0.0, _smoothstep_down(s)))


def _zeta_mass(b):
    f = lambda r: float(_kappa(r, b)) ** 2 * r * r
    return 4 * math.pi * (0.5**3 / 3 + quad(f, 0.5, b, epsabs=1e-14, epsrel=1e-13)[0])


@lru_cache(maxsize=1)
def zeta_support() -> float:
    """Outer radius ``b`` in ``(1/2, 1]`` giving ``int_{B(1)} kappa(|x|)**2 dx = 1``."""
    if _zeta_mass(1.0) < 1:
        raise RuntimeError("bridge to radius 1 has mass < 1")
    return brentq(lambda b: _zeta_mass(b) - 1, 0.5 + 1e-9, 1.0, xtol=1e-15)


def zeta_R(Rg: np.ndarray, Zg: np.ndarray, x03: float, R: float) -> np.ndarray:
    """``R**-1.5 * kappa(|x - x0| / R)``: radial, C^1, unit L2 mass, = R**-1.5 on B(R/2)."""
    rho = np.sqrt(Rg**2 + (Zg - x03) ** 2) / R
    return R**-1.5 * _kappa(rho, zeta_support())


def _node_volumes(grid):
    dr, dz = grid.dr, grid.dz
    wr = grid.r * dr
    wr[0] = dr**2 / 8
    wr[-1] = (grid.r_max**2 - (grid.r_max - dr / 2) ** 2) / 2
    wz = np.full(grid.Nz + 1, dz)
    wz[0] = wz[-1] = dz / 2
    return 2 * np.pi * np.outer(wr, wz)


def verify_weak_harnack(h: FlowHistory, c: Cylinder, t: float | None = None,
                        source: str = "state") -> dict:
    """``-int ln h * zeta_R**2 dx`` at times in ``[t0 - R^2/4, t0)`` against ``(1 + A)**3``.

    Axis nodes are excluded from the quadrature; the measure is renormalised
    by its discrete mass so that ``h == const`` gives ``-ln(const)`` exactly.
    Without ``t`` the worst (largest) value over the admissible snapshots is
    reported; if the cadence leaves none, the snapshot at ``t0`` is used.
    """
    rec = oscillation(h, c, source)
    if rec.degenerate:
        raise DegenerateError("J_R = 0; h is undefined")
    g = h.grid
    Rg, Zg = g.mesh()
    z2 = zeta_R(Rg, Zg, c.x03, c.R) ** 2
    w = _node_volumes(g) * z2
    w[0] = 0.0
    mass = float(w.sum())
    tol = _TTOL * max(1.0, abs(c.t0))
    if t is None:
        ks = [k for k, tk in enumerate(h.times) if c.t0 - c.R**2 / 4 - tol <= tk < c.t0 - tol]
        used_t0 = not ks
        if used_t0:
            ks = [int(np.argmin(np.abs(h.times - c.t0)))]
    else:
        ks = [int(np.argmin(np.abs(h.times - t)))]
        used_t0 = False
    gl = _gamma_list(h, source)
    vals = []
    for k in ks:
        hv = np.asarray(normalized_h(gl[k], rec).values)
        pos = w > 0
        if np.any(hv[pos] <= 0):
            raise HarnackViolation(f"h <= 0 inside the cut-off support at t={h.times[k]:g}")
        vals.append(-float(np.sum(w[pos] * np.log(hv[pos]))) / mass)
    A = quantity_A(h, c)
    lhs = max(vals)
    return {"lhs": lhs, "rhs": (1 + A) ** 3, "ratio": lhs / (1 + A) ** 3, "A": A,
            "zeta_mass_discrete": mass, "times": [float(h.times[k]) for k in ks],
            "fallback_t0": used_t0, "axis_excluded": True, "R": c.R}


# ---------------------------------------------------------------------------
# strong Harnack floor, ladders, fits

def strong_harnack_floor(h: FlowHistory, c: Cylinder, dp: DecayParams,
                         rec: OscillationRecord | None = None, source: str = "state") -> dict:
    """``inf_{Q(R/4)} h`` against ``lambda(R)/2``.

    The infimum runs over off-axis nodes and also the axis value ``a``,
    which is the limit of ``h`` on the axis.
    """
    rec = rec or oscillation(h, c, source)
    if rec.degenerate:
        raise DegenerateError("J_R = 0; h is undefined")
    q = Cylinder(c.x03, c.t0, c.R / 4)
    mask = _offaxis_mask(h.grid, q.x03, q.R)
    if not mask.any():
        raise ValueError("quarter cylinder has no off-axis nodes")
    gl = _gamma_list(h, source)
    inf_h = min(float(np.min(np.asarray(normalized_h(gl[k], rec).values)[mask]))
                for k in _closed_window(h, q))
    inf_h = min(inf_h, rec.axis_constant_a)
    lam = lambda_floor(c.R, dp.N7, dp.tau)
    return {"R": c.R, "inf_h": inf_h, "lambda": lam, "floor": lam / 2, "margin": inf_h - lam / 2,
            "passes": inf_h >= lam / 2,
            "N7_max": 2 * inf_h / math.log(100.0 / c.R) ** (dp.tau - 1)}


@dataclass
class LadderLevel:
    j: int
    R: float
    record: OscillationRecord
    contraction: float | None = None
    lambda_floor: float | None = None
    inf_h: float | None = None
    floor_passes: bool | None = None


@dataclass
class DecayLadder:
    x03: float
    t0: float
    levels: list[LadderLevel] = field(default_factory=list)

    @property
    def radii(self):
        return np.array([lv.R for lv in self.levels])

    @property
    def J(self):
        return np.array([lv.record.J_R for lv in self.levels])

    @property
    def contractions(self):
        return [lv.contraction for lv in self.levels[:-1]]

    @property
    def degenerate(self) -> bool:
        return all(lv.record.degenerate for lv in self.levels)


def decay_ladder(h: FlowHistory, x03: float, R0: float, levels: int, t0: float | None = None,
                 dp: DecayParams | None = None, source: str = "state") -> DecayLadder:
    """Oscillation at ``R_j = 4**-j * R0`` for ``j < levels``.

    With ``dp`` the strong Harnack floor is evaluated at each level (except
    the last) and the contraction bound ``1 - lambda/4`` is asserted wherever
    the floor holds.
    """
    if levels < 1:
        raise ValueError("need at least one level")
    t0 = h.times[-1] if t0 is None else t0
    if R0 * 4.0 ** -(levels - 1) < h.grid.dr:
        raise ValueError(f"ladder radius {R0 * 4.0 ** -(levels - 1):g} is below dr={h.grid.dr:g}")
    lad = DecayLadder(x03, float(t0))
    for j in range(levels):
        R = R0 * 4.0**-j
        c = Cylinder(x03, float(t0), R)
        lad.levels.append(LadderLevel(j, R, oscillation(h, c, source)))
    for a, b in zip(lad.levels[:-1], lad.levels[1:]):
        Ja, Jb = a.record.J_R, b.record.J_R
        a.contraction = (Jb / Ja) if Ja > 0 else 0.0
        if a.contraction > 1 + 1e-12:
            raise AssertionError(f"oscillation grew from R={a.R:g} to R={b.R:g}")
        if dp is not None and not a.record.degenerate:
            fl = strong_harnack_floor(h, Cylinder(x03, float(t0), a.R), dp, a.record, source)
            a.lambda_floor, a.inf_h, a.floor_passes = fl["lambda"], fl["inf_h"], fl["passes"]
            if fl["passes"] and a.contraction > 1 - fl["lambda"] / 4 + 1e-9:
                raise AssertionError(f"floor holds at R={a.R:g} but contraction "
                                     f"{a.contraction:.6g} > 1 - lambda/4")
    return lad


def fit_decay_exponent(ladder: DecayLadder, tau: float, N7: float = 0.1, K: float = 10.0,
                       beta: float = 1 / 16) -> DecayParams:
    """Least-squares slope ``c`` of ``ln J`` against ``-(ln(100/R))**tau``.

    Levels with ``J < 1e-12`` are dropped; at least three must remain.  A
    negative slope is clipped to 0.
    """
    R = ladder.radii
    J = ladder.J
    keep = J >= DEGENERATE_J
    if keep.sum() < 3:
        raise ValueError(f"need >= 3 non-degenerate levels, have {int(keep.sum())}")
    x = -np.log(100.0 / R[keep]) ** tau
    y = np.log(J[keep])
    xm, ym = x.mean(), y.mean()
    slope = float(np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2))
    c = max(slope, 0.0)
    return DecayParams(tau=tau, N7=N7, c_fit=c, K=K, beta=beta,
                       intercept=float(ym - slope * xm), levels_used=int(keep.sum()))


def empirical_K(h: FlowHistory, x03s, radii, beta: float, t0: float | None = None) -> float:
    """``max A(z0, R) * omega(R)**beta`` over the probed cylinders (R <= 1/4)."""
    t0 = h.times[-1] if t0 is None else t0
    out = 0.0
    for x03 in x03s:
        for R in radii:
            out = max(out, quantity_A(h, Cylinder(x03, float(t0), R)) * weight_omega(R) ** beta)
    return out


def decay_envelope_check(h: FlowHistory, dp: DecayParams, x03: float = 0.0,
                         r_out: float = 0.25, probe_radii=None, source: str = "state") -> dict:
    """Shell sups of |Gamma| near the axis against ``N exp(-c (ln(100/r))**tau)``.

    Shells are ``[dr 2^k, dr 2^(k+1))`` up to ``r_out``, with ``|z - x03| <= r_out``
    and all stored times.  The envelope is normalised at the outermost shell;
    ``passes`` allows the factor ``exp(2c)`` that the oscillation bound itself
    carries, ``passes_strict`` does not.
    """
    g = h.grid
    r_out = min(r_out, g.r_max)
    edges = [g.dr]
    while edges[-1] * 2 <= r_out * (1 + 1e-12):
        edges.append(edges[-1] * 2)
    if len(edges) < 2:
        raise ValueError("no near-axis shells resolved")
    Rg, Zg = g.mesh()
    zmask = np.abs(Zg - x03) <= r_out
    gl = _gamma_list(h, source)
    absmax = np.max(np.stack([np.abs(np.asarray(f.values)) for f in gl]), axis=0)
    sups = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = zmask & (Rg >= lo * (1 - 1e-12)) & (Rg < hi * (1 - 1e-12))
        sups.append(float(absmax[m].max()) if m.any() else 0.0)
    sups = np.array(sups)
    upper = np.array(edges[1:])
    rep = {"tau": dp.tau, "c_fit": dp.c_fit, "shell_upper": upper.tolist(), "shell_sup": sups.tolist()}
    if probe_radii is None:
        probe_radii = [R for R in (0.25, 0.125, 0.0625, 0.03125) if R <= r_out and R >= 2 * g.dr]
    K_emp = empirical_K(h, [x03], probe_radii, dp.beta)
    rep["empirical_K"] = K_emp
    rep["standing_assumption"] = K_emp <= dp.K
    if sups[-1] <= DEGENERATE_J:
        rep.update(degenerate=True, passes=True, passes_strict=True, N_calibrated=0.0,
                   monotone=True)
        return rep
    env = np.exp(-dp.c_fit * np.log(100.0 / upper) ** dp.tau)
    N = sups[-1] / env[-1]
    ratio = sups / (N * env)
    rep.update(degenerate=False, N_calibrated=N, N_with_slack=N * math.exp(2 * dp.c_fit),
               max_ratio=float(ratio.max()), ratios=ratio.tolist(),
               passes_strict=bool(np.all(ratio <= 1 + 1e-9)),
               passes=bool(np.all(ratio <= math.exp(2 * dp.c_fit) * (1 + 1e-9))),
               monotone=bool(np.all(np.diff(sups) >= -1e-15)))
    return rep


# ---------------------------------------------------------------------------
# exports

LADDER_COLUMNS = ("j", "R_j", "m", "M", "J", "contraction", "lambda_floor", "inf_h")


def ladder_to_csv(ladder: DecayLadder) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LADDER_COLUMNS)
    f = lambda x: "" if x is None else repr(float(x))
    for lv in ladder.levels:
        r = lv.record
        w.writerow([lv.j, f(lv.R), f(r.m_R), f(r.M_R), f(r.J_R), f(lv.contraction),
                    f(lv.lambda_floor), f(lv.inf_h)])
    return buf.getvalue()


def decay_report_json(dp: DecayParams, envelope: dict, extra: dict | None = None) -> str:
    d = {"tau": dp.tau, "c_fit": dp.c_fit, "N_calibrated": envelope.get("N_calibrated"),
         "empirical_K": envelope.get("empirical_K"),
         "pass": {"envelope": envelope.get("passes"), "envelope_strict": envelope.get("passes_strict"),
                  "c_fit_positive": dp.c_fit > 0,
                  "standing_assumption": envelope.get("standing_assumption")}}
    if extra:
        d.update(extra)
    return json.dumps(d, indent=2, sort_keys=True) + "\n"
