"""Randomised checks of the appendix inequalities and empirical constants of
the local energy estimates on solver output.

3D integrals over ``B(R)`` use a tensor midpoint rule on ``[-R, R]^3``.
Cells cut by the sphere get their volume fraction from an ``8^3``
sub-sampling, so the weights are a fixed pattern scaled by ``R^3``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .quadrature import (Cylinder, ExponentParams, FlowHistory, quantity_A, quantity_C,
                         quantity_D, quantity_E, quantity_G, weight_omega)

DEFAULT_SEED = 0x5EED
TOL = 1e-6
# absolute slack for both sides being ~0 (constant probes)
ABS_FLOOR = 1e-13
NASH_FLOOR = 1e-8


# ---------------------------------------------------------------------------
# ball quadrature

@lru_cache(maxsize=4)
def _unit_ball_cells(n: int = 64, sub: int = 8):
    """Sample points and volume weights of the unit ball on an ``n^3`` box grid."""
    h = 2.0 / n
    c = -1 + h * (np.arange(n) + 0.5)
    X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
    half = h / 2
    far = np.sqrt((np.abs(X) + half) ** 2 + (np.abs(Y) + half) ** 2 + (np.abs(Z) + half) ** 2)
    near = np.sqrt(np.maximum(np.abs(X) - half, 0) ** 2 + np.maximum(np.abs(Y) - half, 0) ** 2
                   + np.maximum(np.abs(Z) - half, 0) ** 2)
    frac = np.where(far <= 1, 1.0, 0.0)
    cut = (far > 1) & (near < 1)
    s = (np.arange(sub) + 0.5) / sub - 0.5
    sx, sy, sz = (a.ravel() for a in np.meshgrid(s, s, s, indexing="ij"))
    idx = np.nonzero(cut)
    px = X[idx][:, None] + h * sx
    py = Y[idx][:, None] + h * sy
    pz = Z[idx][:, None] + h * sz
    inside = px**2 + py**2 + pz**2 <= 1
    cnt = inside.sum(axis=1)
    frac[idx] = cnt / sub**3
    # cut cells are sampled at the centroid of their inside part
    X, Y, Z = X.copy(), Y.copy(), Z.copy()
    ok = cnt > 0
    for A, P in ((X, px), (Y, py), (Z, pz)):
        A[tuple(i[ok] for i in idx)] = (np.sum(P * inside, axis=1)[ok] / cnt[ok])
    keep = frac > 0
    pts = np.stack([X[keep], Y[keep], Z[keep]], axis=1)
    w = frac[keep] * h**3
    pts.flags.writeable = False
    w.flags.writeable = False
    return pts, w


def ball_points(R: float, n: int = 64):
    """Quadrature points and weights for ``B(R)`` centred at the origin."""
    pts, w = _unit_ball_cells(n)
    return pts * R, w * R**3


# ---------------------------------------------------------------------------
# probes

@dataclass
class ProbeFunction:
    """Sum of isotropic Gaussian bumps plus a constant, on ``R^3``.

    ``time_freq``/``time_phase`` make the amplitudes ``a_k cos(w_k t + phi_k)``
    for space-time probes; ``scale`` evaluates ``f(scale * x, scale**2 * t)``.
    """

    centers: np.ndarray
    widths: np.ndarray
    amps: np.ndarray
    const: float = 0.0
    gain: float = 1.0
    time_freq: np.ndarray | None = None
    time_phase: np.ndarray | None = None
    scale: float = 1.0
    M: float | None = None
    floored: bool = False

    def _amp(self, t):
        if self.time_freq is None:
            return self.amps
        return self.amps * np.cos(self.time_freq * t + self.time_phase)

    def value(self, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        y = self.scale * np.asarray(x)
        a = self._amp(self.scale**2 * t)
        out = np.full(y.shape[0], self.const)
        for c, w, ak in zip(self.centers, self.widths, a):
            d2 = np.sum((y - c) ** 2, axis=1)
            out += ak * np.exp(-d2 / (2 * w * w))
        return self.gain * out

    def grad(self, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        y = self.scale * np.asarray(x)
        a = self._amp(self.scale**2 * t)
        out = np.zeros_like(y)
        for c, w, ak in zip(self.centers, self.widths, a):
            d = y - c
            e = np.exp(-np.sum(d * d, axis=1) / (2 * w * w))
            out += (-ak / (w * w) * e)[:, None] * d
        return self.gain * self.scale * out

    def rescaled(self, lam: float) -> "ProbeFunction":
        """``x, t -> f(lam x, lam^2 t)``."""
        import dataclasses
        return dataclasses.replace(self, scale=self.scale * lam)


def random_probe(rng: np.random.Generator, R: float, space_time: bool = False) -> ProbeFunction:
    k = int(rng.integers(1, 6))
    # centres uniform in B(R/2)
    v = rng.normal(size=(k, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    centers = v * (R / 2) * rng.random(k)[:, None] ** (1 / 3)
    widths = rng.uniform(R / 8, R / 2, k)
    amps = rng.uniform(-1, 1, k)
    if space_time:
        return ProbeFunction(centers, widths, amps, time_freq=rng.uniform(0, 3, k) / R**2,
                             time_phase=rng.uniform(0, 2 * np.pi, k))
    return ProbeFunction(centers, widths, amps)


def positive_probe(rng: np.random.Generator, R: float, M: float, pts: np.ndarray) -> ProbeFunction:
    """A bump sum mapped affinely onto ``[lo, M]`` over the quadrature points."""
    f = random_probe(rng, R)
    v = f.value(pts)
    lo_target = M * rng.uniform(1e-3, 0.9)
    span = float(v.max() - v.min())
    if span == 0:
        f.const, f.gain = lo_target, 1.0
    else:
        f.gain = (M - lo_target) / span
        f.const = f.const + (lo_target / f.gain - float(v.min()))
    f.M = M
    return f


# ---------------------------------------------------------------------------
# weights

@dataclass
class WeightProbe:
    """Profile ``Lambda(x)`` on ``B(1)``; ``Lambda_R(x) = R^-3 Lambda(x/R)``.

    ``kind`` is one of ``uniform``, ``power``, ``step``, ``zeta2`` (radial,
    non-increasing, at most 1) or ``tilt`` (the relaxed family: non-radial,
    bounded by ``C1``, segment-minimum constant ``C2``).
    """

    kind: str
    params: dict = field(default_factory=dict)
    C1: float = 1.0
    C2: float = 1.0

    def raw(self, y: np.ndarray) -> np.ndarray:
        rho = np.sqrt(np.sum(y * y, axis=1))
        k, p = self.kind, self.params
        if k == "uniform":
            return np.ones_like(rho)
        if k == "power":
            return np.clip(1 - rho**2, 0, None) ** p["m"]
        if k == "step":
            return np.where(rho <= p["rho1"], 1.0, p["low"])
        if k == "zeta2":
            from .harnack import _kappa, zeta_support
            return _kappa(rho, zeta_support()) ** 2
        if k == "tilt":
            return 1 + p["delta"] * (y @ np.asarray(p["direction"]))
        raise ValueError(f"unknown weight kind {k!r}")

    def weights(self, R: float, n: int = 64):
        """Quadrature points and ``Lambda_R * dx`` weights normalised to mass 1."""
        pts, w = ball_points(R, n)
        lam = self.raw(pts / R)
        mass = float(np.sum(w * lam))
        if not mass > 0:
            raise ValueError("weight has zero mass")
        return pts, w * lam / mass

    def sup_normalised(self, n: int = 64) -> float:
        """``max Lambda`` after normalising ``int_{B(1)} Lambda = 1``."""
        pts, w = ball_points(1.0, n)
        lam = self.raw(pts)
        return float(lam.max() / np.sum(w * lam))

    def admissible(self, n: int = 64) -> bool:
        if self.kind == "tilt":
            return True
        return self.sup_normalised(n) <= 1 + 1e-12


def random_weight(rng: np.random.Generator, relaxed: bool = False) -> WeightProbe:
    if relaxed:
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        delta = float(rng.uniform(0, 0.5))
        w = WeightProbe("tilt", {"delta": delta, "direction": d.tolist()})
        mass = 4 * np.pi / 3  # the linear tilt integrates to 0
        w.C1 = (1 + delta) / mass
        w.C2 = (1 - delta) / (1 + delta)
        return w
    while True:
        kind = ["uniform", "power", "step", "zeta2"][int(rng.integers(0, 4))]
        if kind == "power":
            w = WeightProbe(kind, {"m": 1})
        elif kind == "step":
            w = WeightProbe(kind, {"rho1": float(rng.uniform(0.3, 0.95)),
                                   "low": float(rng.uniform(0.0, 1.0))})
        else:
            w = WeightProbe(kind)
        if w.admissible():
            return w


# ---------------------------------------------------------------------------
# the three appendix inequalities

def check_weighted_poincare(f: ProbeFunction, w: WeightProbe, R: float, p: float,
                            n: int = 64, constant: str = "C1C2"):
    """``(lhs, rhs, pass)`` for the weighted Poincare inequality on ``B(R)``.

    For the relaxed ``tilt`` family the constant ``2^(p+6)`` is multiplied by
    ``C1*C2``; ``constant="C1/C2"`` uses ``C1/C2`` instead.
    """
    if not 1 <= p < math.inf:
        raise ValueError("need 1 <= p < inf")
    if not w.admissible(n):
        raise ValueError(f"weight {w.kind} is not admissible (max Lambda > 1)")
    pts, lam = w.weights(R, n)
    v = f.value(pts)
    mean = float(np.sum(v * lam))
    lhs = float(np.sum(np.abs(v - mean) ** p * lam))
    gn = np.sqrt(np.sum(f.grad(pts) ** 2, axis=1))
    k = 2.0 ** (p + 6)
    if w.kind == "tilt":
        k *= w.C1 * w.C2 if constant == "C1C2" else w.C1 / w.C2
    rhs = k * R**p * float(np.sum(gn**p * lam))
    return lhs, rhs, bool(lhs <= rhs * (1 + TOL) + ABS_FLOOR)


def nash_terms(values: np.ndarray, mu: np.ndarray, M: float):
    """``(lhs, rhs, pass, jensen_ok)`` for a discrete probability measure."""
    mu = np.asarray(mu, dtype=float)
    mu = mu / mu.sum()
    f = np.asarray(values, dtype=float)
    mf = float(np.sum(f * mu))
    lnf = np.log(f)
    mlog = float(np.sum(lnf * mu))
    g = lnf - mlog
    lhs = abs(math.log(mf) - mlog)
    rhs = M * math.sqrt(float(np.sum(g * g * mu))) / mf
    jensen = math.log(mf) >= mlog - 1e-15 * max(1.0, abs(mlog))
    return lhs, rhs, bool(lhs <= rhs * (1 + TOL) + ABS_FLOOR), bool(jensen)


def check_nash(f: ProbeFunction, R: float, M: float, n: int = 64):
    """Nash inequality with ``d mu = zeta_R^2 dx`` (normalised) on ``B(R)``.

    Returns ``(lhs, rhs, pass, jensen_ok, floored)``.
    """
    if M < 1:
        raise ValueError("need M >= 1")
    pts, mu = WeightProbe("zeta2").weights(R, n)
    v = f.value(pts)
    floored = bool(np.any(v < NASH_FLOOR))
    v = np.maximum(v, NASH_FLOOR)
    if np.any(v > M * (1 + 1e-12)):
        raise ValueError("probe exceeds M")
    lhs, rhs, ok, jen = nash_terms(v, mu, M)
    return lhs, rhs, ok, jen, floored


def _gauss_legendre(a, b, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def check_embedding(f: ProbeFunction, R: float, p: float, q: float, n: int = 48,
                    n_t: int = 8) -> dict:
    """Empirical constant of the parabolic embedding on ``Q(R) = B(R) x (-R^2, 0)``.

    ``N_emp = ||f||_{L^{p,q}} / (||f||_{L^{2,inf}} + ||grad f||_{L^{2,2}})``.
    Time integrals use Gauss-Legendre nodes; the sup in time is taken over
    those nodes and both end points.
    """
    if not 2 <= p <= 6:
        raise ValueError("need 2 <= p <= 6")
    iq = 0.0 if math.isinf(q) else 1 / q
    if abs(3 / p + 2 * iq - 1.5) > 1e-9:
        raise ValueError("exponents violate 3/p + 2/q = 3/2")
    pts, w = ball_points(R, n)
    tn, tw = _gauss_legendre(-R * R, 0.0, n_t)
    tsup = np.concatenate([[-R * R], tn, [0.0]])
    sp_p, l2_sq = {}, {}
    for t in np.unique(np.concatenate([tn, tsup])):
        v = np.abs(f.value(pts, t))
        sp_p[t] = float(np.sum(w * v**p)) ** (1 / p)
        l2_sq[t] = float(np.sum(w * v * v))
    if math.isinf(q):
        lhs = max(sp_p[t] for t in tsup)
    else:
        lhs = float(np.sum(tw * np.array([sp_p[t] ** q for t in tn]))) ** (1 / q)
    l2inf = math.sqrt(max(l2_sq[t] for t in tsup))
    grad2 = math.sqrt(float(np.sum(tw * np.array([np.sum(w * np.sum(f.grad(pts, t) ** 2, axis=1))
                                                  for t in tn]))))
    bracket = l2inf + grad2
    if bracket == 0:
        return {"degenerate": True, "N_emp": None}
    return {"degenerate": False, "lhs": lhs, "l2inf": l2inf, "grad_l22": grad2,
            "N_emp": lhs / bracket, "p": p, "q": q, "R": R}


# ---------------------------------------------------------------------------
# corpora

@dataclass
class CorpusReport:
    name: str
    seed: int
    probe_count: int
    tolerance: float
    max_ratio: float
    failures: list
    rows: list
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = {"inequality": self.name, "corpus_seed": self.seed, "probe_count": self.probe_count,
             "tolerance": self.tolerance, "max_ratio": self.max_ratio, "failures": self.failures}
        d.update(self.extra)
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["probe", "lhs", "rhs", "ratio"])
        for i, (l, r) in enumerate(self.rows):
            wr.writerow([i, repr(float(l)), repr(float(r)), repr(_ratio(l, r))])
        return buf.getvalue()


def _ratio(l, r):
    return float(l / r) if r > 0 else 0.0


def run_poincare_corpus(seed: int = DEFAULT_SEED, count: int = 200, n: int = 64,
                        relaxed_fraction: float = 0.25) -> CorpusReport:
    rng = np.random.default_rng(seed)
    rows, fails, p_counts = [], [], {}
    for i in range(count):
        R = float(rng.choice([0.25, 0.5, 1.0]))
        p = int(rng.integers(1, 5))
        p_counts[str(p)] = p_counts.get(str(p), 0) + 1
        w = random_weight(rng, relaxed=bool(rng.random() < relaxed_fraction))
        f = random_probe(rng, R)
        lhs, rhs, ok = check_weighted_poincare(f, w, R, p, n)
        rows.append((lhs, rhs))
        if not ok:
            fails.append({"probe": i, "p": p, "R": R, "weight": w.kind, "lhs": lhs, "rhs": rhs})
    mx = max(_ratio(l, r) for l, r in rows)
    return CorpusReport("weighted_poincare", seed, count, TOL, mx, fails, rows,
                        {"p_counts": dict(sorted(p_counts.items()))})


def run_nash_corpus(seed: int = DEFAULT_SEED, count: int = 200, n: int = 64) -> CorpusReport:
    rng = np.random.default_rng(seed + 1)
    rows, fails, jensen_bad, floored = [], [], [], []
    for i in range(count):
        R = float(rng.choice([0.25, 0.5, 1.0]))
        M = float(rng.uniform(1, 10))
        pts, _ = WeightProbe("zeta2").weights(R, n)
        f = positive_probe(rng, R, M, pts)
        lhs, rhs, ok, jen, fl = check_nash(f, R, M, n)
        rows.append((lhs, rhs))
        if not ok:
            fails.append({"probe": i, "R": R, "M": M, "lhs": lhs, "rhs": rhs})
        if not jen:
            jensen_bad.append(i)
        if fl:
            floored.append(i)
    mx = max(_ratio(l, r) for l, r in rows)
    return CorpusReport("nash", seed, count, TOL, mx, fails, rows,
                        {"jensen_failures": jensen_bad, "floored_probes": floored})


def embedding_exponents(rng) -> tuple[float, float]:
    p = float(rng.uniform(2, 6))
    q = 2 / (1.5 - 3 / p) if p > 2 else math.inf
    return p, q


def run_embedding_corpus(seed: int = DEFAULT_SEED, count: int = 24, n: int = 48,
                         lam: float = 2.0) -> CorpusReport:
    """Empirical constants plus the parabolic rescaling check per probe."""
    rng = np.random.default_rng(seed + 2)
    rows, fails, drift = [], [], 0.0
    nmax = 0.0
    for i in range(count):
        R = float(rng.choice([0.25, 0.5, 1.0]))
        p, q = embedding_exponents(rng)
        f = random_probe(rng, R, space_time=True)
        a = check_embedding(f, R, p, q, n)
        b = check_embedding(f.rescaled(lam), R / lam, p, q, n)
        if a["degenerate"]:
            continue
        rel = abs(b["N_emp"] / a["N_emp"] - 1)
        drift = max(drift, rel)
        nmax = max(nmax, a["N_emp"])
        rows.append((a["lhs"], a["l2inf"] + a["grad_l22"]))
        if rel > 0.01:
            fails.append({"probe": i, "rescale_drift": rel})
    return CorpusReport("embedding", seed, count, 0.01, nmax, fails, rows,
                        {"max_rescale_drift": drift})


# ---------------------------------------------------------------------------
# local energy estimates on solver data

def verify_local_energy(h: FlowHistory, c: Cylinder) -> dict:
    """``(A + E)(rho) / (1 + C(2 rho) + D(2 rho))`` with ``rho = c.R``."""
    big = Cylinder(c.x03, c.t0, 2 * c.R)
    h.check(big)
    A, E = quantity_A(h, c), quantity_E(h, c)
    C2, D2 = quantity_C(h, big), quantity_D(h, big)
    return {"rho": c.R, "A": A, "E": E, "C_2rho": C2, "D_2rho": D2,
            "ratio": (A + E) / (1 + C2 + D2)}


def local_energy_ladder(h: FlowHistory, x03: float, t0: float, rhos) -> dict:
    rows = [verify_local_energy(h, Cylinder(x03, t0, r)) for r in rhos]
    return {"rows": rows, "max_ratio": max(r["ratio"] for r in rows)}


def largest_admissible_radius(h: FlowHistory, x03: float, t0: float) -> float:
    g = h.grid
    return min(g.r_max, x03 - g.z_min, g.z_max - x03, math.sqrt(max(t0 - h.times[0], 0.0)))


def verify_C_interpolation(h: FlowHistory, c: Cylinder, rho: float, R: float,
                           params: ExponentParams | None = None,
                           script_E_1: float | None = None) -> dict:
    """``C(rho)`` against ``(R/rho)^2 [E^(1-g/6) G^(1+g/3) + E(1)^(9/2) E_R^(3/4)]`` (N = 1).

    ``E(1)`` is taken at the largest admissible cylinder unless given.
    """
    params = params or ExponentParams()
    if not 0 < rho <= R:
        raise ValueError("need 0 < rho <= R")
    gm = params.gamma_exp
    cr, cR = Cylinder(c.x03, c.t0, rho), Cylinder(c.x03, c.t0, R)
    h.check(cR)
    if script_E_1 is None:
        R1 = largest_admissible_radius(h, c.x03, c.t0)
        c1 = Cylinder(c.x03, c.t0, R1)
        script_E_1 = quantity_A(h, c1) + quantity_E(h, c1) + quantity_D(h, c1)
    Cr = quantity_C(h, cr)
    A, E, D = quantity_A(h, cR), quantity_E(h, cR), quantity_D(h, cR)
    G = quantity_G(h, cR, params.p, params.q)
    sE = A + E + D
    rhs = (R / rho) ** 2 * (sE ** (1 - gm / 6) * G ** (1 + gm / 3) + script_E_1**4.5 * E**0.75)
    return {"rho": rho, "R": R, "C_rho": Cr, "rhs": rhs,
            "ratio": Cr / rhs if rhs > 0 else 0.0, "script_E_1": script_E_1}


def verify_pressure_decay(h: FlowHistory, c: Cylinder, rho: float, R: float) -> dict:
    """``D(rho)`` against ``(rho/R) D(R) + (R/rho)^2 C(R)`` (N = 1)."""
    if not 0 < 2 * rho <= R:
        raise ValueError("need 0 < 2 rho <= R")
    cr, cR = Cylinder(c.x03, c.t0, rho), Cylinder(c.x03, c.t0, R)
    Dr, DR, CR = quantity_D(h, cr), quantity_D(h, cR), quantity_C(h, cR)
    first = (rho / R) * DR
    rhs = first + (R / rho) ** 2 * CR
    return {"rho": rho, "R": R, "D_rho": Dr, "first_term": first, "rhs": rhs,
            "ratio": Dr / rhs if rhs > 0 else 0.0}


def epsilon_ladder(h: FlowHistory, x03: float, t0: float, beta: float, alpha: float,
                   gamma_exp: float = 0.5, R0: float = 0.25, levels: int = 4,
                   G_bound: float = 1.0, p: float = 10 / 3, q: float = 10 / 3) -> dict:
    """``E_beta = E * omega^beta`` and ``G_alpha`` down ``R_j = R0 / 2^j``.

    ``bounded`` compares the ladder against ``1 + E(1)^18 + G^((6+2g)/g)``
    with the unknown constant set to 1; ``conditional_ok`` is true when
    either some ``G_alpha`` exceeds the bound (hypothesis off) or the ladder
    stays bounded.
    """
    if not 0 < beta < 1 / 8:
        raise ValueError("beta must lie in (0, 1/8)")
    want = gamma_exp * beta / (6 + 2 * gamma_exp)
    if abs(alpha - want) > 1e-12:
        raise ValueError(f"alpha must equal gamma*beta/(6+2 gamma) = {want:.8g}")
    radii = [R0 / 2**j for j in range(levels)]
    if radii[-1] < 2 * h.grid.dr:
        raise ValueError("ladder exhausts resolution")
    R1 = largest_admissible_radius(h, x03, t0)
    c1 = Cylinder(x03, t0, R1)
    E1 = quantity_A(h, c1) + quantity_E(h, c1) + quantity_D(h, c1)
    rows = []
    for R in radii:
        c = Cylinder(x03, t0, R)
        sE = quantity_A(h, c) + quantity_E(h, c) + quantity_D(h, c)
        G = quantity_G(h, c, p, q)
        om = weight_omega(R)
        rows.append({"R": R, "omega": om, "script_E": sE, "E_beta": sE * om**beta,
                     "G": G, "G_alpha": G * om**alpha})
    Gmax = max(r["G"] for r in rows)
    env = 1 + E1**18 + Gmax ** ((6 + 2 * gamma_exp) / gamma_exp)
    eb = max(r["E_beta"] for r in rows)
    hyp = all(r["G_alpha"] <= G_bound for r in rows)
    bounded = bool(np.isfinite(eb) and eb <= env)
    return {"rows": rows, "max_E_beta": eb, "envelope": env, "hypothesis_holds": hyp,
            "bounded": bounded, "conditional_ok": (not hyp) or bounded, "script_E_1": E1}
