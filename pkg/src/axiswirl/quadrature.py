"""Ball and parabolic-cylinder integrals of axisymmetric fields.

Each node owns the dual cell ``[r_i - dr/2, r_i + dr/2] x [z_j - dz/2, z_j + dz/2]``
clipped to the domain.  Its weight in a ball ``B((0, x03), R)`` is the exact
3D volume ``2 pi * int r dr dz`` of the part of that cell inside the
half-disc ``r**2 + (z - x03)**2 <= R**2``.  With these weights a constant
integrates exactly; smooth integrands pick up an O(h) boundary-layer error.

Time integrals use the trapezoid rule on the piecewise-linear interpolant of
the stored snapshots over ``[t0 - R**2, t0]``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .grid import AxiGrid, Field2D, FlowState, grad_sq_raw

_TTOL = 1e-9


# ---------------------------------------------------------------------------
# exact cell / ball overlap

def _strip_volume(ra, rb, za, zb, z0, R) -> float:
    """``int_{ra}^{rb} r * |{z in [za, zb]: (z - z0)**2 <= R**2 - r**2}| dr``."""
    rb = min(rb, R)
    if rb <= ra:
        return 0.0
    pts = {ra, rb}
    for d in (za - z0, zb - z0):
        if abs(d) < R:
            rr = math.sqrt(R * R - d * d)
            if ra < rr < rb:
                pts.add(rr)
    pts = sorted(pts)
    total = 0.0
    for p, q in zip(pts[:-1], pts[1:]):
        m = 0.5 * (p + q)
        s = math.sqrt(max(R * R - m * m, 0.0))
        up_const = z0 + s >= zb
        lo_const = z0 - s <= za
        if min(zb, z0 + s) - max(za, z0 - s) <= 0:
            continue
        # chord length = alpha + beta * s(r)
        alpha = (zb if up_const else z0) - (za if lo_const else z0)
        beta = (0 if up_const else 1) + (0 if lo_const else 1)
        part = alpha * (q * q - p * p) / 2
        if beta:
            F = lambda r: -((R * R - r * r) ** 1.5) / 3
            part += beta * (F(q) - F(p))
        total += part
    return total


@lru_cache(maxsize=256)
def ball_weights(grid: AxiGrid, x03: float, R: float) -> np.ndarray:
    """Node weights (including 2 pi) for the ball ``B((0, x03), R)``."""
    if not R > 0:
        raise ValueError("R must be positive")
    if not grid.contains_ball(x03, R):
        raise ValueError(f"ball (x03={x03}, R={R}) leaves the domain")
    dr, dz = grid.dr, grid.dz
    r, z = grid.r, grid.z
    ra = np.clip(r - dr / 2, 0.0, grid.r_max)
    rb = np.clip(r + dr / 2, 0.0, grid.r_max)
    za = np.clip(z - dz / 2, grid.z_min, grid.z_max)
    zb = np.clip(z + dz / 2, grid.z_min, grid.z_max)
    RA, ZA = np.meshgrid(ra, za - x03, indexing="ij")
    RB, ZB = np.meshgrid(rb, zb - x03, indexing="ij")
    far = RB**2 + np.maximum(ZA**2, ZB**2)
    near_z = np.where((ZA <= 0) & (ZB >= 0), 0.0, np.minimum(ZA**2, ZB**2))
    near = RA**2 + near_z
    full = far <= R * R
    empty = near >= R * R
    w = np.zeros(grid.shape)
    w[full] = ((RB**2 - RA**2) / 2 * (ZB - ZA))[full]
    for i, j in zip(*np.nonzero(~full & ~empty)):
        w[i, j] = _strip_volume(ra[i], rb[i], za[j], zb[j], x03, R)
    w *= 2 * np.pi
    w.flags.writeable = False
    return w


def ball_integral(f, x03: float, R: float, power: float = 1.0) -> float:
    """``int_{B((0,x03),R)} |f|**power dx`` over the 3D ball.

    ``f`` is a :class:`Field2D`; a plain array is accepted together with a
    grid via ``(grid, array)``.
    """
    if power < 1:
        raise ValueError("power must be >= 1")
    grid, vals = (f.grid, np.asarray(f.values)) if isinstance(f, Field2D) else f
    w = ball_weights(grid, float(x03), float(R))
    return float(np.sum(w * np.abs(vals) ** power))


def _ball_integral_raw(grid, vals, x03, R):
    return float(np.sum(ball_weights(grid, float(x03), float(R)) * vals))


def trapezoid_weights(times: np.ndarray, a: float, b: float) -> np.ndarray:
    """Weights integrating the linear interpolant of samples over ``[a, b]``."""
    t = np.asarray(times, dtype=float)
    w = np.zeros(t.size)
    if t.size == 1:
        return w
    for k in range(t.size - 1):
        lo, hi = max(a, t[k]), min(b, t[k + 1])
        if hi <= lo:
            continue
        L = t[k + 1] - t[k]
        th_lo, th_hi = (lo - t[k]) / L, (hi - t[k]) / L
        w[k] += (hi - lo) / 2 * ((1 - th_lo) + (1 - th_hi))
        w[k + 1] += (hi - lo) / 2 * (th_lo + th_hi)
    return w


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cylinder:
    x03: float
    t0: float
    R: float

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be positive")


class CoverageError(ValueError):
    """The cylinder's time slab is not covered by the stored history."""


class FlowHistory:
    """Time-ordered snapshots on one grid.

    ``gamma_evolved`` optionally carries the separately integrated ``Gamma``
    for each snapshot; diagnostics use ``state.gamma`` (= r * utheta) unless
    told otherwise.
    """

    def __init__(self, snapshots: list[FlowState], gamma_evolved: list[Field2D] | None = None,
                 check_uniform: bool = True):
        if not snapshots:
            raise ValueError("empty history")
        g = snapshots[0].grid
        if any(s.grid != g for s in snapshots):
            raise ValueError("snapshots live on different grids")
        t = np.array([s.t for s in snapshots], dtype=float)
        if np.any(np.diff(t) <= 0):
            raise ValueError("snapshot times must be strictly increasing")
        if check_uniform and t.size > 2:
            dt = np.diff(t)
            if np.max(np.abs(dt - dt[0])) > 1e-6 * dt[0]:
                raise ValueError("snapshot spacing must be uniform")
        self.snapshots = list(snapshots)
        self.gamma_evolved = gamma_evolved
        self.times = t
        self.grid = g
        self._besov_cache: dict = {}

    def __len__(self):
        return len(self.snapshots)

    @property
    def window(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def check(self, c: Cylinder) -> None:
        if not self.grid.contains_ball(c.x03, c.R):
            raise ValueError(f"ball of {c} leaves the domain")
        lo, hi = self.window
        tol = _TTOL * max(1.0, abs(c.t0))
        if c.t0 - c.R**2 < lo - tol or c.t0 > hi + tol:
            raise CoverageError(f"history [{lo:g}, {hi:g}] does not cover [{c.t0 - c.R**2:g}, {c.t0:g}]")

    def in_window(self, c: Cylinder) -> np.ndarray:
        """Indices of snapshots with ``t0 - R**2 < t <= t0``."""
        tol = _TTOL * max(1.0, abs(c.t0))
        m = (self.times > c.t0 - c.R**2 + tol) & (self.times <= c.t0 + tol)
        idx = np.nonzero(m)[0]
        if idx.size == 0:
            # window shorter than the cadence: fall back to the nearest sample
            idx = np.array([int(np.argmin(np.abs(self.times - c.t0)))])
        return idx

    def time_weights(self, c: Cylinder) -> np.ndarray:
        self.check(c)
        return trapezoid_weights(self.times, c.t0 - c.R**2, c.t0)

    def slab(self, c: Cylinder, fn) -> float:
        """``int_{t0-R^2}^{t0} fn(snapshot) dt`` by the trapezoid rule."""
        w = self.time_weights(c)
        return float(sum(wk * fn(s) for wk, s in zip(w, self.snapshots) if wk != 0.0))


# ---------------------------------------------------------------------------
# exponents and the log-log weight

def weight_omega(R: float) -> float:
    """``1 / ln(ln(100/R))`` for ``0 < R <= 1/4``."""
    if not 0 < R <= 0.25:
        raise ValueError(f"weight_omega needs 0 < R <= 1/4, got {R}")
    return 1.0 / math.log(math.log(100.0 / R))


def g_alpha(G: float, R: float, alpha: float) -> float:
    return G * weight_omega(R) ** alpha


def alpha_zero(gamma_exp: float) -> float:
    return gamma_exp / (48 + 16 * gamma_exp)


@dataclass(frozen=True)
class ExponentParams:
    """Exponent block shared by diagnostics.

    ``3/p + 2/q = 2 - gamma_exp`` is enforced; ``alpha`` defaults to the
    coupling ``gamma*beta/(6 + 2*gamma)``.
    """

    p: float = 10 / 3
    q: float = 10 / 3
    gamma_exp: float = 0.5
    beta: float = 1 / 16
    alpha: float | None = None
    tau: float = 0.5
    G_bound: float = 1.0
    K: float = 10.0

    def __post_init__(self):
        if self.alpha is None:
            object.__setattr__(self, "alpha", self.gamma_exp * self.beta / (6 + 2 * self.gamma_exp))
        validate_exponents(self.p, self.q, self.gamma_exp)
        if not 0 < self.beta < 1 / 8:
            raise ValueError(f"beta must lie in (0, 1/8), got {self.beta}")
        if not 0 < self.alpha < alpha_zero(self.gamma_exp):
            raise ValueError(f"alpha={self.alpha} violates alpha < gamma/(48+16 gamma) = "
                             f"{alpha_zero(self.gamma_exp):.6g}")
        if not 0 < self.tau < 1:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")

    def as_dict(self):
        return {"p": self.p, "q": self.q, "gamma_exp": self.gamma_exp, "alpha": self.alpha,
                "beta": self.beta}


def validate_exponents(p: float, q: float, gamma_exp: float, tol: float = 1e-9) -> None:
    if not 0 < gamma_exp < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma_exp}")
    if not (p > 1 and q > 1):
        raise ValueError("need 1 < p, q <= inf")
    lhs = 3 / p + 2 / q
    if abs(lhs - (2 - gamma_exp)) > tol:
        raise ValueError(f"exponents violate 3/p + 2/q = 2 - gamma: {lhs:.6g} != {2 - gamma_exp:.6g}")


# ---------------------------------------------------------------------------
# scale-invariant quantities

def quantity_A(h: FlowHistory, c: Cylinder) -> float:
    h.check(c)
    g = h.grid
    return max(_ball_integral_raw(g, h.snapshots[k].speed_sq(), c.x03, c.R)
               for k in h.in_window(c)) / c.R


def quantity_E(h: FlowHistory, c: Cylinder) -> float:
    g = h.grid
    fn = lambda s: _ball_integral_raw(g, grad_sq_raw(np.asarray(s.ur.values), np.asarray(s.utheta.values),
                                                     np.asarray(s.u3.values), g), c.x03, c.R)
    return h.slab(c, fn) / c.R


def quantity_C(h: FlowHistory, c: Cylinder) -> float:
    g = h.grid
    return h.slab(c, lambda s: _ball_integral_raw(g, s.speed_sq() ** 1.5, c.x03, c.R)) / c.R**2


def quantity_D(h: FlowHistory, c: Cylinder) -> float:
    g = h.grid
    return h.slab(c, lambda s: _ball_integral_raw(g, np.abs(s.pi.values) ** 1.5, c.x03, c.R)) / c.R**2


def _b_mag(s: FlowState) -> np.ndarray:
    return np.sqrt(s.ur.values**2 + s.u3.values**2)


def mixed_norm_b(h: FlowHistory, c: Cylinder, p: float, q: float) -> float:
    """``||b||_{L^q_t L^p_x(Q)}``; infinite exponents become nodal / snapshot maxima."""
    g = h.grid
    w = ball_weights(g, float(c.x03), float(c.R))
    inside = w > 0

    def space(s):
        b = _b_mag(s)
        if math.isinf(p):
            return float(np.max(b[inside]))
        return float(np.sum(w * b**p)) ** (1 / p)

    if math.isinf(q):
        h.check(c)
        return max(space(h.snapshots[k]) for k in h.in_window(c))
    return h.slab(c, lambda s: space(s) ** q) ** (1 / q)


def quantity_G(h: FlowHistory, c: Cylinder, p: float, q: float, gamma_exp: float | None = None) -> float:
    """``R**(1 - 3/p - 2/q) * ||b||_{L^{p,q}(Q)}``; ``b`` excludes the swirl."""
    if gamma_exp is not None:
        validate_exponents(p, q, gamma_exp)
    ip = 0.0 if math.isinf(p) else 1 / p
    iq = 0.0 if math.isinf(q) else 1 / q
    return c.R ** (1 - 3 * ip - 2 * iq) * mixed_norm_b(h, c, p, q)


def quantity_B(h: FlowHistory, c: Cylinder, S: float | None = None, **besov_kw) -> float:
    """``R**(-1/3) * ||b||_{L^6_t Besov^{-1}_{inf,inf}}`` over the cylinder slab."""
    from .besov import besov_norm_b

    if S is None:
        S = h.grid.r_max**2

    def val(s):
        key = (id(s), S, tuple(sorted(besov_kw.items())))
        if key not in h._besov_cache:
            h._besov_cache[key] = besov_norm_b(s, S, **besov_kw)
        return h._besov_cache[key]

    return c.R ** (-1 / 3) * h.slab(c, lambda s: val(s) ** 6) ** (1 / 6)


@dataclass
class CylinderQuantities:
    t0: float
    x03: float
    R: float
    omega: float
    A: float
    E: float
    C: float
    D: float
    script_E: float
    G: float
    G_alpha: float
    B_besov: float
    p: float
    q: float
    gamma_exp: float
    alpha: float
    beta: float

    def __post_init__(self):
        assert self.script_E == self.A + self.E + self.D


def cylinder_quantities(h: FlowHistory, c: Cylinder, params: ExponentParams | None = None,
                        with_besov: bool = True, besov_kw: dict | None = None) -> CylinderQuantities:
    """All quantities for one cylinder.

    ``omega`` and ``G_alpha`` need ``R <= 1/4``; above that they are NaN.
    """
    params = params or ExponentParams()
    A, E = quantity_A(h, c), quantity_E(h, c)
    C, D = quantity_C(h, c), quantity_D(h, c)
    G = quantity_G(h, c, params.p, params.q)
    om = weight_omega(c.R) if c.R <= 0.25 else float("nan")
    Gal = G * om**params.alpha
    B = quantity_B(h, c, **(besov_kw or {})) if with_besov else float("nan")
    return CylinderQuantities(c.t0, c.x03, c.R, om, A, E, C, D, A + E + D, G, Gal, B,
                              params.p, params.q, params.gamma_exp, params.alpha, params.beta)


SWEEP_COLUMNS = ("t0", "x03", "R", "omega", "A", "E", "C", "D", "script_E", "G", "G_alpha", "B")


def _row(q: CylinderQuantities):
    d = asdict(q)
    d["B"] = d.pop("B_besov")
    return [d[k] for k in SWEEP_COLUMNS]


def _fmt(x) -> str:
    return repr(float(x))


def sweep_to_csv(rows: list[CylinderQuantities]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for q in rows:
        w.writerow([_fmt(x) for x in _row(q)])
    return buf.getvalue()


def sweep_to_json(rows: list[CylinderQuantities], params: ExponentParams | None = None) -> str:
    params = params or (ExponentParams(p=rows[0].p, q=rows[0].q, gamma_exp=rows[0].gamma_exp,
                                       alpha=rows[0].alpha, beta=rows[0].beta) if rows else ExponentParams())
    recs = [dict(zip(SWEEP_COLUMNS, (None if isinstance(x, float) and math.isnan(x) else x
                                      for x in _row(q)))) for q in rows]
    return json.dumps({"params": params.as_dict(), "rows": recs}, indent=2, sort_keys=True) + "\n"
