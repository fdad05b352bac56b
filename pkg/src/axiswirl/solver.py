"""Explicit Heun (SSP-RK2) time stepping of the swirling axisymmetric system.

Each stage advances ``(ur, utheta, u3)`` with advection, explicit diffusion
and the swirl coupling terms, then projects ``(ur, u3)`` onto the kernel of a
discrete divergence.  The projection is exact: the discrete gradient used for
the correction is the weighted adjoint of that divergence, so the Poisson
matrix is the symmetric product ``G^T W G`` and is solved by sparse LU.

``diffusion="cn"`` treats the viscous terms by Crank-Nicolson instead, which
removes the ``dt ~ h^2`` bound; only the advective CFL remains.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .grid import (EVEN, ODD, AxiGrid, Field2D, FlowState, _lap_raw, make_grid)

BC_RULES = ("noslip", "fixed", "exact")


class CFLError(ValueError):
    """Time step violates the explicit stability bound."""


class BlowUpError(FloatingPointError):
    """Non-finite values appeared; ``last_state`` holds the last good state."""

    def __init__(self, msg, last_state=None, history=None):
        super().__init__(msg)
        self.last_state = last_state
        self.history = history


class MemoryBudgetError(MemoryError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Step parameters.

    ``boundary_data(t)`` must return a dict with keys ``ur``, ``utheta``,
    ``u3`` of full-grid arrays when ``bc_outer == "exact"``.  ``forcing``
    maps component names (``ur``, ``utheta``, ``u3``) to ``f(R, Z, t)``.
    """

    dt: float
    nu: float = 1.0
    bc_outer: str = "noslip"
    cfl_limit: float = 0.8
    forcing: Mapping[str, Callable] | None = None
    advection: str = "upwind"
    boundary_data: Callable | None = None
    gauge: str = "mean"
    div_tol: float = 1e-8
    diffusion: str = "explicit"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.nu != 1.0:
            raise ValueError("viscosity is fixed at 1")
        if self.bc_outer not in BC_RULES:
            raise ValueError(f"bc_outer must be one of {BC_RULES}")
        if not 0 < self.cfl_limit <= 1:
            raise ValueError("cfl_limit must lie in (0, 1]")
        if self.advection not in ("upwind", "centered"):
            raise ValueError("advection must be 'upwind' or 'centered'")
        if self.bc_outer == "exact" and self.boundary_data is None:
            raise ValueError("bc_outer='exact' needs boundary_data")
        if self.gauge not in ("mean", "axis_center"):
            raise ValueError("gauge must be 'mean' or 'axis_center'")
        if self.diffusion not in ("explicit", "cn"):
            raise ValueError("diffusion must be 'explicit' or 'cn'")


def diffusive_dt(grid: AxiGrid, cfl_limit: float) -> float:
    return cfl_limit * min(grid.dr, grid.dz) ** 2 / 4


def check_cfl(grid: AxiGrid, dt: float, cfl_limit: float, ur=None, u3=None,
              diffusion: str = "explicit") -> None:
    if diffusion == "cn":
        if ur is not None:
            adv = dt * (np.max(np.abs(ur)) / grid.dr + np.max(np.abs(u3)) / grid.dz)
            if adv > cfl_limit:
                raise CFLError(f"dt={dt:g} too large for advection speed (dt*|b|/h={adv:g})")
        return
    if dt > diffusive_dt(grid, cfl_limit) * (1 + 1e-12):
        raise CFLError(f"dt={dt:g} exceeds diffusive limit {diffusive_dt(grid, cfl_limit):g}")
    if ur is not None:
        adv = np.max(np.abs(ur)) / grid.dr + np.max(np.abs(u3)) / grid.dz
        diff = 2 / grid.dr**2 + 2 / grid.dz**2
        if dt * (diff + adv) > 1 + 1e-12 and dt * adv > 0:
            raise CFLError(f"dt={dt:g} too large for advection speed (dt*|b|/h={dt * adv:g})")


# ---------------------------------------------------------------------------
# projection

@dataclass
class _Projector:
    grid: AxiGrid
    D: sp.csr_matrix          # n x 2n, acts on [ur.ravel(), u3.ravel()]
    G: sp.csr_matrix          # ndof x n, centred gradient at velocity dofs
    dof: np.ndarray           # indices into the 2n velocity vector
    wp: np.ndarray            # pressure-node weights
    lu: object
    free: np.ndarray
    labels: np.ndarray
    ncomp: int
    offset_pinv: np.ndarray
    Dc: sp.csr_matrix

    def project(self, ur: np.ndarray, u3: np.ndarray):
        """Return ``(ur, u3, psi, div_before, div_after)`` with ``u = u* - G psi``."""
        u = np.concatenate([ur.ravel(), u3.ravel()])
        div0 = self.D @ u
        rhs = -self.wp * div0
        psi = np.zeros(self.wp.size)
        psi[self.free] = self.lu.solve(rhs[self.free])
        u[self.dof] -= self.G @ psi
        div1 = self.D @ u
        n = self.wp.size
        return u[:n].reshape(ur.shape), u[n:].reshape(u3.shape), psi, div0, div1

    def fix_pressure(self, phi: np.ndarray, gauge: str) -> np.ndarray:
        """Remove the decoupled per-class offsets, then fix the gauge."""
        c = -self.offset_pinv @ (self.Dc @ phi)
        phi = phi + c[self.labels]
        if gauge == "mean":
            phi = phi - np.sum(self.wp * phi) / np.sum(self.wp)
        else:
            g = self.grid
            j0 = int(np.argmin(np.abs(g.z)))
            phi = phi - phi[j0]
        return phi


def _radial_weights(g: AxiGrid) -> np.ndarray:
    w = g.r * g.dr
    w[0] = g.dr**2 / 4
    w[-1] *= 0.5
    return w


def _axial_weights(g: AxiGrid) -> np.ndarray:
    w = np.full(g.Nz + 1, g.dz)
    w[0] = w[-1] = g.dz / 2
    return w


@lru_cache(maxsize=8)
def projector(g: AxiGrid) -> _Projector:
    Nr, Nz = g.Nr, g.Nz
    dr, dz = g.dr, g.dz
    nr, nz = Nr + 1, Nz + 1
    n = nr * nz
    r = g.r
    idx = np.arange(n).reshape(nr, nz)
    rows, cols, vals = [], [], []

    def add(rr, cc, vv):
        rows.append(np.ravel(rr)); cols.append(np.ravel(cc)); vals.append(np.ravel(vv) * np.ones(np.size(rr)))

    J = np.arange(nz)
    # radial part; u^r columns are 0..n-1
    add(idx[0], idx[1], 2 / dr)
    for i in range(1, Nr):
        add(idx[i], idx[i + 1], r[i + 1] / (2 * dr * r[i]))
        add(idx[i], idx[i - 1], -r[i - 1] / (2 * dr * r[i]))
    add(idx[Nr], idx[Nr], 1 / dr)
    add(idx[Nr], idx[Nr - 1], -r[Nr - 1] / (r[Nr] * dr))
    # axial part; u^3 columns are n..2n-1
    add(idx[:, 1:-1], n + idx[:, 2:], 1 / (2 * dz))
    add(idx[:, 1:-1], n + idx[:, :-2], -1 / (2 * dz))
    add(idx[:, 0], n + idx[:, 1], 1 / dz)
    add(idx[:, 0], n + idx[:, 0], -1 / dz)
    add(idx[:, -1], n + idx[:, -1], 1 / dz)
    add(idx[:, -1], n + idx[:, -2], -1 / dz)
    D = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, 2 * n))
    del J

    dof_r = idx[1:Nr, 1:Nz].ravel()
    dof_3 = idx[0:Nr, 1:Nz].ravel()
    dof = np.concatenate([dof_r, n + dof_3])
    # centred gradient at the dofs
    ii, jj = np.meshgrid(np.arange(1, Nr), np.arange(1, Nz), indexing="ij")
    k_r = np.arange(dof_r.size)
    Gr_rows = np.concatenate([k_r, k_r])
    Gr_cols = np.concatenate([idx[ii + 1, jj].ravel(), idx[ii - 1, jj].ravel()])
    Gr_vals = np.concatenate([np.full(k_r.size, 1 / (2 * dr)), np.full(k_r.size, -1 / (2 * dr))])
    ii, jj = np.meshgrid(np.arange(0, Nr), np.arange(1, Nz), indexing="ij")
    k_3 = dof_r.size + np.arange(dof_3.size)
    G3_rows = np.concatenate([k_3, k_3])
    G3_cols = np.concatenate([idx[ii, jj + 1].ravel(), idx[ii, jj - 1].ravel()])
    G3_vals = np.concatenate([np.full(k_3.size, 1 / (2 * dz)), np.full(k_3.size, -1 / (2 * dz))])
    G = sp.csr_matrix((np.concatenate([Gr_vals, G3_vals]),
                       (np.concatenate([Gr_rows, G3_rows]), np.concatenate([Gr_cols, G3_cols]))),
                      shape=(dof.size, n))

    wp = np.outer(_radial_weights(g), _axial_weights(g)).ravel()
    S = -(sp.diags(wp) @ D[:, dof] @ G).tocsr()
    S = 0.5 * (S + S.T)

    pattern = (abs(S) > 0).astype(np.int8)
    ncomp, labels = connected_components(pattern, directed=False)
    pins = np.unique(labels, return_index=True)[1]
    free = np.setdiff1d(np.arange(n), pins)
    lu = splu(S[free][:, free].tocsc())

    # compact nearest-neighbour differences used to align class offsets
    e_r = np.stack([idx[1:, :].ravel(), idx[:-1, :].ravel()])
    e_z = np.stack([idx[:, 1:].ravel(), idx[:, :-1].ravel()])
    e = np.concatenate([e_r, e_z], axis=1)
    m = e.shape[1]
    Dc = sp.csr_matrix((np.concatenate([np.ones(m), -np.ones(m)]),
                        (np.concatenate([np.arange(m)] * 2), np.concatenate([e[0], e[1]]))),
                       shape=(m, n))
    E = sp.csr_matrix((np.ones(n), (np.arange(n), labels)), shape=(n, ncomp))
    offset_pinv = np.linalg.pinv((Dc @ E).toarray())
    return _Projector(g, D, G, dof, wp, lu, free, labels, ncomp, offset_pinv, Dc)


def project(ur: Field2D, u3: Field2D, dt: float = 1.0):
    """Project ``(ur, u3)`` to the discretely divergence-free subspace.

    Boundary values are kept; they must carry no net flux per pressure
    class (true for no-slip and for tangential boundary data).
    Returns ``(ur, u3, pressure, report)``.
    """
    P = projector(ur.grid)
    a, b, psi, d0, d1 = P.project(np.asarray(ur.values), np.asarray(u3.values))
    phi = P.fix_pressure(psi / dt, "mean").reshape(ur.grid.shape)
    return (Field2D(ur.grid, a, ODD), Field2D(ur.grid, b, EVEN), Field2D(ur.grid, phi, EVEN),
            _div_report(ur.grid, d0, d1, a, b))


def _div_report(g, d0, d1, *vel):
    """Absolute and relative divergence; the scale is ``max(|D u*|, |u|/h)``."""
    h = min(g.dr, g.dz)
    speed = max(float(np.max(np.abs(v))) for v in vel)
    scale = max(float(np.max(np.abs(d0))), speed / h)
    ab = float(np.max(np.abs(d1)))
    return {"max_div": ab, "rel_div": ab / scale if scale > 0 else 0.0}


def solver_divergence(ur: Field2D, u3: Field2D) -> np.ndarray:
    """The divergence the projection annihilates (nodal array).

    Matches :func:`axiswirl.grid.divergence` away from ``r = r_max`` and the
    two axial ends, where it uses first-order one-sided rows.
    """
    P = projector(ur.grid)
    u = np.concatenate([np.ravel(ur.values), np.ravel(u3.values)])
    return (P.D @ u).reshape(ur.grid.shape)


# ---------------------------------------------------------------------------
# right-hand sides

def _advect(a, ur, u3, g: AxiGrid, scheme: str):
    """``(b . grad) a`` on interior nodes ``[1:-1, 1:-1]`` plus the axis row.

    Returns a full-size array; boundary rows are zero.
    """
    dr, dz = g.dr, g.dz
    out = np.zeros_like(a)
    c = (slice(1, -1), slice(1, -1))
    if scheme == "upwind":
        fwd = (a[2:, 1:-1] - a[1:-1, 1:-1]) / dr
        bwd = (a[1:-1, 1:-1] - a[:-2, 1:-1]) / dr
        v = ur[c]
        out[c] += np.where(v > 0, v * bwd, v * fwd)
        fwd = (a[:, 2:] - a[:, 1:-1]) / dz
        bwd = (a[:, 1:-1] - a[:, :-2]) / dz
        w = u3[:, 1:-1]
        adv_z = np.where(w > 0, w * bwd, w * fwd)
    else:
        out[c] += ur[c] * (a[2:, 1:-1] - a[:-2, 1:-1]) / (2 * dr)
        adv_z = u3[:, 1:-1] * (a[:, 2:] - a[:, :-2]) / (2 * dz)
    out[:-1, 1:-1] += adv_z[:-1]
    return out


def _over_r_interior(a, g):
    out = np.zeros_like(a)
    out[1:] = a[1:] / g.r[1:, None]
    return out


def _nonlinear(ur, ut, u3, g: AxiGrid, t: float, cfg: SolverConfig, gam=None):
    """Advection, swirl coupling and forcing (everything except diffusion)."""
    sch = cfg.advection
    Nr = -_advect(ur, ur, u3, g, sch) + ut * _over_r_interior(ut, g)
    Nt = -_advect(ut, ur, u3, g, sch) - ut * _over_r_interior(ur, g)
    N3 = -_advect(u3, ur, u3, g, sch)
    if cfg.forcing:
        R, Z = g.mesh()
        for key, arr in (("ur", Nr), ("utheta", Nt), ("u3", N3)):
            f = cfg.forcing.get(key)
            if f is not None:
                with np.errstate(divide="ignore", invalid="ignore"):
                    arr += np.nan_to_num(np.asarray(f(R, Z, t)) * np.ones(g.shape))
    NG = None if gam is None else -_advect(gam, ur, u3, g, sch)
    return Nr, Nt, N3, NG


def _rhs(ur, ut, u3, g: AxiGrid, t: float, cfg: SolverConfig, gam=None):
    Nr, Nt, N3, NG = _nonlinear(ur, ut, u3, g, t, cfg, gam)
    Fr = Nr + _lap_raw(ur, g, -1.0, "swirl")
    Ft = Nt + _lap_raw(ut, g, -1.0, "swirl")
    F3 = N3 + _lap_raw(u3, g, 1.0, "full")
    FG = None if gam is None else NG + _lap_raw(gam, g, 1.0, "gamma")
    return Fr, Ft, F3, FG


# ---------------------------------------------------------------------------
# sparse diffusion operators for the Crank-Nicolson option

@lru_cache(maxsize=16)
def laplacian_matrix(g: AxiGrid, mode: str) -> sp.csr_matrix:
    """Sparse form of ``_lap_raw`` on the nodes it updates (other rows are 0).

    Interior rows use the centred stencils.  The axis row is only populated
    for ``full`` mode (even fields, ``4(f1 - f0)/dr^2 + f_zz``).
    """
    Nr, Nz = g.Nr, g.Nz
    dr, dz = g.dr, g.dz
    nz = Nz + 1
    idx = np.arange((Nr + 1) * nz).reshape(Nr + 1, nz)
    rows, cols, vals = [], [], []

    def add(rr, cc, vv):
        rows.append(np.ravel(rr)); cols.append(np.ravel(cc))
        vals.append(np.broadcast_to(vv, np.shape(rr)).ravel())

    ii, jj = np.meshgrid(np.arange(1, Nr), np.arange(1, Nz), indexing="ij")
    r = (ii * dr).astype(float)
    sgn = {"full": 1.0, "swirl": 1.0, "gamma": -1.0}[mode]
    c = idx[ii, jj]
    add(c, idx[ii + 1, jj], 1 / dr**2 + sgn / (2 * dr * r))
    add(c, idx[ii - 1, jj], 1 / dr**2 - sgn / (2 * dr * r))
    diag = -2 / dr**2 - 2 / dz**2 + (-1 / r**2 if mode == "swirl" else 0.0)
    add(c, c, diag)
    add(c, idx[ii, jj + 1], 1 / dz**2)
    add(c, idx[ii, jj - 1], 1 / dz**2)
    if mode == "full":
        j = np.arange(1, Nz)
        add(idx[0, j], idx[1, j], 4 / dr**2)
        add(idx[0, j], idx[0, j], -4 / dr**2 - 2 / dz**2)
        add(idx[0, j], idx[0, j + 1], 1 / dz**2)
        add(idx[0, j], idx[0, j - 1], 1 / dz**2)
    n = idx.size
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


def _updated_nodes(g: AxiGrid, mode: str) -> np.ndarray:
    m = np.zeros(g.shape, dtype=bool)
    m[1:-1, 1:-1] = True
    if mode == "full":
        m[0, 1:-1] = True
    return np.nonzero(m.ravel())[0]


@lru_cache(maxsize=16)
def _cn_factor(g: AxiGrid, mode: str, dt: float):
    L = laplacian_matrix(g, mode)
    U = _updated_nodes(g, mode)
    A = (sp.identity(U.size, format="csc") - 0.5 * dt * L[U][:, U]).tocsc()
    return U, splu(A)


def _cn_solve(a_old, extra, a_bc_new, g, mode, dt):
    """``(I - dt/2 L) a = (I + dt/2 L) a_old + extra`` with new boundary data."""
    L = laplacian_matrix(g, mode)
    U, lu = _cn_factor(g, mode, dt)
    rhs = a_old.ravel() + 0.5 * dt * (L @ a_old.ravel()) + extra.ravel()
    bnd = a_bc_new.ravel().copy()
    bnd[U] = 0.0
    rhs = rhs + 0.5 * dt * (L @ bnd)
    out = a_bc_new.ravel().copy()
    out[U] = lu.solve(rhs[U])
    return out.reshape(g.shape)


def _apply_bc(ur, ut, u3, g, t, cfg, ref):
    """Impose axis parity and outer boundary values in place."""
    ur[0] = 0.0
    ut[0] = 0.0
    if cfg.bc_outer == "fixed":
        vals = ref
    elif cfg.bc_outer == "exact":
        d = cfg.boundary_data(t)
        vals = (d["ur"], d["utheta"], d["u3"])
    else:
        vals = (0.0, 0.0, 0.0)
    for arr, v in zip((ur, ut, u3), vals):
        v = np.broadcast_to(np.asarray(v, dtype=float), g.shape)
        arr[-1] = v[-1]
        arr[:, 0] = v[:, 0]
        arr[:, -1] = v[:, -1]
    ur[0] = 0.0
    ut[0] = 0.0


def _gamma_bc(gam, ut, g):
    gam[0] = 0.0
    rg = g.r[:, None] * ut
    gam[-1] = rg[-1]
    gam[:, 0] = rg[:, 0]
    gam[:, -1] = rg[:, -1]


@dataclass
class StepInfo:
    rel_div: float
    max_div: float


def _heun(state: FlowState, cfg: SolverConfig, gamma: np.ndarray | None = None):
    g = state.grid
    dt = cfg.dt
    P = projector(g)
    ur0 = np.array(state.ur.values)
    ut0 = np.array(state.utheta.values)
    u30 = np.array(state.u3.values)
    check_cfl(g, dt, cfg.cfl_limit, ur0, u30, "explicit")
    ref = (ur0, ut0, u30)
    rels, maxs, phis = [], [], []

    def stage(ur, ut, u3, gam, t):
        Fr, Ft, F3, FG = _rhs(ur, ut, u3, g, t, cfg, gam)
        ur1, ut1, u31 = ur + dt * Fr, ut + dt * Ft, u3 + dt * F3
        _apply_bc(ur1, ut1, u31, g, t + dt, cfg, ref)
        a, b, psi, d0, d1 = P.project(ur1, u31)
        rep = _div_report(g, d0, d1, a, ut1, b)
        rels.append(rep["rel_div"]); maxs.append(rep["max_div"])
        phis.append(psi / dt)
        gam1 = None
        if gam is not None:
            gam1 = gam + dt * FG
            _gamma_bc(gam1, ut1, g)
        return a, ut1, b, gam1

    t = state.t
    s1 = stage(ur0, ut0, u30, gamma, t)
    s2 = stage(*s1, t + dt)
    ur = 0.5 * (ur0 + s2[0])
    ut = 0.5 * (ut0 + s2[1])
    u3 = 0.5 * (u30 + s2[2])
    gam = None if gamma is None else 0.5 * (gamma + s2[3])
    _apply_bc(ur, ut, u3, g, t + dt, cfg, ref)
    # the average only carries (b(t) + b(t+dt))/2 on the walls
    ur, u3 = P.project(ur, u3)[:2]
    if gam is not None:
        _gamma_bc(gam, ut, g)
    fields = (ur, ut, u3) if gam is None else (ur, ut, u3, gam)
    if not all(np.all(np.isfinite(f)) for f in fields):
        raise BlowUpError(f"non-finite values at t={t + dt:g}", last_state=state)
    d = P.D @ np.concatenate([ur.ravel(), u3.ravel()])
    rep = _div_report(g, np.zeros(1), d, ur, ut, u3)
    pi = P.fix_pressure(0.5 * (phis[0] + phis[1]), cfg.gauge).reshape(g.shape)
    new = FlowState(t + dt, Field2D(g, ur, ODD), Field2D(g, ut, ODD), Field2D(g, u3, EVEN),
                    Field2D(g, pi, EVEN))
    info = StepInfo(max(rels + [rep["rel_div"]]), rep["max_div"])
    return new, gam, info


def _cn_heun(state: FlowState, cfg: SolverConfig, gamma: np.ndarray | None = None):
    """Crank-Nicolson diffusion with Heun-averaged explicit terms."""
    g = state.grid
    dt = cfg.dt
    P = projector(g)
    ur0 = np.array(state.ur.values)
    ut0 = np.array(state.utheta.values)
    u30 = np.array(state.u3.values)
    check_cfl(g, dt, cfg.cfl_limit, ur0, u30, "cn")
    ref = (ur0, ut0, u30)
    t = state.t
    N0 = _nonlinear(ur0, ut0, u30, g, t, cfg, gamma)
    rels, psis = [], []

    def solve(Ns):
        bc = [np.array(a) for a in ref]
        _apply_bc(*bc, g, t + dt, cfg, ref)
        ur = _cn_solve(ur0, dt * Ns[0], bc[0], g, "swirl", dt)
        ut = _cn_solve(ut0, dt * Ns[1], bc[1], g, "swirl", dt)
        u3 = _cn_solve(u30, dt * Ns[2], bc[2], g, "full", dt)
        ur[0] = 0.0
        ut[0] = 0.0
        a, b, psi, d0, d1 = P.project(ur, u3)
        rels.append(_div_report(g, d0, d1, a, ut, b)["rel_div"])
        psis.append(psi / dt)
        gam = None
        if gamma is not None:
            gb = np.array(gamma)
            _gamma_bc(gb, ut, g)
            gam = _cn_solve(gamma, dt * Ns[3], gb, g, "gamma", dt)
            gam[0] = 0.0
        return a, ut, b, gam

    s1 = solve(N0)
    N1 = _nonlinear(s1[0], s1[1], s1[2], g, t + dt, cfg, s1[3])
    avg = [0.5 * (x + y) if x is not None else None for x, y in zip(N0, N1)]
    ur, ut, u3, gam = solve(avg)
    fields = (ur, ut, u3) if gam is None else (ur, ut, u3, gam)
    if not all(np.all(np.isfinite(f)) for f in fields):
        raise BlowUpError(f"non-finite values at t={t + dt:g}", last_state=state)
    d = P.D @ np.concatenate([ur.ravel(), u3.ravel()])
    rep = _div_report(g, np.zeros(1), d, ur, ut, u3)
    pi = P.fix_pressure(psis[-1], cfg.gauge).reshape(g.shape)
    new = FlowState(t + dt, Field2D(g, ur, ODD), Field2D(g, ut, ODD), Field2D(g, u3, EVEN),
                    Field2D(g, pi, EVEN))
    return new, gam, StepInfo(max(rels + [rep["rel_div"]]), rep["max_div"])


def _advance(state, cfg, gamma=None):
    return (_cn_heun if cfg.diffusion == "cn" else _heun)(state, cfg, gamma)


def step(state: FlowState, cfg: SolverConfig) -> FlowState:
    """Advance one step; the returned pressure is the projection pressure."""
    return _advance(state, cfg)[0]


def step_with_info(state: FlowState, cfg: SolverConfig):
    new, _, info = _advance(state, cfg)
    return new, info


def step_gamma(gamma: Field2D, b: tuple[Field2D, Field2D], cfg: SolverConfig,
               t: float = 0.0) -> Field2D:
    """Advance ``Gamma`` one Heun step with a frozen drift ``b = (ur, u3)``.

    Boundary values are held fixed; the axis row stays 0.
    """
    if gamma.parity != EVEN:
        raise ValueError("gamma must be even")
    g = gamma.grid
    ur, u3 = (np.asarray(f.values) for f in b)
    check_cfl(g, cfg.dt, cfg.cfl_limit, ur, u3)
    a0 = np.array(gamma.values)

    def F(a):
        out = -_advect(a, ur, u3, g, cfg.advection) + _lap_raw(a, g, 1.0, "gamma")
        out[0] = 0.0
        out[-1] = 0.0
        out[:, 0] = 0.0
        out[:, -1] = 0.0
        return out

    a1 = a0 + cfg.dt * F(a0)
    a2 = a1 + cfg.dt * F(a1)
    out = 0.5 * (a0 + a2)
    if not np.all(np.isfinite(out)):
        raise BlowUpError("non-finite gamma")
    return Field2D(g, out, EVEN)


def kinetic_energy(state: FlowState) -> float:
    """``2 pi * sum w |u|^2`` with the trapezoid-type node weights."""
    g = state.grid
    w = np.outer(g.r * g.dr, _axial_weights(g))
    w[0] = g.dr**2 / 8 * _axial_weights(g)
    w[-1] *= 0.5
    return float(2 * np.pi * np.sum(w * state.speed_sq()))


# ---------------------------------------------------------------------------
# scenarios

def _ic_zero(R, Z, t, **kw):
    z = np.zeros_like(R)
    return z, z, z


def _ic_rigid(R, Z, t, omega=1.0, **kw):
    z = np.zeros_like(R)
    return z, omega * R, z


def _ic_oseen(R, Z, t, kappa=1.0, t_shift=1.0, **kw):
    z = np.zeros_like(R)
    with np.errstate(divide="ignore", invalid="ignore"):
        ut = kappa * (-np.expm1(-R**2 / (4 * (t + t_shift)))) / R
    ut = np.where(R > 0, ut, 0.0)
    return z, ut, z


def _ic_gaussian(R, Z, t, swirl=1.0, sigma=0.2, stream=0.0, z0=0.0, **kw):
    e = np.exp(-(R**2 + (Z - z0) ** 2) / sigma**2)
    ut = swirl * R * e
    ur = 2 * stream * R * (Z - z0) / sigma**2 * e
    u3 = stream * (2 - 2 * R**2 / sigma**2) * e
    return ur, ut, u3


INITIAL_CONDITIONS: dict[str, Callable] = {
    "zero": _ic_zero,
    "rigid_rotation": _ic_rigid,
    "oseen_swirl": _ic_oseen,
    "gaussian_swirl": _ic_gaussian,
}

# scenarios whose fields are exact solutions for all t
EXACT = {"zero", "rigid_rotation", "oseen_swirl"}


def oseen_gamma(R, t, kappa=1.0, t_shift=1.0):
    return kappa * (-np.expm1(-R**2 / (4 * (t + t_shift))))


@dataclass(frozen=True)
class Scenario:
    """Initial condition id + parameters, grid, duration and snapshot cadence.

    ``cadence`` counts steps between stored snapshots.
    """

    name: str
    initial: str
    params: Mapping[str, float] = field(default_factory=dict)
    grid: AxiGrid = field(default_factory=lambda: make_grid(32, 64, 0.5, -0.5, 0.5))
    duration: float = 0.01
    cadence: int = 1
    t_start: float = 0.0

    def __post_init__(self):
        if self.initial not in INITIAL_CONDITIONS:
            raise ValueError(f"unknown initial condition {self.initial!r}")
        if self.cadence < 1:
            raise ValueError("cadence must be >= 1")
        if self.duration < 0:
            raise ValueError("duration must be non-negative")

    def fields_at(self, t: float):
        R, Z = self.grid.mesh()
        ur, ut, u3 = INITIAL_CONDITIONS[self.initial](R, Z, t, **dict(self.params))
        ur = np.array(ur, dtype=float); ut = np.array(ut, dtype=float)
        ur[0] = 0.0
        ut[0] = 0.0
        return ur, ut, np.array(u3, dtype=float)

    def boundary_data(self, t: float):
        ur, ut, u3 = self.fields_at(t)
        return {"ur": ur, "utheta": ut, "u3": u3}

    def initial_state(self, bc_outer: str | None = None) -> tuple[FlowState, dict]:
        """Projected initial state; ``bc_outer="noslip"`` first zeroes the walls."""
        g = self.grid
        ur, ut, u3 = self.fields_at(self.t_start)
        if bc_outer == "noslip":
            for a in (ur, ut, u3):
                a[-1] = 0.0
                a[:, 0] = 0.0
                a[:, -1] = 0.0
        a, b, pi, rep = project(Field2D(g, ur, ODD), Field2D(g, u3, EVEN))
        if self.initial == "rigid_rotation":
            om = float(self.params.get("omega", 1.0))
            pi = Field2D(g, 0.5 * om**2 * g.mesh()[0] ** 2, EVEN)
            pi = pi.with_values(pi.values - np.sum(projector(g).wp * pi.values.ravel()) / np.sum(projector(g).wp))
        return FlowState(self.t_start, a, Field2D(g, ut, ODD), b, pi), rep

    def steps(self, dt: float) -> int:
        return int(round(self.duration / dt))


def auto_dt(grid: AxiGrid, cfl_limit: float = 0.8, speed: float = 0.0) -> float:
    dt = diffusive_dt(grid, cfl_limit)
    if speed > 0:
        diff = 2 / grid.dr**2 + 2 / grid.dz**2
        adv = speed * (1 / grid.dr + 1 / grid.dz)
        dt = min(dt, 0.9 / (diff + adv))
    return dt


def default_config(scn: Scenario, dt: float | None = None, **kw) -> SolverConfig:
    """Pick the boundary rule that fits the scenario and a stable ``dt``."""
    bc = kw.pop("bc_outer", None)
    if bc is None:
        bc = {"rigid_rotation": "fixed", "oseen_swirl": "exact"}.get(scn.initial, "noslip")
    cfl = kw.get("cfl_limit", 0.8)
    if dt is None:
        ur, ut, u3 = scn.fields_at(scn.t_start)
        speed = float(max(np.max(np.abs(ur)), np.max(np.abs(u3))))
        dt = auto_dt(scn.grid, cfl, 2 * speed)
        if scn.duration > 0:
            n = max(1, math.ceil(scn.duration / dt))
            dt = scn.duration / n
    bd = scn.boundary_data if bc == "exact" else None
    return SolverConfig(dt=dt, bc_outer=bc, boundary_data=bd, **kw)


@dataclass
class RunResult:
    history: "object"
    log: list[str]
    max_rel_div: float
    gamma_consistency: float
    aborted: bool = False
    abort_time: float | None = None


def run_scenario(scn: Scenario, cfg: SolverConfig, memory_budget: float = 2e9,
                 log_every: int | None = None) -> RunResult:
    """Integrate a scenario and collect a :class:`FlowHistory`.

    Snapshots are taken every ``scn.cadence`` steps, including ``t_start``.
    The log has one line per snapshot (or every ``log_every`` steps):
    ``step t energy max_div max_gamma``.  On blow-up the partial history
    is attached to the raised :class:`BlowUpError`.
    """
    from .quadrature import FlowHistory

    g = scn.grid
    nsteps = scn.steps(cfg.dt)
    nsnap = nsteps // scn.cadence + 1
    per = 6 * 8 * (g.Nr + 1) * (g.Nz + 1)
    if nsnap * per > memory_budget:
        raise MemoryBudgetError(f"history needs {nsnap * per:.3g} bytes > budget {memory_budget:.3g}")
    state, rep0 = scn.initial_state(cfg.bc_outer)
    gam = np.array(state.gamma.values)
    snaps, gams = [state], [Field2D(g, gam, EVEN)]
    log = ["# step t energy max_div max_gamma"]
    every = log_every or scn.cadence

    def line(k, s, md):
        return f"{k} {s.t:.10g} {kinetic_energy(s):.12e} {md:.3e} {np.max(np.abs(s.gamma.values)):.12e}"

    log.append(line(0, state, rep0["max_div"]))
    worst = rep0["rel_div"]
    consistency = 0.0
    for k in range(1, nsteps + 1):
        try:
            state, gam, info = _advance(state, cfg, gam)
        except BlowUpError as err:
            err.history = FlowHistory(snaps, gams)
            log.append(f"# abort at step {k}: {err}")
            err.log = log
            raise
        worst = max(worst, info.rel_div)
        if k % scn.cadence == 0:
            snaps.append(state)
            gams.append(Field2D(g, gam, EVEN))
            consistency = max(consistency, float(np.max(np.abs(gam - state.gamma.values))))
        if k % every == 0:
            log.append(line(k, state, info.max_div))
    log.append(f"# max_rel_div {worst:.3e}")
    log.append(f"# gamma_consistency_linf {consistency:.6e}")
    return RunResult(FlowHistory(snaps, gams), log, worst, consistency)


# ---------------------------------------------------------------------------
# scenario files: INI-style key/value text

_GRID_KEYS = ("Nr", "Nz", "r_max", "z_min", "z_max")


def load_scenario_file(path_or_text: str, is_text: bool = False):
    """Parse a scenario file and return ``(Scenario, dict of solver options)``.

    A bare key/value file without section headers is accepted; everything
    goes into one ``[scenario]`` section then.
    """
    text = path_or_text if is_text else open(path_or_text, encoding="utf-8").read()
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    if not text.lstrip().startswith("["):
        text = "[scenario]\n" + text
    cp.read_string(text)
    sec = dict(cp["scenario"]) if cp.has_section("scenario") else {}
    allkeys = {}
    for s in cp.sections():
        allkeys.update(cp[s])
    gd = {k: allkeys[k] for k in _GRID_KEYS if k in allkeys}
    grid = make_grid(int(gd.get("Nr", 32)), int(gd.get("Nz", 64)), float(gd.get("r_max", 0.5)),
                     float(gd.get("z_min", -0.5)), float(gd.get("z_max", 0.5)))
    params = {}
    if cp.has_section("initial"):
        params = {k: float(v) for k, v in cp["initial"].items() if k != "initial"}
    scn = Scenario(name=sec.get("name", allkeys.get("initial", "scenario")),
                   initial=allkeys.get("initial", "zero"), params=params, grid=grid,
                   duration=float(allkeys.get("duration", 0.01)),
                   cadence=int(allkeys.get("cadence", 1)),
                   t_start=float(allkeys.get("t_start", 0.0)))
    opts = {}
    for k in ("dt", "bc_outer", "cfl_limit", "advection", "diffusion"):
        if k in allkeys:
            opts[k] = allkeys[k]
    if "dt" in opts:
        opts["dt"] = None if opts["dt"] == "auto" else float(opts["dt"])
    if "cfl_limit" in opts:
        opts["cfl_limit"] = float(opts["cfl_limit"])
    return scn, opts
