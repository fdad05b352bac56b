"""Heat-kernel evaluation of the critical Besov norm of ``b = ur e_r + u3 e_3``.

``sup_{0 < s <= S} sqrt(s) * ||e^{s Delta} b||_inf`` with the fields extended
by zero outside the grid domain.  The sup in space is taken on the plane
``y = 0`` of a 3D Cartesian sample box: rotational symmetry puts every
azimuth on that plane, and there the ``y`` component of the smoothed field
vanishes.  So only the ``x`` and ``z`` components are smoothed, first by
contracting the ``y`` direction against the Gaussian weights at ``y = 0``,
then by 1D filters along ``x`` and ``z``.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import gaussian_filter1d, map_coordinates
from scipy.optimize import minimize_scalar

from .grid import FlowState

TRUNCATE = 6.0


def _sample(state: FlowState, n_half: int, pad: float):
    """Cartesian samples of ``(bx, bz)`` on a box with ``2*n_half + 1`` x/y points."""
    g = state.grid
    L = g.r_max + pad
    h = L / n_half
    nz_half = int(math.ceil((0.5 * (g.z_max - g.z_min) + pad) / h))
    zc = 0.5 * (g.z_min + g.z_max)
    x = np.arange(-n_half, n_half + 1) * h
    z = zc + np.arange(-nz_half, nz_half + 1) * h
    X, Y = np.meshgrid(x, x, indexing="ij")
    rho = np.hypot(X, Y)
    inside_r = rho <= g.r_max * (1 + 1e-12)
    inside_z = (z >= g.z_min - 1e-12) & (z <= g.z_max + 1e-12)
    ir = rho / g.dr
    jz = (z - g.z_min) / g.dz
    IR = np.broadcast_to(ir[:, :, None], (x.size, x.size, z.size))
    JZ = np.broadcast_to(jz[None, None, :], IR.shape)
    coords = np.stack([IR.ravel(), JZ.ravel()])
    mask = (inside_r[:, :, None] & inside_z[None, None, :])

    def interp(a):
        v = map_coordinates(np.asarray(a), coords, order=1, mode="nearest").reshape(IR.shape)
        return np.where(mask, v, 0.0)

    ur = interp(state.ur.values)
    u3 = interp(state.u3.values)
    with np.errstate(invalid="ignore", divide="ignore"):
        cosx = np.where(rho > 0, X / np.where(rho > 0, rho, 1.0), 0.0)
    bx = ur * cosx[:, :, None]
    return bx, u3, h


def _smoothed_sup(bx, bz, h, s):
    """``max |e^{s Delta} b|`` on the plane y = 0 for one ``s``."""
    sig = math.sqrt(2 * s) / h
    ny = bx.shape[1]
    c = ny // 2
    if sig < 1e-3:
        fx, fz = bx[:, c, :], bz[:, c, :]
    else:
        rad = min(int(TRUNCATE * sig + 0.5), c)
        k = np.arange(-rad, rad + 1)
        wy = np.exp(-0.5 * (k / sig) ** 2)
        wy /= wy.sum()
        sl = slice(c - rad, c + rad + 1)
        fx = np.tensordot(wy, bx[:, sl, :], axes=([0], [1]))
        fz = np.tensordot(wy, bz[:, sl, :], axes=([0], [1]))
        for ax in (0, 1):
            fx = gaussian_filter1d(fx, sig, axis=ax, mode="constant", truncate=TRUNCATE)
            fz = gaussian_filter1d(fz, sig, axis=ax, mode="constant", truncate=TRUNCATE)
    return float(np.sqrt(np.max(fx**2 + fz**2)))


def besov_norm_b(state: FlowState, S: float, n_ladder: int = 16, refine: bool = True,
                 n_half: int = 48, pad: float | None = None) -> float:
    """Critical Besov norm of the poloidal velocity via the heat semigroup.

    Args:
        state: flow snapshot; only ``ur`` and ``u3`` are used.
        S: horizon for the heat time ``s``.
        n_ladder: geometric ladder size over ``[1e-4*S, S]``.
        refine: polish the best ladder point with a bounded 1D search in ``ln s``.
        n_half: sample points per half-width of the Cartesian box.
        pad: zero padding around the domain; defaults to ``3*sqrt(2*S)``
            capped at ``r_max``.
    """
    if not S > 0:
        raise ValueError("horizon S must be positive")
    if not (np.any(state.ur.values) or np.any(state.u3.values)):
        return 0.0
    if pad is None:
        pad = min(3 * math.sqrt(2 * S), state.grid.r_max)
    bx, bz, h = _sample(state, n_half, pad)
    ss = np.geomspace(1e-4 * S, S, n_ladder)
    vals = np.array([math.sqrt(s) * _smoothed_sup(bx, bz, h, s) for s in ss])
    k = int(np.argmax(vals))
    best = float(vals[k])
    if refine and n_ladder > 1:
        lo = math.log(ss[max(k - 1, 0)])
        hi = math.log(ss[min(k + 1, n_ladder - 1)])
        res = minimize_scalar(lambda ls: -math.exp(ls / 2) * _smoothed_sup(bx, bz, h, math.exp(ls)),
                              bounds=(lo, hi), method="bounded", options={"xatol": 1e-3})
        best = max(best, float(-res.fun))
    return best


def gaussian_bump_oracle(amplitude: float, sigma: float) -> tuple[float, float]:
    """Exact ``(value, argmax s)`` for ``u3 = a exp(-|x|^2 / (2 sigma^2))`` on R^3."""
    return amplitude * (sigma / 2) * (2 / 3) ** 1.5, sigma**2 / 4
