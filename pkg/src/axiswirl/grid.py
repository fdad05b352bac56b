"""Axisymmetric (r, z) node grid, parity-tagged fields and difference operators.

Nodes sit at ``r_i = i*dr`` (``i = 0..Nr``) and ``z_j = z_min + j*dz``
(``j = 0..Nz``), so the axis ``r = 0`` is a grid line.  Arrays are indexed
``[i_r, i_z]`` with shape ``(Nr + 1, Nz + 1)``.

Near the axis the 1/r terms are closed with a ghost value at ``r = -dr``:
``f(-dr) = +f(dr)`` for even fields and ``-f(dr)`` for odd ones.  At the
outer radius and at both axial ends one-sided second-order stencils are used.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

EVEN = "even"
ODD = "odd"
_SIGN = {EVEN: 1.0, ODD: -1.0}


class ParityError(ValueError):
    """Raised when a field's parity does not fit the requested operation."""


@dataclass(frozen=True)
class AxiGrid:
    Nr: int
    Nz: int
    r_max: float
    z_min: float
    z_max: float

    @property
    def dr(self) -> float:
        return self.r_max / self.Nr

    @property
    def dz(self) -> float:
        return (self.z_max - self.z_min) / self.Nz

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Nr + 1, self.Nz + 1)

    @property
    def r(self) -> np.ndarray:
        return np.arange(self.Nr + 1) * self.dr

    @property
    def z(self) -> np.ndarray:
        return self.z_min + np.arange(self.Nz + 1) * self.dz

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(R, Z)`` node coordinate arrays of shape ``self.shape``."""
        return np.meshgrid(self.r, self.z, indexing="ij")

    def contains_ball(self, x03: float, R: float, tol: float = 1e-12) -> bool:
        return (R <= self.r_max + tol and x03 - R >= self.z_min - tol
                and x03 + R <= self.z_max + tol)


def make_grid(Nr: int, Nz: int, r_max: float, z_min: float, z_max: float) -> AxiGrid:
    """Build an :class:`AxiGrid` after validating extents and cell counts.

    Examples:
        >>> g = make_grid(4, 4, 1.0, -1.0, 1.0)
        >>> g.dr, g.dz
        (0.25, 0.5)
    """
    if int(Nr) != Nr or int(Nz) != Nz:
        raise ValueError("Nr and Nz must be integers")
    if Nr < 4 or Nz < 4:
        raise ValueError(f"need at least 4 cells per direction, got Nr={Nr}, Nz={Nz}")
    if not r_max > 0:
        raise ValueError(f"r_max must be positive, got {r_max}")
    if not z_min < z_max:
        raise ValueError(f"need z_min < z_max, got {z_min}, {z_max}")
    return AxiGrid(int(Nr), int(Nz), float(r_max), float(z_min), float(z_max))


@dataclass(frozen=True, eq=False)
class Field2D:
    """Nodal values on an :class:`AxiGrid` with a reflection parity tag.

    The stored array is copied and made read-only. Odd fields must vanish on
    the axis; use :meth:`from_function` to have that enforced for you.
    """

    grid: AxiGrid
    values: np.ndarray
    parity: str = EVEN

    def __post_init__(self):
        if self.parity not in _SIGN:
            raise ParityError(f"parity must be 'even' or 'odd', got {self.parity!r}")
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if self.parity == ODD and np.any(v[0] != 0.0):
            raise ParityError("odd field must be exactly zero on the axis")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: AxiGrid, func: Callable, parity: str = EVEN) -> "Field2D":
        """Evaluate ``func(R, Z)`` at the nodes.

        For odd fields the axis row is set to 0, which also discards the
        0/0 that formulas like ``(1 - exp(-r**2))/r`` produce there.
        """
        R, Z = grid.mesh()
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.asarray(func(R, Z), dtype=np.float64) * np.ones(grid.shape)
        if parity == ODD:
            v[0] = 0.0
        return cls(grid, v, parity)

    @classmethod
    def zeros(cls, grid: AxiGrid, parity: str = EVEN) -> "Field2D":
        return cls(grid, np.zeros(grid.shape), parity)

    @property
    def sign(self) -> float:
        return _SIGN[self.parity]

    def ghost(self) -> np.ndarray:
        """Values at the ghost line ``r = -dr`` implied by parity."""
        return self.sign * self.values[1]

    def with_values(self, values: np.ndarray) -> "Field2D":
        return Field2D(self.grid, values, self.parity)

    # CSV: a header row of names, a row of header values, then Nr+1 value rows.
    def to_csv(self, path) -> None:
        g = self.grid
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("Nr,Nz,r_max,z_min,z_max,parity\n")
            fh.write(f"{g.Nr},{g.Nz},{g.r_max!r},{g.z_min!r},{g.z_max!r},{self.parity}\n")
            for row in self.values:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Field2D":
        with open(path, encoding="utf-8") as fh:
            fh.readline()
            head = fh.readline().strip().split(",")
            grid = make_grid(int(head[0]), int(head[1]), float(head[2]),
                             float(head[3]), float(head[4]))
            vals = np.loadtxt(fh, delimiter=",", ndmin=2)
        return cls(grid, vals.reshape(grid.shape), head[5])

    def to_bytes(self) -> bytes:
        g = self.grid
        head = struct.pack("<5d", g.Nr, g.Nz, g.r_max, g.z_min, g.z_max)
        return head + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, parity: str = EVEN) -> "Field2D":
        # The binary header carries no parity; the caller supplies it.
        Nr, Nz, r_max, z_min, z_max = struct.unpack("<5d", data[:40])
        grid = make_grid(int(Nr), int(Nz), r_max, z_min, z_max)
        vals = np.frombuffer(data[40:], dtype="<f8").reshape(grid.shape)
        return cls(grid, vals, parity)

    def to_binary(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_binary(cls, path, parity: str = EVEN) -> "Field2D":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), parity)


# ---------------------------------------------------------------------------
# raw-array stencils (sign = +1 for even, -1 for odd)

def d_r(a: np.ndarray, dr: float, sign: float) -> np.ndarray:
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - a[:-2]) / (2 * dr)
    out[0] = (a[1] - sign * a[1]) / (2 * dr)
    out[-1] = (3 * a[-1] - 4 * a[-2] + a[-3]) / (2 * dr)
    return out


def d_rr(a: np.ndarray, dr: float, sign: float) -> np.ndarray:
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - 2 * a[1:-1] + a[:-2]) / dr**2
    out[0] = (a[1] - 2 * a[0] + sign * a[1]) / dr**2
    out[-1] = (2 * a[-1] - 5 * a[-2] + 4 * a[-3] - a[-4]) / dr**2
    return out


def d_z(a: np.ndarray, dz: float) -> np.ndarray:
    out = np.empty_like(a)
    out[:, 1:-1] = (a[:, 2:] - a[:, :-2]) / (2 * dz)
    out[:, 0] = (-3 * a[:, 0] + 4 * a[:, 1] - a[:, 2]) / (2 * dz)
    out[:, -1] = (3 * a[:, -1] - 4 * a[:, -2] + a[:, -3]) / (2 * dz)
    return out


def d_zz(a: np.ndarray, dz: float) -> np.ndarray:
    out = np.empty_like(a)
    out[:, 1:-1] = (a[:, 2:] - 2 * a[:, 1:-1] + a[:, :-2]) / dz**2
    out[:, 0] = (2 * a[:, 0] - 5 * a[:, 1] + 4 * a[:, 2] - a[:, 3]) / dz**2
    out[:, -1] = (2 * a[:, -1] - 5 * a[:, -2] + 4 * a[:, -3] - a[:, -4]) / dz**2
    return out


def over_r(a: np.ndarray, dr: float) -> np.ndarray:
    """``a / r`` for an odd profile; the axis row takes the limit ``a_r(0)``."""
    out = np.empty_like(a)
    r = np.arange(a.shape[0]) * dr
    out[1:] = a[1:] / r[1:, None]
    out[0] = a[1] / dr
    return out


def _lap_raw(a: np.ndarray, grid: AxiGrid, sign: float, mode: str) -> np.ndarray:
    dr, dz = grid.dr, grid.dz
    r = grid.r[1:, None]
    arr = d_rr(a, dr, sign)
    ar = d_r(a, dr, sign)
    out = arr + d_zz(a, dz)
    if mode == "full":
        out[1:] += ar[1:] / r
        # even: a_r/r -> a_rr(0); odd: singular unless the slope vanishes
        out[0] += arr[0] if sign > 0 else np.where(a[1] == 0, 0.0, np.nan)
    elif mode == "swirl":
        out[1:] += ar[1:] / r - a[1:] / r**2
        out[0] = 0.0
    elif mode == "gamma":
        out[1:] -= ar[1:] / r
        out[0] -= arr[0]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return out


def axi_laplacian(f: Field2D, mode: str = "full") -> Field2D:
    """Discrete axisymmetric Laplacian variants.

    ``full``  : f_rr + f_r/r + f_zz
    ``swirl`` : full - f/r**2          (odd fields, the u_theta operator)
    ``gamma`` : f_rr - f_r/r + f_zz    (even fields, the Gamma operator)

    For an odd field in ``full`` mode the axis value is singular unless the
    radial slope vanishes there; such rows are returned as NaN.
    """
    if mode == "swirl" and f.parity != ODD:
        raise ParityError("swirl mode needs an odd field")
    if mode == "gamma" and f.parity != EVEN:
        raise ParityError("gamma mode needs an even field")
    out = _lap_raw(np.asarray(f.values), f.grid, f.sign, mode)
    return Field2D(f.grid, out, f.parity)


def div_raw(ur: np.ndarray, u3: np.ndarray, grid: AxiGrid) -> np.ndarray:
    """Conservative ``(1/r) d_r (r ur) + d_z u3`` on raw arrays."""
    dr = grid.dr
    r = grid.r
    q = r[:, None] * ur
    out = d_z(u3, grid.dz)
    out[1:-1] += (q[2:] - q[:-2]) / (2 * dr * r[1:-1, None])
    out[0] += 2 * ur[1] / dr
    out[-1] += (3 * q[-1] - 4 * q[-2] + q[-3]) / (2 * dr * r[-1])
    return out


def divergence(ur: Field2D, u3: Field2D) -> Field2D:
    """Discrete divergence of ``b = ur e_r + u3 e_3``; the result is even."""
    if ur.parity != ODD or u3.parity != EVEN:
        raise ParityError("divergence needs ur odd and u3 even")
    if ur.grid != u3.grid:
        raise ValueError("fields live on different grids")
    return Field2D(ur.grid, div_raw(np.asarray(ur.values), np.asarray(u3.values), ur.grid), EVEN)


def grad_sq_raw(ur, ut, u3, grid: AxiGrid) -> np.ndarray:
    """Pointwise squared Frobenius norm of the 3D velocity gradient.

    Includes the metric terms ``(ur/r)**2 + (ut/r)**2`` from the cylindrical
    basis; on the axis those use the parity limit ``u_r(0)``.
    """
    dr, dz = grid.dr, grid.dz
    total = np.zeros(grid.shape)
    for a, s in ((ur, -1.0), (ut, -1.0), (u3, 1.0)):
        total += d_r(a, dr, s) ** 2 + d_z(a, dz) ** 2
    total += over_r(ur, dr) ** 2 + over_r(ut, dr) ** 2
    return total


@dataclass(frozen=True, eq=False)
class FlowState:
    """Velocity components and pressure at one instant.

    ``gamma`` defaults to ``r * utheta``. Passing it explicitly is allowed
    (the solver carries its own evolved copy) but it must still be even and
    vanish on the axis.
    """

    t: float
    ur: Field2D
    utheta: Field2D
    u3: Field2D
    pi: Field2D
    gamma: Field2D | None = field(default=None)

    def __post_init__(self):
        g = self.ur.grid
        for name, f, par in (("ur", self.ur, ODD), ("utheta", self.utheta, ODD),
                             ("u3", self.u3, EVEN), ("pi", self.pi, EVEN)):
            if f.grid != g:
                raise ValueError(f"{name} lives on a different grid")
            if f.parity != par:
                raise ParityError(f"{name} must be {par}")
        if self.gamma is None:
            gam = Field2D(g, g.r[:, None] * self.utheta.values, EVEN)
            object.__setattr__(self, "gamma", gam)
        else:
            if self.gamma.parity != EVEN or self.gamma.grid != g:
                raise ParityError("gamma must be an even field on the same grid")
            if np.any(self.gamma.values[0] != 0.0):
                raise ParityError("gamma must vanish on the axis")

    @property
    def grid(self) -> AxiGrid:
        return self.ur.grid

    @classmethod
    def zeros(cls, grid: AxiGrid, t: float = 0.0) -> "FlowState":
        return cls(t, Field2D.zeros(grid, ODD), Field2D.zeros(grid, ODD),
                   Field2D.zeros(grid, EVEN), Field2D.zeros(grid, EVEN))

    def speed_sq(self) -> np.ndarray:
        return self.ur.values**2 + self.utheta.values**2 + self.u3.values**2

    def divergence(self) -> Field2D:
        return divergence(self.ur, self.u3)
