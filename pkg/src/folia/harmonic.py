"""Discrete harmonic functions on flat cylinders.

The cylinder is ``[0, L] x (R / 2 pi Z)`` with ``nx`` nodes along the axis
(both ends included) and ``ntheta`` periodic nodes around.  The 5-point
Laplacian is assembled as a symmetric positive definite operator.  At a
free end the ghost node is the mirror image of the first interior row and
the boundary equation is halved, which keeps the system symmetric and makes
the free problem on ``[0, L]`` coincide exactly with the Dirichlet problem
on the doubled cylinder ``[0, 2L]``.

Two solvers are provided: Jacobi-preconditioned conjugate gradients, and
an exact solver that diagonalises the periodic direction with an FFT and
solves one tridiagonal system per Fourier mode.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import cg

from folia.formats import write_csv

DIRICHLET = "dirichlet"
PARTIALLY_FREE = "partially_free"

FOLH_MAGIC = b"FOLH"
FOLH_VERSION = 1


class HarmonicError(ValueError):
    pass


class ConvergenceError(HarmonicError):
    pass


@dataclass(frozen=True)
class CylinderGrid:
    length: float
    nx: int
    ntheta: int

    def __post_init__(self):
        if self.length <= 0:
            raise HarmonicError("length must be positive")
        if self.nx < 8 or self.ntheta < 16:
            raise HarmonicError("resolution must be at least 8 x 16")

    @property
    def hx(self) -> float:
        return self.length / (self.nx - 1)

    @property
    def htheta(self) -> float:
        return 2 * math.pi / self.ntheta

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.nx)

    @property
    def theta(self) -> np.ndarray:
        return self.htheta * np.arange(self.ntheta)

    def doubled(self) -> "CylinderGrid":
        """Grid on ``[0, 2L]`` with the same spacing."""
        return CylinderGrid(2 * self.length, 2 * self.nx - 1, self.ntheta)

    def sample(self, f) -> np.ndarray:
        """Boundary data as ``ntheta`` samples (callable, scalar or array)."""
        if callable(f):
            vals = np.asarray(f(self.theta), dtype=float)
        else:
            vals = np.asarray(f, dtype=float)
        if vals.ndim == 0:
            vals = np.full(self.ntheta, float(vals))
        if vals.shape != (self.ntheta,):
            raise HarmonicError(f"boundary data has {vals.size} samples, grid has {self.ntheta}")
        return vals


@dataclass
class HarmonicField:
    grid: CylinderGrid
    values: np.ndarray           # shape (nx, ntheta)
    mode: str
    residual: float
    solver: str
    iterations: int = 0
    boundary: dict = field(default_factory=dict)

    @property
    def energy(self) -> float:
        return energy(self)

    def midline(self) -> np.ndarray:
        if self.grid.nx % 2 == 0:
            raise HarmonicError("midline needs an odd number of axial nodes")
        return self.values[self.grid.nx // 2]

    def free_boundary(self) -> np.ndarray:
        return self.values[-1]

    def normal_derivative(self) -> np.ndarray:
        """One-sided second-order derivative in x at the ``x = L`` end."""
        u, h = self.values, self.grid.hx
        return (3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * h)


# ----------------------------------------------------------- operators --

def _theta_matrix(nt: int, ht: float) -> sp.csr_matrix:
    main = np.full(nt, 2.0)
    off = np.full(nt - 1, -1.0)
    C = sp.diags([main, off, off], [0, 1, -1], format="lil")
    C[0, nt - 1] = -1.0
    C[nt - 1, 0] = -1.0
    return (C.tocsr() / ht**2)


def _axis_bands(m: int, free: bool):
    """Tridiagonal axial operator (times hx**2) and the row weights."""
    main = np.full(m, 2.0)
    weight = np.ones(m)
    if free:
        main[-1] = 1.0
        weight[-1] = 0.5
    return main, weight


def _assemble(grid: CylinderGrid, free: bool):
    m = grid.nx - 1 if free else grid.nx - 2
    main, weight = _axis_bands(m, free)
    off = np.full(m - 1, -1.0)
    T = sp.diags([main, off, off], [0, 1, -1]) / grid.hx**2
    C = _theta_matrix(grid.ntheta, grid.htheta)
    A = sp.kron(T, sp.identity(grid.ntheta)) + sp.kron(sp.diags(weight), C)
    return A.tocsr(), m


def _rhs(grid: CylinderGrid, m: int, f0: np.ndarray, f1: Optional[np.ndarray]) -> np.ndarray:
    b = np.zeros((m, grid.ntheta))
    b[0] += f0 / grid.hx**2
    if f1 is not None:
        b[-1] += f1 / grid.hx**2
    return b


def _solve_cg(A, b, rtol, maxiter):
    diag = A.diagonal()
    M = sp.diags(1.0 / diag)
    count = [0]

    def tick(_):
        count[0] += 1

    x, info = cg(A, b, rtol=rtol, atol=0.0, maxiter=maxiter, M=M, callback=tick)
    if info != 0:
        raise ConvergenceError(f"conjugate gradients did not converge in {maxiter} iterations")
    return x, count[0]


def _solve_modes(grid: CylinderGrid, b: np.ndarray, free: bool) -> np.ndarray:
    """Exact solve: FFT in theta, tridiagonal solve per mode."""
    m, nt = b.shape
    main, weight = _axis_bands(m, free)
    bh = np.fft.rfft(b, axis=1)
    k = np.arange(bh.shape[1])
    lam = (2 - 2 * np.cos(2 * math.pi * k / nt)) / grid.htheta**2
    out = np.empty_like(bh)
    ab = np.zeros((3, m))
    ab[0, 1:] = -1.0 / grid.hx**2
    ab[2, :-1] = -1.0 / grid.hx**2
    for j in range(bh.shape[1]):
        ab[1] = main / grid.hx**2 + weight * lam[j]
        out[:, j] = solve_banded((1, 1), ab, bh[:, j])
    return np.fft.irfft(out, n=nt, axis=1)


def _solve(grid, free, f0, f1, method, rtol):
    A, m = _assemble(grid, free)
    b = _rhs(grid, m, f0, f1)
    if method == "cg":
        u, its = _solve_cg(A, b.ravel(), rtol, 50 * grid.nx * grid.ntheta)
        u = u.reshape(m, grid.ntheta)
    elif method == "spectral":
        u, its = _solve_modes(grid, b, free), 0
    else:
        raise ValueError(f"unknown method {method!r}")
    bn = np.linalg.norm(b)
    res = np.linalg.norm(A @ u.ravel() - b.ravel())
    return u, (res / bn if bn > 0 else res), its


def solve_dirichlet(grid: CylinderGrid, f_top, f_bottom, method: str = "cg",
                    rtol: float = 1e-10) -> HarmonicField:
    """Discrete harmonic field with ``f_bottom`` at ``x = 0`` and ``f_top`` at ``x = L``."""
    fb, ft = grid.sample(f_bottom), grid.sample(f_top)
    u, res, its = _solve(grid, False, fb, ft, method, rtol)
    values = np.vstack([fb, u, ft])
    return HarmonicField(grid, values, DIRICHLET, res, method, its,
                         {"bottom": fb, "top": ft})


def solve_partially_free(grid: CylinderGrid, f_fixed, method: str = "cg",
                         rtol: float = 1e-10) -> HarmonicField:
    """Energy minimiser with ``f_fixed`` at ``x = 0`` and a free end at ``x = L``."""
    f0 = grid.sample(f_fixed)
    u, res, its = _solve(grid, True, f0, None, method, rtol)
    values = np.vstack([f0, u])
    return HarmonicField(grid, values, PARTIALLY_FREE, res, method, its, {"fixed": f0})


def verify_doubling(grid: CylinderGrid, f_fixed, method: str = "cg", rtol: float = 1e-12,
                    doubled: Optional[CylinderGrid] = None) -> float:
    """Max difference between the free solution and the restricted doubled Dirichlet solution."""
    big = grid.doubled() if doubled is None else doubled
    if big.ntheta != grid.ntheta or big.nx != 2 * grid.nx - 1 or \
            not math.isclose(big.length, 2 * grid.length):
        raise HarmonicError("grid mismatch")
    free = solve_partially_free(grid, f_fixed, method, rtol)
    full = solve_dirichlet(big, f_fixed, f_fixed, method, rtol)
    return float(np.max(np.abs(free.values - full.values[: grid.nx])))


# --------------------------------------------------------------- oracles --

def _sinh_ratio(a, b):
    """``sinh(a) / sinh(b)`` for ``0 <= a <= b``, stable for large arguments."""
    a = np.asarray(a, dtype=float)
    if b > 700:
        return np.exp(a - b) * (-np.expm1(-2 * a)) / (-math.expm1(-2 * b))
    return np.sinh(a) / math.sinh(b)


def fourier_solution(n: int, M: float, L: float, x, theta):
    """Closed-form harmonic function with data ``M cos(n theta)`` on both ends."""
    if n < 1 or L <= 0:
        raise HarmonicError("need n >= 1 and L > 0")
    x = np.asarray(x, dtype=float)
    prof = _sinh_ratio(n * x, n * L) + _sinh_ratio(n * (L - x), n * L)
    return prof * M * np.cos(n * np.asarray(theta, dtype=float))


def free_boundary_oracle(n: int, M: float, L: float) -> float:
    """Free-end amplitude of mode ``n`` for the partially free problem: ``M / cosh(nL)``."""
    return M / math.cosh(n * L)


# ------------------------------------------------------- energy and Hopf --

def patch_energy(values: np.ndarray, hx: float, hy: float, periodic: bool = False) -> float:
    """Discrete Dirichlet energy ``sum |grad h|^2`` with trapezoid weights.

    Axis 0 is ``x`` and axis 1 is ``y``.  Exact for affine functions.
    """
    u = np.asarray(values, dtype=float)
    dx = np.diff(u, axis=0)
    wy = np.full(u.shape[1], hy)
    if not periodic:
        wy[[0, -1]] *= 0.5
        dy = np.diff(u, axis=1)
    else:
        dy = np.roll(u, -1, axis=1) - u
    wx = np.full(u.shape[0], hx)
    wx[[0, -1]] *= 0.5
    ex = np.sum(dx**2 * wy[None, :]) / hx
    ey = np.sum(dy**2 * wx[:, None]) / hy
    return float(ex + ey)


def energy(field: HarmonicField) -> float:
    g = field.grid
    return patch_energy(field.values, g.hx, g.htheta, periodic=True)


@dataclass
class DiscreteHopf:
    values: np.ndarray           # -4 (dh/dz)^2 at interior nodes
    defect: np.ndarray           # |d/dzbar (dh/dz)| at nodes two away from the edge
    hx: float
    hy: float


def hopf_patch(values: np.ndarray, hx: float, hy: float, periodic: bool = False) -> DiscreteHopf:
    """Hopf differential ``-4 (dh/dz)^2`` by central differences, ``z = x + i y``."""
    u = np.asarray(values, dtype=float)
    if periodic:
        ux = (u[2:] - u[:-2]) / (2 * hx)
        uy = (np.roll(u, -1, axis=1) - np.roll(u, 1, axis=1))[1:-1] / (2 * hy)
    else:
        ux = (u[2:, 1:-1] - u[:-2, 1:-1]) / (2 * hx)
        uy = (u[1:-1, 2:] - u[1:-1, :-2]) / (2 * hy)
    dz = 0.5 * (ux - 1j * uy)
    hopf = -4 * dz**2
    if periodic:
        px = (dz[2:] - dz[:-2]) / (2 * hx)
        py = (np.roll(dz, -1, axis=1) - np.roll(dz, 1, axis=1))[1:-1] / (2 * hy)
    else:
        px = (dz[2:, 1:-1] - dz[:-2, 1:-1]) / (2 * hx)
        py = (dz[1:-1, 2:] - dz[1:-1, :-2]) / (2 * hy)
    defect = np.abs(0.5 * (px + 1j * py))
    return DiscreteHopf(hopf, defect, hx, hy)


def hopf(field: HarmonicField) -> DiscreteHopf:
    """Hopf differential in the cylinder coordinate ``x + i theta``."""
    g = field.grid
    return hopf_patch(field.values, g.hx, g.htheta, periodic=True)


def solve_patch_dirichlet(boundary: np.ndarray, hx: float, hy: float, rtol: float = 1e-12) -> np.ndarray:
    """Discrete harmonic function on a rectangle with the given edge values.

    Only the outer ring of ``boundary`` is used; the interior is solved for.
    """
    u = np.array(boundary, dtype=float)
    mx, my = u.shape[0] - 2, u.shape[1] - 2
    if mx < 1 or my < 1:
        raise HarmonicError("patch too small")
    Tx = sp.diags([np.full(mx, 2.0), np.full(mx - 1, -1.0), np.full(mx - 1, -1.0)], [0, 1, -1]) / hx**2
    Ty = sp.diags([np.full(my, 2.0), np.full(my - 1, -1.0), np.full(my - 1, -1.0)], [0, 1, -1]) / hy**2
    A = (sp.kron(Tx, sp.identity(my)) + sp.kron(sp.identity(mx), Ty)).tocsr()
    b = np.zeros((mx, my))
    b[0] += u[0, 1:-1] / hx**2
    b[-1] += u[-1, 1:-1] / hx**2
    b[:, 0] += u[1:-1, 0] / hy**2
    b[:, -1] += u[1:-1, -1] / hy**2
    x, _ = _solve_cg(A, b.ravel(), rtol, 50 * mx * my)
    u[1:-1, 1:-1] = x.reshape(mx, my)
    return u


@dataclass
class AnnulusHopfCheck:
    max_relative_error: float
    hopf: DiscreteHopf
    z: np.ndarray


def hopf_annulus_check(nx: int = 256, ntheta: int = 256, r_in: float = 0.5, r_out: float = 2.0,
                       opening: float = 0.25, solve: bool = True) -> AnnulusHopfCheck:
    """Recover the coefficient ``z`` from ``h = Im((2/3) z**1.5)`` on an annular sector.

    The sector ``r_in <= |z| <= r_out``, ``|arg z| <= pi - opening`` avoids the
    branch cut.  In the coordinate ``zeta = x + i t`` with ``z = r_in e^zeta``
    the Hopf differential picks up the factor ``(dz/dzeta)**2 = z**2``.  With
    ``solve=True`` the interior is the discrete Dirichlet solution; otherwise
    the exact function is sampled.
    """
    L = math.log(r_out / r_in)
    span = math.pi - opening
    xs = np.linspace(0.0, L, nx)
    ts = np.linspace(-span, span, ntheta)
    hx, ht = xs[1] - xs[0], ts[1] - ts[0]
    Z = r_in * np.exp(xs[:, None] + 1j * ts[None, :])
    exact = ((2.0 / 3.0) * Z**1.5).imag
    u = solve_patch_dirichlet(exact, hx, ht) if solve else exact
    hp = hopf_patch(u, hx, ht)
    zi = Z[1:-1, 1:-1]
    coeff = hp.values / zi**2
    err = float(np.max(np.abs(coeff - zi) / np.abs(zi)))
    return AnnulusHopfCheck(err, DiscreteHopf(coeff, hp.defect, hx, ht), zi)


# ------------------------------------------------------------ experiments --

@dataclass(frozen=True)
class DecayRow:
    L: float
    midline_max: float
    ratio: float
    dtheta_max: float
    dtheta_ratio: float


def _theta_derivative(row: np.ndarray) -> np.ndarray:
    nt = row.size
    k = np.fft.rfftfreq(nt, d=1.0 / nt)
    return np.fft.irfft(1j * k * np.fft.rfft(row), n=nt)


def decay_experiment(f, L_values: Sequence[float], nx_per_unit: int = 32, ntheta: int = 256,
                     method: str = "cg") -> list[DecayRow]:
    """Midline sup of ``|h|`` and ``|dh/dtheta|`` for data ``f`` on both ends.

    Ratios are taken against ``M exp(-L/2)`` with ``M = max |f|``.
    """
    probe = CylinderGrid(1.0, 8, ntheta)
    fs = probe.sample(f)
    if abs(fs.mean()) > 1e-12:
        raise HarmonicError("boundary data must have zero mean")
    M = float(np.max(np.abs(fs)))
    rows = []
    for L in L_values:
        nx = int(round(nx_per_unit * L))
        nx += 1 - nx % 2  # odd, so the midline is a grid row
        grid = CylinderGrid(float(L), max(nx, 9), ntheta)
        field_ = solve_dirichlet(grid, fs, fs, method)
        mid = field_.midline()
        sup = float(np.max(np.abs(mid)))
        dsup = float(np.max(np.abs(_theta_derivative(mid))))
        env = M * math.exp(-L / 2)
        rows.append(DecayRow(float(L), sup, sup / env, dsup, dsup / env))
    return rows


def fitted_slope(L_values, sups) -> float:
    """Least-squares slope of ``log(sup)`` against ``L``."""
    return float(np.polyfit(np.asarray(L_values, float), np.log(np.asarray(sups, float)), 1)[0])


@dataclass(frozen=True)
class ExhaustionRow:
    i: int
    modulus: float
    boundary_max: float
    free_sup: float


def exhaustion_boundary(a: complex, n: int, delta: float, i: int, theta: np.ndarray) -> np.ndarray:
    """Collapsing data ``Im(1/w**2 + a/w)`` on the inner circle ``|w| = (delta/i)**(n/2)``."""
    r = (delta / i) ** (n / 2)
    w = r * np.exp(1j * theta)
    return (1 / w**2 + complex(a) / w).imag


def exhaustion_experiment(a: complex, n: int, delta: float, i_values: Sequence[int] = (2, 4, 8, 16, 32),
                          ntheta: int = 128, hx: float = 0.02) -> list[ExhaustionRow]:
    """Partially free problems on the exhausting annuli around a pole.

    The annulus ``delta/i <= |z| <= delta`` is pushed forward by ``w = z**(n/2)``
    and mapped to a cylinder by ``w = R_in exp(x + i theta)``: ``x = 0`` is the
    inner circle carrying the collapsing data, ``x = L`` the free outer circle,
    and ``L = (n/2) log i``.  The data span many orders of magnitude, so the
    exact per-mode solver is used.
    """
    if n % 2 or n < 4:
        raise HarmonicError("n must be even and >= 4")
    if max(i_values) < 4:
        raise HarmonicError("i_max too small (< 4) to observe a plateau")
    rows = []
    for i in i_values:
        if i < 2:
            raise HarmonicError("exhaustion index must be >= 2")
        L = 0.5 * n * math.log(i)
        nx = max(9, int(math.ceil(L / hx)) + 1)
        grid = CylinderGrid(L, nx, ntheta)
        f = exhaustion_boundary(a, n, delta, i, grid.theta)
        sol = solve_partially_free(grid, f, method="spectral")
        rows.append(ExhaustionRow(int(i), L, float(np.max(np.abs(f))),
                                  float(np.max(np.abs(sol.free_boundary())))))
    return rows


# ------------------------------------------------------------------ I/O --

def write_field_csv(path, field_: HarmonicField) -> None:
    g = field_.grid
    rows = ((float(x), float(t), float(field_.values[i, j]))
            for i, x in enumerate(g.x) for j, t in enumerate(g.theta))
    write_csv(path, ["x", "theta", "value"], rows)


def write_folh(path, values: np.ndarray) -> None:
    """Binary dump: b"FOLH", version, nx, ntheta (little-endian u32) then f64 x-major."""
    v = np.ascontiguousarray(values, dtype="<f8")
    if v.ndim != 2:
        raise HarmonicError("field must be two-dimensional")
    with Path(path).open("wb") as fh:
        fh.write(FOLH_MAGIC + struct.pack("<III", FOLH_VERSION, v.shape[0], v.shape[1]))
        fh.write(v.tobytes(order="C"))


def read_folh(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != FOLH_MAGIC:
        raise HarmonicError("not a FOLH file")
    version, nx, nt = struct.unpack("<III", data[4:16])
    if version != FOLH_VERSION:
        raise HarmonicError(f"unsupported FOLH version {version}")
    body = np.frombuffer(data, dtype="<f8", offset=16)
    if body.size != nx * nt:
        raise HarmonicError("FOLH payload size does not match header")
    return body.reshape(nx, nt).copy()


def write_table_csv(path, rows, columns: Sequence[str]) -> None:
    write_csv(path, columns, ([getattr(r, c) for c in columns] for r in rows))
