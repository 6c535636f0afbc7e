"""Strip decomposition of a rectangle and Q1 finite-element assembly.

Nodes of a strip are numbered y-fastest: node ``(ix, iy)`` has index
``ix * N_y + iy``, so the left interface is the contiguous range
``[0, N_y)`` and the right one ``[(N_x - 1) N_y, N_x N_y)``.  Neighbouring
strips both own their shared grid line.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
import scipy.sparse as sp

from .errors import BadGeometry

__all__ = [
    "DecompositionPlan",
    "SubdomainFem",
    "GeneralizedMass",
    "build_plan",
    "assemble_fem",
    "assemble_generalized_mass",
    "mass_1d",
    "stiffness_1d",
    "gauss_legendre_unit",
]

_REL = 1e-9


def _as_count(value: float, what: str) -> int:
    k = int(round(value))
    if k < 1 or abs(value - k) > _REL * max(1.0, abs(value)):
        raise BadGeometry(f"{what} is not a positive integer (got {value!r})")
    return k


@dataclass(frozen=True)
class DecompositionPlan:
    """Rectangle ``(x_l, x_r) x (y_b, y_u)`` cut into ``N`` equal vertical strips."""

    x_l: float
    x_r: float
    y_b: float
    y_u: float
    N: int
    dx: float
    dy: float
    T: float
    dt: float
    N_x: int = field(init=False)
    N_y: int = field(init=False)
    N_T: int = field(init=False)

    def __post_init__(self):
        if not (self.x_r > self.x_l and self.y_u > self.y_b):
            raise BadGeometry("domain bounds must satisfy x_r > x_l and y_u > y_b")
        if int(self.N) != self.N or self.N < 1:
            raise BadGeometry(f"subdomain count must be a positive integer, got {self.N!r}")
        if min(self.dx, self.dy, self.dt, self.T) <= 0:
            raise BadGeometry("dx, dy, dt and T must be positive")
        width = (self.x_r - self.x_l) / self.N
        cells_x = _as_count(width / self.dx, "strip width / dx")
        cells_y = _as_count((self.y_u - self.y_b) / self.dy, "(y_u - y_b) / dy")
        n_t = _as_count(self.T / self.dt, "T / dt")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "N_x", cells_x + 1)
        object.__setattr__(self, "N_y", cells_y + 1)
        object.__setattr__(self, "N_T", n_t)

    @property
    def width(self) -> float:
        return (self.x_r - self.x_l) / self.N

    def a(self, j: int) -> float:
        """Left end of strip ``j`` (1-based)."""
        self._check(j)
        return self.x_l + (j - 1) * self.width

    def b(self, j: int) -> float:
        self._check(j)
        return self.x_l + j * self.width if j < self.N else self.x_r

    @property
    def interfaces(self) -> list:
        return [self.b(j) for j in range(1, self.N)]

    @property
    def nodes_per_subdomain(self) -> int:
        return self.N_x * self.N_y

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.N_T + 1)

    def replace(self, **changes) -> "DecompositionPlan":
        kw = {k: getattr(self, k) for k in ("x_l", "x_r", "y_b", "y_u", "N", "dx", "dy", "T", "dt")}
        kw.update(changes)
        return DecompositionPlan(**kw)

    def monodomain(self) -> "DecompositionPlan":
        return self.replace(N=1)

    def _check(self, j):
        if not 1 <= j <= self.N:
            raise IndexError(f"subdomain index {j} outside 1..{self.N}")


def build_plan(config: Optional[Mapping] = None, **overrides) -> DecompositionPlan:
    """Build a plan from a mapping with keys ``x_l, x_r, y_b, y_u, N, dx, dy, T, dt``.

    Keyword arguments override mapping entries.
    """
    cfg = dict(config or {})
    cfg.update(overrides)
    required = ("x_l", "x_r", "y_b", "y_u", "N", "dx", "dy", "T", "dt")
    missing = [k for k in required if k not in cfg]
    if missing:
        raise BadGeometry(f"missing plan fields: {', '.join(missing)}")
    extra = set(cfg) - set(required)
    if extra:
        raise BadGeometry(f"unknown plan fields: {', '.join(sorted(extra))}")
    return DecompositionPlan(**{k: (int(cfg[k]) if k == "N" else float(cfg[k])) for k in required})


def gauss_legendre_unit(npts: int):
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def _q1_reference(npts: int):
    # local node order (0,0), (1,0), (0,1), (1,1)
    g, w = gauss_legendre_unit(npts)
    xi, eta = np.meshgrid(g, g, indexing="ij")
    xi, eta = xi.ravel(), eta.ravel()
    weights = np.outer(w, w).ravel()
    N = np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta], axis=1)
    dxi = np.stack([-(1 - eta), (1 - eta), -eta, eta], axis=1)
    deta = np.stack([-(1 - xi), -xi, (1 - xi), xi], axis=1)
    return N, dxi, deta, weights


def element_matrices(dx: float, dy: float, npts: int = 2):
    """Q1 element mass and stiffness matrices on a ``dx x dy`` rectangle."""
    N, dxi, deta, w = _q1_reference(npts)
    area = dx * dy
    Me = area * np.einsum("q,qa,qb->ab", w, N, N)
    Se = area * (
        np.einsum("q,qa,qb->ab", w, dxi, dxi) / dx**2 + np.einsum("q,qa,qb->ab", w, deta, deta) / dy**2
    )
    return Me, Se


def _connectivity(nx: int, ny: int) -> np.ndarray:
    ex, ey = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
    n0 = (ex * ny + ey).ravel()
    return np.stack([n0, n0 + ny, n0 + 1, n0 + ny + 1], axis=1)


def _scatter(conn, local, n) -> sp.csr_matrix:
    # local: (4, 4) shared or (ne, 4, 4) per element
    rows = np.repeat(conn, 4, axis=1)
    cols = np.tile(conn, (1, 4))
    if local.ndim == 2:
        vals = np.broadcast_to(local.ravel(), rows.shape)
    else:
        vals = local.reshape(local.shape[0], 16)
    A = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


def mass_1d(n: int, h: float, w: Optional[np.ndarray] = None) -> sp.csr_matrix:
    """P1 mass matrix on ``n`` equispaced nodes, optionally weighted by a nodal
    (linearly interpolated) function ``w``."""
    g, gw = gauss_legendre_unit(2)
    phi = np.stack([1 - g, g], axis=1)  # (q, 2)
    conn = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)
    if w is None:
        local = h * np.einsum("q,qa,qb->ab", gw, phi, phi)
        vals = np.broadcast_to(local.ravel(), (n - 1, 4))
    else:
        wq = np.asarray(w, dtype=float)[conn] @ phi.T  # (ne, q)
        vals = h * np.einsum("eq,q,qa,qb->eab", wq, gw, phi, phi).reshape(n - 1, 4)
    rows = np.repeat(conn, 2, axis=1).ravel()
    cols = np.tile(conn, (1, 2)).ravel()
    A = sp.coo_matrix((np.asarray(vals).ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


def stiffness_1d(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, 2.0 / h)
    main[[0, -1]] = 1.0 / h
    off = np.full(n - 1, -1.0 / h)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


@dataclass(frozen=True)
class SubdomainFem:
    """Q1 matrices of one strip.

    ``M_gamma``/``S_gamma`` live on both vertical sides of the strip; on the
    outer sides of strips 1 and N they carry the physical boundary condition.
    ``trace_mass``/``trace_stiffness`` are the ``N_y x N_y`` restrictions
    ``Q_l M_gamma Q_l^T`` (identical on both sides).
    """

    j: int
    nx: int
    ny: int
    dx: float
    dy: float
    x: np.ndarray
    y: np.ndarray
    M: sp.csr_matrix
    S: sp.csr_matrix
    M_gamma: sp.csr_matrix
    S_gamma: sp.csr_matrix
    Q_l: sp.csr_matrix
    Q_r: sp.csr_matrix
    trace_mass: sp.csr_matrix
    trace_stiffness: sp.csr_matrix
    is_left_interface: bool
    is_right_interface: bool

    @property
    def n(self) -> int:
        return self.nx * self.ny

    @property
    def left_nodes(self) -> np.ndarray:
        return np.arange(self.ny)

    @property
    def right_nodes(self) -> np.ndarray:
        return np.arange((self.nx - 1) * self.ny, self.nx * self.ny)


def _selection(ny: int, nodes: np.ndarray, n: int) -> sp.csr_matrix:
    return sp.csr_matrix((np.ones(ny), (np.arange(ny), nodes)), shape=(ny, n))


def assemble_fem(plan: DecompositionPlan, j: int) -> SubdomainFem:
    nx, ny, dx, dy = plan.N_x, plan.N_y, plan.dx, plan.dy
    n = nx * ny
    x0 = plan.a(j)
    ix, iy = np.divmod(np.arange(n), ny)
    x = x0 + ix * dx
    y = plan.y_b + iy * dy
    conn = _connectivity(nx, ny)
    Me, Se = element_matrices(dx, dy)
    M = _scatter(conn, Me, n)
    S = _scatter(conn, Se, n)
    Q_l = _selection(ny, np.arange(ny), n)
    Q_r = _selection(ny, np.arange((nx - 1) * ny, n), n)
    m1 = mass_1d(ny, dy)
    s1 = stiffness_1d(ny, dy)
    M_gamma = (Q_l.T @ m1 @ Q_l + Q_r.T @ m1 @ Q_r).tocsr()
    S_gamma = (Q_l.T @ s1 @ Q_l + Q_r.T @ s1 @ Q_r).tocsr()
    return SubdomainFem(
        j=j, nx=nx, ny=ny, dx=dx, dy=dy, x=x, y=y, M=M, S=S,
        M_gamma=M_gamma, S_gamma=S_gamma, Q_l=Q_l, Q_r=Q_r,
        trace_mass=m1, trace_stiffness=s1,
        is_left_interface=j > 1, is_right_interface=j < plan.N,
    )


@dataclass(frozen=True)
class GeneralizedMass:
    """Mass matrices weighted by a nodal field ``W`` (volume and both vertical sides)."""

    M_W: sp.csr_matrix
    M_gamma_W: sp.csr_matrix
    trace_l: sp.csr_matrix
    trace_r: sp.csr_matrix
    n: Optional[int] = None


def assemble_generalized_mass(plan_or_fem, j: Optional[int] = None, W=None,
                              n: Optional[int] = None) -> GeneralizedMass:
    """Assemble ``int W v phi`` over the strip and over its vertical sides.

    ``W`` holds nodal values; it is interpolated bilinearly inside elements
    and the 2x2 Gauss rule integrates the resulting products exactly.
    Accepts either ``(plan, j, W)`` or ``(fem, W=W)``.
    """
    fem = plan_or_fem if isinstance(plan_or_fem, SubdomainFem) else assemble_fem(plan_or_fem, j)
    W = np.asarray(W, dtype=float)
    if np.iscomplexobj(W):
        raise TypeError("W must be real")
    if W.shape != (fem.n,):
        W = np.broadcast_to(W, (fem.n,)).copy()
    conn = _connectivity(fem.nx, fem.ny)
    N, _, _, w = _q1_reference(2)
    Wq = W[conn] @ N.T  # (ne, q)
    local = fem.dx * fem.dy * np.einsum("eq,q,qa,qb->eab", Wq, w, N, N)
    M_W = _scatter(conn, local, fem.n)
    tl = mass_1d(fem.ny, fem.dy, W[fem.left_nodes])
    tr = mass_1d(fem.ny, fem.dy, W[fem.right_nodes])
    M_gamma_W = (fem.Q_l.T @ tl @ fem.Q_l + fem.Q_r.T @ tr @ fem.Q_r).tocsr()
    return GeneralizedMass(M_W=M_W, M_gamma_W=M_gamma_W, trace_l=tl, trace_r=tr, n=n)
