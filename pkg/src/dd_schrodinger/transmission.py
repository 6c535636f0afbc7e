"""Transmission operators: Robin ``S = -ip`` and the rotated Pade absorbing
condition of order ``m`` for ``-i sqrt(i d_t + d_yy + V)``.

Boundary quantities are handled at trace level: a strip side carries
``N_y`` nodal values, and ``Q`` stacks the selection matrices of the active
sides (left first).  ``M1``/``S1`` denote the block-diagonal trace mass and
stiffness matrices, so that ``Q M_gamma Q^T = M1`` and ``Q M_gamma = M1 Q``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import BadConfig, DimensionMismatch, SingularMatrix
from .mesh import SubdomainFem, assemble_generalized_mass, mass_1d

__all__ = [
    "TransmissionSpec",
    "PadeCoefficients",
    "BoundaryOperators",
    "pade_coefficients",
    "robin_boundary_block",
    "boundary_operators",
    "assemble_pade_system",
    "build_L_recursion",
    "trace_update",
]


@dataclass(frozen=True)
class PadeCoefficients:
    """``a`` holds ``a_0..a_m`` (``a_0 = 0``), ``d`` holds ``d_1..d_m``."""

    m: int
    theta: float
    a: np.ndarray
    d: np.ndarray

    @property
    def sum_a(self) -> complex:
        return complex(self.a.sum())

    @property
    def c_a(self) -> complex:
        return 1j * self.sum_a

    @property
    def ad(self) -> np.ndarray:
        """Products ``a_s d_s`` for ``s = 1..m``."""
        return self.a[1:] * self.d

    def rational(self, z):
        """Evaluate ``sum_s a_s - sum_s a_s d_s / (z + d_s)``."""
        z = np.asarray(z, dtype=complex)[..., None]
        return self.sum_a - (self.ad / (z + self.d)).sum(axis=-1)


def pade_coefficients(m: int, theta: float = math.pi / 4) -> PadeCoefficients:
    if int(m) != m or m < 1:
        raise BadConfig(f"Pade order must be an integer >= 1, got {m!r}")
    m = int(m)
    s = np.arange(1, m + 1)
    ang = (2 * s - 1) * math.pi / (4 * m)
    a = np.zeros(m + 1, dtype=complex)
    a[1:] = np.exp(0.5j * theta) / (m * np.cos(ang) ** 2)
    d = np.exp(1j * theta) * np.tan(ang) ** 2
    return PadeCoefficients(m, float(theta), a, d)


@dataclass(frozen=True)
class TransmissionSpec:
    kind: str = "robin"
    p: float = 0.0
    m: int = 5
    theta: float = math.pi / 4
    coeffs: PadeCoefficients = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in ("robin", "pade"):
            raise BadConfig(f"unknown transmission condition {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        coeffs = None
        if kind == "pade":
            coeffs = pade_coefficients(self.m, self.theta)
        elif self.p < 0:
            warnings.warn(f"Robin parameter p={self.p} is negative", stacklevel=3)
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def robin(cls, p: float) -> "TransmissionSpec":
        return cls("robin", p=p)

    @classmethod
    def pade(cls, m: int, theta: float = math.pi / 4) -> "TransmissionSpec":
        return cls("pade", m=m, theta=theta)

    @property
    def n_aux(self) -> int:
        return self.coeffs.m if self.kind == "pade" else 0

    def describe(self) -> str:
        if self.kind == "robin":
            return f"robin(p={self.p:g})"
        return f"pade(m={self.m}, theta={self.theta:.6g})"


def robin_boundary_block(fem: SubdomainFem, p: float) -> sp.csr_matrix:
    """The term ``ip M_gamma`` added to the volume matrix for a Robin condition."""
    return (1j * p * fem.M_gamma).tocsr()


@dataclass(frozen=True)
class BoundaryOperators:
    """Trace-level operators of the active sides of a strip."""

    sides: tuple
    Q: sp.csr_matrix
    M1: sp.csr_matrix
    S1: sp.csr_matrix
    M1_W: sp.csr_matrix
    M_gamma: sp.csr_matrix

    @property
    def size(self) -> int:
        return self.Q.shape[0]


def boundary_operators(fem: SubdomainFem, sides: Sequence[str] = ("l", "r"), W=None) -> BoundaryOperators:
    sides = tuple(sides)
    sel = {"l": fem.Q_l, "r": fem.Q_r}
    if not sides:
        empty = sp.csr_matrix((0, fem.n))
        z = sp.csr_matrix((0, 0))
        return BoundaryOperators(sides, empty, z, z, z, sp.csr_matrix((fem.n, fem.n)))
    Q = sp.vstack([sel[s] for s in sides]).tocsr()
    M1 = sp.block_diag([fem.trace_mass] * len(sides)).tocsr()
    S1 = sp.block_diag([fem.trace_stiffness] * len(sides)).tocsr()
    if W is None:
        M1_W = sp.csr_matrix(M1.shape)
    else:
        W = np.asarray(W, dtype=float)
        nodes = {"l": fem.left_nodes, "r": fem.right_nodes}
        M1_W = sp.block_diag([mass_1d(fem.ny, fem.dy, W[nodes[s]]) for s in sides]).tocsr()
    return BoundaryOperators(sides, Q, M1, S1, M1_W, (Q.T @ M1 @ Q).tocsr())


def aux_block(bops: BoundaryOperators, d_s: complex, dt: float) -> sp.csr_matrix:
    """``D_s = (2i/dt + d_s) M1 - S1 + M1_W`` at trace level."""
    return ((2j / dt + d_s) * bops.M1 - bops.S1 + bops.M1_W).tocsr()


def _volume_matrix(fem, W, dt):
    A = (2j / dt) * fem.M - fem.S
    if W is not None and np.any(W):
        A = A + assemble_generalized_mass(fem, W=W).M_W
    return A


def assemble_pade_system(fem: SubdomainFem, coeffs: PadeCoefficients, W_n, dt: float,
                         sides: Sequence[str] = ("l", "r")) -> sp.csr_matrix:
    """Augmented matrix over ``(v_n, phi_1, ..., phi_m)``.

    Blocks: ``A_n + i sum(a) M_gamma`` | ``B_s = -i a_s d_s M_gamma Q^T`` in the
    first block row, ``C = -Q M_gamma`` and ``D_s`` below.
    """
    if coeffs is None or coeffs.m < 1:
        raise BadConfig("Pade system needs m >= 1")
    bops = boundary_operators(fem, sides, W_n)
    A = _volume_matrix(fem, W_n, dt) + 1j * coeffs.sum_a * bops.M_gamma
    MgQt = (bops.Q.T @ bops.M1).tocsr()  # M_gamma Q^T
    C = -(bops.M1 @ bops.Q)
    blocks = [[A] + [-1j * ad * MgQt for ad in coeffs.ad]]
    for s in range(coeffs.m):
        row = [C] + [None] * coeffs.m
        row[1 + s] = aux_block(bops, coeffs.d[s], dt)
        blocks.append(row)
    return sp.bmat(blocks, format="csr")


def build_L_recursion(fem: SubdomainFem, coeffs: PadeCoefficients, dt: float, W, N_T: int,
                      sides: Sequence[str] = ("l", "r")):
    """Trace-level elimination matrices of the auxiliary functions.

    Returns ``L`` with ``L[s][n][p]`` (0-based ``s``, 1-based ``n, p``) such
    that ``phi_s^{n-1/2} = sum_{p<=n} L[s][n][p] @ (Q v_p)``; the full-space
    matrices are ``L[s][n][p] @ Q``.  ``W`` is a nodal array (time independent)
    or a callable ``n -> nodal array``.
    """
    W_of = W if callable(W) else (lambda n: W)
    static = not callable(W)
    L = []
    for s in range(coeffs.m):
        Ls = {}
        prev_int = {}  # coefficients of phi_s^{n-1} (integer level)
        cache = None
        for n in range(1, N_T + 1):
            if cache is None or not static:
                bops = boundary_operators(fem, sides, W_of(n))
                D = aux_block(bops, coeffs.d[s], dt).toarray()
                if np.linalg.cond(D) > 1e14:
                    raise SingularMatrix(f"auxiliary block D_{s + 1}^{n} is singular")
                Dinv = np.linalg.inv(D)
                M1 = bops.M1.toarray()
                cache = (Dinv @ M1, Dinv @ ((2j / dt) * M1))
            DM, DR = cache
            row = {n: DM}
            for p, P in prev_int.items():
                row[p] = DR @ P
            Ls[n] = row
            new_int = {p: 2 * Lnp - prev_int.get(p, 0) for p, Lnp in row.items()}
            prev_int = new_int
        L.append(Ls)
    return L


def trace_update(spec: TransmissionSpec, v_trace, incoming, phi_half=None):
    """Outgoing flux ``-incoming + 2 S~ v`` for the neighbour across a side.

    ``phi_half`` (Pade only) has shape ``(m,) + v_trace.shape``.
    """
    v_trace = np.asarray(v_trace)
    incoming = np.asarray(incoming)
    if v_trace.shape != incoming.shape:
        raise DimensionMismatch(f"trace shape {v_trace.shape} != flux shape {incoming.shape}")
    if spec.kind == "robin":
        Sv = -1j * spec.p * v_trace
    else:
        c = spec.coeffs
        if phi_half is None:
            raise DimensionMismatch("Pade trace update needs the auxiliary traces")
        phi_half = np.asarray(phi_half)
        if phi_half.shape != (c.m,) + v_trace.shape:
            raise DimensionMismatch(f"auxiliary traces have shape {phi_half.shape}")
        Sv = -1j * c.sum_a * v_trace + 1j * np.tensordot(c.ad, phi_half, axes=(0, 0))
    return -incoming + 2 * Sv
