"""Complex linear algebra: sparse storage, direct factorization and the
three interface solvers (fixed point, GMRES, BiCGStab).

All vectors are 1-D ``complex128`` arrays.  Operators are wrapped in the
small :class:`LinearOperator` record so that matrix-free Schwarz sweeps,
explicit block matrices and plain arrays are interchangeable.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import Breakdown, DimensionMismatch, Diverged, SingularMatrix

__all__ = [
    "LinearOperator",
    "SolveReport",
    "Factorization",
    "as_operator",
    "sparse_matrix",
    "lu_factorize",
    "gmres",
    "bicgstab",
    "fixed_point",
]


def sparse_matrix(shape, rows, cols, values) -> sp.csr_matrix:
    """Build a CSR matrix from triplets; duplicate (row, col) pairs are summed."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    n, m = shape
    if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= m):
        raise DimensionMismatch("triplet index out of range")
    A = sp.coo_matrix((np.asarray(values), (rows, cols)), shape=shape).tocsr()
    A.sum_duplicates()
    return A


@dataclass(frozen=True)
class LinearOperator:
    """A square linear map given by its action."""

    dim: int
    apply: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        return self.apply(x)


def as_operator(a, dim: Optional[int] = None) -> LinearOperator:
    if isinstance(a, LinearOperator):
        return a
    if sp.issparse(a) or isinstance(a, np.ndarray):
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"operator must be square, got {a.shape}")
        return LinearOperator(a.shape[0], lambda x, _a=a: np.asarray(_a @ x))
    if hasattr(a, "matvec") and hasattr(a, "shape"):
        return LinearOperator(a.shape[0], a.matvec)
    if callable(a):
        if dim is None:
            raise DimensionMismatch("dim is required to wrap a bare callable")
        return LinearOperator(dim, a)
    raise TypeError(f"cannot interpret {type(a).__name__} as a linear operator")


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = False

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")


class Factorization:
    """Sparse LU factors of a square complex matrix, reusable across right-hand sides.

    ``solve`` accepts a vector or a 2-D block of right-hand sides (one per column).
    With ``debug=True`` every solve checks ``||Ax - b|| <= 1e-10 ||b||``.
    """

    def __init__(self, A, pivot_tol: float = 1e-14, debug: bool = False):
        A = sp.csc_matrix(A, dtype=np.complex128)
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"matrix must be square, got {A.shape}")
        self.shape = A.shape
        self.debug = debug
        self._lock = threading.Lock()
        self._A = A if debug else None
        scale = abs(A).max() if A.nnz else 0.0
        if scale == 0.0:
            raise SingularMatrix("zero matrix")
        try:
            # a relaxed pivot threshold keeps the fill-reducing order; full partial
            # pivoting wrecks it once the potential term removes diagonal dominance
            self._lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.1)
        except RuntimeError as exc:
            raise SingularMatrix(str(exc)) from exc
        pivots = np.abs(self._lu.U.diagonal())
        if pivots.min() <= pivot_tol * scale:
            raise SingularMatrix(
                f"pivot {pivots.min():.3e} below {pivot_tol:g} x max entry {scale:.3e}"
            )

    def solve(self, b):
        b = np.asarray(b, dtype=np.complex128)
        if b.shape[0] != self.shape[0]:
            raise DimensionMismatch(f"rhs has {b.shape[0]} rows, expected {self.shape[0]}")
        with self._lock:
            x = self._lu.solve(b)
        if self.debug:
            bn = np.linalg.norm(b)
            if bn > 0 and np.linalg.norm(self._A @ x - b) > 1e-10 * bn:
                raise SingularMatrix("direct solve residual check failed")
        return x


def lu_factorize(A, pivot_tol: float = 1e-14, debug: bool = False) -> Factorization:
    return Factorization(A, pivot_tol=pivot_tol, debug=debug)


def _givens(a: complex, b: complex):
    # returns (c, s, rho) with [c s; -conj(s) c] [a; b] = [rho; 0], c real
    if b == 0:
        return 1.0, 0.0j, a
    if a == 0:
        return 0.0, 1.0 + 0.0j, b
    t = np.hypot(abs(a), abs(b))
    phase = a / abs(a)
    return abs(a) / t, phase * np.conj(b) / t, phase * t


def _prepare(op, b, x0, precond):
    op = as_operator(op)
    b = np.asarray(b, dtype=np.complex128)
    if b.shape != (op.dim,):
        raise DimensionMismatch(f"rhs shape {b.shape} does not match operator dim {op.dim}")
    x = np.zeros(op.dim, np.complex128) if x0 is None else np.array(x0, dtype=np.complex128)
    if x.shape != b.shape:
        raise DimensionMismatch("initial guess shape mismatch")
    if precond is None:
        return op.apply, b, x
    pre = as_operator(precond, op.dim).apply
    return (lambda v: pre(op.apply(v))), pre(b), x


def gmres(op, b, x0=None, tol: float = 1e-10, max_iter: int = 1000, restart: int = 200,
          precond=None, norm=np.linalg.norm, verify: bool = True):
    """Restarted GMRES with modified Gram-Schmidt plus one reorthogonalization pass.

    With ``precond`` the system ``precond(op(x)) = precond(b)`` is solved (left
    preconditioning) and the residual history refers to that system.

    Returns ``(x, SolveReport)``.  Residuals are relative to the norm of the
    (preconditioned) right-hand side.
    """
    apply, rhs, x = _prepare(op, b, x0, precond)
    bnorm = norm(rhs)
    if bnorm == 0.0:
        return np.zeros_like(x), SolveReport(0, [0.0], True)
    r = rhs - apply(x) if np.any(x) else rhs.copy()
    beta = norm(r)
    history = [beta / bnorm]
    its = 0
    n = rhs.size
    while history[-1] > tol and its < max_iter:
        m = min(restart, max_iter - its)
        V = np.empty((m + 1, n), np.complex128)
        H = np.zeros((m + 1, m), np.complex128)
        cs = np.zeros(m)
        sn = np.zeros(m, np.complex128)
        g = np.zeros(m + 1, np.complex128)
        g[0] = beta
        V[0] = r / beta
        k_used = 0
        lucky = False
        for k in range(m):
            w = apply(V[k])
            wnorm0 = norm(w)
            for _ in range(2):
                for i in range(k + 1):
                    h = np.vdot(V[i], w)
                    H[i, k] += h
                    w = w - h * V[i]
            hn = norm(w)
            H[k + 1, k] = hn
            for i in range(k):
                t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -np.conj(sn[i]) * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = t
            cs[k], sn[k], H[k, k] = _givens(H[k, k], H[k + 1, k])
            H[k + 1, k] = 0.0
            g[k + 1] = -np.conj(sn[k]) * g[k]
            g[k] = cs[k] * g[k]
            its += 1
            k_used = k + 1
            history.append(abs(g[k + 1]) / bnorm)
            if history[-1] <= tol:
                break
            if hn <= 1e-14 * max(wnorm0, 1e-300):
                lucky = True
                break
            V[k + 1] = w / hn
        Hk = H[:k_used, :k_used]
        y = np.linalg.solve(np.triu(Hk), g[:k_used]) if k_used else np.zeros(0)
        x = x + V[:k_used].T @ y
        if history[-1] <= tol and not verify:
            break
        r = rhs - apply(x)
        beta = norm(r)
        true_res = beta / bnorm
        if true_res <= tol:
            history[-1] = min(history[-1], true_res) if history[-1] <= tol else true_res
            break
        if lucky:
            raise Breakdown(
                f"Arnoldi produced a zero vector at iteration {its} with residual {true_res:.3e}"
            )
        # the cycle's estimate was too optimistic; restart from the true residual
        history[-1] = true_res
    converged = history[-1] <= tol
    _check_finite(x, converged)
    return x, SolveReport(its, history, converged)


def bicgstab(op, b, x0=None, tol: float = 1e-10, max_iter: int = 1000, precond=None,
             norm=np.linalg.norm):
    """BiCGStab (van der Vorst).  One iteration = two operator applications."""
    apply, rhs, x = _prepare(op, b, x0, precond)
    bnorm = norm(rhs)
    if bnorm == 0.0:
        return np.zeros_like(x), SolveReport(0, [0.0], True)
    r = rhs - apply(x) if np.any(x) else rhs.copy()
    history = [norm(r) / bnorm]
    r_hat = r.copy()
    rho = alpha = omega = 1.0 + 0j
    v = np.zeros_like(r)
    p = np.zeros_like(r)
    its = 0
    while history[-1] > tol and its < max_iter:
        rho_new = np.vdot(r_hat, r)
        if abs(rho_new) <= 1e-30 * norm(r_hat) * norm(r):
            raise Breakdown(f"rho vanished at iteration {its}")
        beta = (rho_new / rho) * (alpha / omega)
        p = r + beta * (p - omega * v)
        v = apply(p)
        denom = np.vdot(r_hat, v)
        if denom == 0:
            raise Breakdown(f"<r_hat, v> vanished at iteration {its}")
        alpha = rho_new / denom
        s = r - alpha * v
        its += 1
        snorm = norm(s)
        if snorm / bnorm <= tol:
            x = x + alpha * p
            history.append(snorm / bnorm)
            break
        t = apply(s)
        tt = np.vdot(t, t)
        if tt == 0:
            raise Breakdown(f"t vanished at iteration {its}")
        omega = np.vdot(t, s) / tt
        if omega == 0:
            raise Breakdown(f"omega vanished at iteration {its}")
        x = x + alpha * p + omega * s
        r = s - omega * t
        rho = rho_new
        history.append(norm(r) / bnorm)
    converged = history[-1] <= tol
    _check_finite(x, converged)
    return x, SolveReport(its, history, converged)


def fixed_point(op_R, d, g0=None, tol: float = 1e-10, max_iter: int = 1000,
                norm=np.linalg.norm, divergence_factor: float = 1e12):
    """Iterate ``g <- op_R(g) + d``.

    ``op_R`` is the iteration operator itself, not ``I - op_R``.  The residual of
    an iterate is ``||op_R(g) + d - g|| / ||d||``, which equals the size of the
    next update.  Stops once the residual of the current iterate is below
    ``tol``; the returned vector is the last update.
    """
    op = as_operator(op_R)
    d = np.asarray(d, dtype=np.complex128)
    if d.shape != (op.dim,):
        raise DimensionMismatch(f"d shape {d.shape} does not match operator dim {op.dim}")
    g = np.zeros_like(d) if g0 is None else np.array(g0, dtype=np.complex128)
    dnorm = norm(d)
    if dnorm == 0.0 and not np.any(g):
        return g, SolveReport(0, [0.0], True)
    scale = dnorm if dnorm > 0 else norm(g)
    limit = divergence_factor * max(norm(g), dnorm)
    history = []
    its = 0
    while True:
        g_next = op.apply(g) + d
        history.append(norm(g_next - g) / scale)
        if history[-1] <= tol:
            g = g_next
            break
        if its >= max_iter:
            break
        g = g_next
        its += 1
        if not np.isfinite(history[-1]) or norm(g) > limit:
            raise Diverged(f"fixed point iterate norm exceeded {limit:.3e} at iteration {its}")
    converged = history[-1] <= tol
    _check_finite(g, converged)
    return g, SolveReport(its, history, converged)


def _check_finite(x, converged):
    if converged and not np.all(np.isfinite(x)):
        raise Diverged("solver returned non-finite entries")
