"""The interface problem ``(I - L) g = d`` on stacked flux traces.

Layout of ``g`` (worker order, one block per owned side, each block holding
all time steps of the window, ``N_y`` values per step)::

    g = [ r_1 | l_2, r_2 | ... | l_{N-1}, r_{N-1} | l_N ]

A Schwarz sweep maps the incoming fluxes to the outgoing ones: strip ``j``
sends ``-l_j + 2 S v_j`` to the left neighbour (its new ``r_{j-1}``) and
``-r_j + 2 S v_j`` to the right one (its new ``l_{j+1}``).  The sweep is
affine, ``sweep(g) = L g + d``; ``L`` is the sweep from zero data and ``d``
the sweep with zero fluxes.

For each strip ``j`` the four blocks of ``L`` are::

    X^{j,1}: l_j -> r_{j-1}     X^{j,2}: r_j -> r_{j-1}
    X^{j,3}: l_j -> l_{j+1}     X^{j,4}: r_j -> l_{j+1}

and block column ``j`` (inputs ``l_j``, ``r_j``) is owned by worker ``j``.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .errors import (
    BadConfig,
    DimensionMismatch,
    DimensionTooLarge,
    InnerSolveFailed,
    NotConstantPotential,
)
from .mesh import DecompositionPlan, assemble_fem
from .numerics import LinearOperator, SolveReport, as_operator, bicgstab, fixed_point, gmres
from .potential import parse_potential
from .runtime import Exchange, Runtime, Topology, reduce_norm
from .subdomain import FactorCache, SubdomainSolver, SubdomainState, TraceSeries, WindowResult
from .transmission import TransmissionSpec

__all__ = [
    "InterfaceLayout",
    "Decomposition",
    "InterfaceMatrix",
    "Preconditioner",
    "apply_matrix_free",
    "build_rhs_d",
    "build_explicit",
    "probe_dense",
    "probe_affine",
    "solve_interface",
    "build_preconditioner",
    "spectrum_small",
    "dense_operator",
    "write_blocks_csv",
    "write_spectrum_csv",
    "n_mpi",
]

# complex entries allowed in one batched probe state (about 256 MB)
PROBE_BUDGET = 16_000_000


class InterfaceLayout:
    """Offsets of the flux blocks for ``N`` strips over ``n_steps`` steps."""

    def __init__(self, N: int, n_steps: int, ny: int):
        self.N = N
        self.n_steps = n_steps
        self.ny = ny
        self.block = n_steps * ny
        self.keys = []
        for j in range(1, N + 1):
            for side in self.sides(j):
                self.keys.append((j, side))
        self.offsets = {key: i * self.block for i, key in enumerate(self.keys)}
        self.size = len(self.keys) * self.block

    def sides(self, j: int) -> tuple:
        out = []
        if j > 1:
            out.append("l")
        if j < self.N:
            out.append("r")
        return tuple(out)

    def slice(self, j: int, side: str) -> slice:
        off = self.offsets[(j, side)]
        return slice(off, off + self.block)

    def worker_slice(self, j: int) -> slice:
        sides = self.sides(j)
        if not sides:
            return slice(0, 0)
        start = self.offsets[(j, sides[0])]
        return slice(start, start + len(sides) * self.block)

    def _check(self, g):
        if g.shape[0] != self.size:
            raise DimensionMismatch(f"interface vector has {g.shape[0]} entries, expected {self.size}")

    def get(self, g, j: int, side: str):
        """Block ``(j, side)`` as an ``(n_steps, N_y, ...)`` view, or ``None``."""
        if (j, side) not in self.offsets:
            return None
        self._check(g)
        return g[self.slice(j, side)].reshape((self.n_steps, self.ny) + g.shape[1:])

    def join(self, parts: Dict[tuple, np.ndarray], batch=()) -> np.ndarray:
        g = np.zeros((self.size,) + tuple(batch), np.complex128)
        for key, val in parts.items():
            if key not in self.offsets:
                raise DimensionMismatch(f"no interface block {key}")
            g[self.slice(*key)] = np.asarray(val).reshape((self.block,) + tuple(batch))
        return g

    def scatter(self, g) -> List[np.ndarray]:
        """Per-worker copies of the owned blocks (worker order)."""
        self._check(g)
        return [g[self.worker_slice(j)].copy() for j in range(1, self.N + 1)]

    def gather(self, pieces: Sequence[np.ndarray]) -> np.ndarray:
        if len(pieces) != self.N:
            raise DimensionMismatch(f"expected {self.N} worker blocks, got {len(pieces)}")
        out = np.concatenate([np.asarray(p, dtype=np.complex128) for p in pieces], axis=0)
        self._check(out)
        return out

    def norm(self, g) -> float:
        """2-norm reduced over worker blocks in worker order."""
        self._check(g)
        local = [float(np.vdot(g[self.worker_slice(j)], g[self.worker_slice(j)]).real)
                 for j in range(1, self.N + 1)]
        return reduce_norm(Topology(self.N), local)

    def truncate(self, g, n_steps: int) -> np.ndarray:
        """Restrict a vector to the first ``n_steps`` steps of every block."""
        short = InterfaceLayout(self.N, n_steps, self.ny)
        return short.join({k: self.get(g, *k)[:n_steps] for k in self.keys}, g.shape[1:])


def default_u0(x, y):
    return np.exp(-x ** 2 - y ** 2 - 0.5j * x)


@dataclass
class Counters:
    sweeps: int = 0
    probe_solves: int = 0
    rhs_solves: int = 0
    builds: int = 0
    subdomain_time: float = 0.0
    communication_time: float = 0.0


class Decomposition:
    """Strip solvers of a plan plus the machinery for Schwarz sweeps.

    Parameters
    ----------
    plan : DecompositionPlan
    spec : TransmissionSpec
    potential : expression, number or None
    outer : {"same", "neumann"}
        Operator on the physical sides ``x = x_l, x_r``.
    runtime : Runtime, optional
        Executor of the worker programs (sequential by default).
    """

    def __init__(self, plan: DecompositionPlan, spec: TransmissionSpec, potential=None,
                 outer: str = "same", runtime: Optional[Runtime] = None,
                 cache: Optional[FactorCache] = None, debug: bool = False):
        self.plan = plan
        self.spec = spec
        self.potential = None if potential is None else parse_potential(potential)
        self.outer = outer
        self.runtime = runtime or Runtime("sequential")
        self.cache = cache if cache is not None else FactorCache()
        self.topology = Topology(plan.N)
        self.counters = Counters()
        self.fems = [assemble_fem(plan, j) for j in range(1, plan.N + 1)]
        self.solvers = [SubdomainSolver(f, spec, plan.dt, self.potential, outer=outer,
                                        cache=self.cache, debug=debug) for f in self.fems]

    @property
    def N(self) -> int:
        return self.plan.N

    @property
    def ny(self) -> int:
        return self.plan.N_y

    def layout(self, n_steps: int) -> InterfaceLayout:
        return InterfaceLayout(self.N, n_steps, self.ny)

    # -- states ------------------------------------------------------------
    def initial_states(self, u0=None, n: int = 0) -> List[SubdomainState]:
        """Strip states from a callable ``u0(x, y)`` (default Gaussian) or from
        per-strip nodal arrays."""
        if u0 is None:
            u0 = default_u0
        states = []
        for j, (f, s) in enumerate(zip(self.fems, self.solvers)):
            vals = u0(f.x, f.y) if callable(u0) else u0[j]
            st = s.initial_state(np.asarray(vals, dtype=np.complex128))
            st.n = n
            states.append(st)
        return states

    def zero_states(self, n: int = 0, batch=()) -> List[SubdomainState]:
        states = []
        for s in self.solvers:
            st = s.zero_state(batch)
            st.n = n
            states.append(st)
        return states

    # -- one sweep ---------------------------------------------------------
    def sweep(self, g, states: Sequence[SubdomainState], n_steps: int, record: bool = False):
        """One Schwarz iteration over a window of ``n_steps`` steps.

        Returns ``(g_new, results)`` with one :class:`WindowResult` per strip.
        ``g`` may be ``None`` (zero fluxes) or carry a trailing batch axis.
        """
        layout = self.layout(n_steps)
        batch = states[0].u.shape[1:]
        timings = [0.0] * self.N

        def program(j):
            inc = None
            if g is not None:
                inc = TraceSeries(layout.get(g, j, "l"), layout.get(g, j, "r"))
            t0 = time.perf_counter()
            res = self.solvers[j - 1].solve_window(states[j - 1], inc, n_steps, record=record)
            timings[j - 1] = time.perf_counter() - t0
            if self.N == 1:
                return {}, res
            incoming = yield Exchange({"l": res.outgoing.l, "r": res.outgoing.r})
            return incoming, res

        t0 = time.perf_counter()
        out = self.runtime.run(self.topology, program)
        wall = time.perf_counter() - t0
        parts = {}
        results = []
        for j, (incoming, res) in enumerate(out, start=1):
            for side in layout.sides(j):
                parts[(j, side)] = incoming[side]
            results.append(res)
        self.counters.sweeps += 1
        busy = sum(timings) if self.runtime.mode == "sequential" else max(timings)
        self.counters.subdomain_time += sum(timings)
        self.counters.communication_time += max(0.0, wall - busy)
        return layout.join(parts, batch), results

    def apply(self, g, n_steps: int, n0: int = 0):
        """Matrix-free ``L g`` for the window starting after step ``n0``."""
        g = np.asarray(g, dtype=np.complex128)
        states = self.zero_states(n0, g.shape[1:])
        return self.sweep(g, states, n_steps)[0]

    def operator(self, n_steps: int, n0: int = 0) -> LinearOperator:
        return LinearOperator(self.layout(n_steps).size, lambda g: self.apply(g, n_steps, n0))

    def rhs(self, states: Sequence[SubdomainState], n_steps: int):
        """``d``: one sweep from the given states with zero incoming fluxes."""
        self.counters.rhs_solves += self.N
        return self.sweep(None, states, n_steps)[0]


def apply_matrix_free(g, decomp: Decomposition, n_steps: int, n0: int = 0):
    return decomp.apply(g, n_steps, n0)


def build_rhs_d(decomp: Decomposition, n_steps: int, u0=None, states=None):
    """Right-hand side from ``u0`` (callable or per-strip arrays) or explicit states."""
    if states is None:
        states = decomp.initial_states(u0)
    return decomp.rhs(states, n_steps)


# ---------------------------------------------------------------------------
# explicit block storage
# ---------------------------------------------------------------------------

def _toeplitz_apply(gen, x):
    """``y_t = sum_{k<=t} gen[k] @ x_{t-k}`` for ``x`` of shape ``(..., n_steps, N_y)``."""
    n_steps = x.shape[-2]
    y = np.zeros(x.shape, np.complex128)
    for k in range(min(n_steps, gen.shape[0])):
        y[..., k:, :] += x[..., : n_steps - k, :] @ gen[k].T
    return y


# windows longer than this use the FFT form of the block convolution
FFT_MIN_STEPS = 8


def _toeplitz_apply_fft(gen_hat, x):
    """Same product through a zero-padded FFT in time; ``gen_hat`` is the
    transformed transpose generator of length ``2 n_steps``."""
    n_steps, ny = x.shape[-2:]
    lead = x.shape[:-2]
    x_hat = np.fft.fft(x.reshape(-1, n_steps, ny), n=2 * n_steps, axis=1)
    y_hat = np.matmul(x_hat.transpose(1, 0, 2), gen_hat).transpose(1, 0, 2)
    return np.fft.ifft(y_hat, axis=1)[:, :n_steps, :].reshape(lead + (n_steps, ny))


def _toeplitz_dense(gen, n_steps):
    ny = gen.shape[1]
    out = np.zeros((n_steps * ny, n_steps * ny), np.complex128)
    for t in range(n_steps):
        for k in range(t + 1):
            s = t - k
            out[t * ny:(t + 1) * ny, s * ny:(s + 1) * ny] = gen[k]
    return out


_ROUTE = {1: ("l", -1, "r"), 2: ("r", -1, "r"), 3: ("l", +1, "l"), 4: ("r", +1, "l")}


class InterfaceMatrix:
    """Explicit ``L`` stored by block column (one column per owning worker).

    ``blocks[(j, kind)]`` is the time generator of ``X^{j,kind}`` with shape
    ``(n_steps, N_y, N_y)``: ``X_{t,s} = gen[t - s]`` for ``s <= t`` and zero
    above the diagonal.  Replicated blocks share one array.
    """

    def __init__(self, layout: InterfaceLayout, blocks: Dict[tuple, np.ndarray]):
        self.layout = layout
        self.blocks = dict(blocks)
        self._hat: Dict[int, np.ndarray] = {}
        for (j, kind), gen in self.blocks.items():
            src, step, dst = _ROUTE[kind]
            if (j, src) not in layout.offsets or (j + step, dst) not in layout.offsets:
                raise DimensionMismatch(f"block X^{{{j},{kind}}} has no place in the layout")
            if gen.shape != (layout.n_steps, layout.ny, layout.ny):
                raise DimensionMismatch(f"block X^{{{j},{kind}}} has shape {gen.shape}")

    @property
    def shape(self):
        return (self.layout.size, self.layout.size)

    @property
    def dim(self) -> int:
        return self.layout.size

    def owner(self, j: int, kind: int) -> int:
        return j

    def block_nnz(self) -> int:
        """Stored nonzeros of one block when expanded: ``(N_T+1) N_T / 2 * N_y^2``."""
        n = self.layout.n_steps
        return (n + 1) * n // 2 * self.layout.ny ** 2

    def matvec(self, g):
        g = np.asarray(g, dtype=np.complex128)
        lay = self.layout
        if g.shape[0] != lay.size:
            raise DimensionMismatch(f"vector has {g.shape[0]} entries, expected {lay.size}")
        single = g.ndim == 1
        G = g[:, None] if single else g
        k = G.shape[1]
        out = np.zeros_like(G)
        # group blocks that share a generator so that one batched product serves all
        groups: Dict[int, list] = {}
        for key, gen in self.blocks.items():
            groups.setdefault(id(gen), []).append(key)
        for keys in groups.values():
            gen = self.blocks[keys[0]]
            xs = []
            for j, kind in keys:
                src = _ROUTE[kind][0]
                xs.append(G[lay.slice(j, src)].reshape(lay.n_steps, lay.ny, k).transpose(2, 0, 1))
            X = np.stack(xs)  # (nb, k, n_steps, ny)
            if lay.n_steps >= FFT_MIN_STEPS:
                Y = _toeplitz_apply_fft(self._transformed(gen), X)
            else:
                Y = _toeplitz_apply(gen, X)
            for (j, kind), y in zip(keys, Y):
                _, step, dst = _ROUTE[kind]
                out[lay.slice(j + step, dst)] += y.transpose(1, 2, 0).reshape(lay.block, k)
        return out[:, 0] if single else out

    __matmul__ = matvec

    def _transformed(self, gen):
        key = id(gen)
        if key not in self._hat:
            self._hat[key] = np.fft.fft(gen.transpose(0, 2, 1), n=2 * gen.shape[0], axis=0)
        return self._hat[key]

    def as_operator(self) -> LinearOperator:
        return LinearOperator(self.dim, self.matvec)

    def block_dense(self, j: int, kind: int) -> np.ndarray:
        return _toeplitz_dense(self.blocks[(j, kind)], self.layout.n_steps)

    def to_dense(self) -> np.ndarray:
        lay = self.layout
        out = np.zeros(self.shape, np.complex128)
        for (j, kind) in self.blocks:
            src, step, dst = _ROUTE[kind]
            out[lay.slice(j + step, dst), lay.slice(j, src)] = self.block_dense(j, kind)
        return out

    def to_sparse(self):
        import scipy.sparse as sp

        return sp.csr_matrix(self.to_dense())

    def truncate(self, n_steps: int) -> "InterfaceMatrix":
        """Operator of the shorter window ``[0, n_steps]`` (causality)."""
        lay = InterfaceLayout(self.layout.N, n_steps, self.layout.ny)
        views = {}
        blocks = {}
        for key, gen in self.blocks.items():
            if id(gen) not in views:
                views[id(gen)] = gen[:n_steps]
            blocks[key] = views[id(gen)]
        return InterfaceMatrix(lay, blocks)


def n_mpi(ny: int, N: int) -> int:
    """Probe solves per worker when ``2 N_y`` probes are split over ``N`` workers."""
    return (2 * ny) // N + 1


def _reference_solver(decomp: Decomposition) -> SubdomainSolver:
    fem = replace(decomp.fems[0], is_left_interface=True, is_right_interface=True)
    return SubdomainSolver(fem, decomp.spec, decomp.plan.dt, decomp.potential,
                           outer="same", cache=decomp.cache)


def build_explicit(decomp: Decomposition, n_steps: Optional[int] = None,
                   chunk: Optional[int] = None) -> InterfaceMatrix:
    """Assemble ``L`` for a constant potential from ``2 N_y`` probe solves.

    Probe ``s < N_y`` injects a unit flux at node ``s`` of ``l`` at the first
    step, probe ``N_y + s`` the same on ``r``; the responses over the window are
    the first block columns of ``X^{j,1..4}``.  Later columns follow by the
    time shift and all strips share the generators.
    """
    pot = decomp.potential
    if pot is not None and not pot.is_constant:
        raise NotConstantPotential(f"explicit assembly needs a constant potential, got {pot.text!r}")
    if decomp.outer != "same":
        raise BadConfig("explicit assembly needs identical strips (outer='same')")
    n_steps = decomp.plan.N_T if n_steps is None else n_steps
    N, ny = decomp.N, decomp.ny
    layout = decomp.layout(n_steps)
    if N == 1:
        decomp.counters.builds += 1
        return InterfaceMatrix(layout, {})
    ref = _reference_solver(decomp)
    n_nodes = ref.fem.n + ref.m * 2 * ny
    if chunk is None:
        chunk = max(1, PROBE_BUDGET // max(1, n_nodes))
    per = n_mpi(ny, N)
    total = 2 * ny
    t0 = time.perf_counter()

    def program(w):
        lo, hi = (w - 1) * per, min(w * per, total)
        cols = []
        for a in range(lo, hi, chunk):
            b = min(hi, a + chunk)
            k = b - a
            inc_l = np.zeros((n_steps, ny, k), np.complex128)
            inc_r = np.zeros((n_steps, ny, k), np.complex128)
            for c, s in enumerate(range(a, b)):
                if s < ny:
                    inc_l[0, s, c] = 1.0
                else:
                    inc_r[0, s - ny, c] = 1.0
            res = ref.solve_window(ref.zero_state((k,)), TraceSeries(inc_l, inc_r), n_steps)
            cols.append((a, b, res.outgoing.l, res.outgoing.r))
        return cols
        yield  # pragma: no cover - makes this a generator

    pieces = decomp.runtime.run(Topology(N), program)
    out_l = np.zeros((n_steps, ny, total), np.complex128)
    out_r = np.zeros((n_steps, ny, total), np.complex128)
    for cols in pieces:
        for a, b, ol, orr in cols:
            out_l[:, :, a:b] = ol
            out_r[:, :, a:b] = orr
    decomp.counters.probe_solves += total
    decomp.counters.builds += 1
    decomp.counters.subdomain_time += time.perf_counter() - t0
    gens = {
        1: out_l[:, :, :ny].copy(),
        2: out_l[:, :, ny:].copy(),
        3: out_r[:, :, :ny].copy(),
        4: out_r[:, :, ny:].copy(),
    }
    blocks = {}
    for j in range(1, N + 1):
        if j > 1:
            blocks[(j, 1)] = gens[1]
        if 1 < j < N:
            blocks[(j, 2)] = gens[2]
            blocks[(j, 3)] = gens[3]
        if j < N:
            blocks[(j, 4)] = gens[4]
    return InterfaceMatrix(layout, blocks)


def probe_dense(apply: Callable, dim: int, chunk: int = 64) -> np.ndarray:
    """Dense matrix of a (batch-capable) linear map by unit-vector probing."""
    out = np.zeros((dim, dim), np.complex128)
    for a in range(0, dim, chunk):
        b = min(dim, a + chunk)
        E = np.zeros((dim, b - a), np.complex128)
        E[np.arange(a, b), np.arange(b - a)] = 1.0
        out[:, a:b] = apply(E)
    return out


def probe_affine(decomp: Decomposition, states: Sequence[SubdomainState], n_steps: int = 1,
                 chunk: int = 64) -> np.ndarray:
    """``L`` seen from the given states: columns ``sweep(e_s) - sweep(0)``."""
    base = decomp.sweep(None, states, n_steps)[0]
    dim = base.shape[0]

    def apply(E):
        k = E.shape[1]
        st = []
        for s in states:
            u = np.repeat(s.u[:, None], k, axis=1)
            phi = None if s.phi is None else np.repeat(s.phi[..., None], k, axis=-1)
            st.append(SubdomainState(u, phi, s.n))
        return decomp.sweep(E, st, n_steps)[0] - base[:, None]

    return probe_dense(apply, dim, chunk)


# ---------------------------------------------------------------------------
# solving and preconditioning
# ---------------------------------------------------------------------------

class Preconditioner:
    """Applies ``P^{-1}`` for ``P = I - L_0`` by an inner GMRES solve."""

    def __init__(self, L0: InterfaceMatrix, tol: float = 1e-12, restart: int = 100,
                 max_iter: int = 500):
        self.L0 = L0
        self.tol = tol
        self.restart = restart
        self.max_iter = max_iter
        self.inner_iterations = 0
        self.applications = 0

    @property
    def dim(self) -> int:
        return self.L0.dim

    def apply_P(self, x):
        return x - self.L0.matvec(x)

    def solve(self, y):
        y = np.asarray(y, dtype=np.complex128)
        P = LinearOperator(self.dim, self.apply_P)
        x, rep = gmres(P, y, tol=self.tol, restart=self.restart, max_iter=self.max_iter)
        if not rep.converged:
            raise InnerSolveFailed(
                f"inner solve stopped at residual {rep.final_residual:.3e} after {rep.iterations} iterations")
        self.inner_iterations += rep.iterations
        self.applications += 1
        return x

    __call__ = solve

    def as_operator(self) -> LinearOperator:
        return LinearOperator(self.dim, self.solve)


def build_preconditioner(plan: DecompositionPlan, spec: TransmissionSpec, n_steps: Optional[int] = None,
                         runtime: Optional[Runtime] = None, **inner) -> Preconditioner:
    """``P = I - L_0`` with ``L_0`` the explicit operator of the free equation."""
    decomp = Decomposition(plan, spec, None, outer="same", runtime=runtime)
    return Preconditioner(build_explicit(decomp, n_steps), **inner)


def solve_interface(L, d, method: str = "gmres", g0=None, tol: float = 1e-10, max_iter: int = 1000,
                    precond=None, restart: int = 200, norm=None):
    """Solve ``(I - L) g = d``; ``L`` is an explicit matrix or a linear operator.

    Without preconditioner every method reports ``||(I - L) g - d|| / ||d||``.
    With ``precond`` (an object applying ``P^{-1}``) Krylov methods are left
    preconditioned and the fixed point becomes the Richardson iteration
    ``g <- g + P^{-1}(d - (I - L) g)``; both then report the preconditioned
    residual.
    """
    L = as_operator(L)
    d = np.asarray(d, dtype=np.complex128)
    if d.shape != (L.dim,):
        raise DimensionMismatch(f"d has shape {d.shape}, operator dim {L.dim}")
    norm = norm or np.linalg.norm
    A = LinearOperator(L.dim, lambda g: g - L.apply(g))
    pre = None if precond is None else as_operator(precond, L.dim)
    if method == "gmres":
        return gmres(A, d, g0, tol=tol, max_iter=max_iter, restart=restart, precond=pre, norm=norm)
    if method == "bicgstab":
        return bicgstab(A, d, g0, tol=tol, max_iter=max_iter, precond=pre, norm=norm)
    if method == "fixed-point":
        if pre is None:
            return fixed_point(L, d, g0, tol=tol, max_iter=max_iter, norm=norm)
        R = LinearOperator(L.dim, lambda g: g - pre.apply(A.apply(g)))
        return fixed_point(R, pre.apply(d), g0, tol=tol, max_iter=max_iter, norm=norm)
    raise BadConfig(f"unknown interface solver {method!r}")


# ---------------------------------------------------------------------------
# spectra and dumps
# ---------------------------------------------------------------------------

def dense_operator(a, cap: int = 4096) -> np.ndarray:
    """Dense form of an array, :class:`InterfaceMatrix` or linear operator."""
    if isinstance(a, InterfaceMatrix):
        if a.dim > cap:
            raise DimensionTooLarge(f"dimension {a.dim} exceeds cap {cap}")
        return a.to_dense()
    if isinstance(a, np.ndarray):
        if a.shape[0] > cap:
            raise DimensionTooLarge(f"dimension {a.shape[0]} exceeds cap {cap}")
        return a.astype(np.complex128)
    op = as_operator(a)
    if op.dim > cap:
        raise DimensionTooLarge(f"dimension {op.dim} exceeds cap {cap}")
    eye = np.eye(op.dim, dtype=np.complex128)
    return np.stack([op.apply(eye[:, k]) for k in range(op.dim)], axis=1)


def spectrum_small(a, cap: int = 4096) -> np.ndarray:
    """All eigenvalues by dense decomposition, sorted by real then imaginary part."""
    A = dense_operator(a, cap)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"matrix must be square, got {A.shape}")
    ev = np.linalg.eigvals(A)
    return ev[np.lexsort((ev.imag, ev.real))]


def write_blocks_csv(path, L: InterfaceMatrix):
    """Rows ``block, row, col, re, im`` of every nonzero block entry."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block", "row", "col", "re", "im"])
        for (j, kind) in sorted(L.blocks):
            B = L.block_dense(j, kind)
            rows, cols = np.nonzero(B)
            for r, c in zip(rows, cols):
                w.writerow([f"X{j},{kind}", r, c, repr(float(B[r, c].real)), repr(float(B[r, c].imag))])


def write_spectrum_csv(path, eigenvalues, label: str = "spectrum"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block", "row", "col", "re", "im"])
        for i, z in enumerate(np.asarray(eigenvalues)):
            w.writerow([label, i, 0, repr(float(z.real)), repr(float(z.imag))])
