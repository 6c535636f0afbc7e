"""Crank-Nicolson time stepping on one strip with Robin or Pade boundary terms.

One step solves for ``v_n = (u_n + u_{n-1}) / 2``::

    Robin:  (A_n + ip M_gamma) v_n = (2i/dt) M u_{n-1} - M_gamma Q^T (l_n; r_n)
    Pade:   the same first row augmented with the auxiliary traces phi_s

with ``A_n = (2i/dt) M - S + M_{W_n}``, then ``u_n = 2 v_n - u_{n-1}``.

Arrays may carry trailing batch axes: ``u`` of shape ``(n, k)`` and fluxes of
shape ``(N_y, k)`` advance ``k`` independent problems with one factorization.
"""
from __future__ import annotations

import hashlib
import struct
import threading
from collections import OrderedDict
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BadConfig, DimensionMismatch
from .mesh import SubdomainFem, assemble_generalized_mass
from .numerics import Factorization, lu_factorize
from .potential import NodalPotential
from .transmission import (
    PadeCoefficients,
    TransmissionSpec,
    assemble_pade_system,
    boundary_operators,
    trace_update,
)

__all__ = [
    "SubdomainState",
    "TraceSeries",
    "WindowResult",
    "FactorCache",
    "SubdomainSolver",
    "cn_step_robin",
    "cn_step_pade",
    "solve_window",
    "gather_global",
    "write_snapshot",
    "read_snapshot",
]


@dataclass
class SubdomainState:
    """``u`` is the nodal ``u_{n}``; ``phi`` the integer-level auxiliary traces
    ``phi_s^{n}`` with shape ``(m, n_trace, ...)`` (``None`` for Robin)."""

    u: np.ndarray
    phi: Optional[np.ndarray] = None
    n: int = 0

    def copy(self) -> "SubdomainState":
        return SubdomainState(self.u.copy(), None if self.phi is None else self.phi.copy(), self.n)


@dataclass
class TraceSeries:
    """Flux traces on the two sides of a strip over a run of time steps.

    ``l``/``r`` have shape ``(n_steps, N_y, ...)``; ``None`` marks a physical side.
    """

    l: Optional[np.ndarray]
    r: Optional[np.ndarray]


@dataclass
class WindowResult:
    state: SubdomainState
    outgoing: TraceSeries
    history: Optional[list] = None


class FactorCache:
    """Thread-safe LRU store of factorizations keyed by the assembled system.

    Strips with identical geometry and potential hash to the same key, so a
    constant potential needs a single factorization for all strips.
    """

    def __init__(self, limit: Optional[int] = None):
        self.limit = limit
        self._store: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.factorizations = 0

    def get(self, key, build: Callable[[], Factorization]) -> Factorization:
        with self._lock:
            if key in self._store:
                self._store.move_to_end(key)
                return self._store[key]
        fac = build()
        with self._lock:
            self.factorizations += 1
            self._store[key] = fac
            self._store.move_to_end(key)
            while self.limit is not None and len(self._store) > self.limit:
                self._store.popitem(last=False)
        return fac

    def clear(self):
        with self._lock:
            self._store.clear()

    def __len__(self):
        return len(self._store)


def _w_provider(potential, fem: SubdomainFem, dt: float):
    if potential is None:
        return (lambda n: None), True
    if isinstance(potential, NodalPotential):
        return potential.W, potential.time_independent
    if callable(potential) and not hasattr(potential, "evaluate"):
        return potential, False
    if isinstance(potential, np.ndarray) or isinstance(potential, (int, float, np.number)):
        W = np.broadcast_to(np.asarray(potential, dtype=float), (fem.n,)).copy()
        return (lambda n: W), True
    nodal = NodalPotential(potential, fem.x, fem.y, dt)
    return nodal.W, nodal.time_independent


class SubdomainSolver:
    """Owns the per-step systems of one strip and marches them in time.

    Parameters
    ----------
    fem : SubdomainFem
    spec : TransmissionSpec
        Used on interfaces and, with ``outer="same"``, on the physical sides.
    dt : float
    potential : PotentialExpr, NodalPotential, array, scalar, callable ``n -> W_n`` or None
    outer : {"same", "neumann"}
        Boundary operator on the physical sides ``x = x_l`` and ``x = x_r``.
    cache : FactorCache, optional
        Shared factorization store; a private unbounded one by default.
    """

    def __init__(self, fem: SubdomainFem, spec: TransmissionSpec, dt: float, potential=None,
                 outer: str = "same", cache: Optional[FactorCache] = None, debug: bool = False):
        if outer not in ("same", "neumann"):
            raise BadConfig(f"outer boundary must be 'same' or 'neumann', got {outer!r}")
        self.fem = fem
        self.spec = spec
        self.dt = dt
        self.outer = outer
        self.debug = debug
        self.cache = cache if cache is not None else FactorCache()
        self._W, self.time_independent = _w_provider(potential, fem, dt)
        sides = []
        if fem.is_left_interface or outer == "same":
            sides.append("l")
        if fem.is_right_interface or outer == "same":
            sides.append("r")
        self.sides = tuple(sides)
        self.interface_sides = tuple(
            s for s, flag in (("l", fem.is_left_interface), ("r", fem.is_right_interface)) if flag
        )
        self.ny = fem.ny
        self.m = spec.n_aux
        self._nodes = {"l": fem.left_nodes, "r": fem.right_nodes}
        self._slices = {s: slice(i * fem.ny, (i + 1) * fem.ny) for i, s in enumerate(self.sides)}
        self._bops0 = boundary_operators(fem, self.sides)
        self.solves = 0

    # -- systems -----------------------------------------------------------
    def W(self, n: int):
        return self._W(n)

    def _key(self, W):
        h = hashlib.sha1()
        h.update(repr((self.fem.nx, self.fem.ny, self.fem.dx, self.fem.dy, self.dt, self.sides,
                       self.spec.kind, self.spec.p, self.spec.m, self.spec.theta)).encode())
        if W is not None:
            h.update(np.ascontiguousarray(W, dtype=float).tobytes())
        return h.hexdigest()

    def system_matrix(self, n: int):
        W = self.W(n)
        fem = self.fem
        if self.spec.kind == "pade":
            return assemble_pade_system(fem, self.spec.coeffs, W, self.dt, self.sides)
        A = (2j / self.dt) * fem.M - fem.S + 1j * self.spec.p * self._bops0.M_gamma
        if W is not None and np.any(W):
            A = A + assemble_generalized_mass(fem, W=W).M_W
        return A.tocsr()

    def _system(self, n: int) -> Factorization:
        W = self.W(n)
        return self.cache.get(self._key(W), lambda: lu_factorize(self.system_matrix(n), debug=self.debug))

    # -- state helpers -----------------------------------------------------
    def initial_state(self, u0, batch: Sequence[int] = ()) -> SubdomainState:
        u0 = np.asarray(u0, dtype=np.complex128)
        if u0.shape[0] != self.fem.n:
            raise DimensionMismatch(f"initial datum has {u0.shape[0]} entries, expected {self.fem.n}")
        phi = None
        if self.m:
            phi = np.zeros((self.m, len(self.sides) * self.ny) + u0.shape[1:], np.complex128)
        return SubdomainState(u0.copy(), phi, 0)

    def zero_state(self, batch: Sequence[int] = ()) -> SubdomainState:
        return self.initial_state(np.zeros((self.fem.n,) + tuple(batch), np.complex128))

    def _flux(self, flux, side, like):
        if flux is None:
            return None
        flux = np.asarray(flux)
        if flux.shape != (self.ny,) + like.shape[1:]:
            raise DimensionMismatch(f"flux on side {side!r} has shape {flux.shape}")
        if side not in self.sides:
            if np.any(flux):
                raise DimensionMismatch(f"side {side!r} has a Neumann boundary and takes no flux")
            return None
        return flux

    # -- one step ----------------------------------------------------------
    def step(self, state: SubdomainState, flux_l=None, flux_r=None):
        """Advance one step.

        Returns ``(v, new_state, out_l, out_r)`` where ``out_l`` is the flux sent
        to the left neighbour (its new ``r``) and ``out_r`` the flux sent right
        (its new ``l``); either is ``None`` on a non-interface side.
        """
        n = state.n + 1
        fac = self._system(n)
        u = state.u
        fem = self.fem
        fl = self._flux(flux_l, "l", u)
        fr = self._flux(flux_r, "r", u)
        rhs_v = (2j / self.dt) * (fem.M @ u)
        m1 = fem.trace_mass
        for side, f in (("l", fl), ("r", fr)):
            if f is not None:
                rhs_v[self._nodes[side]] -= m1 @ f
        if self.m:
            m1s = self._bops0.M1
            aux_rhs = (2j / self.dt) * np.stack([m1s @ state.phi[s] for s in range(self.m)])
            rhs = np.concatenate([rhs_v, aux_rhs.reshape((-1,) + u.shape[1:])], axis=0)
            x = fac.solve(rhs)
            v = x[: fem.n]
            phi_half = x[fem.n:].reshape(state.phi.shape)
            phi_new = 2 * phi_half - state.phi
        else:
            v = fac.solve(rhs_v)
            phi_half = phi_new = None
        self.solves += 1
        new_state = SubdomainState(2 * v - u, phi_new, n)
        out = {}
        incoming = {"l": fl, "r": fr}
        for side in ("l", "r"):
            if side not in self.interface_sides:
                out[side] = None
                continue
            vt = v[self._nodes[side]]
            inc = incoming[side] if incoming[side] is not None else np.zeros_like(vt)
            ph = None if phi_half is None else phi_half[:, self._slices[side]]
            out[side] = trace_update(self.spec, vt, inc, ph)
        return v, new_state, out["l"], out["r"]

    # -- windows -----------------------------------------------------------
    def solve_window(self, state: SubdomainState, incoming: Optional[TraceSeries], n_steps: int,
                     record: bool = False) -> WindowResult:
        """March ``n_steps`` steps from ``state`` with the given incoming fluxes.

        Missing flux arrays are zero.  Outgoing fluxes are computed at every
        step; ``record=True`` keeps ``u_n`` after each step.
        """
        inc_l = None if incoming is None else incoming.l
        inc_r = None if incoming is None else incoming.r
        for arr in (inc_l, inc_r):
            if arr is not None and arr.shape[0] != n_steps:
                raise DimensionMismatch(f"flux series has {arr.shape[0]} steps, expected {n_steps}")
        batch = state.u.shape[1:]
        out_l = np.zeros((n_steps, self.ny) + batch, np.complex128) if "l" in self.interface_sides else None
        out_r = np.zeros((n_steps, self.ny) + batch, np.complex128) if "r" in self.interface_sides else None
        history = [] if record else None
        for k in range(n_steps):
            fl = None if inc_l is None else inc_l[k]
            fr = None if inc_r is None else inc_r[k]
            _, state, ol, orr = self.step(state, fl, fr)
            if out_l is not None:
                out_l[k] = ol
            if out_r is not None:
                out_r[k] = orr
            if record:
                history.append(state.u.copy())
        return WindowResult(state, TraceSeries(out_l, out_r), history)


def cn_step_robin(fem: SubdomainFem, W_n, p: float, u_prev, flux_l, flux_r, dt: float,
                  outer: str = "same"):
    """One Robin step from scratch; returns ``(v_n, u_n)``."""
    solver = SubdomainSolver(fem, TransmissionSpec.robin(p), dt, W_n, outer=outer)
    v, st, _, _ = solver.step(solver.initial_state(u_prev), flux_l, flux_r)
    return v, st.u


def cn_step_pade(fem: SubdomainFem, coeffs: PadeCoefficients, W_n, state: SubdomainState,
                 flux_l, flux_r, dt: float, outer: str = "same"):
    """One Pade step from scratch; returns ``(v_n, u_n, phi_n)``."""
    spec = TransmissionSpec.pade(coeffs.m, coeffs.theta)
    solver = SubdomainSolver(fem, spec, dt, W_n, outer=outer)
    st0 = solver.initial_state(state.u)
    if state.phi is not None:
        st0 = replace(st0, phi=np.array(state.phi, dtype=np.complex128))
    st0.n = state.n
    v, st, _, _ = solver.step(st0, flux_l, flux_r)
    return v, st.u, st.phi


def solve_window(fem: SubdomainFem, spec: TransmissionSpec, potential, u0_j, incoming: TraceSeries,
                 window, dt: float, outer: str = "same"):
    """Solve over ``window = (n_a, n_b)`` (step indices); returns ``(history, outgoing)``."""
    n_a, n_b = window
    solver = SubdomainSolver(fem, spec, dt, potential, outer=outer)
    st = solver.initial_state(u0_j)
    st.n = n_a
    res = solver.solve_window(st, incoming, n_b - n_a, record=True)
    return res.history, res.outgoing


def gather_global(fields: Sequence[np.ndarray], ny: int) -> np.ndarray:
    """Stitch strip fields into one ``(N_x_total, N_y)`` array.

    Shared interface columns are taken from the left strip.
    """
    cols = []
    for j, f in enumerate(fields):
        g = np.asarray(f).reshape(-1, ny)
        cols.append(g if j == 0 else g[1:])
    return np.concatenate(cols, axis=0)


SNAPSHOT_MAGIC = b"SCHRO2D"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<7sBIIddd")


def write_snapshot(path, field: np.ndarray, dx: float, dy: float, t: float):
    """Binary field snapshot: header then row-major little-endian complex pairs."""
    field = np.asarray(field, dtype=np.complex128)
    if field.ndim != 2:
        raise DimensionMismatch("snapshot field must be 2-D (N_x_total, N_y)")
    nx, ny = field.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, nx, ny, dx, dy, t))
        fh.write(np.ascontiguousarray(field).astype("<c16").tobytes())


def read_snapshot(path):
    """Returns ``(field, dx, dy, t)``."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        magic, version, nx, ny, dx, dy, t = _HEADER.unpack(head)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError("not a SCHRO2D snapshot")
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != nx * ny:
        raise ValueError("truncated snapshot")
    return data.reshape(nx, ny).astype(np.complex128), dx, dy, t
