"""Drivers: Schwarz waveform relaxation (SWR, whole time window) and domain
decomposition in space (DDS, one step at a time), each in a classical
matrix-free form, a form with the interface operator assembled once, and a
preconditioned form with ``P = I - L_0``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from .errors import BadConfig, NotConstantPotential
from .interface import (
    Decomposition,
    InterfaceMatrix,
    Preconditioner,
    build_explicit,
    default_u0,
    solve_interface,
)
from .mesh import DecompositionPlan
from .numerics import SolveReport
from .potential import PotentialExpr, parse_potential
from .runtime import Runtime
from .subdomain import FactorCache, gather_global
from .transmission import TransmissionSpec

__all__ = [
    "METHODS",
    "SOLVERS",
    "RunConfig",
    "RunReport",
    "run",
    "run_swr_classical",
    "run_swr_new",
    "run_dds_classical",
    "run_dds_new",
    "run_preconditioned",
    "run_monodomain",
    "initial_vector",
]

METHODS = ("swr-classical", "swr-new", "dds-classical", "dds-new")
SOLVERS = ("fixed-point", "gmres", "bicgstab")
TIMING_KEYS = ("assembly", "build", "interface_solve", "subdomain_solve", "communication", "total")


@dataclass
class RunConfig:
    """Everything needed to reproduce a run.

    ``steps`` limits how many DDS steps are taken (default: all ``N_T``);
    SWR always covers the whole window ``(0, T)``.
    """

    plan: DecompositionPlan
    spec: TransmissionSpec
    potential: object = 0.0
    method: str = "dds-new"
    preconditioned: bool = False
    solver: str = "gmres"
    init: str = "zero"
    seed: int = 0
    tol: float = 1e-10
    max_iter: int = 1000
    restart: int = 200
    steps: Optional[int] = None
    outer: str = "same"
    runtime: str = "sequential"
    inner_tol: float = 1e-12
    u0: Optional[Callable] = None

    def __post_init__(self):
        self.potential = parse_potential(self.potential)
        self.validate()

    def validate(self):
        if self.method not in METHODS:
            raise BadConfig(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.solver not in SOLVERS:
            raise BadConfig(f"unknown solver {self.solver!r}; choose from {', '.join(SOLVERS)}")
        if self.init not in ("zero", "random"):
            raise BadConfig(f"init must be 'zero' or 'random', got {self.init!r}")
        if not self.tol > 0:
            raise BadConfig("tolerance must be positive")
        if self.max_iter < 0 or self.restart < 1:
            raise BadConfig("max_iter must be >= 0 and restart >= 1")
        if self.steps is not None and not 1 <= self.steps <= self.plan.N_T:
            raise BadConfig(f"steps must lie in 1..{self.plan.N_T}")
        if self.outer not in ("same", "neumann"):
            raise BadConfig(f"outer must be 'same' or 'neumann', got {self.outer!r}")
        if self.preconditioned and self.outer != "same":
            raise BadConfig("the preconditioner needs identical strips (outer='same')")
        if self.method.endswith("-new") and not self.preconditioned and not self.potential.is_constant:
            raise NotConstantPotential(
                f"{self.method} needs a constant potential, got {self.potential.text!r} "
                "(use the preconditioned variant)")

    @property
    def n_steps(self) -> int:
        return self.plan.N_T if self.steps is None else self.steps

    def echo(self) -> Dict[str, object]:
        """Flat record of every setting, defaults included."""
        p = self.plan
        out = {k: getattr(p, k) for k in ("x_l", "x_r", "y_b", "y_u", "N", "dx", "dy", "T", "dt")}
        out.update(N_x=p.N_x, N_y=p.N_y, N_T=p.N_T)
        out.update(tc=self.spec.kind, p=self.spec.p, m=self.spec.m, theta=self.spec.theta)
        out.update(potential=self.potential.text, method=self.method, preconditioned=self.preconditioned,
                   solver=self.solver, init=self.init, seed=self.seed, tol=self.tol,
                   max_iter=self.max_iter, restart=self.restart, steps=self.n_steps, outer=self.outer,
                   runtime=self.runtime, inner_tol=self.inner_tol,
                   u0="exp(-x^2-y^2-0.5ix)" if self.u0 is None else getattr(self.u0, "__name__", "custom"))
        return out


@dataclass
class RunReport:
    config: RunConfig
    method: str
    solve_reports: List[SolveReport] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=lambda: {k: 0.0 for k in TIMING_KEYS})
    counters: Dict[str, int] = field(default_factory=dict)
    fields: List[np.ndarray] = field(default_factory=list)
    t_final: float = 0.0
    g: Optional[np.ndarray] = None
    preconditioner: Optional[Preconditioner] = None

    @property
    def iterations(self) -> List[int]:
        return [r.iterations for r in self.solve_reports]

    @property
    def first_step_iterations(self) -> int:
        return self.solve_reports[0].iterations if self.solve_reports else 0

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.solve_reports)

    @property
    def histories(self) -> List[list]:
        return [list(r.residual_history) for r in self.solve_reports]

    def global_field(self) -> np.ndarray:
        return gather_global(self.fields, self.config.plan.N_y)


def initial_vector(cfg: RunConfig, size: int) -> Optional[np.ndarray]:
    """Zero (``None``) or seeded uniform ``[0,1) + i[0,1)`` entries."""
    if cfg.init == "zero":
        return None
    rng = np.random.default_rng(cfg.seed)
    return rng.random(size) + 1j * rng.random(size)


def _decomposition(cfg: RunConfig, plan: Optional[DecompositionPlan] = None):
    plan = plan or cfg.plan
    limit = None if cfg.potential.is_time_independent else 2 * plan.N
    return Decomposition(plan, cfg.spec, cfg.potential, outer=cfg.outer,
                         runtime=Runtime(cfg.runtime), cache=FactorCache(limit))


def _finish(report: RunReport, dec: Decomposition, t_start: float, states, extra_time: float = 0.0):
    c = dec.counters
    report.timings["subdomain_solve"] += c.subdomain_time
    report.timings["communication"] += c.communication_time
    report.timings["total"] = time.perf_counter() - t_start
    report.counters = {
        "sweeps": c.sweeps,
        "probe_solves": c.probe_solves,
        "rhs_solves": c.rhs_solves,
        "builds": c.builds,
        "factorizations": dec.cache.factorizations,
        "iterations": sum(report.iterations),
    }
    report.fields = [s.u for s in states]
    report.t_final = states[0].n * dec.plan.dt
    return report


def _solve(cfg, L, d, g0, layout, report, precond=None):
    t0 = time.perf_counter()
    g, rep = solve_interface(L, d, cfg.solver, g0=g0, tol=cfg.tol, max_iter=cfg.max_iter,
                             precond=precond, restart=cfg.restart, norm=layout.norm)
    report.timings["interface_solve"] += time.perf_counter() - t0
    report.solve_reports.append(rep)
    return g


def _swr(cfg: RunConfig, explicit: bool, precond: Optional[Preconditioner] = None,
         name: str = "swr-classical") -> RunReport:
    t_start = time.perf_counter()
    report = RunReport(cfg, name)
    t0 = time.perf_counter()
    dec = _decomposition(cfg)
    report.timings["assembly"] = time.perf_counter() - t0
    n_steps = cfg.plan.N_T
    layout = dec.layout(n_steps)
    states = dec.initial_states(cfg.u0)
    if cfg.plan.N == 1:
        _, res = dec.sweep(None, states, n_steps)
        return _finish(report, dec, t_start, [r.state for r in res])
    if explicit:
        t0 = time.perf_counter()
        L = build_explicit(dec, n_steps)
        report.timings["build"] = time.perf_counter() - t0
    else:
        L = dec.operator(n_steps)
    d = dec.rhs(states, n_steps)
    g = _solve(cfg, L, d, initial_vector(cfg, layout.size), layout, report, precond)
    _, res = dec.sweep(g, states, n_steps)
    report.g = g
    report.preconditioner = precond
    return _finish(report, dec, t_start, [r.state for r in res])


def _dds(cfg: RunConfig, explicit: bool, precond: Optional[Preconditioner] = None,
         name: str = "dds-classical") -> RunReport:
    t_start = time.perf_counter()
    report = RunReport(cfg, name)
    t0 = time.perf_counter()
    dec = _decomposition(cfg)
    report.timings["assembly"] = time.perf_counter() - t0
    layout = dec.layout(1)
    states = dec.initial_states(cfg.u0)
    L: object = None
    if explicit and cfg.plan.N > 1:
        t0 = time.perf_counter()
        L = build_explicit(dec, 1)
        report.timings["build"] = time.perf_counter() - t0
    g = initial_vector(cfg, layout.size)
    for n in range(1, cfg.n_steps + 1):
        if cfg.plan.N == 1:
            _, res = dec.sweep(None, states, 1)
            states = [r.state for r in res]
            continue
        d = dec.rhs(states, 1)
        Ln = L if L is not None else dec.operator(1, n0=n - 1)
        g = _solve(cfg, Ln, d, g, layout, report, precond)
        _, res = dec.sweep(g, states, 1)
        states = [r.state for r in res]
    report.g = g
    report.preconditioner = precond
    return _finish(report, dec, t_start, states)


def run_swr_classical(cfg: RunConfig) -> RunReport:
    return _swr(cfg, explicit=False, name="swr-classical")


def run_swr_new(cfg: RunConfig) -> RunReport:
    if not cfg.potential.is_constant:
        raise NotConstantPotential(f"swr-new needs a constant potential, got {cfg.potential.text!r}")
    return _swr(cfg, explicit=True, name="swr-new")


def run_dds_classical(cfg: RunConfig) -> RunReport:
    return _dds(cfg, explicit=False, name="dds-classical")


def run_dds_new(cfg: RunConfig) -> RunReport:
    if not cfg.potential.is_constant:
        raise NotConstantPotential(f"dds-new needs a constant potential, got {cfg.potential.text!r}")
    return _dds(cfg, explicit=True, name="dds-new")


def run_preconditioned(cfg: RunConfig) -> RunReport:
    """Left-preconditioned run with ``P = I - L_0`` built from the free equation.

    The interface operator of the actual potential is applied matrix-free
    unless the potential is constant and a ``*-new`` method was requested.
    """
    if cfg.outer != "same":
        raise BadConfig("the preconditioner needs identical strips (outer='same')")
    swr = cfg.method.startswith("swr")
    n_steps = cfg.plan.N_T if swr else 1
    t0 = time.perf_counter()
    free = Decomposition(cfg.plan, cfg.spec, None, outer="same", runtime=Runtime(cfg.runtime))
    precond = None
    if cfg.plan.N > 1:
        precond = Preconditioner(build_explicit(free, n_steps), tol=cfg.inner_tol)
    build_time = time.perf_counter() - t0
    explicit = cfg.method.endswith("-new") and cfg.potential.is_constant
    name = cfg.method + "+pc"
    report = (_swr if swr else _dds)(cfg, explicit=explicit, precond=precond, name=name)
    report.timings["build"] += build_time
    report.counters["probe_solves"] += free.counters.probe_solves
    report.counters["builds"] += free.counters.builds
    report.timings["total"] += build_time
    return report


def run_monodomain(cfg: RunConfig, steps: Optional[int] = None) -> np.ndarray:
    """Reference solve on the unsplit domain; returns the field after ``steps`` steps
    as an ``(N_x_total, N_y)`` array."""
    plan = cfg.plan.monodomain()
    dec = _decomposition(cfg, plan)
    states = dec.initial_states(cfg.u0)
    steps = cfg.n_steps if steps is None else steps
    _, res = dec.sweep(None, states, steps)
    return res[0].state.u.reshape(-1, plan.N_y)


def run(cfg: RunConfig) -> RunReport:
    if cfg.preconditioned:
        return run_preconditioned(cfg)
    return {
        "swr-classical": run_swr_classical,
        "swr-new": run_swr_new,
        "dds-classical": run_dds_classical,
        "dds-new": run_dds_new,
    }[cfg.method](cfg)
