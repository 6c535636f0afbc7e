import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dd_schrodinger.errors import BadConfig, DimensionMismatch
from dd_schrodinger.mesh import DecompositionPlan, assemble_fem, assemble_generalized_mass
from dd_schrodinger.subdomain import (
    FactorCache,
    SubdomainSolver,
    SubdomainState,
    TraceSeries,
    cn_step_pade,
    cn_step_robin,
    gather_global,
    read_snapshot,
    solve_window,
    write_snapshot,
)
from dd_schrodinger.transmission import TransmissionSpec, pade_coefficients

from conftest import small_plan


def m_norm(fem, u):
    return np.sqrt(np.vdot(u, fem.M @ u).real)


def gaussian(fem, x0=0.0):
    return np.exp(-(fem.x - x0) ** 2 - fem.y ** 2 - 0.5j * fem.x)


def test_zero_data_stays_zero():
    plan = small_plan(N=2)
    fem = assemble_fem(plan, 1)
    v, u = cn_step_robin(fem, None, 15.0, np.zeros(fem.n), np.zeros(fem.ny), np.zeros(fem.ny), plan.dt)
    assert not np.any(v) and not np.any(u)
    st0 = SubdomainState(np.zeros(fem.n, complex), np.zeros((2, 2 * fem.ny), complex), 0)
    v, u, phi = cn_step_pade(fem, pade_coefficients(2), None, st0, np.zeros(fem.ny), np.zeros(fem.ny), plan.dt)
    assert not np.any(v) and not np.any(u) and not np.any(phi)


def test_robin_step_dense_oracle():
    plan = DecompositionPlan(0.0, 1.0, 0.0, 1.0, 2, 0.25, 0.5, 0.01, 0.01)
    fem = assemble_fem(plan, 1)  # 3 x 3 nodes, right side is an interface
    assert fem.n == 9
    dt, p = plan.dt, 4.0
    W = 1.0 + fem.x
    u_prev = np.arange(9) * (1 + 0.5j)
    fr = np.array([1.0, -2j, 0.5])
    v, u = cn_step_robin(fem, W, p, u_prev, None, fr, dt)
    A = ((2j / dt) * fem.M - fem.S + assemble_generalized_mass(fem, W=W).M_W + 1j * p * fem.M_gamma).toarray()
    rhs = (2j / dt) * (fem.M @ u_prev) - fem.M_gamma.toarray() @ (fem.Q_r.T @ fr)
    v_ref = np.linalg.solve(A, rhs)
    np.testing.assert_allclose(v, v_ref, rtol=1e-12)
    np.testing.assert_allclose(u, 2 * v_ref - u_prev, rtol=1e-12)
    assert np.linalg.norm(A @ v - rhs) <= 1e-10 * np.linalg.norm(rhs)


def test_neumann_conserves_mass_norm():
    plan = small_plan(N=1)
    fem = assemble_fem(plan, 1)
    solver = SubdomainSolver(fem, TransmissionSpec.robin(0.0), plan.dt, "x^2+y^2", outer="neumann")
    st = solver.initial_state(gaussian(fem))
    n0 = m_norm(fem, st.u)
    for _ in range(10):
        _, st, _, _ = solver.step(st)
        assert abs(m_norm(fem, st.u) - n0) <= 1e-12 * n0


@pytest.mark.parametrize("spec", [TransmissionSpec.robin(15.0), TransmissionSpec.pade(5)])
def test_absorbing_outer_boundary_dissipates(spec):
    plan = DecompositionPlan(-2.0, 2.0, -1.0, 1.0, 1, 0.125, 0.25, 0.2, 0.01)
    fem = assemble_fem(plan, 1)
    solver = SubdomainSolver(fem, spec, plan.dt, None, outer="same")
    st = solver.initial_state(np.exp(-4 * (fem.x - 1.0) ** 2 - fem.y ** 2 + 5j * fem.x))
    norms = [m_norm(fem, st.u)]
    for _ in range(20):
        _, st, _, _ = solver.step(st)
        norms.append(m_norm(fem, st.u))
    assert all(b <= a + 1e-12 * norms[0] for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 0.99 * norms[0]


def test_window_without_interfaces_matches_stepping():
    plan = small_plan(N=1)
    fem = assemble_fem(plan, 1)
    spec = TransmissionSpec.pade(3)
    hist, out = solve_window(fem, spec, "x^2", gaussian(fem), TraceSeries(None, None), (0, 4), plan.dt)
    assert out.l is None and out.r is None
    solver = SubdomainSolver(fem, spec, plan.dt, "x^2")
    st = solver.initial_state(gaussian(fem))
    for k in range(4):
        _, st, _, _ = solver.step(st)
        np.testing.assert_array_equal(hist[k], st.u)


def test_window_superposition(rng):
    plan = small_plan(N=3, half_x=1.5)
    fem = assemble_fem(plan, 2)
    for spec in (TransmissionSpec.robin(10.0), TransmissionSpec.pade(3)):
        solver = SubdomainSolver(fem, spec, plan.dt, 1.0)
        n = 3

        def run(u0, fl, fr):
            return solver.solve_window(solver.initial_state(u0), TraceSeries(fl, fr), n)

        def draw(shape):
            return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

        a = (draw(fem.n), draw((n, fem.ny)), draw((n, fem.ny)))
        b = (draw(fem.n), draw((n, fem.ny)), draw((n, fem.ny)))
        ra, rb = run(*a), run(*b)
        rs = run(*(x + 2 * y for x, y in zip(a, b)))
        for side in ("l", "r"):
            lhs = getattr(rs.outgoing, side)
            rhs = getattr(ra.outgoing, side) + 2 * getattr(rb.outgoing, side)
            assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(lhs).max()
        # zero datum and zero fluxes isolate a zero response
        r0 = run(np.zeros(fem.n, complex), np.zeros((n, fem.ny), complex), np.zeros((n, fem.ny), complex))
        assert not np.any(r0.outgoing.l) and not np.any(r0.outgoing.r)


def test_batched_window_matches_columns(rng):
    plan = small_plan(N=3, half_x=1.5)
    fem = assemble_fem(plan, 2)
    solver = SubdomainSolver(fem, TransmissionSpec.pade(2), plan.dt, None)
    fl = rng.standard_normal((2, fem.ny, 3)) + 0j
    res = solver.solve_window(solver.zero_state((3,)), TraceSeries(fl, None), 2)
    for k in range(3):
        one = solver.solve_window(solver.zero_state(), TraceSeries(fl[..., k], None), 2)
        np.testing.assert_allclose(res.outgoing.r[..., k], one.outgoing.r, rtol=1e-13, atol=1e-15)


def test_factorization_reuse_is_exact():
    plan = small_plan(N=2)
    fem = assemble_fem(plan, 1)
    cache = FactorCache()
    solver = SubdomainSolver(fem, TransmissionSpec.robin(3.0), plan.dt, "x^2+y^2", cache=cache)
    st = solver.initial_state(gaussian(fem))
    v1, _, _, _ = solver.step(st)
    v2, _, _, _ = solver.step(st)
    np.testing.assert_array_equal(v1, v2)
    assert cache.factorizations == 1
    assert (solver.system_matrix(1) != solver.system_matrix(7)).nnz == 0


def test_time_dependent_potential_refactors():
    plan = small_plan(N=1)
    fem = assemble_fem(plan, 1)
    cache = FactorCache(limit=2)
    solver = SubdomainSolver(fem, TransmissionSpec.robin(3.0), plan.dt, "cos(t)*x", cache=cache)
    st = solver.initial_state(gaussian(fem))
    for _ in range(3):
        _, st, _, _ = solver.step(st)
    assert cache.factorizations == 3 and len(cache) == 2


def test_flux_checks():
    plan = small_plan(N=2)
    fem = assemble_fem(plan, 1)
    solver = SubdomainSolver(fem, TransmissionSpec.robin(3.0), plan.dt, None, outer="neumann")
    st = solver.zero_state()
    with pytest.raises(DimensionMismatch):
        solver.step(st, None, np.zeros(fem.ny + 1))
    with pytest.raises(DimensionMismatch):
        solver.step(st, np.ones(fem.ny), None)
    with pytest.raises(DimensionMismatch):
        solver.solve_window(st, TraceSeries(None, np.zeros((3, fem.ny))), 2)
    with pytest.raises(BadConfig):
        SubdomainSolver(fem, TransmissionSpec.robin(3.0), plan.dt, outer="dirichlet")


def test_gather_global_strips_duplicates():
    plan = small_plan(N=2)
    f1, f2 = assemble_fem(plan, 1), assemble_fem(plan, 2)
    g = gather_global([f1.x, f2.x], plan.N_y)
    assert g.shape == ((plan.N_x - 1) * 2 + 1, plan.N_y)
    assert np.all(np.diff(g[:, 0]) > 0)


def test_snapshot_round_trip(tmp_path, rng):
    field = rng.standard_normal((7, 5)) + 1j * rng.standard_normal((7, 5))
    path = tmp_path / "u.bin"
    write_snapshot(path, field, 0.25, 0.125, 0.37)
    got, dx, dy, t = read_snapshot(path)
    np.testing.assert_array_equal(got, field)
    assert (dx, dy, t) == (0.25, 0.125, 0.37)
    raw = path.read_bytes()
    assert raw.startswith(b"SCHRO2D")
    assert len(raw) == 7 + 1 + 4 + 4 + 24 + 7 * 5 * 16


@pytest.mark.filterwarnings("ignore:Robin parameter")
@settings(max_examples=15, deadline=None)
@given(p=st.floats(-20, 40), seed=st.integers(0, 2**31 - 1))
def test_step_residual_property(p, seed):
    plan = DecompositionPlan(0.0, 1.0, 0.0, 1.0, 3, 1 / 6, 0.25, 0.01, 0.01)
    fem = assemble_fem(plan, 2)
    r = np.random.default_rng(seed)
    u = r.standard_normal(fem.n) + 1j * r.standard_normal(fem.n)
    fl = r.standard_normal(fem.ny) + 0j
    solver = SubdomainSolver(fem, TransmissionSpec("robin", p=p), plan.dt, None, debug=True)
    v, st, _, _ = solver.step(solver.initial_state(u), fl, None)
    A = solver.system_matrix(1)
    rhs = (2j / plan.dt) * (fem.M @ u) - fem.M_gamma @ (fem.Q_l.T @ fl)
    assert np.linalg.norm(A @ v - rhs) <= 1e-10 * np.linalg.norm(rhs)
    np.testing.assert_allclose(st.u, 2 * v - u)
