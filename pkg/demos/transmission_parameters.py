"""Effect of the transmission parameter on interface convergence.

One time step of the free equation on 16 strips: Robin over a range of p
and Pade over a range of orders m, each solved with GMRES from zero and
with the fixed point iteration from a random start.

    python3 demos/transmission_parameters.py
"""
import numpy as np

from dd_schrodinger import Decomposition, DecompositionPlan, TransmissionSpec, build_explicit, solve_interface


def counts(plan, spec):
    dec = Decomposition(plan, spec, 0.0)
    L = build_explicit(dec, 1)
    d = dec.rhs(dec.initial_states(), 1)
    rng = np.random.default_rng(0)
    g0 = rng.random(d.size) + 1j * rng.random(d.size)
    krylov = solve_interface(L, d, "gmres")[1].iterations
    fixed = solve_interface(L, d, "fixed-point", g0=g0, max_iter=5000)[1].iterations
    return krylov, fixed


def main():
    plan = DecompositionPlan(-16.0, 16.0, -8.0, 8.0, 16, 1 / 64, 1 / 8, 0.01, 0.01)
    print(f"{'condition':28s} {'GMRES/zero':>10s} {'FP/random':>10s}")
    specs = [TransmissionSpec.robin(p) for p in (5.0, 15.0, 26.0, 45.0)]
    specs += [TransmissionSpec.pade(m) for m in (2, 3, 5, 8)]
    for spec in specs:
        k, f = counts(plan, spec)
        print(f"{spec.describe():28s} {k:10d} {f:10d}")


if __name__ == "__main__":
    main()
