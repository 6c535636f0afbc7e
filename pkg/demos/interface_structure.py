"""Structure of the interface matrix for a static potential.

Builds the interface operator explicitly, shows its lower block-triangular
Toeplitz pattern in time and the spectrum before and after applying the
free-equation preconditioner.

    python3 demos/interface_structure.py
"""
import numpy as np

from dd_schrodinger import Decomposition, DecompositionPlan, TransmissionSpec, build_explicit
from dd_schrodinger.interface import build_preconditioner, probe_dense, spectrum_small


def main():
    plan = DecompositionPlan(-3.0, 3.0, -2.0, 2.0, 3, 1 / 16, 1 / 4, 0.04, 0.01)
    spec = TransmissionSpec.pade(5)
    n = plan.N_T

    dec = Decomposition(plan, spec, 1.0)
    L = build_explicit(dec)
    print(f"interface unknowns {L.dim}, stored generator entries per block {L.block_nnz()}")
    gen = L.blocks[(2, 1)]
    for t in range(n):
        print(f"  |X^(2,1)_t| max = {np.abs(gen[t]).max():.3e}")

    harm = Decomposition(plan, spec, "x^2+y^2")
    dim = harm.layout(1).size
    A = np.eye(dim) - probe_dense(lambda E: harm.apply(E, 1), dim)
    P = build_preconditioner(plan, spec, 1)
    PA = np.linalg.solve(np.eye(dim) - P.L0.to_dense(), A)
    for name, M in (("I - L", A), ("P^-1 (I - L)", PA)):
        ev = spectrum_small(M)
        print(f"{name:13s} eigenvalues: |lambda - 1| max {np.abs(ev - 1).max():.3f}, "
              f"min |lambda| {np.abs(ev).min():.3f}")


if __name__ == "__main__":
    main()
