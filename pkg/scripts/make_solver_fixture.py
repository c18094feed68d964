"""Freeze the reference optimum for the small-instance solver test.

Builds the deterministic F=6, N=3 instance used by
tests/test_solver.py::test_matches_convex_reference and solves it with an
independent convex solver (cvxpy/SCS) at high accuracy.  Run it once and
paste the printed optimum into the test; cvxpy is only needed here, not by
the package or its test suite.

Usage: python3 scripts/make_solver_fixture.py
"""

import cvxpy as cp
import numpy as np

from nrsfm_uq.model import RotationStack, TrackMatrix
from nrsfm_uq.solver import SolverConfig, solve

F, N, MU, SEED = 6, 3, 0.1, 1234


def reference_instance():
    rng = np.random.default_rng(SEED)
    blocks = np.empty((F, 2, 3))
    for f in range(F):
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        blocks[f] = q[:2]
    w = 0.5 * rng.standard_normal((2 * F, N))
    return TrackMatrix(w), RotationStack(blocks)


def main():
    w, rot = reference_instance()
    s_sharp = cp.Variable((3 * N, F))
    rows = []
    for f in range(F):
        frame = cp.reshape(s_sharp[:, f], (3, N), order="C")
        rows.append(rot.blocks[f] @ frame)
    residual = w.data - cp.vstack(rows)
    objective = MU * cp.normNuc(s_sharp) + 0.5 * cp.sum_squares(residual)
    problem = cp.Problem(cp.Minimize(objective))
    problem.solve(solver=cp.SCS, eps=1e-10, max_iters=200000)
    print(f"cvxpy optimum ({problem.status}): {problem.value:.12f}")

    ours = solve(w, rot, SolverConfig(mu=MU, max_iters=50000, rel_tol=1e-12))
    print(f"proximal-gradient optimum:        {ours.objective_trace[-1]:.12f}")
    print(f"relative gap: {abs(ours.objective_trace[-1] - problem.value) / problem.value:.3e}")


if __name__ == "__main__":
    main()
