"""Second-order cone program container and a deterministic solve().

A program is: minimize c^T x subject to ||A_i x + b_i|| <= f_i^T x + d_i
for each cone i, plus optional per-variable lower bounds. The numerical
work is delegated to the Clarabel interior-point solver; this module owns
the data model, status mapping, and the fallback paths (one rescaled
retry on numerical failure, then a feasibility phase that minimizes the
worst cone violation to distinguish infeasibility from ill-conditioning).
"""

import time
from dataclasses import dataclass, field

import clarabel
import numpy as np
from scipy import sparse

DEFAULT_TOL = 1e-8

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical_failure"

_STATUS_MAP = {
    "Solved": OPTIMAL,
    "AlmostSolved": OPTIMAL,
    "PrimalInfeasible": INFEASIBLE,
    "AlmostPrimalInfeasible": INFEASIBLE,
    "DualInfeasible": UNBOUNDED,
    "AlmostDualInfeasible": UNBOUNDED,
}


@dataclass(frozen=True)
class SocCone:
    """One constraint ||A x + b|| <= f^T x + d."""

    A: sparse.csr_matrix
    b: np.ndarray
    f: np.ndarray
    d: float

    def violation(self, x):
        return float(np.linalg.norm(self.A @ x + self.b)
                     - (self.f @ x + self.d))


@dataclass(frozen=True)
class SocProgram:
    """Immutable SOC program; shared freely across threads."""

    n_vars: int
    objective: np.ndarray
    cones: tuple                    # of SocCone
    lower_bounds: np.ndarray        # -inf entries mean free
    var_names: tuple = None

    def __post_init__(self):
        if self.n_vars < 1:
            raise ValueError("program needs at least one variable")
        if not np.all(np.isfinite(self.objective)):
            raise ValueError("objective must be finite")
        for cone in self.cones:
            if cone.A.shape[1] != self.n_vars:
                raise ValueError("cone dimension mismatch")

    def max_violation(self, x):
        worst = 0.0
        for cone in self.cones:
            worst = max(worst, cone.violation(x))
        lb = self.lower_bounds
        finite = np.isfinite(lb)
        if np.any(finite):
            worst = max(worst, float(np.max(lb[finite] - x[finite], initial=0.0)))
        return worst


@dataclass
class SolveResult:
    status: str
    x: np.ndarray = None
    objective: float = None
    iterations: int = 0
    wall_time: float = 0.0
    note: str = ""


def _assemble(program, scale=None):
    """Stack cones into Clarabel's A x + s = b, s in K form."""
    n = program.n_vars
    blocks = []
    rhs = []
    cones = []

    lb = program.lower_bounds
    bounded = np.flatnonzero(np.isfinite(lb))
    if bounded.size:
        sel = sparse.csr_matrix(
            (-np.ones(bounded.size), (np.arange(bounded.size), bounded)),
            shape=(bounded.size, n))
        blocks.append(sel)
        rhs.append(-lb[bounded])
        cones.append(clarabel.NonnegativeConeT(bounded.size))

    for i, cone in enumerate(program.cones):
        s = 1.0 if scale is None else scale[i]
        top = sparse.csr_matrix(-cone.f[None, :] * s)
        blocks.append(sparse.vstack([top, -cone.A * s], format="csr"))
        rhs.append(np.concatenate(([cone.d * s], cone.b * s)))
        cones.append(clarabel.SecondOrderConeT(cone.A.shape[0] + 1))

    A = sparse.vstack(blocks, format="csc")
    b = np.concatenate(rhs)
    return A, b, cones


def _run_clarabel(objective, A, b, cones, tol, max_iter):
    n = len(objective)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_rel = tol
    settings.tol_gap_abs = tol
    settings.tol_feas = tol
    settings.max_iter = max_iter
    # qdldl factorizes these KKT systems several times faster than faer here
    settings.direct_solve_method = "qdldl"
    P = sparse.csc_matrix((n, n))
    solver = clarabel.DefaultSolver(P, objective, A, b, cones, settings)
    return solver.solve()


def solve(program, tol=DEFAULT_TOL, max_iter=200):
    """Solve the program; deterministic for identical inputs."""
    t0 = time.perf_counter()
    A, b, cones = _assemble(program)
    sol = _run_clarabel(program.objective, A, b, cones, tol, max_iter)
    status = _STATUS_MAP.get(str(sol.status), NUMERICAL_FAILURE)
    note = ""

    if status == NUMERICAL_FAILURE:
        # one retry with every cone scaled by its max row norm
        scale = np.array([
            1.0 / max(1.0, _max_row_norm(c)) for c in program.cones])
        A2, b2, cones2 = _assemble(program, scale=scale)
        sol2 = _run_clarabel(program.objective, A2, b2, cones2, tol, max_iter)
        status2 = _STATUS_MAP.get(str(sol2.status), NUMERICAL_FAILURE)
        if status2 != NUMERICAL_FAILURE:
            sol, status = sol2, status2
            note = "rescaled retry"
        else:
            # feasibility phase: does any point nearly satisfy the cones?
            violation = _min_violation(program, tol, max_iter)
            if violation is not None and violation > 1e-6:
                status = INFEASIBLE
                note = f"feasibility phase, min violation {violation:.3e}"

    wall = time.perf_counter() - t0
    if status == OPTIMAL:
        return SolveResult(status=OPTIMAL, x=np.asarray(sol.x),
                           objective=float(sol.obj_val),
                           iterations=int(sol.iterations),
                           wall_time=wall, note=note)
    return SolveResult(status=status,
                       iterations=int(getattr(sol, "iterations", 0)),
                       wall_time=wall, note=note)


def _max_row_norm(cone):
    norms = sparse.linalg.norm(cone.A, axis=1) if cone.A.nnz else np.zeros(1)
    return float(max(np.max(norms, initial=0.0), np.linalg.norm(cone.f)))


def _min_violation(program, tol, max_iter):
    """Minimize t s.t. ||A_i x + b_i|| <= f_i^T x + d_i + t over all cones."""
    n = program.n_vars
    cones = []
    for cone in program.cones:
        f = np.concatenate([cone.f, [1.0]])
        A = sparse.hstack(
            [cone.A, sparse.csr_matrix((cone.A.shape[0], 1))], format="csr")
        cones.append(SocCone(A=A, b=cone.b, f=f, d=cone.d))
    phase = SocProgram(
        n_vars=n + 1,
        objective=np.concatenate([np.zeros(n), [1.0]]),
        cones=tuple(cones),
        lower_bounds=np.concatenate([program.lower_bounds, [0.0]]))
    A, b, ks = _assemble(phase)
    sol = _run_clarabel(phase.objective, A, b, ks, tol, max_iter)
    if _STATUS_MAP.get(str(sol.status), NUMERICAL_FAILURE) != OPTIMAL:
        return None
    return float(sol.x[-1])


def dump_program(program):
    """Plain-text rendering for cross-solver checks.

    Format: one `var` line per variable (name and lower bound), one
    `min` line with the objective coefficients, then per cone a `cone`
    header followed by `row` lines (A_i | b_i) and an `rhs` line
    (f_i | d_i), all in full precision.
    """
    names = program.var_names or tuple(
        f"x{i}" for i in range(program.n_vars))
    lines = []
    for name, lb in zip(names, program.lower_bounds):
        lines.append(f"var {name} lb={lb!r}")
    coeffs = " ".join(repr(v) for v in program.objective)
    lines.append(f"min {coeffs}")
    for i, cone in enumerate(program.cones):
        lines.append(f"cone {i} dim={cone.A.shape[0]}")
        dense = cone.A.toarray()
        for row, bval in zip(dense, cone.b):
            vals = " ".join(repr(v) for v in row)
            lines.append(f"row {vals} | {bval!r}")
        fvals = " ".join(repr(v) for v in cone.f)
        lines.append(f"rhs {fvals} | {cone.d!r}")
    return "\n".join(lines) + "\n"
