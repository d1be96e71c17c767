"""Globally optimal AP selection via branch-and-bound on on/off binaries.

Each node is a box of fixed-on / fixed-off / free APs. Its lower bound
comes from a continuous relaxation (alpha in [0, 1]) whose hardware
term is linear in alpha, which coincides with the fixed-set total power
at binary points and bounds far tighter than carrying alpha inside the
epigraph norm. An upper bound comes from re-solving with the relaxed
binaries rounded. Search is best-first on the lower bound, branching on
the most fractional alpha. Exhaustive subset enumeration is provided as
the small-instance oracle.
"""

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from . import formulations, heuristics, socp

DEFAULT_GAP_TOL = 1e-6
DEFAULT_NODE_CAP = 100_000
DEFAULT_POLISH_CAP = 400
PRUNE_SLACK = 1e-9

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
BUDGET_EXCEEDED = "budget_exceeded"


@dataclass
class BnbState:
    """Search instrumentation; counters only ever increase."""

    status: str = OPTIMAL
    boxes_created: int = 0
    boxes_pruned: int = 0
    relaxations_solved: int = 0
    rounded_solved: int = 0
    polish_solved: int = 0
    incumbent_w: float = np.inf
    best_lower_bound_w: float = 0.0
    gap: float = np.inf
    gap_trajectory: list = field(default_factory=list)

    @property
    def nodes(self):
        return self.boxes_created


def _relaxation_bound(inst, box, tol, state):
    """Lower bound in watts for a box, or None when infeasible."""
    try:
        built = formulations.build_bounding(inst, box)
    except formulations.EmptySelectionError:
        return None, None
    result = socp.solve(built.program, tol=tol)
    state.relaxations_solved += 1
    if result.status != socp.OPTIMAL:
        return None, None
    alpha = built.alpha_values(result.x)
    return result.objective + built.objective_offset_w, alpha


def _rounded_bound(inst, box, alpha, tol, state):
    """Feasible allocation from rounding, or None."""
    active = formulations.round_alphas(box, alpha)
    if not active:
        return None
    result, alloc = formulations.solve_fixed_set(inst, active, tol=tol)
    state.rounded_solved += 1
    if result.status != socp.OPTIMAL:
        return None
    return alloc


def _polish_incumbent(inst, start, tol, state, solve_cap):
    """Greedy remove-then-swap descent over active sets.

    Every candidate set is a leaf box, so each fixed-set solve is a
    legitimate global upper bound. Rounding the spread-out relaxations
    almost never yields a feasible set on larger networks, so without
    this phase the incumbent would stay at the all-on point for any
    affordable node budget.
    """
    best = start
    budget = [solve_cap]

    def try_set(active):
        if not active or budget[0] <= 0:
            return None
        budget[0] -= 1
        state.polish_solved += 1
        _, alloc = formulations.solve_fixed_set(inst, active, tol=tol)
        return alloc

    improved = True
    while improved and budget[0] > 0:
        improved = False
        for m in sorted(best.active):
            alloc = try_set(tuple(x for x in best.active if x != m))
            if alloc is not None and alloc.total_w < best.total_w * (1 - 1e-9):
                best = alloc
                improved = True
        if improved or budget[0] <= 0:
            continue
        outside = [m for m in range(inst.M) if m not in best.active]
        for m in sorted(best.active):
            for mo in outside:
                swapped = tuple(sorted(
                    [x for x in best.active if x != m] + [mo]))
                alloc = try_set(swapped)
                if alloc is not None and \
                        alloc.total_w < best.total_w * (1 - 1e-9):
                    best = alloc
                    improved = True
                    break
            if improved or budget[0] <= 0:
                break
    return best


def _branch_variable(box, alpha, hardware_w):
    """Most fractional free alpha; ties broken by larger hardware power."""
    return max(box.free,
               key=lambda m: (-abs(alpha[m] - 0.5), hardware_w[m], -m))


def solve_exact(inst, gap_tol=DEFAULT_GAP_TOL, node_cap=DEFAULT_NODE_CAP,
                tol=socp.DEFAULT_TOL, polish_solve_cap=DEFAULT_POLISH_CAP):
    """Solve the mixed-integer program to within a relative gap.

    Returns (allocation, state). allocation is None when no AP subset can
    satisfy the requirements. A node-cap hit returns the incumbent with
    state.status == BUDGET_EXCEEDED and the achieved gap.
    """
    state = BnbState()
    M = inst.M
    if np.all(inst.requirements.xi == 0.0):
        # zero requirements: turn everything off
        alloc = formulations.make_allocation(inst, np.zeros((M, inst.K)), ())
        state.incumbent_w = 0.0
        state.gap = 0.0
        return alloc, state

    result, incumbent = formulations.solve_fixed_set(inst, range(M), tol=tol)
    if incumbent is None:
        state.status = INFEASIBLE
        return None, state
    theta, order = heuristics.theta_ordering(incumbent.q, inst.stats.beta,
                                             inst.stats.n_antennas)
    incumbent, turnoff = heuristics.bisection_turnoff(inst, order, incumbent,
                                                      tol=tol)
    state.polish_solved += turnoff.solves
    incumbent = _polish_incumbent(inst, incumbent, tol, state,
                                  polish_solve_cap)
    state.incumbent_w = incumbent.total_w

    root = formulations.BnbBox(fixed_on=frozenset(), fixed_off=frozenset(),
                               free=frozenset(range(M)))
    lb, alpha = _relaxation_bound(inst, root, tol, state)
    if lb is None:
        state.status = INFEASIBLE
        return None, state
    state.boxes_created = 1
    counter = itertools.count()
    heap = [(lb, next(counter), root, alpha)]
    hardware_w = inst.hardware_w

    while heap:
        lb, _, box, alpha = heapq.heappop(heap)
        state.best_lower_bound_w = lb
        state.gap = max(0.0, (state.incumbent_w - lb) / state.incumbent_w)
        state.gap_trajectory.append(state.gap)
        if lb >= state.incumbent_w * (1.0 - PRUNE_SLACK) or \
                state.gap <= gap_tol:
            state.boxes_pruned += len(heap) + 1
            break
        if state.boxes_created >= node_cap:
            state.status = BUDGET_EXCEEDED
            break

        m = _branch_variable(box, alpha, hardware_w)
        for value in (1, 0):
            child = formulations.BnbBox(
                fixed_on=box.fixed_on | ({m} if value else frozenset()),
                fixed_off=box.fixed_off | (frozenset() if value else {m}),
                free=box.free - {m})
            state.boxes_created += 1
            child_lb, child_alpha = _relaxation_bound(inst, child, tol, state)
            if child_lb is None:
                state.boxes_pruned += 1
                continue
            child_lb = max(child_lb, lb)   # nested feasible sets
            alloc = _rounded_bound(inst, child, child_alpha, tol, state)
            if alloc is not None and alloc.total_w < state.incumbent_w:
                incumbent = alloc
                state.incumbent_w = alloc.total_w
            if child.free and child_lb < state.incumbent_w * (1.0 - PRUNE_SLACK):
                heapq.heappush(heap, (child_lb, next(counter), child,
                                      child_alpha))
            else:
                state.boxes_pruned += 1
    else:
        state.best_lower_bound_w = state.incumbent_w
        state.gap = 0.0

    return incumbent, state


def solve_exhaustive(inst, tol=socp.DEFAULT_TOL, max_aps=12):
    """Enumerate every nonempty AP subset; the oracle for solve_exact."""
    M = inst.M
    if M > max_aps:
        raise ValueError(f"exhaustive search guarded to M <= {max_aps}")
    if np.all(inst.requirements.xi == 0.0):
        return formulations.make_allocation(inst, np.zeros((M, inst.K)), ())
    best = None
    for size in range(1, M + 1):
        for subset in itertools.combinations(range(M), size):
            _, alloc = formulations.solve_fixed_set(inst, subset, tol=tol)
            if alloc is not None and (best is None
                                      or alloc.total_w < best.total_w):
                best = alloc
    return best
