"""Low-complexity AP turnoff heuristics.

Both algorithms end with the same bisection: rank the APs by their total
delivered power theta_m, then binary-search how many of the weakest can
sleep while a feasible power allocation still exists and improves on the
incumbent. They differ in how the ranking solution is produced: an IRLS
group-sparsity loop (algorithm 1) versus a single all-on transmit power
minimization (algorithm 2). The disjoint baseline thresholds the IRLS
support directly and skips the bisection refinement.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import formulations, socp

DEFAULT_P_TILDE = 1.0          # exponent p~ with p~/2 = 0.5
DEFAULT_MAX_ITERATIONS = 50
DEFAULT_STOP_REL = 3e-4        # stop when the surrogate moves less than
                               # this fraction of its starting value
ZERO_ROW_TOL_W = 1e-10


class InfeasibleError(RuntimeError):
    """No power allocation meets the SE targets even with every AP on."""


@dataclass
class IrlsTrace:
    """Per-iteration record of the reweighting loop."""

    objective: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    active_counts: list = field(default_factory=list)
    per_ap_w: list = field(default_factory=list)
    solves: int = 0
    converged: bool = False
    flagged: str = ""

    @property
    def iterations(self):
        return len(self.objective)


@dataclass
class TurnoffTrace:
    """Bisection instrumentation, bounded by ceil(log2(M + 1)) solves."""

    theta: np.ndarray = None
    order: np.ndarray = None
    solves: int = 0
    improved: bool = False


@dataclass
class HeuristicReport:
    irls: IrlsTrace = None
    turnoff: TurnoffTrace = None
    pre_ordering_solves: int = 0


def _group_objective(q, delta, p_tilde):
    """sum_m delta_m (sum_k rho_mk)^(p~/2); the sparsity surrogate."""
    per_ap = np.sum(q**2, axis=1)
    return float(np.sum(delta * per_ap**(p_tilde / 2.0)))


def irls_sparsify(inst, p_tilde=DEFAULT_P_TILDE, eps=None, eps_stop=None,
                  max_iterations=DEFAULT_MAX_ITERATIONS,
                  tol=socp.DEFAULT_TOL):
    """Iteratively reweighted group-sparse power minimization.

    Starts from unit weights, solves the weighted SOC program with all
    APs on, and updates a_m = (delta_m p~/2)(||rho_m||^2 + eps^2)^(p~/2-1)
    until the surrogate objective moves by less than eps_stop. A constant
    small damping eps works as well as a decreasing schedule in practice.

    Returns (q, trace); q is the last successful iterate when a solve
    fails mid-loop (trace.flagged says so).
    """
    if not 0.0 < p_tilde < 2.0:
        raise ValueError("p_tilde must lie in (0, 2)")
    M = inst.M
    delta = inst.power.delta
    if eps is None:
        eps = 1e-3 * math.sqrt(float(np.max(inst.power.p_max)))
    weights = np.ones(M)
    trace = IrlsTrace()
    q = None

    for _ in range(max_iterations):
        built = formulations.build_weighted(inst, weights)
        result = socp.solve(built.program, tol=tol)
        trace.solves += 1
        if result.status != socp.OPTIMAL:
            trace.flagged = f"solver returned {result.status}"
            break
        q = built.q_matrix(result.x, M)
        objective = _group_objective(q, delta, p_tilde)
        trace.objective.append(objective)
        trace.weights.append(weights.copy())
        trace.active_counts.append(
            len(formulations.active_set_from_powers(q)))
        per_ap = np.sum(q**2, axis=1)
        trace.per_ap_w.append(per_ap.copy())
        weights = (delta * p_tilde / 2.0) * \
            (per_ap + eps**2)**(p_tilde / 2.0 - 1.0)
        if eps_stop is None:
            # per-iteration moves below this are plateau refinement: the
            # objective is already within ~0.2% of its stationary value
            eps_stop = DEFAULT_STOP_REL * objective
        if len(trace.objective) >= 2 and \
                abs(trace.objective[-2] - objective) <= eps_stop:
            trace.converged = True
            break

    if q is None:
        raise InfeasibleError(
            f"IRLS failed on the first solve: {trace.flagged}")
    return q, trace


def theta_ordering(q, beta, n_antennas, gamma=None):
    """Delivered-power statistic theta_m = N sum_k rho_mk beta_mk.

    Returns (theta, order) with order sorting theta ascending, ties
    broken by AP index. Passing gamma switches the statistic to the
    estimated-channel variant N sum_k rho_mk gamma_mk.
    """
    gain = beta if gamma is None else gamma
    theta = n_antennas * np.sum(np.asarray(q)**2 * gain, axis=1)
    order = np.argsort(theta, kind="stable")
    return theta, order


def bisection_turnoff(inst, order, initial, tol=socp.DEFAULT_TOL):
    """Binary-search the sleep count along the theta order.

    Keeps the best feasible incumbent (never worse than `initial`);
    candidate active sets are the order's suffixes {m~, ..., M}.
    """
    M = inst.M
    trace = TurnoffTrace(order=np.asarray(order))
    best = initial
    s_star = math.sqrt(initial.total_w)
    m_low, m_up = 1, M
    while m_up - m_low > 1:
        m_mid = (m_low + m_up) // 2
        active = tuple(sorted(int(m) for m in order[m_mid - 1:]))
        result, alloc = formulations.solve_fixed_set(inst, active, tol=tol)
        trace.solves += 1
        s_mid = math.sqrt(alloc.total_w) if alloc is not None else math.inf
        if alloc is not None and s_mid < s_star:
            m_low = m_mid
            best = alloc
            s_star = s_mid
            trace.improved = True
        else:
            m_up = m_mid
    return best, trace


def _initial_allocation(inst, q):
    """Feasible starting incumbent from a full-support solver iterate.

    Reads the active set off the power threshold and zeroes the sleeping
    rows; falls back to the all-on support if the truncation breaks an
    SINR constraint.
    """
    active = formulations.active_set_from_powers(q)
    if active:
        alloc = formulations.make_allocation(inst, q, active)
        if alloc.is_feasible(inst.requirements.nu):
            return alloc
    return formulations.make_allocation(inst, q, range(inst.M))


def algorithm1(inst, p_tilde=DEFAULT_P_TILDE, eps=None, eps_stop=None,
               max_iterations=DEFAULT_MAX_ITERATIONS, tol=socp.DEFAULT_TOL,
               theta_on_gamma=False):
    """Group-sparsity ranking plus bisection turnoff."""
    q, irls_trace = irls_sparsify(inst, p_tilde=p_tilde, eps=eps,
                                  eps_stop=eps_stop,
                                  max_iterations=max_iterations, tol=tol)
    theta, order = theta_ordering(
        q, inst.stats.beta, inst.stats.n_antennas,
        gamma=inst.stats.gamma if theta_on_gamma else None)
    initial = _initial_allocation(inst, q)
    best, turnoff = bisection_turnoff(inst, order, initial, tol=tol)
    turnoff.theta = theta
    return best, HeuristicReport(irls=irls_trace, turnoff=turnoff,
                                 pre_ordering_solves=irls_trace.solves)


def algorithm2(inst, tol=socp.DEFAULT_TOL, theta_on_gamma=False):
    """Single all-on transmit power solve for the ranking, then turnoff."""
    built = formulations.build_transmit_only(inst)
    result = socp.solve(built.program, tol=tol)
    if result.status != socp.OPTIMAL:
        raise InfeasibleError(
            f"all-on power minimization failed: {result.status}")
    q = built.q_matrix(result.x, inst.M)
    theta, order = theta_ordering(
        q, inst.stats.beta, inst.stats.n_antennas,
        gamma=inst.stats.gamma if theta_on_gamma else None)
    initial = formulations.make_allocation(inst, q, range(inst.M))
    best, turnoff = bisection_turnoff(inst, order, initial, tol=tol)
    turnoff.theta = theta
    return best, HeuristicReport(turnoff=turnoff, pre_ordering_solves=1)


def disjoint_sparsity(inst, p_tilde=DEFAULT_P_TILDE, eps=None, eps_stop=None,
                      max_iterations=DEFAULT_MAX_ITERATIONS,
                      tol=socp.DEFAULT_TOL,
                      threshold_w=formulations.ACTIVE_POWER_THRESHOLD_W):
    """Two-stage baseline: sparsity support first, power allocation second.

    No bisection refinement and no comparison against the all-on point;
    an empty or infeasible stage-1 support falls back to all APs on.
    """
    q, irls_trace = irls_sparsify(inst, p_tilde=p_tilde, eps=eps,
                                  eps_stop=eps_stop,
                                  max_iterations=max_iterations, tol=tol)
    active = formulations.active_set_from_powers(q, threshold_w)
    alloc = None
    if active:
        _, alloc = formulations.solve_fixed_set(inst, active, tol=tol)
    if alloc is None:
        _, alloc = formulations.solve_fixed_set(inst, range(inst.M), tol=tol)
    report = HeuristicReport(irls=irls_trace,
                             pre_ordering_solves=irls_trace.solves)
    return alloc, report
