"""Translate the power-minimization problems into SOC programs.

All builders share the same SINR cone construction. Power variables are
square roots q_mk = sqrt(rho_mk) so every constraint is a genuine second-
order cone; rho is recovered as q^2 at the API boundary. Each SINR cone
is divided through by sigma_dl so the channel coefficients enter at
order one, which keeps the interior-point iterations well conditioned
(the feasible set is unchanged).

Per-AP powers below rho ~ 1e-8 W count as "off" when reading an active
set out of a solution; solvers return tiny nonzero values there.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import performance, socp

ACTIVE_POWER_THRESHOLD_W = 1e-8


class EmptySelectionError(ValueError):
    """No AP can be active, so the problem is infeasible by construction."""


@dataclass(frozen=True)
class ProblemInstance:
    """Everything a power-minimization problem needs about one user drop."""

    stats: "performance.ChannelStats"
    scheme: performance.PrecodingScheme
    pilots: "performance.PilotAssignment"
    requirements: performance.SERequirements
    power: performance.PowerModel

    def __post_init__(self):
        M, K = self.stats.beta.shape
        if self.pilots.num_users != K or len(self.requirements.xi) != K:
            raise ValueError("user-count mismatch across instance pieces")
        if len(self.power.delta) != M:
            raise ValueError("AP-count mismatch across instance pieces")

    @property
    def M(self):
        return self.stats.beta.shape[0]

    @property
    def K(self):
        return self.stats.beta.shape[1]

    @property
    def hardware_w(self):
        """Per-AP effective hardware power P_hw,m."""
        return self.power.hardware_power(self.requirements.xi)


@dataclass(frozen=True)
class BnbBox:
    """A branch-and-bound box: per-AP binaries fixed on, off, or free."""

    fixed_on: frozenset
    fixed_off: frozenset
    free: frozenset

    def validate(self, M):
        all_aps = self.fixed_on | self.fixed_off | self.free
        if all_aps != frozenset(range(M)) or \
                len(self.fixed_on) + len(self.fixed_off) + len(self.free) != M:
            raise ValueError("box sets must partition the AP indices")


class _Builder:
    def __init__(self):
        self.names = []
        self.lb = []
        self.cones = []

    def var(self, name, lb=0.0):
        self.names.append(name)
        self.lb.append(lb)
        return len(self.names) - 1

    def cone(self, rows, b, f_entries, d):
        """rows: per-row lists of (var, coeff); b: per-row constants."""
        n = len(self.names)
        r_idx, c_idx, vals = [], [], []
        for i, row in enumerate(rows):
            for col, val in row:
                r_idx.append(i)
                c_idx.append(col)
                vals.append(val)
        A = sparse.csr_matrix((vals, (r_idx, c_idx)), shape=(len(rows), n))
        f = np.zeros(n)
        for col, val in f_entries:
            f[col] += val
        self.cones.append(socp.SocCone(A=A, b=np.asarray(b, dtype=float),
                                       f=f, d=float(d)))

    def finish(self, objective_var):
        n = len(self.names)
        obj = np.zeros(n)
        if isinstance(objective_var, int):
            obj[objective_var] = 1.0
        else:
            for col, val in objective_var:
                obj[col] += val
        # cones were built against growing n; pad their column counts
        cones = tuple(
            socp.SocCone(A=sparse.csr_matrix(
                (c.A.data, c.A.indices, c.A.indptr), shape=(c.A.shape[0], n)),
                b=c.b, f=np.pad(c.f, (0, n - len(c.f))), d=c.d)
            for c in self.cones)
        return socp.SocProgram(
            n_vars=n, objective=obj, cones=cones,
            lower_bounds=np.asarray(self.lb, dtype=float),
            var_names=tuple(self.names))


@dataclass(frozen=True)
class BuiltProgram:
    """A SocProgram plus the variable layout needed to read solutions."""

    program: socp.SocProgram
    rows: tuple                  # AP indices carrying q variables
    q_index: np.ndarray          # (len(rows), K) variable indices
    objective_var: int
    alpha_index: dict = None     # AP -> variable, relaxations only
    objective_offset_w: float = 0.0   # constant watts outside the program

    def q_matrix(self, x, M):
        """Full (M, K) square-root power matrix; eliminated rows are zero."""
        q = np.zeros((M, self.q_index.shape[1]))
        q[list(self.rows)] = np.maximum(x[self.q_index], 0.0)
        return q

    def alpha_values(self, x):
        return {m: float(x[i]) for m, i in self.alpha_index.items()}


def _add_q_vars(b, rows, K):
    q_idx = np.empty((len(rows), K), dtype=int)
    for i, m in enumerate(rows):
        for k in range(K):
            q_idx[i, k] = b.var(f"q[{m},{k}]")
    return q_idx


def _add_sinr_and_cap_cones(b, inst, rows, q_idx, cap_rhs):
    """Shared constraint set: K SINR cones, per-AP caps, K*K aux norms.

    cap_rhs: per-AP right-hand side as (f_entries, d) for the cap cone,
    letting relaxations tie the cap to an alpha variable.
    """
    K = inst.K
    sigma = np.sqrt(inst.stats.sigma2_dl)
    idx = list(rows)
    sqrt_g = np.sqrt(inst.scheme.coherent_gain(inst.stats)[idx]) / sigma
    sqrt_z = np.sqrt(inst.scheme.interference_coeff(inst.stats)[idx]) / sigma
    sqrt_nu = np.sqrt(inst.requirements.nu)

    t_idx = np.empty((K, K), dtype=int)
    for k in range(K):
        for kp in range(K):
            t_idx[k, kp] = b.var(f"t[{k},{kp}]")

    sinr_cones = []
    for k in range(K):
        rows_k = []
        b_k = []
        copilot = [kp for kp in inst.pilots.copilot_sets[k] if kp != k]
        for kp in copilot:
            rows_k.append([(q_idx[i, kp], sqrt_nu[k] * sqrt_g[i, k])
                           for i in range(len(rows))])
            b_k.append(0.0)
        for kp in range(K):
            rows_k.append([(t_idx[k, kp], sqrt_nu[k])])
            b_k.append(0.0)
        rows_k.append([])
        b_k.append(sqrt_nu[k])   # noise term, sigma/sigma = 1
        f_entries = [(q_idx[i, k], sqrt_g[i, k]) for i in range(len(rows))]
        sinr_cones.append((rows_k, b_k, f_entries, 0.0))

    for rows_k, b_k, f_entries, d in sinr_cones:
        b.cone(rows_k, b_k, f_entries, d)

    for i, m in enumerate(rows):
        f_entries, d = cap_rhs(m)
        b.cone([[(q_idx[i, k], 1.0)] for k in range(K)],
               np.zeros(K), f_entries, d)

    for k in range(K):
        for kp in range(K):
            b.cone([[(q_idx[i, kp], sqrt_z[i, k])] for i in range(len(rows))],
                   np.zeros(len(rows)), [(t_idx[k, kp], 1.0)], 0.0)


def build_fixed_set(inst, active):
    """Minimize sqrt(total power) over a fixed active AP set.

    The epigraph objective s satisfies s*^2 = transmit + hardware power
    of the active set at the optimum.
    """
    rows = tuple(sorted(active))
    if not rows:
        raise EmptySelectionError("active set is empty")
    b = _Builder()
    q_idx = _add_q_vars(b, rows, inst.K)
    s = b.var("s")
    hw = inst.hardware_w
    sqrt_delta = np.sqrt(inst.power.delta)

    r_rows = [[(q_idx[i, k], sqrt_delta[m])]
              for i, m in enumerate(rows) for k in range(inst.K)]
    r_b = [0.0] * (len(rows) * inst.K)
    r_rows.append([])
    r_b.append(np.sqrt(np.sum(hw[list(rows)])))
    b.cone(r_rows, r_b, [(s, 1.0)], 0.0)

    sqrt_pmax = np.sqrt(inst.power.p_max)
    _add_sinr_and_cap_cones(b, inst, rows, q_idx,
                            lambda m: ([], sqrt_pmax[m]))
    return BuiltProgram(program=b.finish(s), rows=rows,
                        q_index=q_idx, objective_var=s)


def build_transmit_only(inst):
    """The all-APs-on program; the 'transmit power only' baseline."""
    return build_fixed_set(inst, range(inst.M))


def build_relaxation(inst, box):
    """Continuous relaxation of the on/off binaries over a box.

    Free APs get alpha_m in [0, 1] scaling both their power cap and
    their hardware term inside the epigraph norm (so relaxed hardware
    enters as alpha^2 P_hw, a valid lower bound). Fixed-off APs are
    eliminated rather than zero-clamped.
    """
    box.validate(inst.M)
    rows = tuple(sorted(box.fixed_on | box.free))
    if not rows:
        raise EmptySelectionError("every AP is fixed off")
    b = _Builder()
    q_idx = _add_q_vars(b, rows, inst.K)
    s = b.var("s")
    alpha_idx = {m: b.var(f"alpha[{m}]") for m in sorted(box.free)}
    hw = inst.hardware_w
    sqrt_delta = np.sqrt(inst.power.delta)
    sqrt_pmax = np.sqrt(inst.power.p_max)

    r_rows = [[(q_idx[i, k], sqrt_delta[m])]
              for i, m in enumerate(rows) for k in range(inst.K)]
    r_b = [0.0] * (len(rows) * inst.K)
    for m in sorted(box.free):
        r_rows.append([(alpha_idx[m], np.sqrt(hw[m]))])
        r_b.append(0.0)
    r_rows.append([])
    r_b.append(np.sqrt(np.sum(hw[sorted(box.fixed_on)], initial=0.0)))
    b.cone(r_rows, r_b, [(s, 1.0)], 0.0)

    def cap_rhs(m):
        if m in box.free:
            return [(alpha_idx[m], sqrt_pmax[m])], 0.0
        return [], sqrt_pmax[m]

    _add_sinr_and_cap_cones(b, inst, rows, q_idx, cap_rhs)
    for m in sorted(box.free):   # alpha_m <= 1
        b.cone([[(alpha_idx[m], 1.0)]], [0.0], [], 1.0)
    return BuiltProgram(program=b.finish(s), rows=rows, q_index=q_idx,
                        objective_var=s, alpha_index=alpha_idx)


def build_bounding(inst, box):
    """Box lower bound with the hardware term linear in alpha.

    Same feasible set as build_relaxation but the objective is measured
    in watts directly: t >= sum_m delta_m sum_k rho_mk plus
    sum_{free} alpha_m P_hw,m, with the fixed-on hardware reported as a
    constant offset. At binary alpha the value coincides with the
    fixed-set total power, and for fractional alpha it dominates the
    alpha^2 bound, so the search prunes far earlier. The cap cone
    ||u'_m|| <= alpha_m sqrt(P_max) still forces alpha_m up to
    sqrt(p_m / P_max) whenever AP m radiates.
    """
    box.validate(inst.M)
    rows = tuple(sorted(box.fixed_on | box.free))
    if not rows:
        raise EmptySelectionError("every AP is fixed off")
    b = _Builder()
    q_idx = _add_q_vars(b, rows, inst.K)
    t = b.var("t")
    alpha_idx = {m: b.var(f"alpha[{m}]") for m in sorted(box.free)}
    hw = inst.hardware_w
    sqrt_delta = np.sqrt(inst.power.delta)
    sqrt_pmax = np.sqrt(inst.power.p_max)

    # t >= weighted transmit power via ||(2 sqrt(delta) q, 1 - t)|| <= 1 + t
    tx_rows = [[(q_idx[i, k], 2.0 * sqrt_delta[m])]
               for i, m in enumerate(rows) for k in range(inst.K)]
    tx_b = [0.0] * (len(rows) * inst.K)
    tx_rows.append([(t, -1.0)])
    tx_b.append(1.0)
    b.cone(tx_rows, tx_b, [(t, 1.0)], 1.0)

    def cap_rhs(m):
        if m in box.free:
            return [(alpha_idx[m], sqrt_pmax[m])], 0.0
        return [], sqrt_pmax[m]

    _add_sinr_and_cap_cones(b, inst, rows, q_idx, cap_rhs)
    for m in sorted(box.free):   # alpha_m <= 1
        b.cone([[(alpha_idx[m], 1.0)]], [0.0], [], 1.0)

    objective = [(t, 1.0)] + [(alpha_idx[m], float(hw[m]))
                              for m in sorted(box.free)]
    offset = float(np.sum(hw[sorted(box.fixed_on)], initial=0.0))
    return BuiltProgram(program=b.finish(objective), rows=rows,
                        q_index=q_idx, objective_var=t,
                        alpha_index=alpha_idx, objective_offset_w=offset)


def round_alphas(box, alpha_star):
    """Active set after elementwise rounding; ties at 0.5 round up."""
    rounded = {m for m, a in alpha_star.items() if a >= 0.5}
    return tuple(sorted(box.fixed_on | rounded))


def build_rounded(inst, box, alpha_star):
    """Fixed-set program over the rounded relaxation solution."""
    active = round_alphas(box, alpha_star)
    if not active:
        raise EmptySelectionError("all relaxed binaries rounded to zero")
    return build_fixed_set(inst, active)


def build_weighted(inst, weights):
    """Minimize sum_m a_m sum_k rho_mk subject to the SINR and cap cones.

    The quadratic-in-q objective is an epigraph cone
    ||(2 w o q, 1 - t)|| <= 1 + t with w_mk = sqrt(a_m); the optimal t
    equals the weighted transmit power in watts.
    """
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0.0):
        raise ValueError("weights must be positive")
    rows = tuple(range(inst.M))
    b = _Builder()
    q_idx = _add_q_vars(b, rows, inst.K)
    t = b.var("t")
    sqrt_w = np.sqrt(weights)

    obj_rows = [[(q_idx[i, k], 2.0 * sqrt_w[m])]
                for i, m in enumerate(rows) for k in range(inst.K)]
    obj_b = [0.0] * (inst.M * inst.K)
    obj_rows.append([(t, -1.0)])
    obj_b.append(1.0)
    b.cone(obj_rows, obj_b, [(t, 1.0)], 1.0)

    sqrt_pmax = np.sqrt(inst.power.p_max)
    _add_sinr_and_cap_cones(b, inst, rows, q_idx,
                            lambda m: ([], sqrt_pmax[m]))
    return BuiltProgram(program=b.finish(t), rows=rows,
                        q_index=q_idx, objective_var=t)


def make_allocation(inst, q, active):
    """Evaluate an allocation with the independent performance model."""
    active = tuple(sorted(active))
    q = np.asarray(q, dtype=float)
    q_clean = np.zeros_like(q)
    if active:
        q_clean[list(active)] = q[list(active)]
    sinr = performance.sinr(inst.stats, inst.scheme, q_clean, active,
                            inst.pilots)
    se = performance.se(sinr, inst.requirements.tau_c,
                        inst.requirements.tau_p)
    rows = list(active)
    per_ap = np.sum(q_clean[rows]**2, axis=1) if rows else np.zeros(0)
    transmit = float(inst.power.delta[rows] @ per_ap) if rows else 0.0
    radiated = float(np.sum(per_ap))
    hardware = float(np.sum(inst.hardware_w[rows])) if rows else 0.0
    return performance.Allocation(
        q=q_clean, active=active, sinr=sinr, se=se,
        transmit_w=transmit, radiated_w=radiated, hardware_w=hardware,
        total_w=transmit + hardware)


def solve_fixed_set(inst, active, tol=socp.DEFAULT_TOL):
    """Build, solve, and evaluate the fixed-active-set program."""
    built = build_fixed_set(inst, active)
    result = socp.solve(built.program, tol=tol)
    if result.status != socp.OPTIMAL:
        return result, None
    q = built.q_matrix(result.x, inst.M)
    return result, make_allocation(inst, q, built.rows)


def active_set_from_powers(q, threshold_w=ACTIVE_POWER_THRESHOLD_W):
    """APs whose total transmit power exceeds the on/off threshold."""
    per_ap = np.sum(np.asarray(q)**2, axis=1)
    return tuple(np.flatnonzero(per_ap > threshold_w))
