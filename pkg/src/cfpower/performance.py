"""Closed-form ergodic SINR/SE and the total power consumption model.

The SINR of user k for an active AP set A and square-root powers
q_mk = sqrt(rho_mk) is

    G (sum_{m in A} sqrt(gamma_mk) q_mk)^2
    ---------------------------------------------------------------------
    G sum_{k' in P_k \\ {k}} (sum_{m in A} sqrt(gamma_mk) q_mk')^2
      + sum_{k'} sum_{m in A} q_mk'^2 z_mk + sigma2_dl

with G = N, z = beta for MRT and G = N - tau_p, z = beta - gamma for F-ZF.
"""

from dataclasses import dataclass

import numpy as np

# A solution counts as feasible when SINR_k >= nu_k * (1 - SINR_SLACK);
# interior-point outputs are tight only to solver tolerance.
SINR_SLACK = 1e-6


@dataclass(frozen=True)
class PrecodingScheme:
    """MRT or full-pilot zero-forcing, with the derived SINR coefficients."""

    kind: str           # "mrt" or "fzf"
    n_antennas: int
    tau_p: int

    def __post_init__(self):
        if self.kind not in ("mrt", "fzf"):
            raise ValueError(f"unknown precoding scheme {self.kind!r}")
        if self.kind == "fzf" and self.n_antennas <= self.tau_p:
            raise ValueError(
                "F-ZF needs more antennas per AP than pilots "
                f"(N={self.n_antennas}, tau_p={self.tau_p})")

    @property
    def array_gain(self):
        if self.kind == "mrt":
            return float(self.n_antennas)
        return float(self.n_antennas - self.tau_p)

    def interference_coeff(self, stats):
        """z_mk: beta for MRT, beta - gamma for F-ZF."""
        if self.kind == "mrt":
            return stats.beta
        return stats.beta - stats.gamma

    def coherent_gain(self, stats):
        """g_mk = G * gamma_mk."""
        return self.array_gain * stats.gamma


@dataclass(frozen=True)
class PowerModel:
    """Per-AP amplifier, hardware, and fronthaul power parameters."""

    delta: np.ndarray        # (M,) amplifier inefficiency, >= 1
    p_static: np.ndarray     # (M,) static hardware power [W]
    p_bt: np.ndarray         # (M,) traffic-dependent power [W per bit/s]
    bandwidth: float         # [Hz]
    p_max: np.ndarray        # (M,) per-AP transmit power cap [W]

    @staticmethod
    def uniform(M, delta=2.5, p_static=4.825, p_bt=0.25e-9,
                bandwidth=20e6, p_max=1.0):
        ones = np.ones(M)
        return PowerModel(delta=delta * ones, p_static=p_static * ones,
                          p_bt=p_bt * ones, bandwidth=float(bandwidth),
                          p_max=p_max * ones)

    def hardware_power(self, xi):
        """P_hw,m = P_m + B * sum_k P_bt,m * xi_k (SINR constraints tight)."""
        return self.p_static + self.bandwidth * self.p_bt * float(np.sum(xi))


@dataclass(frozen=True)
class SERequirements:
    """Per-user spectral efficiency targets and the induced SINR targets."""

    xi: np.ndarray      # (K,) required SE [b/s/Hz]
    tau_c: int
    tau_p: int

    @property
    def nu(self):
        """SINR targets: nu_k = 2^(xi_k tau_c / (tau_c - tau_p)) - 1."""
        return np.power(2.0, self.xi * self.tau_c /
                        (self.tau_c - self.tau_p)) - 1.0


@dataclass(frozen=True)
class Allocation:
    """A power allocation, its active AP set, and its evaluated performance."""

    q: np.ndarray            # (M, K) square-root powers, zero off the set
    active: tuple            # sorted AP indices
    sinr: np.ndarray         # (K,)
    se: np.ndarray           # (K,)
    transmit_w: float        # sum_{m in A} delta_m sum_k q_mk^2
    radiated_w: float        # sum_{m in A} sum_k q_mk^2 (no amplifier factor)
    hardware_w: float        # sum_{m in A} P_hw,m
    total_w: float

    def is_feasible(self, nu, slack=SINR_SLACK):
        return bool(np.all(self.sinr >= nu * (1.0 - slack)))


def sinr(stats, scheme, q, active, pilots):
    """Evaluate the closed-form SINR for every user."""
    q = np.asarray(q, dtype=float)
    rows = np.fromiter(sorted(active), dtype=int, count=len(active))
    K = q.shape[1]
    if rows.size == 0:
        return np.zeros(K)
    G = scheme.array_gain
    sqrt_gamma = np.sqrt(stats.gamma[rows])          # (|A|, K)
    z = scheme.interference_coeff(stats)[rows]       # (|A|, K)
    qa = q[rows]                                     # (|A|, K)
    rho = qa**2

    out = np.empty(K)
    for k in range(K):
        # coherent sums over the active APs, one per transmitted stream
        coherent = sqrt_gamma[:, k] @ qa             # (K,)
        signal = G * coherent[k]**2
        copilot = [kp for kp in pilots.copilot_sets[k] if kp != k]
        pilot_interf = G * np.sum(coherent[copilot]**2)
        noncoherent = float(np.sum(rho * z[:, [k]]))
        out[k] = signal / (pilot_interf + noncoherent + stats.sigma2_dl)
    return out


def se(sinr_values, tau_c, tau_p):
    """Ergodic SE: (1 - tau_p/tau_c) log2(1 + SINR)."""
    return (1.0 - tau_p / tau_c) * np.log2(1.0 + np.asarray(sinr_values))


def total_power(q, active, power_model, xi):
    """(transmit, hardware, total) in watts for an allocation."""
    rows = np.fromiter(sorted(active), dtype=int, count=len(active))
    if rows.size == 0:
        return 0.0, 0.0, 0.0
    per_ap = np.sum(np.asarray(q, dtype=float)[rows]**2, axis=1)
    transmit = float(power_model.delta[rows] @ per_ap)
    hardware = float(np.sum(power_model.hardware_power(xi)[rows]))
    return transmit, hardware, transmit + hardware
