"""Random network layouts and large-scale channel statistics.

Everything here is a deterministic function of its inputs and a seed.
Small-scale fading never appears: the ergodic rate expressions used
downstream only depend on the large-scale coefficients produced here.
"""

from dataclasses import dataclass, field

import numpy as np

# Urban microcell pathloss at 2 GHz: -30.5 - 36.7 log10(d / 1 m) [dB]
PATHLOSS_INTERCEPT_DB = -30.5
PATHLOSS_SLOPE_DB = 36.7
SHADOW_VARIANCE_DB2 = 16.0
SHADOW_DECORRELATION_M = 9.0


class PlacementError(RuntimeError):
    """Rejection sampling could not place an AP within the attempt budget."""


@dataclass(frozen=True)
class Geometry:
    """AP/user positions in a wrap-around square service area."""

    side_length: float
    min_ap_spacing: float
    ap_height: float
    ap_positions: np.ndarray    # (M, 2)
    user_positions: np.ndarray  # (K, 2)

    @property
    def num_aps(self):
        return self.ap_positions.shape[0]

    @property
    def num_users(self):
        return self.user_positions.shape[0]


@dataclass(frozen=True)
class PilotAssignment:
    """Pilot index per user and the induced co-pilot sets."""

    tau_p: int
    indices: np.ndarray         # (K,) values in 0..tau_p-1
    pilot_power: float          # uplink pilot power per user [W]
    copilot_sets: tuple = field(init=False, default=None)

    def __post_init__(self):
        sets = tuple(
            tuple(np.flatnonzero(self.indices == self.indices[k]))
            for k in range(len(self.indices))
        )
        object.__setattr__(self, "copilot_sets", sets)

    @property
    def num_users(self):
        return len(self.indices)


@dataclass(frozen=True)
class ChannelStats:
    """Large-scale statistics entering the closed-form SINR."""

    beta: np.ndarray    # (M, K) large-scale fading, linear power gain
    gamma: np.ndarray   # (M, K) MMSE estimate variance, linear
    sigma2_ul: float    # uplink noise power [W]
    sigma2_dl: float    # downlink noise power [W]
    tau_c: int          # coherence interval length [symbols]
    n_antennas: int     # antennas per AP


def wrap_distance(a, b, side_length, ap_height=0.0):
    """3-D distance on the torus: per-axis min(|d|, side - |d|), plus height."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    delta = np.abs(a - b)
    delta = np.minimum(delta, side_length - delta)
    return float(np.sqrt(np.sum(delta**2) + ap_height**2))


def _pairwise_torus_distance(points_a, points_b, side_length):
    """Horizontal wrap-around distances between two point sets, (A, B)."""
    delta = np.abs(points_a[:, None, :] - points_b[None, :, :])
    delta = np.minimum(delta, side_length - delta)
    return np.sqrt(np.sum(delta**2, axis=-1))


def generate_layout(M, K, side_length=1000.0, min_ap_spacing=50.0,
                    ap_height=10.0, seed=0, max_attempts=10**6):
    """Drop M APs (rejection-sampled to the spacing constraint) and K users.

    Users are uniform i.i.d. over the square; AP positions are uniform
    conditioned on all pairwise wrap-around distances >= min_ap_spacing.
    Raises PlacementError when an AP cannot be placed within max_attempts,
    which signals an over-dense AP request for the given area.
    """
    if M < 1 or K < 1:
        raise ValueError("need at least one AP and one user")
    rng = np.random.default_rng(seed)
    aps = np.empty((M, 2))
    placed = 0
    while placed < M:
        attempts = 0
        while True:
            candidate = rng.uniform(0.0, side_length, size=2)
            if placed == 0:
                break
            dists = _pairwise_torus_distance(
                candidate[None, :], aps[:placed], side_length)
            if np.all(dists >= min_ap_spacing):
                break
            attempts += 1
            if attempts >= max_attempts:
                raise PlacementError(
                    f"could not place AP {placed + 1}/{M} with spacing "
                    f">= {min_ap_spacing} m in {max_attempts} attempts")
        aps[placed] = candidate
        placed += 1
    users = rng.uniform(0.0, side_length, size=(K, 2))
    return Geometry(side_length=float(side_length),
                    min_ap_spacing=float(min_ap_spacing),
                    ap_height=float(ap_height),
                    ap_positions=aps, user_positions=users)


def shadow_covariance(user_positions, side_length,
                      variance_db2=SHADOW_VARIANCE_DB2,
                      decorrelation_m=SHADOW_DECORRELATION_M):
    """K x K shadowing covariance per AP: var * 2^(-distance/decorrelation)."""
    delta = _pairwise_torus_distance(user_positions, user_positions,
                                     side_length)
    return variance_db2 * np.power(2.0, -delta / decorrelation_m)


def large_scale_fading(geometry, seed=0,
                       variance_db2=SHADOW_VARIANCE_DB2,
                       decorrelation_m=SHADOW_DECORRELATION_M):
    """Pathloss plus correlated shadowing; returns beta (M, K) in linear scale.

    Shadowing vectors are drawn independently per AP from a zero-mean
    Gaussian with covariance var * 2^(-delta_kk'/decorrelation), where
    delta is the wrap-around user-user distance. The covariance factor is
    regularized with a tiny diagonal bump when numerically non-PSD.
    """
    rng = np.random.default_rng(seed)
    d = _pairwise_torus_distance(geometry.ap_positions,
                                 geometry.user_positions,
                                 geometry.side_length)
    d = np.sqrt(d**2 + geometry.ap_height**2)
    pathloss_db = PATHLOSS_INTERCEPT_DB - PATHLOSS_SLOPE_DB * np.log10(d)

    M, K = d.shape
    if variance_db2 > 0.0:
        cov = shadow_covariance(geometry.user_positions,
                                geometry.side_length,
                                variance_db2, decorrelation_m)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            cov = cov + 1e-10 * variance_db2 * np.eye(cov.shape[0])
            chol = np.linalg.cholesky(cov)
        shadow_db = rng.standard_normal((M, K)) @ chol.T
    else:
        shadow_db = np.zeros((M, K))
    return np.power(10.0, (pathloss_db + shadow_db) / 10.0)


def assign_pilots(K, tau_p, pilot_power=0.2, seed=0):
    """Random balanced pilot assignment: group sizes differ by at most one."""
    if tau_p < 1 or K < 1:
        raise ValueError("tau_p and K must be positive")
    rng = np.random.default_rng(seed)
    order = rng.permutation(K)
    indices = np.empty(K, dtype=int)
    indices[order] = np.arange(K) % tau_p
    return PilotAssignment(tau_p=int(tau_p), indices=indices,
                           pilot_power=float(pilot_power))


def mmse_variance(beta, pilots, sigma2_ul):
    """MMSE channel-estimate variance gamma_mk from beta and the pilot reuse.

    gamma_mk = tau_p p_k beta_mk^2 / (tau_p sum_{k' in P_k} p_k' beta_mk'
    + sigma2_ul), which satisfies 0 < gamma_mk <= beta_mk.
    """
    beta = np.asarray(beta, dtype=float)
    M, K = beta.shape
    tau_p = pilots.tau_p
    p = pilots.pilot_power
    gamma = np.empty_like(beta)
    for k in range(K):
        copilots = list(pilots.copilot_sets[k])
        denom = tau_p * p * beta[:, copilots].sum(axis=1) + sigma2_ul
        gamma[:, k] = tau_p * p * beta[:, k]**2 / denom
    return gamma
