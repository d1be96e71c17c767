"""Shared instance factories for the optimization-layer tests."""

import numpy as np

from cfpower import formulations, network, performance

NOISE_W = 3.981e-13    # -94 dBm


def random_instance(M, K, seed, n_antennas=8, tau_p=2, se_target=1.0,
                    precoder="mrt", side_length=400.0, p_max=1.0,
                    tau_c=200):
    """Small random drop with moderate SE targets, feasible almost surely."""
    geom = network.generate_layout(M, K, side_length=side_length,
                                   min_ap_spacing=20.0, seed=seed)
    beta = network.large_scale_fading(geom, seed=seed + 1)
    pilots = network.assign_pilots(K, tau_p, seed=seed + 2)
    gamma = network.mmse_variance(beta, pilots, NOISE_W)
    stats = network.ChannelStats(beta=beta, gamma=gamma, sigma2_ul=NOISE_W,
                                 sigma2_dl=NOISE_W, tau_c=tau_c,
                                 n_antennas=n_antennas)
    scheme = performance.PrecodingScheme(kind=precoder, n_antennas=n_antennas,
                                         tau_p=tau_p)
    requirements = performance.SERequirements(xi=np.full(K, se_target),
                                              tau_c=tau_c, tau_p=tau_p)
    power = performance.PowerModel.uniform(M, p_max=p_max)
    return formulations.ProblemInstance(stats=stats, scheme=scheme,
                                        pilots=pilots,
                                        requirements=requirements,
                                        power=power)


def manual_instance(beta, n_antennas=8, se_target=1.0, p_max=1.0,
                    tau_c=200, precoder="mrt"):
    """Instance from an explicit gain matrix, orthogonal pilots."""
    beta = np.asarray(beta, dtype=float)
    M, K = beta.shape
    pilots = network.PilotAssignment(tau_p=K, indices=np.arange(K),
                                     pilot_power=0.2)
    gamma = network.mmse_variance(beta, pilots, NOISE_W)
    stats = network.ChannelStats(beta=beta, gamma=gamma, sigma2_ul=NOISE_W,
                                 sigma2_dl=NOISE_W, tau_c=tau_c,
                                 n_antennas=n_antennas)
    scheme = performance.PrecodingScheme(kind=precoder, n_antennas=n_antennas,
                                         tau_p=K)
    requirements = performance.SERequirements(xi=np.full(K, se_target),
                                              tau_c=tau_c, tau_p=K)
    power = performance.PowerModel.uniform(M, p_max=p_max)
    return formulations.ProblemInstance(stats=stats, scheme=scheme,
                                        pilots=pilots,
                                        requirements=requirements,
                                        power=power)
