"""Synthetic small instances for solver and rate-engine tests.

Channels are drawn directly (no geometry) with order-one gains and a
moderate normalized power so the oracles stay well conditioned.
"""

import numpy as np

from cellfree.clustering import ClusterSet
from cellfree.geometry import NetworkRealization
from cellfree.rates import BeamformingState, StreamAllocation, per_ap_power


def random_partition(num_aps, num_clusters, rng):
    assert 1 <= num_clusters <= num_aps
    labels = np.concatenate(
        [np.arange(num_clusters), rng.integers(0, num_clusters, size=num_aps - num_clusters)]
    )
    rng.shuffle(labels)
    clusters = [tuple(np.nonzero(labels == c)[0].tolist()) for c in range(num_clusters)]
    return ClusterSet.from_clusters(clusters, num_aps)


def make_instance(L=3, M=2, K=2, N=2, num_clusters=2, d=1, rho=8.0, seed=0,
                  full_power=True):
    """Random realization, partition, allocation and feasible precoders."""
    rng = np.random.default_rng(seed)
    channels = (
        rng.standard_normal((K, L, N, M)) + 1j * rng.standard_normal((K, L, N, M))
    ) / np.sqrt(2.0)
    side = 1000.0
    realization = NetworkRealization(
        ap_positions=rng.uniform(0, side, size=(L, 2)),
        ue_positions=rng.uniform(0, side, size=(K, 2)),
        beta=np.ones((K, L)),
        channels=channels,
        rho=float(rho),
        area_side=side,
    )
    clusters = random_partition(L, num_clusters, rng)
    if np.isscalar(d):
        d_matrix = np.full((K, num_clusters), int(d), dtype=int)
        for c, members in enumerate(clusters.clusters):
            d_matrix[:, c] = min(int(d), M * len(members), N)
    else:
        d_matrix = np.asarray(d, dtype=int)
    alloc = StreamAllocation.validated(d_matrix, clusters, M, N)

    precoders = {}
    for l in range(L):
        c = clusters.cluster_of[l]
        for k in range(K):
            dk = int(alloc.d[k, c])
            precoders[(k, l)] = (
                rng.standard_normal((M, dk)) + 1j * rng.standard_normal((M, dk))
            ) / np.sqrt(2.0 * M * dk)
    state = BeamformingState(precoders=precoders)
    for l in range(L):
        power = per_ap_power(state, l)
        target = 1.0 if full_power else float(rng.uniform(0.3, 1.0))
        scale = np.sqrt(target / power)
        for k in range(K):
            state.precoders[(k, l)] = state.precoders[(k, l)] * scale
    return realization, clusters, alloc, state


def set_mmse_combiners(realization, clusters, alloc, state):
    from cellfree.rates import mmse_combiner
    from cellfree.wmmse import update_weights

    for k in range(realization.num_ues):
        for c in range(clusters.num_clusters):
            state.combiners[(k, c)] = mmse_combiner(realization, clusters, alloc, state, k, c)
    update_weights(state, realization, clusters, alloc)
    return state


def random_combiners(realization, clusters, alloc, state, rng):
    for k in range(realization.num_ues):
        for c in range(clusters.num_clusters):
            dk = int(alloc.d[k, c])
            state.combiners[(k, c)] = (
                rng.standard_normal((realization.ue_antennas, dk))
                + 1j * rng.standard_normal((realization.ue_antennas, dk))
            )
    return state
