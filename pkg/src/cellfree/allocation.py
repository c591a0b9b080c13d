# Data-stream allocation: channel-to-interference-plus-noise scores and the
# greedy per-pair search, plus even and random baselines.

from __future__ import annotations

import numpy as np

from .clustering import collective_channel
from .config import ROLE_SOLVER_INIT, SolverConfig, substream
from .rates import StreamAllocation

BASIS_CUTOFF = 1e-10  # relative singular-value cutoff for the channel basis


def _orthonormal_basis(mat):
    """Orthonormal basis of the column space, rank-revealing via SVD."""
    u, s, _ = np.linalg.svd(mat, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        return u[:, :0]
    rank = int(np.sum(s > BASIS_CUTOFF * s[0]))
    return u[:, :rank]


def cinr_matrix(realization, clusters):
    """Priority scores S[k, c]: collective channel energy over one plus the
    projected intra-cluster and inter-cluster interference energies.

    S is invariant to the choice of orthonormal basis because only projection
    norms enter. A zero channel scores zero.
    """
    k_count = realization.num_ues
    c_count = clusters.num_clusters
    gbar = {
        (k, c): collective_channel(realization, members, k)
        for k in range(k_count)
        for c, members in enumerate(clusters.clusters)
    }
    s = np.zeros((k_count, c_count))
    for k in range(k_count):
        for c in range(c_count):
            g = gbar[(k, c)]
            signal = float(np.sum(np.abs(g) ** 2))
            if signal == 0.0:
                continue
            basis = _orthonormal_basis(g)
            intra = np.zeros_like(basis.conj().T @ g)
            for kp in range(k_count):
                if kp != k:
                    intra = intra + basis.conj().T @ gbar[(kp, c)]
            inter = 0.0
            for cp in range(c_count):
                if cp != c:
                    proj = basis.conj().T @ gbar[(k, cp)]
                    inter += float(np.sum(np.abs(proj) ** 2))
            denom = 1.0 + float(np.sum(np.abs(intra) ** 2)) + inter
            s[k, c] = signal / denom
    return s


def greedy_allocate(realization, clusters, d_min, solver_cfg: SolverConfig = None,
                    seed=0) -> StreamAllocation:
    """Visit (UE, cluster) pairs in decreasing score order; for each pair keep
    the stream count in {1..min(M, N)} whose full solve gives the best sum
    rate, never dropping below the required minimum.

    Candidate solves share one initialization seed so the comparison across
    stream counts is not dominated by initialization noise. A failed
    candidate scores -inf and is never selected.
    """
    cfg = solver_cfg or SolverConfig()
    from .wmmse import SolverDivergence, wmmse_solve

    k_count = realization.num_ues
    c_count = clusters.num_clusters
    d_min = np.asarray(d_min, dtype=int)
    if np.any(d_min < 1):
        raise ValueError("the minimum allocation is one stream per pair")
    d_cap = min(realization.ap_antennas, realization.ue_antennas)

    current = d_min.copy()
    scores = cinr_matrix(realization, clusters)
    visited = np.zeros_like(scores, dtype=bool)
    for _ in range(k_count * c_count):
        masked = np.where(visited, -np.inf, scores)
        k_hat, c_hat = np.unravel_index(int(np.argmax(masked)), masked.shape)
        best_d, best_rate = None, -np.inf
        for d in range(1, d_cap + 1):
            candidate = current.copy()
            candidate[k_hat, c_hat] = d
            alloc = StreamAllocation.validated(
                candidate, clusters, realization.ap_antennas, realization.ue_antennas
            )
            rng = substream(seed, 0, ROLE_SOLVER_INIT)
            try:
                _, report = wmmse_solve(realization, clusters, alloc, cfg, rng)
            except SolverDivergence:
                continue
            if report.sum_rate > best_rate:
                best_d, best_rate = d, report.sum_rate
        if best_d is not None and best_d >= d_min[k_hat, c_hat]:
            current[k_hat, c_hat] = best_d
        else:
            current[k_hat, c_hat] = d_min[k_hat, c_hat]
        visited[k_hat, c_hat] = True
        scores[k_hat, c_hat] = 0.0
    return StreamAllocation.validated(
        current, clusters, realization.ap_antennas, realization.ue_antennas
    )


def even_allocation(k_count, c_count, d) -> StreamAllocation:
    """Every pair gets the same number of streams."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return StreamAllocation(d=np.full((k_count, c_count), int(d), dtype=int))


def random_allocation(k_count, c_count, m_antennas, n_antennas, rng) -> StreamAllocation:
    """Independent uniform draws on {1..min(M, N)} per pair."""
    cap = min(m_antennas, n_antennas)
    d = rng.integers(1, cap + 1, size=(k_count, c_count))
    return StreamAllocation(d=d.astype(int))
