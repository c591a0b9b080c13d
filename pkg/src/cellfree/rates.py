# Rate engine for partially coherent downlink transmission.
#
# Every cluster sends an independently coded stream vector to every UE; the
# per-stream rate treats all other streams as Gaussian noise. This module
# evaluates those rates for a given beamforming state, and provides the two
# rate-optimal combiners (MMSE and whitened matched filter) together with
# the change-of-basis factor connecting them.

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusterSet, collective_channel

LOG2E = 1.0 / np.log(2.0)
QBAR_JITTER = 1e-10  # regularization for singular decoded-interference covariance


@dataclass
class StreamAllocation:
    """Streams per (UE, cluster); entry (k, c) is d_kc >= 1."""

    d: np.ndarray  # (K, Lc) integers

    @classmethod
    def validated(cls, d, clusters: ClusterSet, m_antennas, n_antennas):
        d = np.asarray(d, dtype=int)
        if d.ndim != 2 or d.shape[1] != clusters.num_clusters:
            raise ValueError("allocation shape must be (K, num_clusters)")
        if np.any(d < 1):
            raise ValueError("every pair needs at least one stream")
        for c, members in enumerate(clusters.clusters):
            cap = min(m_antennas * len(members), n_antennas)
            if np.any(d[:, c] > cap):
                raise ValueError(f"cluster {c} supports at most {cap} streams")
        return cls(d=d)

    def to_json(self):
        return json.dumps({"d": self.d.tolist()})

    @classmethod
    def from_json(cls, text):
        return cls(d=np.asarray(json.loads(text)["d"], dtype=int))


@dataclass
class BeamformingState:
    """Per-AP precoders plus per-(UE, cluster) combiners and MSE weights."""

    precoders: dict   # (k, l) -> (M, d_kc) complex
    combiners: dict = field(default_factory=dict)  # (k, c) -> (N, d_kc) complex
    weights: dict = field(default_factory=dict)    # (k, c) -> (d_kc, d_kc) complex
    lagrange: dict = field(default_factory=dict)   # l -> last multiplier value
    flags: list = field(default_factory=list)      # numerical warnings


@dataclass
class TraceEntry:
    iteration: int
    sum_rate: float
    objective: float
    max_power: float
    max_lambda: float


@dataclass
class RateReport:
    """Per-stream and per-UE rates in bits per channel use, plus solver trace."""

    stream_rates: np.ndarray   # (K, Lc)
    ue_rates: np.ndarray       # (K,)
    sum_rate: float
    trace: list = field(default_factory=list)   # TraceEntry per outer iteration
    flags: list = field(default_factory=list)
    iterations: int = 0
    block_objectives: list = field(default_factory=list)  # (block, iter, value) when tracked

    def to_json(self):
        doc = {
            "stream_rates": self.stream_rates.tolist(),
            "ue_rates": self.ue_rates.tolist(),
            "sum_rate": self.sum_rate,
            "iterations": self.iterations,
            "flags": list(self.flags),
            "trace": [
                {
                    "iteration": t.iteration,
                    "sum_rate": t.sum_rate,
                    "objective": t.objective,
                    "max_power": t.max_power,
                    "max_lambda": t.max_lambda,
                }
                for t in self.trace
            ],
        }
        return json.dumps(doc, indent=2)

    def stream_csv_rows(self, trial=0):
        rows = []
        k_count, c_count = self.stream_rates.shape
        for k in range(k_count):
            for c in range(c_count):
                rows.append((trial, k, c, self.stream_rates[k, c]))
        return rows


def stack_precoder(state: BeamformingState, clusters: ClusterSet, k, c):
    """Collective precoder of cluster c for UE k (vertical stack, stored AP order)."""
    blocks = [state.precoders[(k, l)] for l in clusters.clusters[c]]
    cols = {b.shape[1] for b in blocks}
    if len(cols) != 1:
        raise ValueError("per-AP precoders of one cluster must share the stream count")
    return np.concatenate(blocks, axis=0)


def per_ap_power(state: BeamformingState, l):
    """Transmit power spent at AP l across all UEs (unit budget)."""
    return float(
        sum(np.sum(np.abs(w) ** 2) for (k, ll), w in state.precoders.items() if ll == l)
    )


def _stacked_precoders(realization, clusters, state):
    return {
        (k, c): stack_precoder(state, clusters, k, c)
        for k in range(realization.num_ues)
        for c in range(clusters.num_clusters)
    }


def _effective_channels(realization, clusters, state, k, stacks=None):
    """X[k', c] = Gbar_kc' @ Wbar_k'c' for all pairs, seen from UE k."""
    if stacks is None:
        stacks = _stacked_precoders(realization, clusters, state)
    eff = {}
    for c, members in enumerate(clusters.clusters):
        gbar = collective_channel(realization, members, k)
        for kp in range(realization.num_ues):
            eff[(kp, c)] = gbar @ stacks[(kp, c)]
    return eff


def received_covariance(realization, clusters, state, k):
    """Covariance of the full received signal at UE k (all streams plus noise)."""
    rho = realization.rho
    n = realization.ue_antennas
    cov = np.eye(n, dtype=complex)
    eff = _effective_channels(realization, clusters, state, k)
    for x in eff.values():
        cov += rho * (x @ x.conj().T)
    return cov


def interference_plus_noise(realization, clusters, state, k, c):
    """Covariance of everything UE k receives except cluster c's stream to it."""
    rho = realization.rho
    n = realization.ue_antennas
    a = np.eye(n, dtype=complex)
    eff = _effective_channels(realization, clusters, state, k)
    for (kp, cp), x in eff.items():
        if kp == k and cp == c:
            continue
        a += rho * (x @ x.conj().T)
    return a


def interference_covariance(realization, clusters, alloc, state, k, c):
    """Decoded-domain interference-plus-noise covariance Vbar^H A Vbar."""
    v = state.combiners[(k, c)]
    a = interference_plus_noise(realization, clusters, state, k, c)
    q = v.conj().T @ a @ v
    return 0.5 * (q + q.conj().T)


def _logdet_hermitian(mat):
    """log2 det of a Hermitian positive definite matrix via Cholesky."""
    chol = np.linalg.cholesky(0.5 * (mat + mat.conj().T))
    return 2.0 * float(np.sum(np.log2(np.abs(np.diag(chol)))))


def _rate_from_parts(rho, v, a, x, k, c):
    """Stream rate from combiner v, interference covariance a and X = Gbar Wbar."""
    h = v.conj().T @ x
    q = v.conj().T @ a @ v
    q = 0.5 * (q + q.conj().T)
    flag = None
    try:
        chol = np.linalg.cholesky(q)
    except np.linalg.LinAlgError:
        flag = f"singular decoded covariance at (k={k}, c={c}); regularized"
        chol = np.linalg.cholesky(q + QBAR_JITTER * np.eye(q.shape[0]))
    # rate = log2 |I + rho H^H Q^{-1} H|, with Q^{-1} applied by Cholesky solves
    y = np.linalg.solve(chol, h)
    arg = np.eye(h.shape[1], dtype=complex) + rho * (y.conj().T @ y)
    return max(0.0, _logdet_hermitian(arg)), flag


def _stream_rate_flagged(realization, clusters, alloc, state, k, c):
    rho = realization.rho
    v = state.combiners[(k, c)]
    gbar = collective_channel(realization, clusters.clusters[c], k)
    x = gbar @ stack_precoder(state, clusters, k, c)
    a = interference_plus_noise(realization, clusters, state, k, c)
    return _rate_from_parts(rho, v, a, x, k, c)


def stream_rate(realization, clusters, alloc, state, k, c):
    """Achievable rate (bpcu) of the stream from cluster c to UE k."""
    rate, _ = _stream_rate_flagged(realization, clusters, alloc, state, k, c)
    return rate


def mmse_combiner(realization, clusters, alloc, state, k, c):
    """Rate-optimal combiner: whitens the received covariance toward the stream."""
    rho = realization.rho
    cov = received_covariance(realization, clusters, state, k)
    gbar = collective_channel(realization, clusters.clusters[c], k)
    x = gbar @ stack_precoder(state, clusters, k, c)
    return np.sqrt(rho) * np.linalg.solve(cov, x)


def whitened_mrc_combiner(realization, clusters, alloc, state, k, c):
    """Matched filter after whitening interference plus noise; same rate as MMSE."""
    rho = realization.rho
    a = interference_plus_noise(realization, clusters, state, k, c)
    gbar = collective_channel(realization, clusters.clusters[c], k)
    x = gbar @ stack_precoder(state, clusters, k, c)
    return np.sqrt(rho) * np.linalg.solve(a, x)


def mmse_whitening_factor(realization, clusters, alloc, state, k, c):
    """Invertible d x d factor B with whitened_mrc = mmse @ B.

    B = I + rho * Wbar^H Gbar^H A^{-1} Gbar Wbar; right-multiplying a combiner
    by an invertible matrix leaves the stream rate unchanged.
    """
    rho = realization.rho
    a = interference_plus_noise(realization, clusters, state, k, c)
    gbar = collective_channel(realization, clusters.clusters[c], k)
    x = gbar @ stack_precoder(state, clusters, k, c)
    d = x.shape[1]
    return np.eye(d, dtype=complex) + rho * (x.conj().T @ np.linalg.solve(a, x))


def sum_rate(realization, clusters, alloc, state) -> RateReport:
    """Aggregate stream rates into per-UE rates and the network sum rate."""
    rho = realization.rho
    k_count = realization.num_ues
    c_count = clusters.num_clusters
    n = realization.ue_antennas
    rates = np.zeros((k_count, c_count))
    flags = list(state.flags)
    stacks = _stacked_precoders(realization, clusters, state)
    for k in range(k_count):
        eff = _effective_channels(realization, clusters, state, k, stacks)
        cov = np.eye(n, dtype=complex)
        for x in eff.values():
            cov += rho * (x @ x.conj().T)
        for c in range(c_count):
            x = eff[(k, c)]
            a = cov - rho * (x @ x.conj().T)
            rates[k, c], flag = _rate_from_parts(rho, state.combiners[(k, c)], a, x, k, c)
            if flag:
                flags.append(flag)
    ue_rates = rates.sum(axis=1)
    return RateReport(
        stream_rates=rates,
        ue_rates=ue_rates,
        sum_rate=float(ue_rates.sum()),
        flags=flags,
    )
