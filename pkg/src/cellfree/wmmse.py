# Sum-rate maximization by block coordinate descent on the weighted-MSE
# surrogate: MMSE combiners, closed-form weight matrices, and per-AP
# precoder blocks solved through a Lagrangian dual with a bisection search
# for the power multiplier. Includes the fixed maximum-ratio precoding
# baseline.

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import ClusterSet, collective_channel
from .config import SolverConfig
from .rates import (
    BeamformingState,
    StreamAllocation,
    TraceEntry,
    interference_plus_noise,
    per_ap_power,
    stack_precoder,
    sum_rate,
)

LN2 = float(np.log(2.0))
EIG_FLOOR = 1e-12      # floor for eigenvalue-regularized solves at lambda = 0
WEIGHT_JITTER = 1e-12  # regularization for a singular weight update
BISECT_MAX_ITERS = 500


class SolverDivergence(RuntimeError):
    """The surrogate objective increased beyond tolerance: implementation bug."""


@dataclass
class LagrangeTerms:
    """Per-(UE, AP) pieces of the dual precoder update.

    The precoder block problem at one AP is quadratic. eigvecs/eigvals
    diagonalize its quadratic coefficient (shared by every UE at that AP),
    affine is the UE-specific linear term, and kernel = eigvecs^H affine
    affine^H eigvecs turns the transmit power into an explicit function of
    the power multiplier.
    """

    eigvecs: np.ndarray   # (M, M) unitary
    eigvals: np.ndarray   # (M,) nonnegative
    affine: np.ndarray    # (M, d_kc)
    kernel: np.ndarray    # (M, M) Hermitian PSD

    @property
    def kernel_diag(self):
        return np.real(np.diag(self.kernel))


class _SolveContext:
    """Geometry-dependent quantities shared by every iteration of one solve."""

    def __init__(self, realization, clusters: ClusterSet):
        self.realization = realization
        self.clusters = clusters
        self.rho = float(realization.rho)
        self.sqrt_rho = float(np.sqrt(realization.rho))
        self.K = realization.num_ues
        self.L = realization.num_aps
        self.N = realization.ue_antennas
        self.M = realization.ap_antennas
        self.Lc = clusters.num_clusters
        self.gbar = {
            (k, c): np.ascontiguousarray(collective_channel(realization, members, k))
            for k in range(self.K)
            for c, members in enumerate(clusters.clusters)
        }
        # AP l sits in cluster ap_cluster[l] at block offset ap_offset[l]
        self.ap_cluster = clusters.cluster_of
        self.ap_offset = np.zeros(self.L, dtype=int)
        for members in clusters.clusters:
            for j, l in enumerate(members):
                self.ap_offset[l] = j


def _joint_offsets(alloc, c):
    """Start column of each UE's block inside cluster c's joint precoder stack."""
    return np.concatenate([[0], np.cumsum(alloc.d[:, c])]).astype(int)


def init_precoders(realization, clusters, alloc: StreamAllocation, rng) -> BeamformingState:
    """Feasible start: perturbed matched-filter directions at exactly full power."""
    m = realization.ap_antennas
    precoders = {}
    for l in range(realization.num_aps):
        c = clusters.cluster_of[l]
        for k in range(realization.num_ues):
            d = int(alloc.d[k, c])
            _, _, vh = np.linalg.svd(realization.channels[k, l], full_matrices=True)
            v = vh.conj().T  # (M, M) right singular basis
            if d <= m:
                w = v[:, :d].astype(complex)
            else:
                extra = rng.standard_normal((m, d - m)) + 1j * rng.standard_normal((m, d - m))
                w = np.concatenate([v, extra / np.sqrt(2 * m)], axis=1)
            noise = rng.standard_normal(w.shape) + 1j * rng.standard_normal(w.shape)
            precoders[(k, l)] = w + 0.1 * noise / np.sqrt(2 * m)
    state = BeamformingState(precoders=precoders)
    for l in range(realization.num_aps):
        scale = 1.0 / np.sqrt(per_ap_power(state, l))
        for k in range(realization.num_ues):
            state.precoders[(k, l)] = state.precoders[(k, l)] * scale
    return state


def mr_precoder(realization, clusters, alloc: StreamAllocation) -> BeamformingState:
    """Fixed beamforming baseline: dominant right singular vectors of each
    local channel, equal power per stream at every AP, MMSE combiners."""
    m = realization.ap_antennas
    precoders = {}
    for l in range(realization.num_aps):
        c = clusters.cluster_of[l]
        streams_at_l = int(np.sum(alloc.d[:, c]))
        for k in range(realization.num_ues):
            d = int(alloc.d[k, c])
            _, _, vh = np.linalg.svd(realization.channels[k, l], full_matrices=True)
            v = vh.conj().T
            cols = [v[:, i % m] for i in range(d)]  # cycle if d exceeds the basis
            w = np.stack(cols, axis=1).astype(complex)
            precoders[(k, l)] = w / np.sqrt(streams_at_l)
    state = BeamformingState(precoders=precoders)
    ctx = _SolveContext(realization, clusters)
    _refresh_combiners_weights(ctx, alloc, state)
    return state


def mse_matrix(state, realization, clusters, alloc, k, c):
    """Error covariance of the stream estimate when the stored combiner is the
    receive matrix; equals the inverse weight at the MMSE point."""
    rho = realization.rho
    u = state.combiners[(k, c)]
    gbar = collective_channel(realization, clusters.clusters[c], k)
    x = gbar @ stack_precoder(state, clusters, k, c)
    d = x.shape[1]
    resid = np.eye(d, dtype=complex) - np.sqrt(rho) * (u.conj().T @ x)
    a = interference_plus_noise(realization, clusters, state, k, c)
    e = resid @ resid.conj().T + u.conj().T @ a @ u
    return 0.5 * (e + e.conj().T)


def update_weights(state, realization, clusters, alloc):
    """Weight update: inverse of (I - sqrt(rho) V^H Gbar Wbar), symmetrized."""
    rho = realization.rho
    for k in range(realization.num_ues):
        for c in range(clusters.num_clusters):
            v = state.combiners[(k, c)]
            gbar = collective_channel(realization, clusters.clusters[c], k)
            x = gbar @ stack_precoder(state, clusters, k, c)
            state.weights[(k, c)] = _weight_from_parts(state, np.sqrt(rho), v, x, k, c)
    return state


def _weight_from_parts(state, sqrt_rho, v, x, k, c):
    d = x.shape[1]
    mat = np.eye(d, dtype=complex) - sqrt_rho * (v.conj().T @ x)
    try:
        cbar = np.linalg.inv(mat)
    except np.linalg.LinAlgError:
        state.flags.append(f"singular weight update at (k={k}, c={c}); regularized")
        cbar = np.linalg.inv(mat + WEIGHT_JITTER * np.eye(d))
    return 0.5 * (cbar + cbar.conj().T)


def weighted_mse_objective(state, realization, clusters, alloc):
    """Weighted-MSE surrogate sum tr(C E) - ln|C| in nats.

    The natural-log form is what every block update minimizes exactly, so its
    monotone decrease certifies the descent steps. At freshly updated
    combiners and weights it equals sum(d_kc) - ln(2) * sum rate.
    """
    total = 0.0
    for k in range(realization.num_ues):
        for c in range(clusters.num_clusters):
            cbar = state.weights[(k, c)]
            e = mse_matrix(state, realization, clusters, alloc, k, c)
            _, logdet = np.linalg.slogdet(cbar)
            total += float(np.real(np.trace(cbar @ e))) - float(logdet)
    return total


def _refresh_combiners_weights(ctx: _SolveContext, alloc, state: BeamformingState):
    """MMSE combiner plus weight update for every pair; returns per-pair rates."""
    rho, sqrt_rho = ctx.rho, ctx.sqrt_rho
    rates = np.zeros((ctx.K, ctx.Lc))
    joint = {}
    offsets = {}
    for c in range(ctx.Lc):
        joint[c] = np.concatenate(
            [stack_precoder(state, ctx.clusters, k, c) for k in range(ctx.K)], axis=1
        )
        offsets[c] = _joint_offsets(alloc, c)
    for k in range(ctx.K):
        cov = np.eye(ctx.N, dtype=complex)
        y = {}
        for c in range(ctx.Lc):
            y[c] = ctx.gbar[(k, c)] @ joint[c]
            cov += rho * (y[c] @ y[c].conj().T)
        for c in range(ctx.Lc):
            start, stop = offsets[c][k], offsets[c][k + 1]
            x = y[c][:, start:stop]
            v = sqrt_rho * np.linalg.solve(cov, x)
            state.combiners[(k, c)] = v
            cbar = _weight_from_parts(state, sqrt_rho, v, x, k, c)
            state.weights[(k, c)] = cbar
            chol = np.linalg.cholesky(cbar)
            rates[k, c] = max(0.0, 2.0 * float(np.sum(np.log2(np.abs(np.diag(chol))))))
    return rates


def _cluster_quadratics(ctx: _SolveContext, state):
    """Per-cluster stacked quadratic coefficients R_c = sum_k Gbar^H Msum_k Gbar.

    The (j, j') M x M block of R_c couples APs l_j and l_j' of cluster c; all
    blocks depend only on combiners and weights, so they stay fixed during a
    precoder sweep.
    """
    msum = []
    for k in range(ctx.K):
        acc = np.zeros((ctx.N, ctx.N), dtype=complex)
        for c in range(ctx.Lc):
            v = state.combiners[(k, c)]
            acc += v @ state.weights[(k, c)] @ v.conj().T
        msum.append(acc)
    quads = {}
    for c in range(ctx.Lc):
        size = ctx.gbar[(0, c)].shape[1]
        r = np.zeros((size, size), dtype=complex)
        for k in range(ctx.K):
            g = ctx.gbar[(k, c)]
            r += g.conj().T @ msum[k] @ g
        quads[c] = 0.5 * (r + r.conj().T)
    return quads


def _ap_terms(ctx: _SolveContext, state, alloc, l, quads=None):
    """LagrangeTerms for every UE at AP l, sharing one eigendecomposition."""
    if quads is None:
        quads = _cluster_quadratics(ctx, state)
    rho, sqrt_rho = ctx.rho, ctx.sqrt_rho
    m = ctx.M
    c = int(ctx.ap_cluster[l])
    members = ctx.clusters.clusters[c]
    j = int(ctx.ap_offset[l])
    rc = quads[c]
    sl = slice(j * m, (j + 1) * m)
    quad = rho * rc[sl, sl]
    eigvals, eigvecs = np.linalg.eigh(quad)
    eigvals = np.maximum(eigvals, 0.0)
    terms = []
    for k in range(ctx.K):
        g_kl = ctx.realization.channels[k, l]
        v = state.combiners[(k, c)]
        affine = sqrt_rho * (g_kl.conj().T @ (v @ state.weights[(k, c)]))
        for jp, lp in enumerate(members):
            if lp == l:
                continue
            slp = slice(jp * m, (jp + 1) * m)
            affine = affine - rho * (rc[sl, slp] @ state.precoders[(k, lp)])
        u = eigvecs.conj().T @ affine
        kernel = u @ u.conj().T
        terms.append(
            LagrangeTerms(eigvecs=eigvecs, eigvals=eigvals, affine=affine, kernel=kernel)
        )
    return terms


def lambda_terms(state, realization, clusters, alloc, k, l) -> LagrangeTerms:
    """Dual-update terms for UE k at AP l (reference path; the solver shares
    the eigendecomposition across UEs at the same AP)."""
    ctx = _SolveContext(realization, clusters)
    return _ap_terms(ctx, state, alloc, l)[k]


def power_of_lambda(terms, lam) -> float:
    """AP transmit power of the closed-form precoders at multiplier lam.

    Returns +inf when lam = 0 meets a zero eigenvalue carrying energy, which
    the bisection treats as an infeasible lower endpoint.
    """
    total = 0.0
    for t in terms:
        denom = t.eigvals + lam
        tk = t.kernel_diag
        zero = denom <= 0.0
        if np.any(zero & (tk > 0.0)):
            return float("inf")
        safe = ~zero
        total += float(np.sum(tk[safe] / denom[safe] ** 2))
    return total


def _stacked_power_parts(terms):
    tflat = np.concatenate([t.kernel_diag for t in terms])
    sflat = np.concatenate([t.eigvals for t in terms])
    return tflat, sflat


def bisect_lambda(terms, eps, power_gap_tol=1e-6):
    """Smallest nonnegative multiplier putting the AP power at the unit budget.

    Maintains a bracket [lb, ub] with power(lb) >= 1 >= power(ub); the upper
    start sqrt(sum kernel_diag) is feasible by construction. Returns the
    feasible endpoint once the bracket is narrower than eps (relative above 1)
    and the bracket's power gap is below power_gap_tol.
    """
    tflat, sflat = _stacked_power_parts(terms)
    keep = tflat > 0.0
    tflat, sflat = tflat[keep], sflat[keep]
    if tflat.size == 0:
        return 0.0

    def power(lam):
        denom = sflat + lam
        if np.any(denom <= 0.0):
            return float("inf")
        return float(np.sum(tflat / denom**2))

    p0 = power(0.0)
    if p0 <= 1.0:
        return 0.0
    lb, p_lb = 0.0, p0
    ub = float(np.sqrt(np.sum(tflat)))
    p_ub = power(ub)
    for _ in range(BISECT_MAX_ITERS):
        width_ok = (ub - lb) <= eps * max(1.0, lb)
        gap_ok = np.isfinite(p_lb) and (p_lb - p_ub) <= power_gap_tol
        if width_ok and gap_ok:
            break
        mid = 0.5 * (lb + ub)
        if np.isfinite(p_lb) and np.isfinite(p_ub) and p_lb > p_ub:
            # regula falsi candidate, kept only if it lands inside the bracket
            cand = lb + (p_lb - 1.0) * (ub - lb) / (p_lb - p_ub)
            if lb < cand < ub:
                mid = cand
        # guard against endpoint stagnation of regula falsi
        mid = min(max(mid, lb + 0.25 * (ub - lb)), ub - 0.25 * (ub - lb))
        p_mid = power(mid)
        if p_mid >= 1.0:
            lb, p_lb = mid, p_mid
        else:
            ub, p_ub = mid, p_mid
    return ub


def update_precoder_block(state, realization, clusters, alloc, k, l, lam):
    """Closed-form precoder for UE k at AP l at a given multiplier."""
    terms = lambda_terms(state, realization, clusters, alloc, k, l)
    return _block_from_terms(terms, lam)


def _block_from_terms(t: LagrangeTerms, lam):
    denom = np.maximum(t.eigvals + lam, EIG_FLOOR)
    u = t.eigvecs.conj().T @ t.affine
    return t.eigvecs @ (u / denom[:, None])


def _sweep_precoders(ctx: _SolveContext, state, alloc, eps, power_gap_tol):
    """One ascending pass of per-AP block updates; returns the largest multiplier."""
    quads = _cluster_quadratics(ctx, state)
    max_lambda = 0.0
    for l in range(ctx.L):
        terms = _ap_terms(ctx, state, alloc, l, quads)
        lam = bisect_lambda(terms, eps, power_gap_tol)
        state.lagrange[l] = lam
        max_lambda = max(max_lambda, lam)
        for k in range(ctx.K):
            state.precoders[(k, l)] = _block_from_terms(terms[k], lam)
    return max_lambda


def update_combiners(state, realization, clusters, alloc):
    """Combiner step alone: set every combiner to its MMSE value."""
    from .rates import mmse_combiner

    for k in range(realization.num_ues):
        for c in range(clusters.num_clusters):
            state.combiners[(k, c)] = mmse_combiner(realization, clusters, alloc, state, k, c)
    return state


def wmmse_solve(realization, clusters, alloc, solver_cfg: SolverConfig = None, rng=None,
                state=None):
    """Alternating combiner/weight/precoder optimization of the sum rate.

    Returns the final feasible beamforming state and a rate report whose trace
    carries (sum rate, surrogate objective, max per-AP power, max multiplier)
    per outer iteration. The sum-rate sequence in the trace is evaluated at
    freshly updated combiners, where it is provably non-decreasing; the
    surrogate objective (natural-log weighted MSE) is non-increasing across
    every block update.
    """
    cfg = solver_cfg or SolverConfig()
    if rng is None:
        rng = np.random.default_rng(0)
    ctx = _SolveContext(realization, clusters)
    if state is None:
        state = init_precoders(realization, clusters, alloc, rng)
    track = cfg.record_block_objectives
    block_objectives = []
    if track and not state.weights:
        for k in range(ctx.K):
            for c in range(ctx.Lc):
                d = int(alloc.d[k, c])
                state.weights[(k, c)] = np.eye(d, dtype=complex)
                state.combiners[(k, c)] = np.zeros((ctx.N, d), dtype=complex)

    gap_tol = min(1e-6, cfg.power_tol)
    trace = []
    prev_rate = None
    prev_obj = np.inf
    converged = False

    def tol(ref):
        return 1e-8 * max(1.0, abs(ref))

    for it in range(1, cfg.max_outer_iters + 1):
        if track:
            update_combiners(state, realization, clusters, alloc)
            obj_v = weighted_mse_objective(state, realization, clusters, alloc)
            block_objectives.append(("V", it, obj_v))
            update_weights(state, realization, clusters, alloc)
            obj_c = weighted_mse_objective(state, realization, clusters, alloc)
            block_objectives.append(("C", it, obj_c))
            rates = np.zeros((ctx.K, ctx.Lc))
            for k in range(ctx.K):
                for c in range(ctx.Lc):
                    chol = np.linalg.cholesky(state.weights[(k, c)])
                    rates[k, c] = max(0.0, 2.0 * float(np.sum(np.log2(np.abs(np.diag(chol))))))
        else:
            rates = _refresh_combiners_weights(ctx, alloc, state)
        rate_now = float(rates.sum())
        objective = float(np.sum(alloc.d)) - LN2 * rate_now
        if objective > prev_obj + tol(prev_obj):
            raise SolverDivergence(
                f"objective increased from {prev_obj:.12g} to {objective:.12g} at iteration {it}"
            )
        prev_obj = objective
        if prev_rate is not None and abs(rate_now - prev_rate) <= cfg.rate_tol * max(prev_rate, 1e-12):
            last = trace[-1]
            trace.append(TraceEntry(it, rate_now, objective, last.max_power, last.max_lambda))
            converged = True
            break
        max_lambda = 0.0
        for _ in range(cfg.inner_sweeps):
            max_lambda = _sweep_precoders(ctx, state, alloc, cfg.bisect_eps, gap_tol)
        if track:
            obj_w = weighted_mse_objective(state, realization, clusters, alloc)
            block_objectives.append(("W", it, obj_w))
            if obj_w > prev_obj + tol(prev_obj):
                raise SolverDivergence(
                    f"precoder sweep raised the objective to {obj_w:.12g} at iteration {it}"
                )
            prev_obj = obj_w
        max_power = max(per_ap_power(state, l) for l in range(ctx.L))
        trace.append(TraceEntry(it, rate_now, objective, max_power, max_lambda))
        prev_rate = rate_now

    if not converged:
        _refresh_combiners_weights(ctx, alloc, state)
    report = sum_rate(realization, clusters, alloc, state)
    report.trace = trace
    report.iterations = len(trace)
    report.block_objectives = block_objectives
    return state, report
