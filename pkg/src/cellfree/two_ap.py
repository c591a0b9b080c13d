# Two APs, one multi-antenna UE: rate comparison of phase-aligned joint
# transmission against strategies that survive phase misalignment
# (per-AP capacity, independent streams with optimal covariances and
# successive cancellation, and fixed rank-one beamformers with zero
# forcing). Covariance problems are solved by monotone projected gradient
# ascent with Barzilai-Borwein steps and backtracking.

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

LOG2 = float(np.log(2.0))
PG_MAX_ITERS = 20000
PG_TOL = 1e-8
PROJ_TOL = 1e-12
ZF_RANK_CUTOFF = 1e-12


class NormMode(str, Enum):
    UNIT = "UNIT"  # all five direction vectors unit norm, exact orthogonality
    IID = "IID"    # transmit-side vectors i.i.d. complex normal, array gain ~ M


class ConvergenceError(RuntimeError):
    """Projected gradient did not reach the requested tolerance."""


@dataclass
class TwoApInstance:
    g1: np.ndarray          # (N, M)
    g2: np.ndarray          # (N, M)
    rho: float
    alpha: float = 0.0
    a: np.ndarray = None    # structured transmit/receive directions, when built
    b: np.ndarray = None
    c: np.ndarray = None
    g: np.ndarray = None
    f: np.ndarray = None


def _random_orthonormal_pair(dim, rng):
    mat = rng.standard_normal((dim, 2)) + 1j * rng.standard_normal((dim, 2))
    q, _ = np.linalg.qr(mat)
    return q[:, 0], q[:, 1]


def _unit(vec):
    return vec / np.linalg.norm(vec)


def example_channels(m_antennas, n_antennas, alpha, norm_mode: NormMode, rng, rho=1.0):
    """Structured channels: AP 1 reaches the UE from one direction, AP 2 from
    the same direction plus a weaker orthogonal one."""
    if m_antennas < 2 or n_antennas < 2:
        raise ValueError("the structured example needs at least two antennas per side")
    g, f = _random_orthonormal_pair(n_antennas, rng)
    if norm_mode == NormMode.UNIT:
        b, c = _random_orthonormal_pair(m_antennas, rng)
        a = _unit(rng.standard_normal(m_antennas) + 1j * rng.standard_normal(m_antennas))
    else:
        a = rng.standard_normal(m_antennas) + 1j * rng.standard_normal(m_antennas)
        b = rng.standard_normal(m_antennas) + 1j * rng.standard_normal(m_antennas)
        c = rng.standard_normal(m_antennas) + 1j * rng.standard_normal(m_antennas)
    g1 = np.outer(g, a.conj())
    g2 = np.outer(g, b.conj()) + alpha * np.outer(f, c.conj())
    return TwoApInstance(g1=g1, g2=g2, rho=rho, alpha=alpha, a=a, b=b, c=c, g=g, f=f)


def _logdet_rate(s):
    """log2 det of a Hermitian PD matrix."""
    chol = np.linalg.cholesky(0.5 * (s + s.conj().T))
    return 2.0 * float(np.sum(np.log2(np.abs(np.diag(chol)))))


def _capped_simplex(values, budget=1.0):
    """Euclidean projection of a real vector onto {x >= 0, sum x <= budget}."""
    clipped = np.maximum(values, 0.0)
    if clipped.sum() <= budget:
        return clipped
    u = np.sort(values)[::-1]
    cssv = np.cumsum(u) - budget
    idx = np.arange(1, len(u) + 1)
    cond = u - cssv / idx > 0
    tau = cssv[cond][-1] / idx[cond][-1]
    return np.maximum(values - tau, 0.0)


def _project_psd_unit_trace(k):
    """Exact projection onto {K >= 0, tr K <= 1} (unitarily invariant set)."""
    vals, vecs = np.linalg.eigh(0.5 * (k + k.conj().T))
    vals = _capped_simplex(vals)
    return (vecs * vals) @ vecs.conj().T


def _project_psd(k):
    vals, vecs = np.linalg.eigh(0.5 * (k + k.conj().T))
    vals = np.maximum(vals, 0.0)
    return (vecs * vals) @ vecs.conj().T


def _block_traces(k, m):
    return (
        float(np.real(np.trace(k[:m, :m]))),
        float(np.real(np.trace(k[m:, m:]))),
    )


def _psd_shift_parts(y, m, mu):
    """Eigendecomposition of y - mu1 E1 - mu2 E2 and its PSD part."""
    shifted = y.copy()
    shifted[:m, :m] -= mu[0] * np.eye(m)
    shifted[m:, m:] -= mu[1] * np.eye(m)
    vals, vecs = np.linalg.eigh(shifted)
    clipped = np.maximum(vals, 0.0)
    proj = (vecs * clipped) @ vecs.conj().T
    return proj, vals, vecs


def _project_block_trace_psd(y, m):
    """Exact projection onto {K PSD, tr K11 <= 1, tr K22 <= 1}.

    By the KKT conditions the projection is the PSD part of
    y - mu1 E1 - mu2 E2 for some multipliers mu >= 0 satisfying
    complementary slackness; the pair is found by a damped semismooth
    Newton iteration on the block-trace residuals, with a monotone
    coordinate-bisection fallback. Returns (projection, mu).
    """
    y = 0.5 * (y + y.conj().T)

    def residual(mu_pair):
        proj, vals, vecs = _psd_shift_parts(y, m, mu_pair)
        traces = np.array(_block_traces(proj, m))
        # complementarity residual -min(mu_i, 1 - t_i); zero exactly at KKT
        r = np.maximum(traces - 1.0, -mu_pair)
        return r, proj, vals, vecs, traces

    mu = np.zeros(2)
    r, proj, vals, vecs, traces = residual(mu)
    if np.all(traces <= 1.0 + PROJ_TOL):
        return proj, np.zeros(2)

    for _ in range(50):
        if max(abs(r[0]), abs(r[1])) <= PROJ_TOL:
            return proj, mu
        # directional derivative of the PSD projection along the block shifts
        lam_plus = np.maximum(vals, 0.0)
        dl = vals[:, None] - vals[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            gamma = np.where(np.abs(dl) > 1e-14, (lam_plus[:, None] - lam_plus[None, :]) / dl,
                             (vals[:, None] > 0).astype(float))
        b1 = vecs[:m, :].conj().T @ vecs[:m, :]
        b2 = vecs[m:, :].conj().T @ vecs[m:, :]
        basis = (b1, b2)
        jac = np.zeros((2, 2))
        for i in range(2):
            if traces[i] - 1.0 >= -mu[i]:  # trace branch of the min
                for j in range(2):
                    jac[i, j] = -float(np.real(np.sum(gamma * basis[j] * basis[i].conj())))
            else:  # multiplier branch
                jac[i, i] = -1.0
        for i in range(2):
            if abs(jac[i, i]) < 1e-14:  # projection locally flat: shrink the multiplier
                jac[i, :] = 0.0
                jac[i, i] = -1.0
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        scale = 1.0
        best = None
        for _ in range(25):
            cand = np.maximum(mu + scale * step, 0.0)
            r_new, proj_new, vals_new, vecs_new, traces_new = residual(cand)
            if max(abs(r_new[0]), abs(r_new[1])) < max(abs(r[0]), abs(r[1])):
                best = (cand, r_new, proj_new, vals_new, vecs_new, traces_new)
                break
            scale *= 0.5
        if best is None:
            break
        mu, r, proj, vals, vecs, traces = best

    if max(abs(r[0]), abs(r[1])) <= PROJ_TOL:
        return proj, mu
    return _bisect_block_trace_psd(y, m, mu)


def _bisect_block_trace_psd(y, m, warm=None):
    """Fallback: alternating 1-D bisections on the two multipliers."""
    mu = np.zeros(2) if warm is None else np.maximum(np.asarray(warm, float), 0.0)
    hi_cap = 2.0 * float(np.max(np.abs(y))) * 2 * m + 2.0
    proj, _, _ = _psd_shift_parts(y, m, mu)
    for _ in range(60):
        t1, t2 = _block_traces(proj, m)
        consistent = (
            t1 <= 1.0 + PROJ_TOL
            and t2 <= 1.0 + PROJ_TOL
            and (mu[0] <= 0.0 or abs(t1 - 1.0) <= 1e-10)
            and (mu[1] <= 0.0 or abs(t2 - 1.0) <= 1e-10)
        )
        if consistent:
            return proj, mu
        for i in range(2):

            def trace_i(mu_i):
                trial = mu.copy()
                trial[i] = mu_i
                p, _, _ = _psd_shift_parts(y, m, trial)
                return _block_traces(p, m)[i]

            if trace_i(0.0) <= 1.0 + PROJ_TOL:
                mu[i] = 0.0
                continue
            lo_i, hi_i = 0.0, hi_cap
            for _ in range(60):
                mid = 0.5 * (lo_i + hi_i)
                if trace_i(mid) > 1.0:
                    lo_i = mid
                else:
                    hi_i = mid
                if hi_i - lo_i <= 1e-13 * max(1.0, hi_i):
                    break
            mu[i] = hi_i
        proj, _, _ = _psd_shift_parts(y, m, mu)
    return proj, mu


def _pg_ascent(objective, gradient, project, k0, tol=PG_TOL, max_iters=PG_MAX_ITERS):
    """Monotone projected gradient ascent with BB steps and backtracking."""
    k = project(k0)
    f = objective(k)
    grad = gradient(k)
    step = 1.0 / max(np.linalg.norm(grad), 1e-12)
    stall = 0
    for _ in range(max_iters):
        trial = step
        while True:
            cand = project(k + trial * grad)
            f_cand = objective(cand)
            if f_cand >= f - 1e-14:
                break
            trial *= 0.5
            if trial < 1e-18:
                cand, f_cand = k, f
                break
        grad_new = gradient(cand)
        dk = cand - k
        dg = grad_new - grad
        denom = abs(np.vdot(dk, dg))
        step = float(np.vdot(dk, dk).real / denom) if denom > 1e-30 else trial * 2.0
        step = min(max(step, 1e-12), 1e12)
        improved = f_cand - f
        k, f, grad = cand, f_cand, grad_new
        if improved <= tol * max(1.0, abs(f)):
            stall += 1
            if stall >= 3:
                return k, f
        else:
            stall = 0
    raise ConvergenceError("projected gradient did not converge")


def aligned_capacity(instance: TwoApInstance):
    """Capacity of the phase-aligned two-AP array under per-AP power limits."""
    rho = instance.rho
    h = np.concatenate([instance.g1, instance.g2], axis=1)
    n, two_m = h.shape
    m = two_m // 2

    def objective(k):
        s = np.eye(n, dtype=complex) + rho * (h @ k @ h.conj().T)
        return _logdet_rate(s)

    def gradient(k):
        s = np.eye(n, dtype=complex) + rho * (h @ k @ h.conj().T)
        return (rho / LOG2) * (h.conj().T @ np.linalg.solve(s, h))

    def project(k):
        return _project_block_trace_psd(k, m)[0]

    k0 = np.eye(two_m, dtype=complex) / m
    _, value = _pg_ascent(objective, gradient, project, k0)
    return value


def sic_rate(instance: TwoApInstance):
    """Independently coded streams with optimal per-AP covariances and
    successive cancellation at the UE."""
    rho = instance.rho
    g1, g2 = instance.g1, instance.g2
    n, m = g1.shape

    def split(k):
        return k[:m, :m], k[m:, m:]

    def objective(k):
        k1, k2 = split(k)
        s = np.eye(n, dtype=complex) + rho * (g1 @ k1 @ g1.conj().T) + rho * (g2 @ k2 @ g2.conj().T)
        return _logdet_rate(s)

    def gradient(k):
        k1, k2 = split(k)
        s = np.eye(n, dtype=complex) + rho * (g1 @ k1 @ g1.conj().T) + rho * (g2 @ k2 @ g2.conj().T)
        out = np.zeros((2 * m, 2 * m), dtype=complex)
        out[:m, :m] = (rho / LOG2) * (g1.conj().T @ np.linalg.solve(s, g1))
        out[m:, m:] = (rho / LOG2) * (g2.conj().T @ np.linalg.solve(s, g2))
        return out

    def project(k):
        k1, k2 = split(k)
        out = np.zeros_like(k)
        out[:m, :m] = _project_psd_unit_trace(k1)
        out[m:, m:] = _project_psd_unit_trace(k2)
        return out

    k0 = np.eye(2 * m, dtype=complex) / m
    _, value = _pg_ascent(objective, gradient, project, k0)
    return value


def single_ap_capacity(g, rho):
    """Waterfilling capacity of one AP under a unit trace constraint."""
    s = np.linalg.svd(g, compute_uv=False)
    gains = rho * s**2
    gains = gains[gains > 0.0]
    if gains.size == 0:
        return 0.0
    order = np.sort(gains)[::-1]
    # largest active set whose water level keeps every power positive
    for active in range(len(order), 0, -1):
        mu = (1.0 + np.sum(1.0 / order[:active])) / active
        powers = mu - 1.0 / order[:active]
        if powers[-1] > 0:
            return float(np.sum(np.log2(1.0 + order[:active] * powers)))
    return 0.0


def best_ap_rate(instance: TwoApInstance):
    """Rate when the UE listens to whichever single AP serves it best."""
    return max(
        single_ap_capacity(instance.g1, instance.rho),
        single_ap_capacity(instance.g2, instance.rho),
    )


def zf_rank1_rate(instance: TwoApInstance, w1, w2):
    """Two rank-one beams separated by a zero-forcing combiner.

    Returns (rate, degenerate): a rank-deficient effective channel cannot be
    inverted, so the rate is reported as zero with the flag raised.
    """
    h = np.stack([instance.g1 @ w1, instance.g2 @ w2], axis=1)
    gram = h.conj().T @ h
    scale = float(np.real(gram[0, 0] * gram[1, 1]))
    det = float(np.abs(np.linalg.det(gram)))
    if det <= ZF_RANK_CUTOFF * max(scale, 1e-300):
        return 0.0, True
    inv_diag = np.real(np.diag(np.linalg.inv(gram)))
    rate = float(np.sum(np.log2(1.0 + instance.rho / inv_diag)))
    return rate, False


STRATEGIES = ("aligned", "sic", "zf_ac", "best_ap", "zf_ab")


def figure1_sweep(rho_grid_db, norm_mode=NormMode.IID, trials=100, m_antennas=16,
                  n_antennas=2, alpha=0.7, rng=None):
    """Mean per-strategy rates over channel draws for each operating power.

    Returns a list of (rho_db, strategy, mean_rate_bpcu) rows covering the
    aligned upper bound, SIC, the two fixed-beam variants and single-AP
    selection.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    rho_grid_db = list(rho_grid_db)
    totals = {(r, s): 0.0 for r in rho_grid_db for s in STRATEGIES}
    for _ in range(trials):
        inst = example_channels(m_antennas, n_antennas, alpha, norm_mode, rng)
        w1 = _unit(inst.a)
        w2c = _unit(inst.c)
        w2b = _unit(inst.b)
        for rho_db in rho_grid_db:
            inst.rho = 10.0 ** (rho_db / 10.0)
            totals[(rho_db, "aligned")] += aligned_capacity(inst)
            totals[(rho_db, "sic")] += sic_rate(inst)
            totals[(rho_db, "best_ap")] += best_ap_rate(inst)
            totals[(rho_db, "zf_ac")] += zf_rank1_rate(inst, w1, w2c)[0]
            totals[(rho_db, "zf_ab")] += zf_rank1_rate(inst, w1, w2b)[0]
    return [
        (rho_db, strat, totals[(rho_db, strat)] / trials)
        for rho_db in rho_grid_db
        for strat in STRATEGIES
    ]
