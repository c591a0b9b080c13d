# Network geometry and channel generation on a wrap-around square:
# rejection-sampled AP placement, log-distance path loss, spatially
# correlated shadowing, Rayleigh small-scale fading and noise power.

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .config import (
    ROLE_FADING,
    ROLE_POSITIONS,
    ROLE_SHADOWING,
    ScenarioConfig,
    substream,
)

BOLTZMANN = 1.381e-23   # J/K
NOISE_TEMP_K = 290.0

SHADOW_STD_DB = 4.0         # shadowing standard deviation (dB)
SHADOW_CORR_DIST_M = 9.0    # distance halving the shadowing correlation (m)
DISTANCE_FLOOR_M = 1.0      # path-loss reference distance; shorter links are clamped
MAX_PLACEMENT_ATTEMPTS = 10**6


class PlacementError(RuntimeError):
    """AP density too high for the requested minimum spacing."""


def wrap_distance(p, q, side):
    """Toroidal distance between 2-D points with coordinates in [0, side)."""
    delta = np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float))
    delta = np.minimum(delta, side - delta)
    return float(np.hypot(delta[..., 0], delta[..., 1]))


def wrap_distance_matrix(points_a, points_b, side):
    """Pairwise toroidal distances, shape (len(a), len(b))."""
    a = np.asarray(points_a, dtype=float)[:, None, :]
    b = np.asarray(points_b, dtype=float)[None, :, :]
    delta = np.abs(a - b)
    delta = np.minimum(delta, side - delta)
    return np.hypot(delta[..., 0], delta[..., 1])


def place_network(config: ScenarioConfig, rng):
    """Drop APs with pairwise wrap distance >= min_ap_spacing and UEs uniformly.

    APs are rejection-sampled; a bounded attempt budget turns an infeasible
    density into a PlacementError instead of a hang.
    """
    side = config.area_side
    ap_positions = np.empty((config.L, 2))
    placed = 0
    attempts = 0
    while placed < config.L:
        if attempts >= MAX_PLACEMENT_ATTEMPTS:
            raise PlacementError(
                f"could not place {config.L} APs with spacing "
                f"{config.min_ap_spacing} m in a {side} m square"
            )
        attempts += 1
        cand = rng.uniform(0.0, side, size=2)
        if placed:
            d = wrap_distance_matrix(cand[None, :], ap_positions[:placed], side)
            if d.min() < config.min_ap_spacing:
                continue
        ap_positions[placed] = cand
        placed += 1
    ue_positions = rng.uniform(0.0, side, size=(config.K, 2))
    return ap_positions, ue_positions


def noise_power(bandwidth, noise_figure_db):
    """Thermal noise power k_B * T0 * B * F in watts."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    return BOLTZMANN * NOISE_TEMP_K * bandwidth * 10.0 ** (noise_figure_db / 10.0)


def path_loss_db(distance):
    """Log-distance path loss in dB, referenced to 1 m."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    return -30.5 - 36.7 * np.log10(d)


def shadowing_covariance(ue_positions, side):
    """UE-to-UE shadowing covariance: 4^2 * 2^(-delta/9 m) on the torus."""
    delta = wrap_distance_matrix(ue_positions, ue_positions, side)
    return SHADOW_STD_DB**2 * np.exp2(-delta / SHADOW_CORR_DIST_M)


def sample_shadowing(ue_positions, n_aps, side, rng):
    """K x L shadowing matrix (dB); columns i.i.d. across APs, correlated across UEs."""
    cov = shadowing_covariance(ue_positions, side)
    k = cov.shape[0]
    # co-located UEs make the covariance singular; jitter keeps it factorizable
    chol = np.linalg.cholesky(cov + 1e-9 * np.eye(k))
    return chol @ rng.standard_normal((k, n_aps))


def large_scale(ap_positions, ue_positions, shadow_db, side):
    """Linear large-scale gains beta[k, l] combining path loss and shadowing."""
    d = wrap_distance_matrix(ue_positions, ap_positions, side)
    d = np.maximum(d, DISTANCE_FLOOR_M)
    return 10.0 ** ((path_loss_db(d) + shadow_db) / 10.0)


def sample_channels(beta, m_antennas, n_antennas, rng):
    """(K, L, N, M) Rayleigh channels with per-entry variance beta[k, l]."""
    k, l = beta.shape
    shape = (k, l, n_antennas, m_antennas)
    small = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return np.sqrt(beta)[:, :, None, None] * small


@dataclass
class NetworkRealization:
    """One drop: positions, large-scale gains, channels and normalized power."""

    ap_positions: np.ndarray   # (L, 2) m
    ue_positions: np.ndarray   # (K, 2) m
    beta: np.ndarray           # (K, L) linear
    channels: np.ndarray       # (K, L, N, M) complex
    rho: float                 # tx_power / noise_power
    area_side: float           # m, for downstream toroidal distances

    @property
    def num_ues(self):
        return self.channels.shape[0]

    @property
    def num_aps(self):
        return self.channels.shape[1]

    @property
    def ue_antennas(self):
        return self.channels.shape[2]

    @property
    def ap_antennas(self):
        return self.channels.shape[3]

    def to_json(self):
        doc = {
            "ap_positions": self.ap_positions.tolist(),
            "ue_positions": self.ue_positions.tolist(),
            "beta": self.beta.tolist(),
            "channels_real": self.channels.real.tolist(),
            "channels_imag": self.channels.imag.tolist(),
            "rho": self.rho,
            "area_side": self.area_side,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        channels = np.asarray(doc["channels_real"]) + 1j * np.asarray(doc["channels_imag"])
        return cls(
            ap_positions=np.asarray(doc["ap_positions"], dtype=float),
            ue_positions=np.asarray(doc["ue_positions"], dtype=float),
            beta=np.asarray(doc["beta"], dtype=float),
            channels=channels.astype(complex),
            rho=float(doc["rho"]),
            area_side=float(doc["area_side"]),
        )


def generate_realization(config: ScenarioConfig, trial=0) -> NetworkRealization:
    """Sample one network drop using per-role substreams of (seed, trial)."""
    rng_pos = substream(config.seed, trial, ROLE_POSITIONS)
    rng_shadow = substream(config.seed, trial, ROLE_SHADOWING)
    rng_fade = substream(config.seed, trial, ROLE_FADING)

    side = config.area_side
    ap_positions, ue_positions = place_network(config, rng_pos)
    shadow = sample_shadowing(ue_positions, config.L, side, rng_shadow)
    beta = large_scale(ap_positions, ue_positions, shadow, side)
    channels = sample_channels(beta, config.M, config.N, rng_fade)
    rho = config.tx_power / noise_power(config.bandwidth, config.noise_figure_db)
    return NetworkRealization(ap_positions, ue_positions, beta, channels, rho, side)
