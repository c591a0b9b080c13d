# Monte Carlo harness: builds clusters and allocations per run mode, solves
# seeded trials, and aggregates figure-ready statistics. Per-trial substreams
# make every trial reproducible in isolation and common across sweep points.

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .allocation import even_allocation, greedy_allocate, random_allocation
from .clustering import clusters_for_mode
from .config import (
    ROLE_ALLOCATION,
    ROLE_SOLVER_INIT,
    AllocationRule,
    Precoding,
    ScenarioConfig,
    substream,
)
from .geometry import PlacementError, generate_realization, noise_power
from .rates import StreamAllocation, sum_rate
from .wmmse import SolverDivergence, mr_precoder, wmmse_solve

PERCENTILES = (5, 25, 50, 75, 95)
SWEEP_AXES = ("D", "L", "M", "N", "rho_db")
CSV_HEADER = "axis_value,mode,mean_sum_rate,stderr,trials"


def _fmt(x):
    return f"{x:.9g}"


@dataclass
class TrialRecord:
    trial: int
    seed: int
    num_clusters: int
    sum_rate: float
    ue_rates: list
    iterations: int
    wall_time_s: float   # in-memory only; excluded from serialized output
    error: str = ""
    flags: list = field(default_factory=list)


@dataclass
class ExperimentResult:
    per_trial: list
    aggregate: dict
    metadata: dict

    def to_json(self, include_timings=False):
        trials = []
        for rec in self.per_trial:
            doc = dataclasses.asdict(rec)
            if not include_timings:
                doc.pop("wall_time_s")
            trials.append(doc)
        return json.dumps(
            {"per_trial": trials, "aggregate": self.aggregate, "metadata": self.metadata},
            indent=2,
            sort_keys=True,
        )


def aggregate_records(records):
    """Mean, standard error and per-UE percentiles from per-trial records."""
    good = [r for r in records if not r.error]
    sums = np.array([r.sum_rate for r in good], dtype=float)
    ue = np.concatenate([np.asarray(r.ue_rates, dtype=float) for r in good]) if good else np.array([])
    mean = float(sums.mean()) if sums.size else float("nan")
    stderr = float(sums.std(ddof=1) / np.sqrt(sums.size)) if sums.size > 1 else 0.0
    return {
        "mean_sum_rate": mean,
        "stderr": stderr,
        "trials": len(records),
        "failed_trials": len(records) - len(good),
        "ue_rate_percentiles": {
            str(p): (float(np.percentile(ue, p)) if ue.size else float("nan"))
            for p in PERCENTILES
        },
    }


def build_allocation(config: ScenarioConfig, realization, clusters, trial) -> StreamAllocation:
    """Allocation for the configured rule; constant allocations are clipped to
    each cluster's stream capacity so every mode/d combination stays valid."""
    k, lc = config.K, clusters.num_clusters
    if config.allocation in (AllocationRule.FIXED, AllocationRule.EVEN):
        d = config.streams_per_pair()
        alloc = even_allocation(k, lc, 1)
        for c, members in enumerate(clusters.clusters):
            alloc.d[:, c] = min(d, config.M * len(members), config.N)
        return alloc
    if config.allocation == AllocationRule.RANDOM:
        rng = substream(config.seed, trial, ROLE_ALLOCATION)
        return random_allocation(k, lc, config.M, config.N, rng)
    init_seed = int(substream(config.seed, trial, ROLE_ALLOCATION).integers(2**62))
    d_min = np.ones((k, lc), dtype=int)
    return greedy_allocate(realization, clusters, d_min, config.solver, seed=init_seed)


def run_trial(config: ScenarioConfig, trial) -> TrialRecord:
    """One seeded drop: realization, clusters, allocation, solve, record."""
    start = time.perf_counter()
    try:
        realization = generate_realization(config, trial)
        clusters = clusters_for_mode(config, realization)
        alloc = build_allocation(config, realization, clusters, trial)
        alloc = StreamAllocation.validated(alloc.d, clusters, config.M, config.N)
        if config.precoding == Precoding.MR:
            state = mr_precoder(realization, clusters, alloc)
            report = sum_rate(realization, clusters, alloc, state)
        else:
            rng = substream(config.seed, trial, ROLE_SOLVER_INIT)
            _, report = wmmse_solve(realization, clusters, alloc, config.solver, rng)
        return TrialRecord(
            trial=trial,
            seed=config.seed,
            num_clusters=clusters.num_clusters,
            sum_rate=report.sum_rate,
            ue_rates=[float(r) for r in report.ue_rates],
            iterations=report.iterations,
            wall_time_s=time.perf_counter() - start,
            flags=list(report.flags),
        )
    except (SolverDivergence, PlacementError, np.linalg.LinAlgError, ValueError) as exc:
        return TrialRecord(
            trial=trial,
            seed=config.seed,
            num_clusters=0,
            sum_rate=float("nan"),
            ue_rates=[],
            iterations=0,
            wall_time_s=time.perf_counter() - start,
            error=f"{type(exc).__name__}: {exc}",
        )


def run_scenario(config: ScenarioConfig) -> ExperimentResult:
    """All trials of one scenario; solver failures are recorded, not raised."""
    config.validate()
    records = [run_trial(config, t) for t in range(config.trials)]
    return ExperimentResult(
        per_trial=records,
        aggregate=aggregate_records(records),
        metadata={"config": json.loads(config.to_json()), "version": __version__},
    )


def _config_for_axis_value(config: ScenarioConfig, axis, value):
    if axis == "D":
        return dataclasses.replace(config, ref_distance=float(value))
    if axis == "L":
        return dataclasses.replace(config, L=int(value))
    if axis == "M":
        return dataclasses.replace(config, M=int(value))
    if axis == "N":
        return dataclasses.replace(config, N=int(value))
    if axis == "rho_db":
        sigma2 = noise_power(config.bandwidth, config.noise_figure_db)
        return dataclasses.replace(config, tx_power=sigma2 * 10.0 ** (float(value) / 10.0))
    raise ValueError(f"axis must be one of {SWEEP_AXES}")


def sweep(config: ScenarioConfig, axis, values):
    """run_scenario per axis value with the shared base seed (common random
    numbers across points); returns CSV-ready rows."""
    rows = []
    for value in values:
        result = run_scenario(_config_for_axis_value(config, axis, value))
        rows.append(
            (
                float(value),
                config.mode.value,
                result.aggregate["mean_sum_rate"],
                result.aggregate["stderr"],
                config.trials,
            )
        )
    return rows


def sweep_csv(rows):
    lines = [CSV_HEADER]
    for value, mode, mean, stderr, trials in rows:
        lines.append(f"{_fmt(value)},{mode},{_fmt(mean)},{_fmt(stderr)},{trials}")
    return "\n".join(lines) + "\n"
