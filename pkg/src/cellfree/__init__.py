"""Downlink cell-free massive MIMO with phase-misaligned access points:
channel simulation, phase-aligned AP clustering, weighted-MMSE precoding
and combining under per-AP power limits, greedy stream allocation, and a
seeded Monte Carlo experiment harness."""

__version__ = "0.1.0"

from .config import (  # noqa: F401
    AllocationRule,
    ConfigError,
    Mode,
    Precoding,
    ScenarioConfig,
    SolverConfig,
    load_scenario,
    scenario_from_dict,
    substream,
)
from .geometry import NetworkRealization, generate_realization, noise_power  # noqa: F401
from .clustering import (  # noqa: F401
    ClusterSet,
    ZoneSet,
    build_zones,
    cluster_aps,
    clusters_for_mode,
    collective_channel,
    even_distance_clustering,
)
from .rates import BeamformingState, RateReport, StreamAllocation, sum_rate  # noqa: F401
from .wmmse import mr_precoder, wmmse_solve  # noqa: F401
from .allocation import (  # noqa: F401
    cinr_matrix,
    even_allocation,
    greedy_allocate,
    random_allocation,
)
