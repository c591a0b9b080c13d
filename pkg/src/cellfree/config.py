# Scenario and solver configuration, JSON loading, and seeded RNG substreams.

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from enum import Enum

import numpy as np


class ConfigError(ValueError):
    """Raised when a scenario config is malformed; carries the offending field."""

    def __init__(self, field_name, message):
        self.field_name = field_name
        self.message = message
        super().__init__(f"{field_name}: {message}")


class Mode(str, Enum):
    FC = "FC"                      # single network-wide cluster
    FNC = "FNC"                    # every AP its own cluster
    PCNC = "PCNC"                  # zone-based clustering at the reference distance
    EVEN_CLUSTER = "EVEN_CLUSTER"  # even-size nearest-neighbor clustering baseline


class AllocationRule(str, Enum):
    FIXED = "FIXED"    # constant d for every (UE, cluster) pair
    GREEDY = "GREEDY"  # CINR-ordered greedy search
    EVEN = "EVEN"      # same as FIXED, kept as the named baseline
    RANDOM = "RANDOM"  # i.i.d. uniform on {1..min(M,N)}


class Precoding(str, Enum):
    WMMSE = "WMMSE"
    MR = "MR"


@dataclass
class SolverConfig:
    """Iteration and tolerance knobs for the beamforming solver."""

    max_outer_iters: int = 100
    rate_tol: float = 1e-4        # relative sum-rate change stopping threshold
    bisect_eps: float = 1e-8      # multiplier search interval width
    power_tol: float = 1e-6       # per-AP power feasibility slack
    inner_sweeps: int = 1         # AP-block sweeps per outer iteration
    record_block_objectives: bool = False  # track objective after every block update (slow)

    def validate(self):
        if self.max_outer_iters < 1:
            raise ConfigError("solver.max_outer_iters", "must be >= 1")
        for name in ("rate_tol", "bisect_eps", "power_tol"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"solver.{name}", "must be positive")
        if self.inner_sweeps < 1:
            raise ConfigError("solver.inner_sweeps", "must be >= 1")


@dataclass
class ScenarioConfig:
    """All knobs of one Monte Carlo experiment."""

    L: int                       # access points
    M: int                       # antennas per AP
    K: int                       # user terminals
    N: int                       # antennas per UE
    ref_distance: float          # phase-alignment reference distance D (m)
    area_side: float = 500.0     # wrap-around square side (m)
    min_ap_spacing: float = 50.0  # minimum AP separation (m)
    bandwidth: float = 5e7       # Hz
    noise_figure_db: float = 9.0
    tx_power: float = 1.0        # max AP transmit power (W)
    mode: Mode = Mode.PCNC
    allocation: AllocationRule = AllocationRule.FIXED
    fixed_streams: int | None = None  # d for FIXED/EVEN; None means min(M, N)
    even_cluster_size: int = 2   # target group size for the EVEN_CLUSTER baseline
    precoding: Precoding = Precoding.WMMSE
    seed: int = 0
    trials: int = 100
    solver: SolverConfig = field(default_factory=SolverConfig)

    def validate(self):
        for name in ("L", "M", "K", "N"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(name, "must be a count >= 1")
        if self.area_side <= 0:
            raise ConfigError("area_side", "must be positive")
        if not self.min_ap_spacing < self.area_side:
            raise ConfigError("min_ap_spacing", "must be smaller than area_side")
        if self.tx_power <= 0:
            raise ConfigError("tx_power", "must be positive")
        if self.ref_distance < 0:
            raise ConfigError("ref_distance", "must be nonnegative")
        if self.bandwidth <= 0:
            raise ConfigError("bandwidth", "must be positive")
        if self.trials < 1:
            raise ConfigError("trials", "must be >= 1")
        if self.fixed_streams is not None:
            if not 1 <= self.fixed_streams:
                raise ConfigError("fixed_streams", "must be >= 1")
            if self.fixed_streams > self.N:
                raise ConfigError("fixed_streams", "cannot exceed the UE antenna count")
        if self.even_cluster_size < 1:
            raise ConfigError("even_cluster_size", "must be >= 1")
        self.solver.validate()
        return self

    def streams_per_pair(self):
        """Constant stream count used by FIXED/EVEN allocation."""
        if self.fixed_streams is not None:
            return self.fixed_streams
        return min(self.M, self.N)

    def to_json(self):
        d = asdict(self)
        d["mode"] = self.mode.value
        d["allocation"] = self.allocation.value
        d["precoding"] = self.precoding.value
        return json.dumps(d, indent=2, sort_keys=True)


_ENUM_FIELDS = {"mode": Mode, "allocation": AllocationRule, "precoding": Precoding}

_SCENARIO_FIELDS = {
    "L": int, "M": int, "K": int, "N": int,
    "ref_distance": float, "area_side": float, "min_ap_spacing": float,
    "bandwidth": float, "noise_figure_db": float, "tx_power": float,
    "fixed_streams": int, "even_cluster_size": int, "seed": int, "trials": int,
}

_SOLVER_FIELDS = {
    "max_outer_iters": int, "rate_tol": float, "bisect_eps": float,
    "power_tol": float, "inner_sweeps": int, "record_block_objectives": bool,
}


def scenario_from_dict(doc) -> ScenarioConfig:
    """Build and validate a ScenarioConfig from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config document must be a JSON object")
    kwargs = {}
    for name, value in doc.items():
        if name in ("sweep",):  # sweep block handled by the CLI
            continue
        if name == "solver":
            if not isinstance(value, dict):
                raise ConfigError("solver", "must be a JSON object")
            skw = {}
            for sname, svalue in value.items():
                if sname not in _SOLVER_FIELDS:
                    raise ConfigError(f"solver.{sname}", "unknown field")
                try:
                    skw[sname] = _SOLVER_FIELDS[sname](svalue)
                except (TypeError, ValueError):
                    raise ConfigError(f"solver.{sname}", f"cannot parse {svalue!r}")
            kwargs["solver"] = SolverConfig(**skw)
        elif name in _ENUM_FIELDS:
            try:
                kwargs[name] = _ENUM_FIELDS[name](value)
            except ValueError:
                allowed = ", ".join(m.value for m in _ENUM_FIELDS[name])
                raise ConfigError(name, f"must be one of {{{allowed}}}")
        elif name in _SCENARIO_FIELDS:
            if name == "fixed_streams" and value is None:
                kwargs[name] = None
                continue
            try:
                kwargs[name] = _SCENARIO_FIELDS[name](value)
            except (TypeError, ValueError):
                raise ConfigError(name, f"cannot parse {value!r}")
        else:
            raise ConfigError(name, "unknown field")
    for required in ("L", "M", "K", "N", "ref_distance"):
        if required not in kwargs:
            raise ConfigError(required, "missing required field")
    return ScenarioConfig(**kwargs).validate()


def load_scenario(path) -> ScenarioConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON: {exc}")
    return scenario_from_dict(doc)


# Named substream roles so any trial is reproducible in isolation.
ROLE_POSITIONS = 0
ROLE_SHADOWING = 1
ROLE_FADING = 2
ROLE_SOLVER_INIT = 3
ROLE_ALLOCATION = 4
ROLE_EXAMPLE = 5


def substream(seed, trial, role) -> np.random.Generator:
    """Independent generator for (seed, trial, role); same triple, same stream."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), trial, role]))
