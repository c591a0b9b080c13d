# Phase-aligned AP zones and their reduction to disjoint clusters.
#
# A zone is the set of APs within the reference distance of a given AP
# (zones overlap). Clusters are built by repeatedly consuming the largest
# remaining zone, with channel-energy tie-breaking, so that every AP ends
# up in exactly one cluster. An even-size nearest-neighbor grouping is
# provided as a baseline.

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .geometry import wrap_distance_matrix


@dataclass
class ZoneSet:
    """Per-AP neighbor sets under the reference distance (overlapping)."""

    zones: list  # zones[l] = frozenset of AP indices within D of AP l

    def sizes(self):
        return [len(z) for z in self.zones]


@dataclass
class ClusterSet:
    """Disjoint, nonempty AP index groups covering every AP."""

    clusters: list        # list of tuples of AP indices, each sorted ascending
    cluster_of: np.ndarray  # length-L map AP index -> cluster index

    @property
    def num_clusters(self):
        return len(self.clusters)

    @classmethod
    def from_clusters(cls, clusters, num_aps):
        clusters = [tuple(sorted(c)) for c in clusters]
        cluster_of = np.full(num_aps, -1, dtype=int)
        seen = 0
        for idx, members in enumerate(clusters):
            if not members:
                raise ValueError("empty cluster")
            for l in members:
                if cluster_of[l] != -1:
                    raise ValueError(f"AP {l} assigned to two clusters")
                cluster_of[l] = idx
            seen += len(members)
        if seen != num_aps or np.any(cluster_of < 0):
            raise ValueError("clusters do not cover all APs")
        return cls(clusters=clusters, cluster_of=cluster_of)

    @classmethod
    def singletons(cls, num_aps):
        return cls.from_clusters([(l,) for l in range(num_aps)], num_aps)

    @classmethod
    def single(cls, num_aps):
        return cls.from_clusters([tuple(range(num_aps))], num_aps)

    def max_pairwise_distance(self, ap_positions, side):
        """Largest intra-cluster AP distance; reported because zone membership
        only bounds the distance to the zone center, not the pair diameter."""
        worst = 0.0
        for members in self.clusters:
            if len(members) < 2:
                continue
            pos = np.asarray(ap_positions)[list(members)]
            d = wrap_distance_matrix(pos, pos, side)
            worst = max(worst, float(d.max()))
        return worst

    def to_json(self):
        return json.dumps({"clusters": [list(c) for c in self.clusters]})

    @classmethod
    def from_json(cls, text, num_aps):
        doc = json.loads(text)
        return cls.from_clusters([tuple(c) for c in doc["clusters"]], num_aps)


def build_zones(ap_positions, ref_distance, side) -> ZoneSet:
    """Zone of each AP: all APs within the reference distance on the torus."""
    d = wrap_distance_matrix(ap_positions, ap_positions, side)
    member = d <= ref_distance
    zones = [frozenset(np.nonzero(member[l])[0].tolist()) for l in range(len(ap_positions))]
    return ZoneSet(zones=zones)


def _zone_energy(zone, channels):
    """Total channel energy of the zone's APs over all UEs (tie-break score)."""
    idx = sorted(zone)
    return float(np.sum(np.abs(channels[:, idx]) ** 2))


def cluster_aps(zones: ZoneSet, channels) -> ClusterSet:
    """Reduce overlapping zones to disjoint clusters.

    Repeatedly selects the largest remaining zone (channel-energy tie-break,
    then lowest AP index), removes the selected APs from every zone, and
    finally assigns each still-unclustered AP its own singleton cluster.
    """
    num_aps = len(zones.zones)
    remaining = [set(z) for z in zones.zones]
    clusters = []
    assigned = set()

    while True:
        sizes = [len(z) for z in remaining]
        l_max = max(sizes)
        if l_max <= 1:
            break
        candidates = [l for l in range(num_aps) if sizes[l] == l_max]
        if len(candidates) == 1:
            chosen = candidates[0]
        else:
            energies = [_zone_energy(remaining[l], channels) for l in candidates]
            best = max(energies)
            chosen = next(l for l, e in zip(candidates, energies) if e == best)
        selected = set(remaining[chosen])
        clusters.append(tuple(sorted(selected)))
        assigned |= selected
        for l in range(num_aps):
            remaining[l] -= selected

    # leftover zones are singletons by construction; a single leftover AP can
    # appear in several zones, so clusters are created per AP, not per zone
    assert all(len(z) <= 1 for z in remaining), "multi-AP zone survived the loop"
    leftover = sorted(set().union(*remaining) if remaining else set())
    for l in leftover:
        if l not in assigned:
            clusters.append((l,))
            assigned.add(l)
    return ClusterSet.from_clusters(clusters, num_aps)


def even_distance_clustering(ap_positions, ref_distance, target_size, side) -> ClusterSet:
    """Baseline: equal-size groups of nearest neighbors.

    Each AP in index order seeds a group and absorbs its nearest unassigned
    APs within the reference distance, up to target_size members; APs with no
    in-range neighbors stay alone.
    """
    if target_size < 1:
        raise ValueError("target_size must be >= 1")
    num_aps = len(ap_positions)
    d = wrap_distance_matrix(ap_positions, ap_positions, side)
    unassigned = set(range(num_aps))
    clusters = []
    for seed in range(num_aps):
        if seed not in unassigned:
            continue
        unassigned.discard(seed)
        group = [seed]
        in_range = [l for l in sorted(unassigned) if d[seed, l] <= ref_distance]
        in_range.sort(key=lambda l: (d[seed, l], l))
        for l in in_range[: target_size - 1]:
            group.append(l)
            unassigned.discard(l)
        clusters.append(tuple(sorted(group)))
    return ClusterSet.from_clusters(clusters, num_aps)


def collective_channel(realization, cluster, k):
    """N x (M * |cluster|) channel of one cluster to UE k, blocks in stored order."""
    return np.concatenate([realization.channels[k, l] for l in cluster], axis=1)


def clusters_for_mode(config, realization) -> ClusterSet:
    """Partition selection for the run modes (network-wide, singleton, zone-based, even)."""
    from .config import Mode

    if config.mode == Mode.FC:
        return ClusterSet.single(config.L)
    if config.mode == Mode.FNC:
        return ClusterSet.singletons(config.L)
    if config.mode == Mode.EVEN_CLUSTER:
        return even_distance_clustering(
            realization.ap_positions, config.ref_distance,
            config.even_cluster_size, realization.area_side,
        )
    zones = build_zones(realization.ap_positions, config.ref_distance, realization.area_side)
    return cluster_aps(zones, realization.channels)
