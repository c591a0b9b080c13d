import numpy as np
import pytest

from cellfree.clustering import (
    ClusterSet,
    ZoneSet,
    build_zones,
    cluster_aps,
    collective_channel,
    even_distance_clustering,
)
from cellfree.config import ScenarioConfig
from cellfree.geometry import generate_realization, wrap_distance

# ten-AP layout with one six-AP neighborhood, a pair, and two isolated APs
# (AP indices are 0-based here; the geometry is the canonical worked example
# with APs 1..10 mapped to 0..9)
TEN_AP_POSITIONS = np.array(
    [
        [2.125, -0.375],   # 1
        [1.125, -2.125],   # 2
        [0.875, 1.875],    # 3
        [-2.375, -1.625],  # 4
        [-1.375, -0.125],  # 5
        [-0.625, 0.375],   # 6
        [-2.375, 1.875],   # 7
        [1.375, -0.375],   # 8
        [1.125, 0.375],    # 9
        [1.625, 1.875],    # 10
    ]
) + 3.0  # shift into the positive quadrant
TEN_AP_SIDE = 20.0  # large enough that wrapping never binds
TEN_AP_REF_DISTANCE = 1.9

EXPECTED_ZONES = {
    0: {0, 7, 8},
    1: {1, 7},
    2: {2, 8, 9},
    3: {3, 4},
    4: {3, 4, 5},
    5: {4, 5, 8},
    6: {6},
    7: {0, 1, 7, 8},
    8: {0, 2, 5, 7, 8, 9},
    9: {2, 8, 9},
}

EXPECTED_CLUSTERS = [{0, 2, 5, 7, 8, 9}, {3, 4}, {1}, {6}]


def _channels(num_ues, num_aps, m=2, n=2, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((num_ues, num_aps, n, m)) + 1j * rng.standard_normal(
        (num_ues, num_aps, n, m)
    )


def _cluster_sets(cs):
    return sorted((frozenset(c) for c in cs.clusters), key=lambda s: (-len(s), min(s)))


class TestZones:
    def test_zero_distance_gives_self_zones(self):
        zs = build_zones(TEN_AP_POSITIONS, 0.0, TEN_AP_SIDE)
        assert zs.zones == [frozenset({l}) for l in range(10)]

    def test_large_distance_gives_full_zones(self):
        zs = build_zones(TEN_AP_POSITIONS, TEN_AP_SIDE, TEN_AP_SIDE)
        assert all(z == frozenset(range(10)) for z in zs.zones)

    def test_worked_example_zones(self):
        zs = build_zones(TEN_AP_POSITIONS, TEN_AP_REF_DISTANCE, TEN_AP_SIDE)
        assert {l: set(z) for l, z in enumerate(zs.zones)} == EXPECTED_ZONES

    def test_symmetry_and_reflexivity_random(self):
        rng = np.random.default_rng(4)
        pos = rng.uniform(0, 500, size=(15, 2))
        zs = build_zones(pos, 180.0, 500.0)
        for l, zone in enumerate(zs.zones):
            assert l in zone
            for lp in zone:
                assert l in zs.zones[lp]


class TestClusterAps:
    def test_worked_example_from_positions(self):
        zs = build_zones(TEN_AP_POSITIONS, TEN_AP_REF_DISTANCE, TEN_AP_SIDE)
        cs = cluster_aps(zs, _channels(3, 10))
        assert [set(c) for c in cs.clusters] == EXPECTED_CLUSTERS

    def test_worked_example_from_injected_zones(self):
        zones = ZoneSet(zones=[frozenset(EXPECTED_ZONES[l]) for l in range(10)])
        cs = cluster_aps(zones, _channels(2, 10, seed=5))
        assert [set(c) for c in cs.clusters] == EXPECTED_CLUSTERS

    def test_first_cluster_has_max_zone_size(self):
        rng = np.random.default_rng(9)
        for trial in range(20):
            pos = rng.uniform(0, 500, size=(12, 2))
            zs = build_zones(pos, 150.0, 500.0)
            cs = cluster_aps(zs, _channels(2, 12, seed=trial))
            assert len(cs.clusters[0]) == max(len(z) for z in zs.zones)

    def test_partition_invariant_random(self):
        rng = np.random.default_rng(2)
        for trial in range(30):
            n_aps = int(rng.integers(2, 16))
            pos = rng.uniform(0, 500, size=(n_aps, 2))
            d = float(rng.uniform(0, 400))
            zs = build_zones(pos, d, 500.0)
            cs = cluster_aps(zs, _channels(2, n_aps, seed=trial))
            members = [l for c in cs.clusters for l in c]
            assert sorted(members) == list(range(n_aps))

    def test_radius_invariant(self):
        rng = np.random.default_rng(8)
        for trial in range(15):
            pos = rng.uniform(0, 500, size=(14, 2))
            d = 160.0
            zs = build_zones(pos, d, 500.0)
            cs = cluster_aps(zs, _channels(2, 14, seed=trial))
            for members in cs.clusters:
                # every cluster is a (possibly shrunk) zone: all members lie
                # within D of the zone center, which need not be a member
                ok = any(
                    all(wrap_distance(pos[center], pos[l], 500.0) <= d + 1e-9 for l in members)
                    for center in range(14)
                )
                assert ok
                assert cs.max_pairwise_distance(pos, 500.0) <= 2 * d + 1e-9

    def test_determinism(self):
        zs = build_zones(TEN_AP_POSITIONS, TEN_AP_REF_DISTANCE, TEN_AP_SIDE)
        ch = _channels(3, 10, seed=13)
        a = cluster_aps(zs, ch)
        b = cluster_aps(zs, ch)
        assert a.clusters == b.clusters

    def test_fnc_limit(self):
        zs = build_zones(TEN_AP_POSITIONS, 0.0, TEN_AP_SIDE)
        cs = cluster_aps(zs, _channels(2, 10))
        assert cs.clusters == [(l,) for l in range(10)]

    def test_fc_limit(self):
        zs = build_zones(TEN_AP_POSITIONS, TEN_AP_SIDE, TEN_AP_SIDE)
        cs = cluster_aps(zs, _channels(2, 10))
        assert cs.clusters == [tuple(range(10))]

    def test_energy_tie_break(self):
        # two disjoint pairs; the selection order must follow channel energy
        pos = np.array([[10.0, 10.0], [11.0, 10.0], [400.0, 400.0], [401.0, 400.0]])
        zs = build_zones(pos, 2.0, 500.0)
        ch = np.zeros((1, 4, 1, 1), dtype=complex)
        ch[0, 2] = 10.0
        ch[0, 3] = 10.0
        cs = cluster_aps(zs, ch)
        assert cs.clusters[0] == (2, 3)
        assert cs.clusters[1] == (0, 1)

    def test_leftover_ap_in_two_zones_not_duplicated(self):
        # line of four APs at unit spacing, threshold 1: after consuming
        # {0,1,2}, AP 3 remains inside two surviving zones
        pos = np.array([[10.0, 10.0], [11.0, 10.0], [12.0, 10.0], [13.0, 10.0]])
        zs = build_zones(pos, 1.0, 500.0)
        ch = np.zeros((1, 4, 1, 1), dtype=complex)
        ch[0, 0] = 3.0  # steer the 3-zone tie toward the zone of AP 1
        cs = cluster_aps(zs, ch)
        members = sorted(l for c in cs.clusters for l in c)
        assert members == [0, 1, 2, 3]
        assert {3} in [set(c) for c in cs.clusters]


class TestEvenDistanceClustering:
    def test_target_one_is_fnc(self):
        cs = even_distance_clustering(TEN_AP_POSITIONS, 5.0, 1, TEN_AP_SIDE)
        assert cs.clusters == [(l,) for l in range(10)]

    def test_zero_distance_is_fnc(self):
        cs = even_distance_clustering(TEN_AP_POSITIONS, 0.0, 4, TEN_AP_SIDE)
        assert cs.clusters == [(l,) for l in range(10)]

    def test_two_tight_groups(self):
        rng = np.random.default_rng(3)
        group_a = rng.uniform(0, 6, size=(5, 2)) + np.array([50.0, 50.0])
        group_b = rng.uniform(0, 6, size=(5, 2)) + np.array([400.0, 400.0])
        pos = np.concatenate([group_a, group_b])
        cs = even_distance_clustering(pos, 20.0, 5, 500.0)
        assert _cluster_sets(cs)[0] == frozenset(range(5))
        assert _cluster_sets(cs)[1] == frozenset(range(5, 10))

    def test_out_of_range_aps_stay_alone(self):
        pos = np.array([[10.0, 10.0], [11.0, 10.0], [250.0, 250.0]])
        cs = even_distance_clustering(pos, 5.0, 3, 500.0)
        assert {(0, 1), (2,)} == set(cs.clusters)


class TestCollectiveChannel:
    @pytest.fixture
    def realization(self):
        cfg = ScenarioConfig(L=4, M=3, K=2, N=2, ref_distance=100.0, seed=3, trials=1)
        return generate_realization(cfg.validate(), 0)

    def test_single_ap_identity(self, realization):
        g = collective_channel(realization, (2,), 1)
        assert np.array_equal(g, realization.channels[1, 2])

    def test_block_layout(self, realization):
        g = collective_channel(realization, (1, 3), 0)
        assert np.array_equal(g[:, :3], realization.channels[0, 1])
        assert np.array_equal(g[:, 3:], realization.channels[0, 3])

    def test_frobenius_additivity(self, realization):
        members = (0, 1, 2)
        g = collective_channel(realization, members, 1)
        total = sum(np.sum(np.abs(realization.channels[1, l]) ** 2) for l in members)
        assert np.sum(np.abs(g) ** 2) == pytest.approx(total, rel=1e-12)


class TestClusterSet:
    def test_rejects_overlap(self):
        with pytest.raises(ValueError):
            ClusterSet.from_clusters([(0, 1), (1, 2)], 3)

    def test_rejects_missing(self):
        with pytest.raises(ValueError):
            ClusterSet.from_clusters([(0, 1)], 3)

    def test_json_round_trip(self):
        cs = ClusterSet.from_clusters([(0, 2), (1,)], 3)
        back = ClusterSet.from_json(cs.to_json(), 3)
        assert back.clusters == cs.clusters

    def test_max_pairwise_distance(self):
        pos = np.array([[0.0, 0.0], [30.0, 0.0], [480.0, 0.0]])
        cs = ClusterSet.from_clusters([(0, 1, 2)], 3)
        # wrap makes AP 2 only 20 m from AP 0; widest pair is 1-2 at 50 m
        assert cs.max_pairwise_distance(pos, 500.0) == pytest.approx(50.0)
