"""
Tests for the shared-memory builders: pruned trees, PLL, LCC and GLL.
"""

import pytest

from hublab_config import BuildConfig
from hublab_graph import all_pairs_distances, chl_oracle, highest_ranked_hub
from hublab_labels import GlobalLocalTable, HubLabel, Labeling, Side, commit_superstep
from hublab_smp import (
    BuildReport,
    RootCursor,
    clean_labeling,
    gll,
    lcc,
    lcc_phase_one,
    prune_dij_rq,
    redundancy_mask,
    seq_pll,
)

A, B, C = 0, 1, 2


def label_sets(labeling: Labeling):
    return labeling.as_sets()


class TestPrunedTree:
    def test_lowest_root_is_pruned_at_once(self, p3):
        tables = GlobalLocalTable(3, False, p3.r)
        assert prune_dij_rq(p3.g, p3.r, C, tables) == 0

    def test_top_root_labels_everyone(self, p3):
        tables = GlobalLocalTable(3, False, p3.r)
        assert prune_dij_rq(p3.g, p3.r, B, tables) == 2
        assert tables.view(Side.OUT, A) == [HubLabel(B, 1)]
        assert tables.view(Side.OUT, C) == [HubLabel(B, 1)]

    def test_second_root_pruned_by_distance_query(self, p3):
        tables = GlobalLocalTable(3, False, p3.r)
        prune_dij_rq(p3.g, p3.r, B, tables)
        commit_superstep(tables, [True, True])
        assert prune_dij_rq(p3.g, p3.r, A, tables) == 0

    def test_directed_root_builds_both_trees(self, directed_chain):
        tables = GlobalLocalTable(3, True, directed_chain.r)
        # Vertex 0 ranks highest: IN labels from the forward tree, OUT from the reverse.
        prune_dij_rq(directed_chain.g, directed_chain.r, 0, tables)
        assert tables.view(Side.IN, 2) == [HubLabel(0, 2)]
        assert tables.view(Side.OUT, 2) == [HubLabel(0, 5)]


class TestRootCursor:
    def test_pops_in_order_then_none(self):
        cursor = RootCursor([3, 1, 2])
        assert [cursor.pop(), cursor.pop(), cursor.pop(), cursor.pop()] == [3, 1, 2, None]
        assert cursor.exhausted


class TestSequentialPll:
    def test_p3_is_canonical(self, p3):
        assert seq_pll(p3.g, p3.r) == chl_oracle(p3.g, p3.r)

    def test_k2(self, k2):
        labeling = seq_pll(k2.g, k2.r)
        assert labeling.outbound[1] == [HubLabel(0, 5)]
        assert labeling.outbound[0] == []

    def test_diamond_keeps_x_not_r(self, diamond):
        labels_t = seq_pll(diamond.g, diamond.r).outbound[3]
        assert HubLabel(1, 1) in labels_t
        assert HubLabel(0, 2) not in labels_t

    def test_all_fixtures_match_oracle(self, fixtures):
        for name, (g, r) in fixtures.items():
            assert seq_pll(g, r) == chl_oracle(g, r), name


class TestLcc:
    @pytest.mark.parametrize("workers", [1, 3, 8])
    def test_fixtures_are_canonical(self, fixtures, workers):
        cfg = BuildConfig(workers=workers)
        for name, (g, r) in fixtures.items():
            assert lcc(g, r, cfg) == chl_oracle(g, r), name

    def test_random_graph_with_workers(self, make_random):
        g, r = make_random(64, 180, seed=11)
        assert lcc(g, r, BuildConfig(workers=8)) == chl_oracle(g, r)

    def test_report_counts(self, make_random):
        g, r = make_random(40, 100, seed=2)
        report = BuildReport()
        labeling = lcc(g, r, BuildConfig(workers=4), report)
        assert report.labels_kept == labeling.total_labels
        assert report.labels_generated >= report.labels_kept
        assert report.supersteps == 1

    def test_phase_one_covers_and_respects_ranking(self, make_random):
        g, r = make_random(32, 90, seed=5)
        phase_one = lcc_phase_one(g, r, BuildConfig(workers=4))
        dist = all_pairs_distances(g)
        for u in range(g.n):
            hubs = dict(phase_one.outbound[u])
            hubs[u] = 0
            for v in range(g.n):
                hub = highest_ranked_hub(dist, r, u, v)
                if hub is None or u == v:
                    continue
                other = dict(phase_one.outbound[v])
                other[v] = 0
                assert hubs.get(hub) == dist[u][hub]
                assert other.get(hub) == dist[hub][v]

    def test_phase_one_is_a_superset(self, make_random):
        g, r = make_random(32, 90, seed=6)
        phase_one = lcc_phase_one(g, r, BuildConfig(workers=4)).as_sets()[Side.OUT]
        canonical = chl_oracle(g, r).as_sets()[Side.OUT]
        assert all(c <= p for c, p in zip(canonical, phase_one))

    def test_directed_random_graph(self, make_random):
        g, r = make_random(24, 70, seed=4, directed=True)
        assert lcc(g, r, BuildConfig(workers=4)) == chl_oracle(g, r)


class TestGll:
    def test_p3(self, p3):
        assert gll(p3.g, p3.r, BuildConfig(workers=2, alpha=4)) == chl_oracle(p3.g, p3.r)

    def test_huge_alpha_is_one_superstep(self, make_random):
        g, r = make_random(30, 80, seed=9)
        report = BuildReport()
        labeling = gll(g, r, BuildConfig(workers=2, alpha=1e9), report)
        assert report.supersteps == 1
        assert labeling == lcc(g, r, BuildConfig(workers=2))

    def test_alpha_does_not_change_output(self, make_random):
        g, r = make_random(64, 200, seed=12)
        outputs = [gll(g, r, BuildConfig(workers=4, alpha=a)) for a in (2, 4, 8, 32)]
        assert all(o == outputs[0] for o in outputs)
        assert outputs[0] == seq_pll(g, r)

    def test_superstep_callback(self, make_random):
        g, r = make_random(40, 120, seed=1)
        seen = []
        gll(g, r, BuildConfig(workers=1, alpha=1.5), on_superstep=lambda *step: seen.append(step))
        assert len(seen) >= 1
        assert [step[0] for step in seen] == list(range(1, len(seen) + 1))

    def test_directed(self, directed_chain):
        g, r = directed_chain
        assert gll(g, r, BuildConfig(workers=2)) == chl_oracle(g, r)


class TestCleaning:
    def test_spurious_label_removed(self, p3):
        canonical = chl_oracle(p3.g, p3.r)
        noisy = Labeling(3, False, [list(s) for s in canonical.outbound])
        noisy.outbound[C] = [HubLabel(B, 1), HubLabel(A, 2)]
        assert clean_labeling(noisy, p3.r) == canonical

    def test_mask_lines_up_with_label_entries(self, p3):
        noisy = Labeling(3, False, [list(s) for s in chl_oracle(p3.g, p3.r).outbound])
        noisy.outbound[C].append(HubLabel(A, 2))
        entries = list(noisy.iter_labels())
        mask = redundancy_mask(noisy, p3.r, entries, workers=2)
        assert [entry for entry, flag in zip(entries, mask) if flag] == [
            (Side.OUT, C, HubLabel(A, 2))
        ]

    def test_canonical_labels_are_never_redundant(self, make_random):
        g, r = make_random(24, 60, seed=13)
        canonical = chl_oracle(g, r)
        assert not any(redundancy_mask(canonical, r, list(canonical.iter_labels()), workers=3))
