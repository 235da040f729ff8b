"""
Tests for PLaNT trees, the whole-graph planting and the ψ trace.
"""

import io

import pytest

from hublab_graph import (
    UNREACHABLE,
    all_pairs_distances,
    assign_random_weights,
    chl_oracle,
    highest_ranked_hub,
    random_graph,
    rank_by_degree,
)
from hublab_labels import CommonLabelTable
from hublab_plant import (
    PSI_HEADER,
    PsiRecord,
    plant_all,
    plant_dijkstra,
    psi_trace,
    write_psi_csv,
)
from hublab_smp import seq_pll

A, B, C = 0, 1, 2


class TestPlantDijkstra:
    def test_top_root_on_p3(self, p3):
        tree = plant_dijkstra(p3.g, p3.r, B)
        assert sorted(tree.labels) == [(A, 1), (C, 1)]
        assert tree.explored == 3
        assert tree.psi == pytest.approx(1.5)

    def test_early_termination_on_p3(self, p3):
        tree = plant_dijkstra(p3.g, p3.r, A)
        assert tree.labels == []
        assert tree.explored == 1

    def test_without_early_termination_explores_everything(self, p3):
        tree = plant_dijkstra(p3.g, p3.r, A, early_termination=False)
        assert tree.labels == []
        assert tree.explored == 3

    def test_diamond_tie_goes_to_higher_ancestor(self, diamond):
        tree = plant_dijkstra(diamond.g, diamond.r, 0)
        emitted = dict(tree.labels)
        assert 3 not in emitted  # t is reached through x on an equal-length path
        assert emitted == {2: 1}

    def test_reverse_tree(self, directed_chain):
        tree = plant_dijkstra(directed_chain.g, directed_chain.r, 0, reverse=True)
        assert sorted(tree.labels) == [(1, 6), (2, 5)]

    def test_ancestors_not_recorded_by_default(self, p3):
        assert plant_dijkstra(p3.g, p3.r, B).ancestors is None

    def test_diamond_ancestors(self, diamond):
        tree = plant_dijkstra(diamond.g, diamond.r, 0, record_ancestors=True)
        # x outranks r, so it is the top of t's two shortest paths
        assert tree.ancestors == {0: 0, 1: 1, 2: 0, 3: 1}

    @pytest.mark.parametrize("seed", range(6))
    @pytest.mark.parametrize("n, m", [(9, 14), (20, 40), (32, 70)])
    @pytest.mark.parametrize("directed", [False, True])
    def test_ancestor_is_highest_ranked_vertex_on_shortest_paths(self, seed, n, m, directed):
        g = assign_random_weights(random_graph(n, m, seed, directed=directed), seed)
        r = rank_by_degree(g)
        dist = all_pairs_distances(g)
        for root in range(g.n):
            for reverse in (False, True) if directed else (False,):
                tree = plant_dijkstra(
                    g, r, root, early_termination=False, record_ancestors=True, reverse=reverse
                )
                pairs = {v: (v, root) if reverse else (root, v) for v in range(g.n)}
                reached = [v for v, (u, w) in pairs.items() if dist[u][w] != UNREACHABLE]
                assert sorted(tree.ancestors) == reached
                for v, top in tree.ancestors.items():
                    u, w = pairs[v]
                    assert top == highest_ranked_hub(dist, r, u, w), (root, v, reverse)

    def test_common_table_prunes(self, p3):
        common = CommonLabelTable.from_labeling(chl_oracle(p3.g, p3.r), p3.r, eta=1)
        tree = plant_dijkstra(p3.g, p3.r, A, common=common, early_termination=False)
        assert tree.labels == []
        assert tree.explored == 2  # b is certified by the table and c is never reached


class TestPlantAll:
    def test_fixtures_are_canonical(self, fixtures):
        for name, (g, r) in fixtures.items():
            assert plant_all(g, r) == chl_oracle(g, r), name

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_random_graphs_match_pll(self, make_random, seed):
        g, r = make_random(64, 190, seed=seed)
        assert plant_all(g, r, workers=4) == seq_pll(g, r)

    def test_early_termination_does_not_change_labels(self, make_random):
        g, r = make_random(48, 140, seed=21)
        assert plant_all(g, r, early_termination=False) == plant_all(g, r)

    def test_directed_random_graph(self, make_random):
        g, r = make_random(30, 90, seed=3, directed=True)
        assert plant_all(g, r) == chl_oracle(g, r)

    def test_common_table_keeps_output(self, make_random):
        g, r = make_random(40, 120, seed=17)
        canonical = chl_oracle(g, r)
        common = CommonLabelTable.from_labeling(canonical, r, eta=4)
        assert plant_all(g, r, common=common) == canonical

    def test_collects_trees(self, p3):
        trees = []
        plant_all(p3.g, p3.r, trees=trees)
        assert [t.root for t in trees] == [B, A, C]


class TestPsiTrace:
    def test_p3(self, p3):
        records = psi_trace(p3.g, p3.r)
        assert [(rec.root, rec.explored, rec.labels) for rec in records] == [
            (B, 3, 2),
            (A, 1, 0),
            (C, 1, 0),
        ]
        assert records[0].psi == pytest.approx(1.5)

    def test_star_center(self, star):
        assert psi_trace(star.g, star.r)[0].psi == pytest.approx(4 / 3)

    def test_csv(self):
        buffer = io.StringIO()
        write_psi_csv([PsiRecord(0, 5, 9, 4, 3)], buffer)
        lines = buffer.getvalue().splitlines()
        assert lines[0] == ",".join(PSI_HEADER)
        assert lines[1] == "0,5,9,4,3,1.33333"
