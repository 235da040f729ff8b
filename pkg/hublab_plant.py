"""
PLaNT: shortest path trees that need no prior labels.

Each tree tracks, per vertex, the highest-ranked vertex on the selected
shortest path from the root and emits (root, δ) only where the root itself
is that vertex. The emitted labels are exactly the canonical ones, so trees
are independent and need no cleaning.
"""

import csv
import heapq
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, TextIO, Tuple

from hublab_graph import UNREACHABLE, Graph, Ranking
from hublab_labels import CommonLabelTable, HubLabel, Labeling, Side, sort_by_rank

log = logging.getLogger(__name__)


@dataclass
class PlantTreeResult:
    """
    Labels one tree emitted (vertex, distance) and how much it explored.

    `ancestors` maps each popped vertex to the highest-ranked vertex on its
    shortest paths from the root, endpoints included. It is only filled when
    the tree is planted with `record_ancestors=True`.
    """

    root: int
    labels: List[Tuple[int, int]] = field(default_factory=list)
    explored: int = 0
    reverse: bool = False
    ancestors: Optional[Dict[int, int]] = None

    @property
    def psi(self) -> float:
        return self.explored / max(1, len(self.labels))


def plant_dijkstra(
    g: Graph,
    r: Ranking,
    root: int,
    common: Optional[CommonLabelTable] = None,
    reverse: bool = False,
    early_termination: bool = True,
    record_ancestors: bool = False,
) -> PlantTreeResult:
    """
    Plant one tree from `root` over forward (or reverse) adjacency.

    Weights must be strictly positive: every shortest-path predecessor then
    settles before its successor, so ancestors are final on pop.
    """
    rank = r.rank
    root_rank = rank[root]
    adjacency = g.adjacency(reverse)
    dist: Dict[int, int] = {root: 0}
    ancestor: Dict[int, int] = {root: root}
    done = set()
    heap = [(0, root)]
    cnt = 1  # queued vertices whose ancestor is the root
    result = PlantTreeResult(root=root, reverse=reverse)
    if record_ancestors:
        result.ancestors = {}

    while heap:
        if early_termination and cnt == 0:
            break
        delta, v = heapq.heappop(heap)
        if v in done:
            continue
        done.add(v)
        result.explored += 1
        a_v = ancestor.get(v, v)
        if a_v == root:
            cnt -= 1
        top = v if rank[v] > rank[a_v] else a_v
        if result.ancestors is not None:
            result.ancestors[v] = top
        if v != root:
            # A complete common hub above the root on a shortest path covers
            # v and everything behind it.
            if common is not None and common.certifies(root, v, delta, reverse):
                continue
            if rank[top] <= root_rank:
                result.labels.append((v, delta))
        for u, w in adjacency[v]:
            if u in done:
                continue
            previous = ancestor.get(u, u)
            nd = delta + w
            du = dist.get(u, UNREACHABLE)
            if nd < du:
                ancestor[u] = top if rank[top] > rank[u] else u
                dist[u] = nd
                heapq.heappush(heap, (nd, u))
            elif nd == du:
                ancestor[u] = top if rank[top] > rank[previous] else previous
            else:
                continue
            if ancestor[u] == root and previous != root:
                cnt += 1
            elif ancestor[u] != root and previous == root:
                cnt -= 1
    return result


def plant_root(
    g: Graph,
    r: Ranking,
    root: int,
    common: Optional[CommonLabelTable] = None,
    early_termination: bool = True,
) -> List[PlantTreeResult]:
    """The forward tree, plus the reverse tree on directed graphs"""
    trees = [plant_dijkstra(g, r, root, common, False, early_termination)]
    if g.directed:
        trees.append(plant_dijkstra(g, r, root, common, True, early_termination))
    return trees


def add_tree_labels(labeling: Labeling, tree: PlantTreeResult) -> None:
    """Append a tree's emissions; callers sort once at the end"""
    side = Side.for_tree(tree.reverse)
    for v, d in tree.labels:
        labeling.label_set(side, v).append(HubLabel(tree.root, d))


def sort_labeling(labeling: Labeling, r: Ranking) -> Labeling:
    for side in labeling.sides():
        sets = labeling.label_sets(side)
        for v in range(labeling.n):
            sets[v] = sort_by_rank(sets[v], r)
    return labeling


def plant_all(
    g: Graph,
    r: Ranking,
    common: Optional[CommonLabelTable] = None,
    early_termination: bool = True,
    workers: int = 1,
    trees: Optional[List[PlantTreeResult]] = None,
) -> Labeling:
    """
    Plant every root in rank order and union the emissions.

    Pass a list as `trees` to collect the per-tree results.
    """

    def plant(root: int) -> List[PlantTreeResult]:
        return plant_root(g, r, root, common, early_termination)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="plant") as pool:
            planted = list(pool.map(plant, r.order))
    else:
        planted = [plant(root) for root in r.order]

    labeling = Labeling.empty(g.n, g.directed)
    for per_root in planted:
        for tree in per_root:
            add_tree_labels(labeling, tree)
            if trees is not None:
                trees.append(tree)
    return sort_labeling(labeling, r)


@dataclass
class PsiRecord:
    tree_index: int
    root: int
    rank: int
    explored: int
    labels: int

    @property
    def psi(self) -> float:
        return self.explored / max(1, self.labels)


def psi_trace(g: Graph, r: Ranking) -> List[PsiRecord]:
    """ψ per root in rank order; directed roots sum both trees"""
    trees: List[PlantTreeResult] = []
    plant_all(g, r, trees=trees)
    by_root: Dict[int, PsiRecord] = {}
    for tree in trees:
        if tree.root not in by_root:
            by_root[tree.root] = PsiRecord(
                tree_index=len(by_root),
                root=tree.root,
                rank=r.rank[tree.root],
                explored=0,
                labels=0,
            )
        record = by_root[tree.root]
        record.explored += tree.explored
        record.labels += len(tree.labels)
    return list(by_root.values())


PSI_HEADER = ["tree_index", "root", "rank", "explored", "labels", "psi"]


def write_psi_csv(records: List[PsiRecord], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(PSI_HEADER)
    for rec in records:
        writer.writerow(
            [rec.tree_index, rec.root, rec.rank, rec.explored, rec.labels, f"{rec.psi:.6g}"]
        )
