"""
Shared-memory CHL builders: sequential PLL, LCC (construct then clean) and
GLL (construct and clean in supersteps of about α·n labels).

Workers are threads sharing one GlobalLocalTable. Roots are handed out in
descending rank order through a single shared cursor.
"""

import heapq
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

from hublab_config import BuildConfig
from hublab_graph import UNREACHABLE, Graph, Ranking
from hublab_labels import (
    CommonLabelTable,
    GlobalLocalTable,
    HubLabel,
    LabelEntry,
    Labeling,
    Side,
    build_root_index,
    cleaning_sets,
    commit_superstep,
    dq,
    dq_clean,
)

log = logging.getLogger(__name__)


@dataclass
class BuildReport:
    """Counters of one build run"""

    labels_generated: int = 0
    labels_kept: int = 0
    supersteps: int = 0
    seconds: float = 0.0


class RootCursor:
    """Atomically pops the highest-ranked remaining root"""

    def __init__(self, roots: Sequence[int]):
        self._roots = list(roots)
        self._next = 0
        self._lock = threading.Lock()

    def pop(self) -> Optional[int]:
        with self._lock:
            if self._next >= len(self._roots):
                return None
            root = self._roots[self._next]
            self._next += 1
            return root

    @property
    def exhausted(self) -> bool:
        with self._lock:
            return self._next >= len(self._roots)


def _pruned_tree(
    g: Graph,
    r: Ranking,
    root: int,
    tables: GlobalLocalTable,
    reverse: bool,
    common: Optional[CommonLabelTable],
) -> int:
    """One pruned Dijkstra; returns the number of labels appended"""
    rank = r.rank
    root_rank = rank[root]
    side = Side.for_tree(reverse)
    root_index = build_root_index(root, tables.view(side.opposite, root))
    adjacency = g.adjacency(reverse)
    # Dict-backed state touches only vertices this tree reached.
    dist: Dict[int, int] = {root: 0}
    done = set()
    heap = [(0, root)]
    added = 0
    while heap:
        delta, v = heapq.heappop(heap)
        if v in done:
            continue
        done.add(v)
        if v != root:
            if rank[v] > root_rank:
                continue  # Rank-Query
            if dq(v, root, delta, root_index, tables.view(side, v)):
                continue
            if common is not None and common.certifies(root, v, delta, reverse):
                continue
            tables.append_local(side, v, HubLabel(root, delta))
            added += 1
        for u, w in adjacency[v]:
            nd = delta + w
            if nd < dist.get(u, UNREACHABLE):
                dist[u] = nd
                heapq.heappush(heap, (nd, u))
    return added


def prune_dij_rq(
    g: Graph,
    r: Ranking,
    root: int,
    tables: GlobalLocalTable,
    common: Optional[CommonLabelTable] = None,
) -> int:
    """
    Pruned Dijkstra with Rank Queries from `root`, appending (root, δ) labels
    to the local table. Directed graphs get a forward tree (IN labels) and a
    reverse tree (OUT labels).
    """
    added = _pruned_tree(g, r, root, tables, False, common)
    if g.directed:
        added += _pruned_tree(g, r, root, tables, True, common)
    return added


def build_trees(
    g: Graph,
    r: Ranking,
    tables: GlobalLocalTable,
    cursor: RootCursor,
    workers: int,
    limit: Optional[float] = None,
    common: Optional[CommonLabelTable] = None,
) -> int:
    """
    Run `workers` tree builders until the cursor is empty or the local label
    count exceeds `limit`. A builder always finishes the tree it started.
    """

    def worker() -> int:
        added = 0
        while limit is None or tables.local_count <= limit:
            root = cursor.pop()
            if root is None:
                break
            added += prune_dij_rq(g, r, root, tables, common)
        return added

    if workers == 1:
        return worker()
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="tree") as pool:
        futures = [pool.submit(worker) for _ in range(workers)]
        return sum(f.result() for f in futures)


def _chunks(n: int, parts: int) -> List[range]:
    size = max(1, -(-n // max(1, parts)))
    return [range(start, min(n, start + size)) for start in range(0, n, size)]


def redundancy_mask(
    labeling: Labeling,
    r: Ranking,
    candidates: Sequence[LabelEntry],
    workers: int = 1,
) -> List[bool]:
    """
    dq_clean verdict for each (side, v, label) candidate against the full
    labeling; True marks a redundant label.
    """

    def check(span: range) -> List[bool]:
        verdicts = []
        for i in span:
            side, v, label = candidates[i]
            lh, lv = cleaning_sets(labeling, side, v, label.hub)
            verdicts.append(dq_clean(v, label.hub, label.dist, lh, lv, r))
        return verdicts

    spans = _chunks(len(candidates), workers)
    if workers == 1 or len(spans) <= 1:
        return [flag for span in spans for flag in check(span)]
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="clean") as pool:
        return [flag for part in pool.map(check, spans) for flag in part]


def clean_local(tables: GlobalLocalTable, workers: int = 1) -> int:
    """
    Sort local labels, drop the redundant ones, commit the rest. Every local
    label is checked against global plus all local labels.
    """
    tables.sort_local()
    snapshot = tables.snapshot()
    pending = tables.local_labels()
    redundant = redundancy_mask(snapshot, tables.ranking, pending, workers)
    commit_superstep(tables, [not flag for flag in redundant])
    return len(pending) - sum(redundant)


def clean_labeling(labeling: Labeling, r: Ranking, workers: int = 1) -> Labeling:
    """Cleaning phase on its own: the labeling minus its redundant labels"""
    tables = GlobalLocalTable(labeling.n, labeling.directed, r)
    for side, v, label in labeling.iter_labels():
        tables.append_local(side, v, label)
    clean_local(tables, workers)
    return tables.global_labels


def seq_pll(g: Graph, r: Ranking) -> Labeling:
    """Sequential PLL: trees in descending rank order, each committed at once"""
    tables = GlobalLocalTable(g.n, g.directed, r)
    for root in r.order:
        added = prune_dij_rq(g, r, root, tables)
        if added:
            commit_superstep(tables, [True] * added)
    return tables.global_labels


def lcc_phase_one(g: Graph, r: Ranking, cfg: BuildConfig) -> Labeling:
    """Concurrent construction only; covers all pairs and respects R"""
    tables = GlobalLocalTable(g.n, g.directed, r)
    build_trees(g, r, tables, RootCursor(r.order), cfg.workers)
    tables.sort_local()
    return tables.snapshot()


def lcc(
    g: Graph, r: Ranking, cfg: BuildConfig, report: Optional[BuildReport] = None
) -> Labeling:
    """Label Construction and Cleaning"""
    report = report if report is not None else BuildReport()
    started = time.perf_counter()
    tables = GlobalLocalTable(g.n, g.directed, r)
    report.labels_generated = build_trees(g, r, tables, RootCursor(r.order), cfg.workers)
    report.labels_kept = clean_local(tables, cfg.workers)
    report.supersteps = 1
    report.seconds = time.perf_counter() - started
    log.debug(
        "lcc: generated %d labels, kept %d", report.labels_generated, report.labels_kept
    )
    return tables.global_labels


def gll(
    g: Graph,
    r: Ranking,
    cfg: BuildConfig,
    report: Optional[BuildReport] = None,
    on_superstep: Optional[Callable[[int, int, int], None]] = None,
) -> Labeling:
    """
    Global Local Labeling: build until more than α·n fresh labels sit in the
    local table, then clean and commit them; repeat until no roots remain.
    """
    report = report if report is not None else BuildReport()
    started = time.perf_counter()
    tables = GlobalLocalTable(g.n, g.directed, r)
    cursor = RootCursor(r.order)
    limit = cfg.alpha * g.n
    while True:
        generated = build_trees(g, r, tables, cursor, cfg.workers, limit=limit)
        kept = clean_local(tables, cfg.workers)
        report.supersteps += 1
        report.labels_generated += generated
        report.labels_kept += kept
        log.debug("gll superstep %d: %d generated, %d kept", report.supersteps, generated, kept)
        if on_superstep is not None:
            on_superstep(report.supersteps, generated, kept)
        if cursor.exhausted:
            break
    report.seconds = time.perf_counter() - started
    return tables.global_labels
