"""
Point-to-point distance queries in three storage modes.

QLSN answers from a full labeling on the querying node. QFDL broadcasts each
batch to hub-partitioned shards and min-reduces the partial answers. QDOL
splits vertices into ζ contiguous partitions and gives every node the full
label sets of one partition pair, so a single node answers each query.
"""

import asyncio
import bisect
import csv
import itertools
import logging
import math
import random
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from hublab_cluster import LocalMessageBus, ReduceOp, TrafficMeter
from hublab_errors import ContractViolation, LayoutError, QueryFormatError
from hublab_graph import UNREACHABLE, Seed
from hublab_labels import HubLabel, LabelSet, Labeling, PartitionedLabeling, ppsd_query

log = logging.getLogger(__name__)

# None marks a query with an id outside [0, n).
Answer = Optional[int]


@dataclass
class QueryBatch:
    pairs: List[Tuple[int, int]]
    order: Optional[List[int]] = None

    def __len__(self) -> int:
        return len(self.pairs)

    def valid(self, n: int) -> List[bool]:
        return [0 <= u < n and 0 <= v < n for u, v in self.pairs]

    @classmethod
    def random(cls, n: int, count: int, seed: Seed) -> "QueryBatch":
        rng = random.Random(seed)
        return cls([(rng.randrange(n), rng.randrange(n)) for _ in range(count)])

    def sorted_by(self, key: Callable[[int, int], int]) -> "QueryBatch":
        """Stable reorder; `order` keeps each pair's original index"""
        indices = sorted(range(len(self.pairs)), key=lambda k: key(*self.pairs[k]))
        return QueryBatch([self.pairs[k] for k in indices], order=indices)


def read_query_file(stream: TextIO) -> QueryBatch:
    pairs = []
    for line_number, raw in enumerate(stream, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 2:
            raise QueryFormatError("expected 'u v'", line_number)
        try:
            pairs.append((int(fields[0]), int(fields[1])))
        except ValueError:
            raise QueryFormatError(f"expected integers, got {line!r}", line_number)
    return QueryBatch(pairs)


def format_answer(answer: Answer) -> str:
    if answer is None:
        return "ERR"
    return "INF" if answer == UNREACHABLE else str(answer)


def write_results(answers: Sequence[Answer], stream: TextIO) -> None:
    for answer in answers:
        stream.write(format_answer(answer) + "\n")


def qlsn(batch: QueryBatch, labeling: Labeling) -> List[Answer]:
    """Every query answered locally from the replicated labeling"""
    return [
        labeling.distance(u, v) if ok else None
        for (u, v), ok in zip(batch.pairs, batch.valid(labeling.n))
    ]


def _partial(
    shard: Labeling, u: int, v: int, owns_u: bool, owns_v: bool
) -> int:
    lu: LabelSet = shard.outbound[u] + [HubLabel(u, 0)] if owns_u else shard.outbound[u]
    lv: LabelSet = shard.inbound[v] + [HubLabel(v, 0)] if owns_v else shard.inbound[v]
    return ppsd_query(lu, lv)[0]


def qfdl(
    batch: QueryBatch,
    shards: PartitionedLabeling,
    meter: Optional[TrafficMeter] = None,
) -> List[Answer]:
    """
    Broadcast the batch, take per-node minima over each node's hubs and reduce
    them by minimum; UNREACHABLE is the identity.
    """
    n = shards.shards[0].n
    valid = batch.valid(n)
    bus = LocalMessageBus(shards.q, meter)
    request = np.array(
        [pair if ok else (0, 0) for pair, ok in zip(batch.pairs, valid)], dtype=np.int64
    ).reshape(-1, 2)

    async def node(i: int) -> np.ndarray:
        parts = await bus.broadcast(i, 0, request if i == 0 else request[:0])
        queries = parts[0]
        shard = shards.shards[i]
        partial = np.full(len(queries), UNREACHABLE, dtype=np.int64)
        for k, (u, v) in enumerate(queries.tolist()):
            if valid[k]:
                partial[k] = _partial(
                    shard, u, v, shards.shard_of(u) == i, shards.shard_of(v) == i
                )
        return await bus.all_reduce(i, 0, partial, ReduceOp.MIN)

    async def run() -> np.ndarray:
        results = await asyncio.gather(*(node(i) for i in range(shards.q)))
        return results[0]

    reduced = asyncio.run(run()).tolist()
    return [d if ok else None for d, ok in zip(reduced, valid)]


def compute_zeta(q: int) -> int:
    """Largest ζ with (ζ choose 2) <= q"""
    if q < 1:
        raise ContractViolation(f"q must be >= 1, got {q}")
    return (1 + math.isqrt(1 + 8 * q)) // 2


@dataclass(frozen=True)
class QdolLayout:
    """ζ contiguous vertex partitions; node k holds the k-th partition pair"""

    n: int
    q: int
    zeta: int
    bounds: Tuple[int, ...]
    pairs: Tuple[Tuple[int, int], ...]

    @classmethod
    def build(cls, n: int, q: int) -> "QdolLayout":
        zeta = compute_zeta(q)
        base, extra = divmod(n, zeta)
        bounds = [0]
        for i in range(zeta):
            bounds.append(bounds[-1] + base + (1 if i < extra else 0))
        pairs = tuple(itertools.combinations(range(zeta), 2))
        return cls(n=n, q=q, zeta=zeta, bounds=tuple(bounds), pairs=pairs)

    def partition_of(self, v: int) -> int:
        return bisect.bisect_right(self.bounds, v) - 1

    def members(self, partition: int) -> range:
        return range(self.bounds[partition], self.bounds[partition + 1])

    def node_for_pair(self, i: int, j: int) -> int:
        """Pairs are numbered in lexicographic order; (i, i) goes to the first pair holding i"""
        if i == j:
            return next(k for k, pair in enumerate(self.pairs) if i in pair)
        i, j = min(i, j), max(i, j)
        return self.pairs.index((i, j))

    def node_for(self, u: int, v: int) -> int:
        return self.node_for_pair(self.partition_of(u), self.partition_of(v))

    @property
    def idle_nodes(self) -> List[int]:
        return list(range(len(self.pairs), self.q))


@dataclass
class QdolStore:
    """Full outbound/inbound label sets of one node's two partitions"""

    outbound: Dict[int, LabelSet]
    inbound: Dict[int, LabelSet]

    def label_count(self, directed: bool) -> int:
        out = sum(len(s) for s in self.outbound.values())
        return out + sum(len(s) for s in self.inbound.values()) if directed else out


def build_qdol_stores(layout: QdolLayout, labeling: Labeling) -> List[QdolStore]:
    stores = []
    for pair in layout.pairs:
        vertices = [v for p in pair for v in layout.members(p)]
        stores.append(
            QdolStore(
                outbound={v: labeling.outbound[v] for v in vertices},
                inbound={v: labeling.inbound[v] for v in vertices},
            )
        )
    return stores


def layout_label_counts(layout: QdolLayout, labeling: Labeling) -> List[int]:
    """Labels stored per active node"""
    return [s.label_count(labeling.directed) for s in build_qdol_stores(layout, labeling)]


def qdol(
    batch: QueryBatch,
    layout: QdolLayout,
    stores: Sequence[QdolStore],
    meter: Optional[TrafficMeter] = None,
) -> List[Answer]:
    """
    Sort queries by the one node holding both endpoints' partitions, send
    each node its slice, and put the answers back in batch order.
    """
    active = len(layout.pairs)
    if len(stores) != active:
        raise LayoutError(f"expected {active} pair stores, got {len(stores)}")

    def destination(u: int, v: int) -> int:
        if 0 <= u < layout.n and 0 <= v < layout.n:
            return layout.node_for(u, v)
        return active  # sorts after every real node and is never sent

    routed = batch.sorted_by(destination)
    targets = [destination(u, v) for u, v in routed.pairs]
    bus = LocalMessageBus(max(layout.q, active), meter)

    async def server(i: int) -> None:
        _, request = await bus.recv(i, "request")
        store = stores[i]
        answers = np.array(
            [
                ppsd_query(
                    store.outbound[u] + [HubLabel(u, 0)], store.inbound[v] + [HubLabel(v, 0)]
                )[0]
                for u, v in request.tolist()
            ],
            dtype=np.int64,
        )
        await bus.send(i, 0, 0, answers, tag="reply")

    async def client() -> List[Answer]:
        starts = [bisect.bisect_left(targets, i) for i in range(active + 1)]
        for i in range(active):
            request = np.array(routed.pairs[starts[i] : starts[i + 1]], dtype=np.int64)
            await bus.send(0, i, 0, request.reshape(-1, 2), tag="request")
        answers: List[Answer] = [None] * len(batch)
        assert routed.order is not None
        for _ in range(active):
            src, reply = await bus.recv(0, "reply")
            for k, d in zip(routed.order[starts[src] : starts[src + 1]], reply.tolist()):
                answers[k] = d
        return answers

    async def run() -> List[Answer]:
        results = await asyncio.gather(client(), *(server(i) for i in range(active)))
        return results[0]

    return asyncio.run(run())


@dataclass
class QueryStats:
    mode: str
    queries: int
    seconds: float

    @property
    def queries_per_s(self) -> float:
        return self.queries / self.seconds if self.seconds > 0 else float("inf")

    @property
    def mean_us(self) -> float:
        return self.seconds * 1e6 / self.queries if self.queries else 0.0


STATS_HEADER = ["mode", "queries", "seconds", "queries_per_s", "mean_us"]


def time_batch(
    mode: str, batch: QueryBatch, answer: Callable[[QueryBatch], List[Answer]]
) -> Tuple[List[Answer], QueryStats]:
    started = time.perf_counter()
    answers = answer(batch)
    stats = QueryStats(mode, len(batch), time.perf_counter() - started)
    log.debug("%s: %d queries in %.3fs", mode, stats.queries, stats.seconds)
    return answers, stats


def write_stats_csv(stats: Sequence[QueryStats], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(STATS_HEADER)
    for s in stats:
        writer.writerow(
            [s.mode, s.queries, f"{s.seconds:.6f}", f"{s.queries_per_s:.1f}", f"{s.mean_us:.3f}"]
        )
