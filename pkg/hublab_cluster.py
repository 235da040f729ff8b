"""
In-process simulation of a q-node cluster building a partitioned CHL.

Nodes are isolated coroutines: their only cross-node effects go through a
MessageBus, which meters every byte it carries. Roots are sharded across
nodes circularly by rank position, and node i stores only the labels whose
hub it rooted, so the shards are hub-disjoint.
"""

import asyncio
import csv
import functools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import (
    Any,
    Awaitable,
    Callable,
    Dict,
    List,
    Optional,
    Sequence,
    TextIO,
    Tuple,
)

import numpy as np
from typing_extensions import Protocol

from hublab_config import ClusterConfig
from hublab_errors import ContractViolation
from hublab_graph import Graph, Ranking
from hublab_labels import (
    CommonLabelTable,
    GlobalLocalTable,
    HubLabel,
    LabelEntry,
    PartitionedLabeling,
    Side,
    commit_superstep,
)
from hublab_plant import PlantTreeResult, plant_root
from hublab_smp import RootCursor, build_trees, redundancy_mask

log = logging.getLogger(__name__)

# (vertex, hub, dist, side) per label on the wire
WIRE_DTYPE = np.dtype(
    [("vertex", "<u4"), ("hub", "<u4"), ("dist", "<i8"), ("side", "u1")]
)


def encode_labels(entries: Sequence[LabelEntry]) -> np.ndarray:
    return np.array(
        [(v, label.hub, label.dist, side is Side.IN) for side, v, label in entries],
        dtype=WIRE_DTYPE,
    )


def decode_labels(payload: np.ndarray) -> List[LabelEntry]:
    return [
        (Side.IN if side else Side.OUT, v, HubLabel(hub, dist))
        for v, hub, dist, side in zip(
            payload["vertex"].tolist(),
            payload["hub"].tolist(),
            payload["dist"].tolist(),
            payload["side"].tolist(),
        )
    ]


class Op(Enum):
    BROADCAST = "broadcast"
    ALLREDUCE = "allreduce"
    P2P = "p2p"


class ReduceOp(Enum):
    OR = "or"
    MIN = "min"
    SUM = "sum"

    @property
    def ufunc(self) -> Any:
        return {
            ReduceOp.OR: np.logical_or,
            ReduceOp.MIN: np.minimum,
            ReduceOp.SUM: np.add,
        }[self]


@dataclass
class TrafficRecord:
    superstep: int
    node: int
    op: Op
    bytes: int


@dataclass
class TrafficMeter:
    records: List[TrafficRecord] = field(default_factory=list)

    def record(self, superstep: int, node: int, op: Op, size: int) -> None:
        self.records.append(TrafficRecord(superstep, node, op, size))

    def total(self, op: Optional[Op] = None) -> int:
        return sum(r.bytes for r in self.records if op is None or r.op is op)


class MessageBus(Protocol):
    """Cross-node operations available to simulated nodes"""

    q: int

    async def broadcast(
        self, node: int, superstep: int, payload: np.ndarray
    ) -> List[np.ndarray]: ...

    async def all_reduce(
        self, node: int, superstep: int, values: np.ndarray, op: ReduceOp
    ) -> np.ndarray: ...

    async def send(
        self, src: int, dst: int, superstep: int, payload: Any, tag: str = ""
    ) -> None: ...

    async def recv(self, node: int, tag: str = "") -> Tuple[int, Any]: ...

    async def barrier(self, node: int) -> None: ...


class _Round:
    def __init__(self) -> None:
        self.values: Dict[int, Any] = {}
        self.event = asyncio.Event()
        self.readers = 0


class LocalMessageBus:
    """
    MessageBus for nodes sharing one event loop. Collectives complete only
    once all q nodes have contributed and return results in node order.
    """

    def __init__(self, q: int, meter: Optional[TrafficMeter] = None):
        self.q = q
        self.meter = meter if meter is not None else TrafficMeter()
        self._rounds: Dict[Tuple[str, int], _Round] = {}
        self._generation: Dict[Tuple[str, int], int] = {}
        self._queues: Dict[Tuple[int, str], "asyncio.Queue[Tuple[int, Any]]"] = {}

    async def _gather(self, kind: str, node: int, value: Any) -> List[Any]:
        if not 0 <= node < self.q:
            raise ContractViolation(f"node {node} outside [0, {self.q})")
        generation = self._generation.get((kind, node), 0)
        self._generation[(kind, node)] = generation + 1
        key = (kind, generation)
        rnd = self._rounds.get(key)
        if rnd is None:
            rnd = self._rounds[key] = _Round()
        rnd.values[node] = value
        if len(rnd.values) == self.q:
            rnd.event.set()
        await rnd.event.wait()
        rnd.readers += 1
        if rnd.readers == self.q:
            del self._rounds[key]
        return [rnd.values[i] for i in range(self.q)]

    async def broadcast(
        self, node: int, superstep: int, payload: np.ndarray
    ) -> List[np.ndarray]:
        if payload.nbytes:
            self.meter.record(superstep, node, Op.BROADCAST, payload.nbytes)
        return await self._gather("broadcast", node, payload)

    async def all_reduce(
        self, node: int, superstep: int, values: np.ndarray, op: ReduceOp
    ) -> np.ndarray:
        size = np.packbits(values).nbytes if op is ReduceOp.OR else values.nbytes
        if size:
            self.meter.record(superstep, node, Op.ALLREDUCE, size)
        parts = await self._gather(f"allreduce:{op.value}", node, values)
        if len({p.shape for p in parts}) != 1:
            raise ContractViolation("all-reduce contributions differ in shape")
        return functools.reduce(op.ufunc, parts)

    def _queue(self, node: int, tag: str) -> "asyncio.Queue[Tuple[int, Any]]":
        key = (node, tag)
        if key not in self._queues:
            self._queues[key] = asyncio.Queue()
        return self._queues[key]

    async def send(
        self, src: int, dst: int, superstep: int, payload: Any, tag: str = ""
    ) -> None:
        size = payload.nbytes if isinstance(payload, np.ndarray) else 0
        if size:
            self.meter.record(superstep, src, Op.P2P, size)
        self._queue(dst, tag).put_nowait((src, payload))

    async def recv(self, node: int, tag: str = "") -> Tuple[int, Any]:
        return await self._queue(node, tag).get()

    async def barrier(self, node: int) -> None:
        await self._gather("barrier", node, None)


def partition_tasks(r: Ranking, q: int) -> List[List[int]]:
    """TQ_i = roots at rank positions ≡ i (mod q), highest rank first"""
    if q < 1:
        raise ContractViolation(f"q must be >= 1, got {q}")
    return [list(r.order[i::q]) for i in range(q)]


def sync_schedule(n: int, cfg: ClusterConfig) -> List[int]:
    """
    Superstep sizes x, βx, β²x, ... with the smallest x whose geometric sum
    reaches n; the last superstep is truncated so the sizes sum to n.
    """
    syncs = cfg.syncs_for(n)
    if n <= 0:
        return []

    def sizes(x: int) -> List[int]:
        return [int(x * cfg.beta**k) for k in range(syncs)]

    x = max(1, n // max(1, sum(sizes(1))))
    while sum(sizes(x)) < n:
        x += 1
    schedule: List[int] = []
    remaining = n
    for size in sizes(x):
        take = min(size, remaining)
        if take > 0:
            schedule.append(take)
        remaining -= take
    return schedule


@dataclass(frozen=True)
class ClusterContext:
    """Read-only inputs every node may share"""

    g: Graph
    r: Ranking
    cfg: ClusterConfig


@dataclass
class SuperstepLog:
    superstep: int
    mode: str
    roots: int
    psi_mean: Optional[float] = None


class NodeState:
    """One simulated node: task shard, label shard, common table, bus endpoint"""

    def __init__(self, node_id: int, ctx: ClusterContext, tasks: List[int], bus: MessageBus):
        self.node_id = node_id
        self.ctx = ctx
        self.tasks = tasks
        self.bus = bus
        g, r, cfg = ctx.g, ctx.r, ctx.cfg
        self.shard = GlobalLocalTable(g.n, g.directed, r)
        self.common = CommonLabelTable(r, cfg.eta, g.directed)
        self.trace: List[SuperstepLog] = []

    def owns(self, root: int) -> bool:
        return self.ctx.r.position(root) % self.bus.q == self.node_id

    def _commit_all(self) -> None:
        self.shard.sort_local()
        commit_superstep(self.shard, [True] * self.shard.local_count)

    async def _plant(self, roots: Sequence[int], common: Optional[CommonLabelTable]) -> List[PlantTreeResult]:
        g, r = self.ctx.g, self.ctx.r

        def work() -> List[PlantTreeResult]:
            trees: List[PlantTreeResult] = []
            for root in roots:
                trees.extend(plant_root(g, r, root, common))
            return trees

        trees = await asyncio.to_thread(work)
        for tree in trees:
            side = Side.for_tree(tree.reverse)
            for v, d in tree.labels:
                self.shard.append_local(side, v, HubLabel(tree.root, d))
        self._commit_all()
        return trees

    async def _share_common(self, superstep: int, trees: Sequence[PlantTreeResult]) -> None:
        """Broadcast freshly planted labels of top-η hubs into every common table"""
        entries = [
            (Side.for_tree(t.reverse), v, HubLabel(t.root, d))
            for t in trees
            if self.common.covers(t.root)
            for v, d in t.labels
        ]
        for payload in await self.bus.broadcast(self.node_id, superstep, encode_labels(entries)):
            for side, v, label in decode_labels(payload):
                self.common.add(side, v, label)

    async def dgll_superstep(self, superstep: int, roots: Sequence[int]) -> None:
        """Build, broadcast, clean by all-reduce, commit"""
        g, r, cfg = self.ctx.g, self.ctx.r, self.ctx.cfg
        mine = [v for v in roots if self.owns(v)]
        generated = await asyncio.to_thread(
            build_trees,
            g,
            r,
            self.shard,
            RootCursor(mine),
            cfg.workers_per_node,
            None,
            self.common,
        )
        await self.bus.barrier(self.node_id)

        self.shard.sort_local()
        own = self.shard.local_labels()
        payloads = await self.bus.broadcast(self.node_id, superstep, encode_labels(own))
        parts = [decode_labels(p) for p in payloads]
        everyone = [entry for part in parts for entry in part]

        # A label is redundant if any node holds a dominating hub for it.
        evidence = redundancy_mask(self.shard.snapshot(), r, everyone, cfg.workers_per_node)
        verdict = await self.bus.all_reduce(
            self.node_id, superstep, np.array(evidence, dtype=bool), ReduceOp.OR
        )
        offset = sum(len(p) for p in parts[: self.node_id])
        commit_superstep(self.shard, [not verdict[offset + i] for i in range(len(own))])
        for (side, v, label), redundant in zip(everyone, verdict.tolist()):
            if not redundant and self.common.covers(label.hub):
                self.common.add(side, v, label)
        log.debug(
            "node %d superstep %d: %d roots, %d generated, %d broadcast in total",
            self.node_id,
            superstep,
            len(mine),
            generated,
            len(everyone),
        )

    async def run_dgll(self, schedule: Sequence[int]) -> None:
        start = 0
        for superstep, size in enumerate(schedule):
            await self.dgll_superstep(superstep, self.ctx.r.order[start : start + size])
            start += size
            self.common.mark_complete(start)
            self.trace.append(SuperstepLog(superstep, "dgll", size))

    async def run_plant(self) -> None:
        eta = self.common.eta
        prefix = [v for v in self.tasks if self.ctx.r.position(v) < eta]
        rest = [v for v in self.tasks if self.ctx.r.position(v) >= eta]
        if eta:
            trees = await self._plant(prefix, None)
            await self._share_common(0, trees)
            self.common.mark_complete(eta)
        await self._plant(rest, self.common if eta else None)
        self.trace.append(SuperstepLog(0, "plant", len(self.tasks)))

    async def run_hybrid(self, schedule: Sequence[int]) -> None:
        """PLaNT supersteps until the mean ψ exceeds Ψ_th, DGLL afterwards"""
        r, cfg = self.ctx.r, self.ctx.cfg
        use_dgll = False
        start = 0
        for superstep, size in enumerate(schedule):
            roots = r.order[start : start + size]
            if use_dgll:
                await self.dgll_superstep(superstep, roots)
                start += size
                self.common.mark_complete(start)
                self.trace.append(SuperstepLog(superstep, "dgll", size))
                continue

            mine = [v for v in roots if self.owns(v)]
            trees = await self._plant(mine, self.common)
            await self._share_common(superstep, trees)
            start += size
            self.common.mark_complete(start)

            psi_sum: Dict[int, List[int]] = {}
            for tree in trees:
                counts = psi_sum.setdefault(tree.root, [0, 0])
                counts[0] += tree.explored
                counts[1] += len(tree.labels)
            local = np.array(
                [sum(e / max(1, k) for e, k in psi_sum.values()), float(len(psi_sum))]
            )
            total = await self.bus.all_reduce(self.node_id, superstep, local, ReduceOp.SUM)
            psi_mean = float(total[0] / max(1.0, total[1]))
            self.trace.append(SuperstepLog(superstep, "plant", size, psi_mean))
            if psi_mean > cfg.psi_threshold:
                use_dgll = True
                if self.node_id == 0:
                    log.info(
                        "hybrid: mean psi %.2f > %.2f after superstep %d, switching to DGLL",
                        psi_mean,
                        cfg.psi_threshold,
                        superstep,
                    )


@dataclass
class ClusterRun:
    labels: PartitionedLabeling
    meter: TrafficMeter
    trace: List[SuperstepLog]


async def simulate(
    g: Graph,
    r: Ranking,
    cfg: ClusterConfig,
    program: Callable[[NodeState], Awaitable[None]],
) -> ClusterRun:
    """Run `program` on every node of a fresh cluster"""
    meter = TrafficMeter()
    bus = LocalMessageBus(cfg.q, meter)
    ctx = ClusterContext(g, r, cfg)
    nodes = [NodeState(i, ctx, tasks, bus) for i, tasks in enumerate(partition_tasks(r, cfg.q))]
    await asyncio.gather(*(program(node) for node in nodes))
    return ClusterRun(
        labels=PartitionedLabeling(r, [node.shard.global_labels for node in nodes]),
        meter=meter,
        trace=nodes[0].trace,
    )


def dgll_run(g: Graph, r: Ranking, cfg: ClusterConfig) -> ClusterRun:
    schedule = sync_schedule(g.n, cfg)
    log.debug("dgll schedule %s over %d nodes", schedule, cfg.q)
    return asyncio.run(simulate(g, r, cfg, lambda node: node.run_dgll(schedule)))


def plant_run(g: Graph, r: Ranking, cfg: ClusterConfig) -> ClusterRun:
    return asyncio.run(simulate(g, r, cfg, lambda node: node.run_plant()))


def hybrid_run(g: Graph, r: Ranking, cfg: ClusterConfig) -> ClusterRun:
    schedule = sync_schedule(g.n, cfg)
    return asyncio.run(simulate(g, r, cfg, lambda node: node.run_hybrid(schedule)))


TRAFFIC_HEADER = ["superstep", "node", "op", "bytes"]


def meter_report(run: ClusterRun) -> List[TrafficRecord]:
    """Bytes per (superstep, node, op), in that order"""
    totals: Dict[Tuple[int, int, Op], int] = {}
    for rec in run.meter.records:
        key = (rec.superstep, rec.node, rec.op)
        totals[key] = totals.get(key, 0) + rec.bytes
    ops = list(Op)
    return [
        TrafficRecord(step, node, op, size)
        for (step, node, op), size in sorted(
            totals.items(), key=lambda kv: (kv[0][0], kv[0][1], ops.index(kv[0][2]))
        )
    ]


def write_traffic_csv(records: Sequence[TrafficRecord], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(TRAFFIC_HEADER)
    for rec in records:
        writer.writerow([rec.superstep, rec.node, rec.op.value, rec.bytes])
