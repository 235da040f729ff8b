"""
Label containers and the query primitives built on them.

Every LabelSet is kept sorted by descending hub rank. The self-label (v, 0)
is implicit: it is never stored or counted, but every query primitive
behaves as if it were present. Directed graphs give each vertex two sets:
OUT holds (h, d(v, h)) and IN holds (h, d(h, v)). Undirected labelings
alias IN to OUT.
"""

import json
import logging
import os
import struct
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import (
    BinaryIO,
    Dict,
    Iterator,
    List,
    Mapping,
    NamedTuple,
    Optional,
    Sequence,
    TextIO,
    Tuple,
)

import numpy as np
from pydantic import BaseModel

from hublab_errors import ContractViolation, LabelFormatError
from hublab_graph import UNREACHABLE, Ranking

log = logging.getLogger(__name__)


class HubLabel(NamedTuple):
    hub: int
    dist: int


LabelSet = List[HubLabel]


class Side(Enum):
    OUT = "out"  # hubs reachable from v
    IN = "in"  # hubs that reach v

    @staticmethod
    def for_tree(reverse: bool) -> "Side":
        """A forward tree from root h writes d(h, v) into v's IN set"""
        return Side.OUT if reverse else Side.IN

    @property
    def opposite(self) -> "Side":
        return Side.IN if self is Side.OUT else Side.OUT


# (side, vertex, label): one stored label with its owner
LabelEntry = Tuple[Side, int, HubLabel]


def sort_by_rank(labels: Sequence[HubLabel], ranking: Ranking) -> LabelSet:
    rank = ranking.rank
    return sorted(labels, key=lambda label: -rank[label.hub])


class Labeling:
    """Per-vertex label sets of a whole graph"""

    def __init__(
        self,
        n: int,
        directed: bool,
        outbound: List[LabelSet],
        inbound: Optional[List[LabelSet]] = None,
    ):
        self.n = n
        self.directed = directed
        self.outbound = outbound
        if directed:
            if inbound is None:
                raise ContractViolation("directed labelings need inbound label sets")
            self.inbound = inbound
        else:
            self.inbound = outbound

    @classmethod
    def empty(cls, n: int, directed: bool) -> "Labeling":
        return cls(
            n,
            directed,
            [[] for _ in range(n)],
            [[] for _ in range(n)] if directed else None,
        )

    @classmethod
    def from_hub_maps(
        cls,
        n: int,
        directed: bool,
        outbound: Sequence[Mapping[int, int]],
        inbound: Sequence[Mapping[int, int]],
        ranking: Ranking,
    ) -> "Labeling":
        """Build from per-vertex {hub: dist} maps"""

        def to_sets(maps: Sequence[Mapping[int, int]]) -> List[LabelSet]:
            return [
                sort_by_rank([HubLabel(h, d) for h, d in m.items()], ranking)
                for m in maps
            ]

        out_sets = to_sets(outbound)
        return cls(n, directed, out_sets, to_sets(inbound) if directed else None)

    def sides(self) -> Tuple[Side, ...]:
        return (Side.OUT, Side.IN) if self.directed else (Side.OUT,)

    def label_sets(self, side: Side) -> List[LabelSet]:
        return self.inbound if side is Side.IN else self.outbound

    def label_set(self, side: Side, v: int) -> LabelSet:
        return self.label_sets(side)[v]

    def iter_labels(self) -> Iterator[LabelEntry]:
        for side in self.sides():
            for v, labels in enumerate(self.label_sets(side)):
                for label in labels:
                    yield side, v, label

    @property
    def total_labels(self) -> int:
        return sum(len(s) for side in self.sides() for s in self.label_sets(side))

    @property
    def als(self) -> float:
        """Average label size, self-labels excluded"""
        return self.total_labels / self.n if self.n else 0.0

    @property
    def als_with_self(self) -> float:
        """Average label size counting the implicit self-label once per vertex"""
        return self.als + 1 if self.n else 0.0

    def query(self, u: int, v: int) -> Tuple[int, Optional[int]]:
        """Distance from u to v and the witness hub"""
        return ppsd_query(
            [*self.outbound[u], HubLabel(u, 0)], [*self.inbound[v], HubLabel(v, 0)]
        )

    def distance(self, u: int, v: int) -> int:
        return self.query(u, v)[0]

    def hub_counts(self, ranking: Ranking) -> List[int]:
        """Labels per hub, listed in rank order (highest first)"""
        counts = dict.fromkeys(ranking.order, 0)
        for _, _, label in self.iter_labels():
            counts[label.hub] += 1
        return [counts[h] for h in ranking.order]

    def size_histogram(self) -> Dict[int, int]:
        """Number of vertices per label set size (sides summed)"""
        sizes = np.zeros(self.n, dtype=np.int64)
        for side in self.sides():
            sizes += np.fromiter(
                (len(s) for s in self.label_sets(side)), dtype=np.int64, count=self.n
            )
        counts = np.bincount(sizes) if self.n else np.zeros(0, dtype=np.int64)
        return {size: int(c) for size, c in enumerate(counts) if c}

    def as_sets(self) -> Dict[Side, List[frozenset]]:
        return {
            side: [frozenset(s) for s in self.label_sets(side)] for side in self.sides()
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Labeling):
            return NotImplemented
        return (
            self.n == other.n
            and self.directed == other.directed
            and self.as_sets() == other.as_sets()
        )

    def __repr__(self) -> str:
        kind = "directed" if self.directed else "undirected"
        return f"Labeling(n={self.n}, {kind}, labels={self.total_labels})"


def build_root_index(root: int, labels: Sequence[HubLabel]) -> Dict[int, int]:
    """Constant-time hub lookup over a root's labels, self-label included"""
    index = {label.hub: label.dist for label in labels}
    index[root] = 0
    return index


def dq(
    v: int,
    root: int,
    delta: int,
    root_index: Mapping[int, int],
    lv: Sequence[HubLabel],
) -> bool:
    """
    Distance Query: True when a hub shared by v and the root already certifies
    a distance <= delta, so the tree is pruned at v.
    """
    through_self = root_index.get(v)
    if through_self is not None and through_self <= delta:
        return True
    for hub, d in lv:
        rd = root_index.get(hub)
        if rd is not None and rd + d <= delta:
            return True
    return False


def _descending_with_self(
    labels: Sequence[HubLabel], vertex: int, rank: Sequence[int]
) -> List[Tuple[int, int, int]]:
    """(rank, hub, dist) triples with the self-label merged in rank order"""
    own = rank[vertex]
    merged: List[Tuple[int, int, int]] = []
    pending = True
    for hub, d in labels:
        r = rank[hub]
        if pending and r <= own:
            if hub != vertex:
                merged.append((own, vertex, 0))
            pending = False
        merged.append((r, hub, d))
    if pending:
        merged.append((own, vertex, 0))
    return merged


def dq_clean(
    v: int,
    h: int,
    delta: int,
    lh: Sequence[HubLabel],
    lv: Sequence[HubLabel],
    r: Ranking,
) -> bool:
    """
    Cleaning query for label (h, delta) of v: True when the first common hub
    u with d(u, v) + d(u, h) <= delta outranks h, i.e. the label is redundant.
    """
    rank = r.rank
    a = _descending_with_self(lh, h, rank)
    b = _descending_with_self(lv, v, rank)
    i = j = 0
    while i < len(a) and j < len(b):
        ra, _, da = a[i]
        rb, _, db = b[j]
        if ra > rb:
            i += 1
        elif rb > ra:
            j += 1
        else:
            if da + db <= delta:
                return ra > rank[h]
            i += 1
            j += 1
    return False


def ppsd_query(
    lu: Sequence[HubLabel], lv: Sequence[HubLabel]
) -> Tuple[int, Optional[int]]:
    """
    Minimum d(u, h) + d(h, v) over common hubs, with the witness hub.

    Both sets are in descending rank order, so keeping the first minimum
    returns the higher-ranked hub on ties. Callers pass self-labels explicitly.
    """
    index = {label.hub: label.dist for label in lv}
    best, witness = UNREACHABLE, None
    for hub, d in lu:
        other = index.get(hub)
        if other is not None and d + other < best:
            best, witness = d + other, hub
    return best, witness


def cleaning_sets(
    labeling: Labeling, side: Side, v: int, hub: int
) -> Tuple[LabelSet, LabelSet]:
    """
    The (L_h, L_v) pair that tests a label of v's `side` set.

    An IN label (h, d(h, v)) is witnessed through h's OUT set and v's IN set;
    an OUT label mirrors that.
    """
    return labeling.label_set(side.opposite if labeling.directed else side, hub), (
        labeling.label_set(side, v)
    )


class GlobalLocalTable:
    """
    Two-tier label store: a committed global labeling that is read-only while
    workers run, plus append-only local lists for the current superstep.
    """

    def __init__(
        self, n: int, directed: bool, ranking: Ranking, committed: Optional[Labeling] = None
    ):
        self.n = n
        self.directed = directed
        self.ranking = ranking
        self.global_labels = committed if committed is not None else Labeling.empty(n, directed)
        self.local: Dict[Side, List[LabelSet]] = {
            side: [[] for _ in range(n)] for side in self.global_labels.sides()
        }
        self.local_count = 0
        self._lock = threading.Lock()

    def _side(self, side: Side) -> Side:
        return side if self.directed else Side.OUT

    def append_local(self, side: Side, v: int, label: HubLabel) -> None:
        self.local[self._side(side)][v].append(label)
        with self._lock:
            self.local_count += 1

    def view(self, side: Side, v: int) -> LabelSet:
        """Global plus local labels; local ones are not yet sorted"""
        side = self._side(side)
        return [*self.global_labels.label_set(side, v), *self.local[side][v]]

    def sort_local(self) -> None:
        rank = self.ranking.rank
        for lists in self.local.values():
            for labels in lists:
                labels.sort(key=lambda label: -rank[label.hub])

    def local_labels(self) -> List[LabelEntry]:
        """Local labels in (side, vertex, list) order; sort_local first"""
        return [
            (side, v, label)
            for side, lists in self.local.items()
            for v, labels in enumerate(lists)
            for label in labels
        ]

    def snapshot(self) -> Labeling:
        """Global and local labels merged and sorted"""
        sets = {
            side: [
                sort_by_rank(self.view(side, v), self.ranking) for v in range(self.n)
            ]
            for side in self.local
        }
        return Labeling(self.n, self.directed, sets[Side.OUT], sets.get(Side.IN))


def commit_superstep(table: GlobalLocalTable, keep_mask: Sequence[bool]) -> None:
    """Merge the local labels marked keep into the global table and reset local"""
    pending = table.local_labels()
    if len(keep_mask) != len(pending):
        raise ContractViolation(
            f"keep mask has {len(keep_mask)} entries for {len(pending)} local labels"
        )
    kept: Dict[Tuple[Side, int], LabelSet] = {}
    for (side, v, label), keep in zip(pending, keep_mask):
        if keep:
            kept.setdefault((side, v), []).append(label)
    for (side, v), labels in kept.items():
        sets = table.global_labels.label_sets(side)
        # Rebind rather than mutate so earlier views stay intact.
        sets[v] = sort_by_rank([*sets[v], *labels], table.ranking)
    for lists in table.local.values():
        for labels in lists:
            labels.clear()
    with table._lock:
        table.local_count = 0


class CommonLabelTable:
    """
    Complete labels of the η highest-ranked hubs, keyed by vertex for
    constant-time lookup. Filled in rank order; entries are never rewritten.
    """

    def __init__(self, ranking: Ranking, eta: int, directed: bool):
        self.ranking = ranking
        self.eta = min(eta, ranking.n)
        self.directed = directed
        self.hubs: Tuple[int, ...] = ranking.order[: self.eta]
        # Leading prefix hubs whose label sets are final; only these may prune.
        self.complete = 0
        # hub -> {v: d(v, hub)} and hub -> {v: d(hub, v)}
        self._outbound: Dict[int, Dict[int, int]] = {h: {h: 0} for h in self.hubs}
        self._inbound = (
            {h: {h: 0} for h in self.hubs} if directed else self._outbound
        )

    @classmethod
    def from_labeling(
        cls, labeling: Labeling, ranking: Ranking, eta: int
    ) -> "CommonLabelTable":
        table = cls(ranking, eta, labeling.directed)
        for side, v, label in labeling.iter_labels():
            if table.covers(label.hub):
                table.add(side, v, label)
        table.mark_complete(table.eta)
        return table

    def mark_complete(self, count: int) -> None:
        """The labels of the `count` highest-ranked hubs are final"""
        self.complete = max(self.complete, min(self.eta, count))

    def covers(self, hub: int) -> bool:
        return self.ranking.position(hub) < self.eta

    def add(self, side: Side, v: int, label: HubLabel) -> None:
        """Record label (hub, d) from v's `side` set"""
        store = self._outbound if side is Side.OUT else self._inbound
        store[label.hub][v] = label.dist

    def lookup(self, hub: int, v: int, side: Side = Side.OUT) -> Optional[int]:
        """d(v, hub) for OUT, d(hub, v) for IN; None when v has no such label"""
        if not self.covers(hub):
            raise ContractViolation(f"hub {hub} is outside the top-{self.eta} prefix")
        store = self._outbound if side is Side.OUT else self._inbound
        return store[hub].get(v)

    @property
    def label_count(self) -> int:
        stores = [self._outbound] + ([self._inbound] if self.directed else [])
        return sum(len(m) - 1 for store in stores for m in store.values())

    def certifies(self, root: int, v: int, delta: int, reverse: bool) -> bool:
        """
        True when a common hub ranked above the root gives a root/v distance
        <= delta. Forward trees measure d(root, v), reverse trees d(v, root).
        """
        rank = self.ranking.rank
        root_rank = rank[root]
        for c in self.hubs[: self.complete]:
            if rank[c] <= root_rank:
                break
            if reverse:
                a, b = self._outbound[c].get(v), self._inbound[c].get(root)
            else:
                a, b = self._outbound[c].get(root), self._inbound[c].get(v)
            if a is not None and b is not None and a + b <= delta:
                return True
        return False


def common_lookup(
    t: CommonLabelTable, hub: int, v: int, side: Side = Side.OUT
) -> Optional[int]:
    return t.lookup(hub, v, side)


@dataclass
class PartitionedLabeling:
    """Hub-disjoint label shards; shard i holds hubs at rank positions ≡ i (mod q)"""

    ranking: Ranking
    shards: List[Labeling] = field(default_factory=list)

    @property
    def q(self) -> int:
        return len(self.shards)

    def shard_of(self, hub: int) -> int:
        return self.ranking.position(hub) % self.q

    def union(self) -> Labeling:
        first = self.shards[0]
        merged = Labeling.empty(first.n, first.directed)
        for side in merged.sides():
            target = merged.label_sets(side)
            for v in range(first.n):
                target[v] = sort_by_rank(
                    [label for shard in self.shards for label in shard.label_set(side, v)],
                    self.ranking,
                )
        return merged

    @classmethod
    def split(cls, labeling: Labeling, ranking: Ranking, q: int) -> "PartitionedLabeling":
        """Distribute a full labeling over q hub-circular shards"""
        shards = [Labeling.empty(labeling.n, labeling.directed) for _ in range(q)]
        for side, v, label in labeling.iter_labels():
            shard = shards[ranking.position(label.hub) % q]
            shard.label_set(side, v).append(label)
        return cls(ranking=ranking, shards=shards)


# Serialization

MAGIC = b"CHLB"
VERSION = 1
_HEADER = struct.Struct("<4sHIB")
_COUNT = struct.Struct("<I")
LABEL_DTYPE = np.dtype([("hub", "<u4"), ("dist", "<i8")])


def write_binary(labeling: Labeling, stream: BinaryIO) -> None:
    stream.write(_HEADER.pack(MAGIC, VERSION, labeling.n, int(labeling.directed)))
    for side in labeling.sides():
        for labels in labeling.label_sets(side):
            stream.write(_COUNT.pack(len(labels)))
            stream.write(np.array([tuple(x) for x in labels], dtype=LABEL_DTYPE).tobytes())


def _read_exact(stream: BinaryIO, size: int) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise LabelFormatError("truncated label file")
    return data


def read_binary(stream: BinaryIO) -> Labeling:
    magic, version, n, directed = _HEADER.unpack(_read_exact(stream, _HEADER.size))
    if magic != MAGIC:
        raise LabelFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise LabelFormatError(f"unsupported version {version}")
    labeling = Labeling.empty(n, bool(directed))
    for side in labeling.sides():
        sets = labeling.label_sets(side)
        for v in range(n):
            (count,) = _COUNT.unpack(_read_exact(stream, _COUNT.size))
            raw = np.frombuffer(
                _read_exact(stream, count * LABEL_DTYPE.itemsize), dtype=LABEL_DTYPE
            )
            if count and int(raw["hub"].max()) >= n:
                raise LabelFormatError(
                    f"{side.value} labels of vertex {v}: hub {int(raw['hub'].max())} "
                    f"outside [0, {n})"
                )
            if count and not ((raw["dist"] > 0) & (raw["dist"] < UNREACHABLE)).all():
                raise LabelFormatError(
                    f"{side.value} labels of vertex {v}: distance out of range"
                )
            sets[v] = [
                HubLabel(h, d) for h, d in zip(raw["hub"].tolist(), raw["dist"].tolist())
            ]
    return labeling


def write_text(labeling: Labeling, stream: TextIO) -> None:
    stream.write(f"# n={labeling.n} directed={int(labeling.directed)}\n")
    for side in labeling.sides():
        if labeling.directed:
            stream.write("# outbound\n" if side is Side.OUT else "# inbound\n")
        for v, labels in enumerate(labeling.label_sets(side)):
            for hub, d in labels:
                stream.write(f"{v} {hub} {d}\n")


def read_text(stream: TextIO) -> Labeling:
    header = stream.readline().split()
    try:
        fields = dict(item.split("=", 1) for item in header[1:])
        n, directed = int(fields["n"]), fields["directed"] == "1"
    except (KeyError, ValueError):
        raise LabelFormatError("missing '# n=<n> directed=<0|1>' header")
    if n < 0:
        raise LabelFormatError(f"line 1: negative vertex count {n}")
    labeling = Labeling.empty(n, directed)
    side = Side.OUT
    for line_number, raw in enumerate(stream, 2):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            side = Side.IN if line == "# inbound" else Side.OUT
            continue
        try:
            v, hub, d = (int(x) for x in line.split())
        except ValueError:
            raise LabelFormatError(f"line {line_number}: expected 'v h d'")
        if not (0 <= v < n and 0 <= hub < n):
            raise LabelFormatError(f"line {line_number}: vertex id outside [0, {n})")
        if not 0 < d < UNREACHABLE:
            raise LabelFormatError(f"line {line_number}: distance {d} out of range")
        labeling.label_set(side, v).append(HubLabel(hub, d))
    return labeling


def save_labeling(labeling: Labeling, path: str) -> None:
    """Text when the path ends in .txt, binary otherwise"""
    if path.endswith(".txt"):
        with open(path, "w", encoding="utf-8") as f:
            write_text(labeling, f)
    else:
        with open(path, "wb") as fb:
            write_binary(labeling, fb)


def load_labeling(path: str) -> Labeling:
    if path.endswith(".txt"):
        with open(path, encoding="utf-8") as f:
            return read_text(f)
    with open(path, "rb") as fb:
        return read_binary(fb)


class ShardManifest(BaseModel):
    q: int
    eta: int
    n: int
    directed: bool
    ranking_digest: str
    files: List[str]


SHARD_MANIFEST = "manifest.json"


def save_partitioned(partitioned: PartitionedLabeling, directory: str, eta: int) -> ShardManifest:
    """One binary label file per node plus a manifest"""
    os.makedirs(directory, exist_ok=True)
    files = [f"node_{i}.chlb" for i in range(partitioned.q)]
    for name, shard in zip(files, partitioned.shards):
        save_labeling(shard, os.path.join(directory, name))
    first = partitioned.shards[0]
    manifest = ShardManifest(
        q=partitioned.q,
        eta=eta,
        n=first.n,
        directed=first.directed,
        ranking_digest=partitioned.ranking.digest(),
        files=files,
    )
    with open(os.path.join(directory, SHARD_MANIFEST), "w", encoding="utf-8") as f:
        json.dump(manifest.model_dump(), f, indent=2)
        f.write("\n")
    return manifest


def load_partitioned(directory: str, ranking: Ranking) -> PartitionedLabeling:
    with open(os.path.join(directory, SHARD_MANIFEST), encoding="utf-8") as f:
        manifest = ShardManifest.model_validate(json.load(f))
    if manifest.ranking_digest != ranking.digest():
        raise LabelFormatError("shard manifest was written for a different ranking")
    shards = [load_labeling(os.path.join(directory, name)) for name in manifest.files]
    return PartitionedLabeling(ranking=ranking, shards=shards)
