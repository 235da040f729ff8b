"""
Weighted graphs, vertex rankings and the brute-force oracles.

Graphs are immutable after construction: vertex ids are dense integers in
[0, n), weights are strictly positive integers, and parallel edges keep the
minimum weight. Undirected graphs share one adjacency table for both
directions.
"""

import hashlib
import logging
import random
from dataclasses import dataclass
from typing import (
    TYPE_CHECKING,
    Dict,
    Iterable,
    Iterator,
    List,
    Optional,
    Sequence,
    TextIO,
    Tuple,
    Union,
)

import networkx as nx

from hublab_errors import ContractViolation, GraphDomainError, GraphParseError

if TYPE_CHECKING:
    from hublab_labels import Labeling

log = logging.getLogger(__name__)

# Dedicated maximal distance; never stored as a label.
UNREACHABLE = (1 << 63) - 1

Arc = Tuple[int, int, int]
Neighbors = Tuple[Tuple[int, int], ...]
DistanceVector = List[int]
Seed = Union[int, str]


@dataclass(frozen=True)
class Graph:
    """Positively weighted graph with forward and reverse adjacency"""

    n: int
    m: int
    directed: bool
    forward: Tuple[Neighbors, ...]
    reverse: Tuple[Neighbors, ...]

    @classmethod
    def from_arcs(cls, n: int, arcs: Iterable[Arc], directed: bool) -> "Graph":
        """
        Build a graph from (u, v, w) triples.

        Undirected input lists each edge once in either orientation. Self loops
        are dropped and parallel edges keep their minimum weight.
        """
        if n < 0:
            raise GraphDomainError(f"vertex count must be non-negative, got {n}")
        best: Dict[Tuple[int, int], int] = {}
        for u, v, w in arcs:
            if not (0 <= u < n and 0 <= v < n):
                raise GraphDomainError(f"arc ({u}, {v}) outside [0, {n})")
            if w <= 0:
                raise GraphDomainError(f"arc ({u}, {v}) has non-positive weight {w}")
            if u == v:
                continue
            key = (u, v) if directed or u < v else (v, u)
            if key not in best or w < best[key]:
                best[key] = w
        return cls._from_edge_map(n, best, directed)

    @classmethod
    def _from_edge_map(
        cls, n: int, edges: Dict[Tuple[int, int], int], directed: bool
    ) -> "Graph":
        forward: List[List[Tuple[int, int]]] = [[] for _ in range(n)]
        reverse: List[List[Tuple[int, int]]] = (
            [[] for _ in range(n)] if directed else forward
        )
        for (u, v), w in edges.items():
            forward[u].append((v, w))
            reverse[v].append((u, w))
        frozen_forward = tuple(tuple(sorted(adj)) for adj in forward)
        frozen_reverse = (
            tuple(tuple(sorted(adj)) for adj in reverse) if directed else frozen_forward
        )
        return cls(
            n=n,
            m=len(edges),
            directed=directed,
            forward=frozen_forward,
            reverse=frozen_reverse,
        )

    def adjacency(self, reverse: bool = False) -> Tuple[Neighbors, ...]:
        return self.reverse if reverse else self.forward

    def degree(self, v: int) -> int:
        """Out-degree plus in-degree"""
        return len(self.forward[v]) + len(self.reverse[v])

    def edges(self) -> Iterator[Arc]:
        """Each arc (directed) or each edge once with u < v (undirected)"""
        for u in range(self.n):
            for v, w in self.forward[u]:
                if self.directed or u < v:
                    yield u, v, w

    def with_weights(self, weights: Sequence[int]) -> "Graph":
        """Copy with weights replaced, aligned with edges()"""
        edges: Dict[Tuple[int, int], int] = {}
        for (u, v, _), w in zip(self.edges(), weights):
            if w <= 0:
                raise GraphDomainError(f"edge ({u}, {v}) has non-positive weight {w}")
            edges[(u, v)] = w
        if len(edges) != self.m:
            raise ContractViolation(f"expected {self.m} weights, got {len(edges)}")
        return Graph._from_edge_map(self.n, edges, self.directed)

    def to_networkx(self) -> "nx.Graph":
        """networkx copy with integer `weight` edge attributes"""
        view: nx.Graph = nx.DiGraph() if self.directed else nx.Graph()
        view.add_nodes_from(range(self.n))
        view.add_weighted_edges_from(self.edges(), weight="weight")
        return view

    def digest(self) -> str:
        h = hashlib.sha256(f"{self.n} {int(self.directed)}\n".encode())
        for u, v, w in self.edges():
            h.update(f"{u} {v} {w}\n".encode())
        return h.hexdigest()


@dataclass(frozen=True)
class Ranking:
    """Total order on vertices; rank n-1 is the most important vertex"""

    rank: Tuple[int, ...]
    order: Tuple[int, ...]

    @classmethod
    def from_order(cls, order: Sequence[int]) -> "Ranking":
        """Build from vertex ids listed most important first"""
        n = len(order)
        rank = [-1] * n
        for position, v in enumerate(order):
            if not 0 <= v < n or rank[v] != -1:
                raise ContractViolation(f"order is not a permutation of [0, {n})")
            rank[v] = n - 1 - position
        return cls(rank=tuple(rank), order=tuple(order))

    @classmethod
    def from_ranks(cls, rank: Sequence[int]) -> "Ranking":
        n = len(rank)
        order = [-1] * n
        for v, r in enumerate(rank):
            if not 0 <= r < n or order[n - 1 - r] != -1:
                raise ContractViolation(f"ranks are not a permutation of [0, {n})")
            order[n - 1 - r] = v
        return cls(rank=tuple(rank), order=tuple(order))

    @property
    def n(self) -> int:
        return len(self.rank)

    def position(self, v: int) -> int:
        """0 for the highest-ranked vertex"""
        return self.n - 1 - self.rank[v]

    def digest(self) -> str:
        return hashlib.sha256(
            " ".join(map(str, self.order)).encode()
        ).hexdigest()


def _parse_ints(fields: Sequence[str], line_number: int) -> List[int]:
    try:
        return [int(x) for x in fields]
    except ValueError:
        raise GraphParseError(f"expected integers, got {' '.join(fields)!r}", line_number)


def load_dimacs_gr(stream: TextIO) -> Graph:
    """
    Read a DIMACS shortest-path (.gr) graph.

    The graph is undirected when every arc has a reverse twin of equal weight,
    directed otherwise. Ids are converted to 0-based.
    """
    n: Optional[int] = None
    declared_m = 0
    arcs: Dict[Tuple[int, int], int] = {}
    for line_number, raw in enumerate(stream, 1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        fields = line.split()
        tag = fields[0]
        if tag == "p":
            if len(fields) != 4 or fields[1] != "sp":
                raise GraphParseError("expected 'p sp <n> <m>'", line_number)
            if n is not None:
                raise GraphParseError("duplicate problem line", line_number)
            n, declared_m = _parse_ints(fields[2:], line_number)
            if n < 0:
                raise GraphParseError(f"negative vertex count {n}", line_number)
        elif tag == "a":
            if len(fields) != 4:
                raise GraphParseError("expected 'a <u> <v> <w>'", line_number)
            u, v, w = _parse_ints(fields[1:], line_number)
            if w <= 0:
                raise GraphDomainError(f"line {line_number}: non-positive weight {w}")
            if n is None:
                raise GraphParseError("arc before problem line", line_number)
            if not (1 <= u <= n and 1 <= v <= n):
                raise GraphParseError(f"vertex id outside [1, {n}]", line_number)
            if u == v:
                continue
            key = (u - 1, v - 1)
            if key not in arcs or w < arcs[key]:
                arcs[key] = w
        else:
            raise GraphParseError(f"unknown line type {tag!r}", line_number)
    if n is None:
        raise GraphParseError("missing problem line")

    undirected = all(arcs.get((v, u)) == w for (u, v), w in arcs.items())
    if len(arcs) != declared_m:
        log.debug("problem line declares %d arcs, read %d distinct", declared_m, len(arcs))
    if undirected:
        edges = {(u, v): w for (u, v), w in arcs.items() if u < v}
        return Graph._from_edge_map(n, edges, directed=False)
    return Graph._from_edge_map(n, arcs, directed=True)


def load_edge_list(stream: TextIO, directed: bool, weighted: bool) -> Graph:
    """
    Read whitespace separated "u v [w]" lines with 0-based ids.

    Unweighted input gets the placeholder weight 1. Lines starting with '#' or
    '%' are comments.
    """
    arcs: List[Arc] = []
    n = 0
    for line_number, raw in enumerate(stream, 1):
        line = raw.strip()
        if not line or line[0] in "#%":
            continue
        fields = line.split()
        expected = 3 if weighted else 2
        if len(fields) < expected:
            raise GraphParseError(f"expected {expected} fields", line_number)
        values = _parse_ints(fields[:expected], line_number)
        u, v = values[0], values[1]
        w = values[2] if weighted else 1
        if u < 0 or v < 0:
            raise GraphDomainError(f"line {line_number}: negative vertex id")
        if w <= 0:
            raise GraphDomainError(f"line {line_number}: non-positive weight {w}")
        arcs.append((u, v, w))
        n = max(n, u + 1, v + 1)
    return Graph.from_arcs(n, arcs, directed)


def _ceil_sqrt(n: int) -> int:
    if n <= 0:
        return 0
    root = 1
    while root * root < n:
        root += 1
    return root


def assign_random_weights(g: Graph, seed: Seed) -> Graph:
    """Integer weights drawn uniformly from [1, max(2, ⌈√n⌉))"""
    upper = max(2, _ceil_sqrt(g.n))
    rng = random.Random(seed)
    return g.with_weights([rng.randrange(1, upper) for _ in range(g.m)])


def random_graph(
    n: int, m: int, seed: Seed, directed: bool = False, max_weight: int = 10
) -> Graph:
    """
    Seeded random graph with a random spanning tree backbone plus extra edges.

    The backbone keeps undirected graphs connected; directed graphs get the
    backbone arcs in a random orientation, so reachability is partial.
    """
    rng = random.Random(seed)
    edges: Dict[Tuple[int, int], int] = {}

    def add(u: int, v: int) -> None:
        key = (u, v) if directed or u < v else (v, u)
        if u != v and key not in edges:
            edges[key] = rng.randint(1, max_weight)

    for v in range(1, n):
        u = rng.randrange(v)
        if directed and rng.random() < 0.5:
            add(v, u)
        else:
            add(u, v)
    limit = n * (n - 1) if directed else n * (n - 1) // 2
    target = min(m, limit)
    while len(edges) < target:
        add(rng.randrange(n), rng.randrange(n))
    return Graph._from_edge_map(n, edges, directed)


def rank_by_degree(g: Graph) -> Ranking:
    """Descending (out + in) degree, ties by ascending id"""
    return Ranking.from_order(sorted(range(g.n), key=lambda v: (-g.degree(v), v)))


def _networkx_view(g: Graph, reverse: bool = False) -> "nx.Graph":
    view = g.to_networkx()
    return view.reverse(copy=False) if reverse and g.directed else view


def distances_from(g: Graph, source: int, reverse: bool = False) -> Dict[int, int]:
    """Sparse single-source distances; reached vertices only"""
    view = _networkx_view(g, reverse)
    return dict(nx.single_source_dijkstra_path_length(view, source, weight="weight"))


def betweenness_scores(g: Graph, roots: Iterable[int]) -> List[int]:
    """
    Sum over the trees rooted at `roots` of each vertex's proper descendant
    count, i.e. the number of root-to-descendant tree paths it lies inside.

    Each reached vertex hangs under its smallest-id shortest path predecessor.
    """
    view = g.to_networkx()
    scores = [0] * g.n
    for root in roots:
        pred, dist = nx.dijkstra_predecessor_and_distance(view, root, weight="weight")
        settled = sorted(dist, key=lambda v: (dist[v], v))
        size = dict.fromkeys(settled, 1)
        for v in reversed(settled):
            if v == root:
                continue
            scores[v] += size[v] - 1
            size[min(pred[v])] += size[v]
    return scores


def rank_by_approx_betweenness(g: Graph, samples: int, seed: Seed) -> Ranking:
    """Rank by betweenness estimated from `samples` seeded shortest path trees"""
    if samples < 1:
        raise ContractViolation(f"samples must be >= 1, got {samples}")
    rng = random.Random(seed)
    roots = rng.sample(range(g.n), min(samples, g.n))
    scores = betweenness_scores(g, roots)
    log.debug("betweenness roots %s", roots)
    return Ranking.from_order(sorted(range(g.n), key=lambda v: (-scores[v], v)))


def dijkstra_oracle(g: Graph, source: int, reversed: bool = False) -> DistanceVector:
    """Exact single-source distances; UNREACHABLE where no path exists"""
    if not 0 <= source < g.n:
        raise ContractViolation(f"source {source} outside [0, {g.n})")
    dist = distances_from(g, source, reverse=reversed)
    vector = [UNREACHABLE] * g.n
    for v, d in dist.items():
        vector[v] = d
    return vector


def all_pairs_distances(g: Graph) -> List[DistanceVector]:
    matrix = [[UNREACHABLE] * g.n for _ in range(g.n)]
    for s, dist in nx.all_pairs_dijkstra_path_length(g.to_networkx(), weight="weight"):
        for v, d in dist.items():
            matrix[s][v] = d
    return matrix


def highest_ranked_hub(
    dist: Sequence[DistanceVector], r: Ranking, u: int, v: int
) -> Optional[int]:
    """The maximum-rank vertex on any shortest u-v path, None if unreachable"""
    target = dist[u][v]
    if target == UNREACHABLE:
        return None
    best: Optional[int] = None
    for x in range(len(dist)):
        a, b = dist[u][x], dist[x][v]
        if a == UNREACHABLE or b == UNREACHABLE or a + b != target:
            continue
        if best is None or r.rank[x] > r.rank[best]:
            best = x
    return best


def chl_oracle(g: Graph, r: Ranking) -> "Labeling":
    """Canonical hub labeling by brute force over all ordered pairs"""
    from hublab_labels import Labeling

    dist = all_pairs_distances(g)
    outbound: List[Dict[int, int]] = [{} for _ in range(g.n)]
    inbound: List[Dict[int, int]] = [{} for _ in range(g.n)] if g.directed else outbound
    for u in range(g.n):
        for v in range(g.n):
            if u == v:
                continue
            hub = highest_ranked_hub(dist, r, u, v)
            if hub is None:
                continue
            if hub != u:
                outbound[u][hub] = dist[u][hub]
            if hub != v:
                inbound[v][hub] = dist[hub][v]
    return Labeling.from_hub_maps(g.n, g.directed, outbound, inbound, r)
