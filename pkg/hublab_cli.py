"""
Command-line front end: build, query, verify and stats.

Exit codes: 0 ok, 1 usage, 2 verification failure, 3 I/O or input data.
"""

import argparse
import logging
import os
import random
import shutil
import sys
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from hublab_cluster import (
    ClusterRun,
    dgll_run,
    hybrid_run,
    meter_report,
    plant_run,
    write_traffic_csv,
)
from hublab_config import (
    DEFAULT_ALPHA,
    DEFAULT_BETA,
    DEFAULT_ETA,
    DEFAULT_SAMPLES,
    PSI_THRESHOLDS,
    BuildConfig,
    ClusterConfig,
    RunManifest,
    default_workers,
)
from hublab_errors import (
    Algorithm,
    CheckStatus,
    ContractViolation,
    GraphClass,
    GraphFormat,
    HubLabelError,
    LayoutError,
    QueryMode,
    RankingMethod,
)
from hublab_graph import (
    UNREACHABLE,
    Graph,
    Ranking,
    assign_random_weights,
    distances_from,
    load_dimacs_gr,
    load_edge_list,
    rank_by_approx_betweenness,
    rank_by_degree,
)
from hublab_labels import (
    SHARD_MANIFEST,
    Labeling,
    PartitionedLabeling,
    Side,
    load_labeling,
    load_partitioned,
    save_labeling,
    save_partitioned,
)
from hublab_plant import plant_all, psi_trace, write_psi_csv
from hublab_query import (
    Answer,
    QdolLayout,
    QueryBatch,
    QueryStats,
    build_qdol_stores,
    qdol,
    qfdl,
    qlsn,
    read_query_file,
    time_batch,
    write_results,
    write_stats_csv,
)
from hublab_smp import BuildReport, gll, lcc, redundancy_mask, seq_pll

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2
EXIT_IO = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; we report usage errors as 1"""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(message)


def substream(seed: int, name: str) -> str:
    """Named, independent random stream derived from the single --seed"""
    return f"{seed}:{name}"


# Inputs


def load_graph(manifest: RunManifest) -> Graph:
    if manifest.input_format is GraphFormat.DIMACS:
        with open(manifest.input_path, encoding="utf-8") as f:
            g = load_dimacs_gr(f)
    else:
        with open(manifest.input_path, encoding="utf-8") as f:
            g = load_edge_list(f, manifest.directed, manifest.weighted)
    if manifest.random_weights:
        g = assign_random_weights(g, substream(manifest.weight_seed, "weights"))
    return g


def compute_ranking(g: Graph, manifest: RunManifest) -> Ranking:
    if manifest.ranking is RankingMethod.BETWEENNESS:
        return rank_by_approx_betweenness(
            g, manifest.samples, substream(manifest.ranking_seed, "betweenness")
        )
    return rank_by_degree(g)


def load_inputs(manifest: RunManifest, check_digests: bool = True) -> Tuple[Graph, Ranking]:
    """Graph and ranking exactly as the manifest's build saw them"""
    g = load_graph(manifest)
    r = compute_ranking(g, manifest)
    if check_digests and manifest.graph_digest and g.digest() != manifest.graph_digest:
        raise HubLabelError(f"{manifest.input_path} changed since the manifest was written")
    if check_digests and manifest.ranking_digest and r.digest() != manifest.ranking_digest:
        raise HubLabelError("ranking differs from the one recorded in the manifest")
    return g, r


def _input_manifest(args: argparse.Namespace, algorithm: Algorithm, labels_path: str) -> RunManifest:
    if args.input is None:
        raise UsageError("--input is required unless --manifest is given")
    return RunManifest(
        input_path=args.input,
        input_format=GraphFormat(args.format),
        directed=args.directed,
        weighted=not args.unweighted,
        random_weights=args.random_weights,
        weight_seed=args.seed,
        ranking=RankingMethod(args.ranking),
        samples=args.samples,
        ranking_seed=args.seed,
        algorithm=algorithm,
        labels_path=labels_path,
        graph_digest="",
        ranking_digest="",
    )


def _resolve(args: argparse.Namespace) -> Tuple[RunManifest, Graph, Ranking]:
    """Read the run manifest if one is named, else describe the inputs from flags"""
    if getattr(args, "manifest", None):
        manifest = RunManifest.read(args.manifest)
        g, r = load_inputs(manifest)
        return manifest, g, r
    manifest = _input_manifest(args, Algorithm.SEQPLL, getattr(args, "labels", None) or "")
    g, r = load_inputs(manifest, check_digests=False)
    return manifest, g, r


def _load_any(manifest: RunManifest, r: Ranking, labels: Optional[str]) -> Tuple[Optional[Labeling], Optional[PartitionedLabeling]]:
    """A full labeling file or a hub-partitioned shard directory"""
    path = labels or manifest.shards_dir or manifest.labels_path
    if not path:
        raise UsageError("no labeling given: pass --labels or --manifest")
    if os.path.isdir(path):
        if not os.path.exists(os.path.join(path, SHARD_MANIFEST)):
            raise LayoutError(f"{path} is a directory without {SHARD_MANIFEST}")
        return None, load_partitioned(path, r)
    return load_labeling(path), None


# build


def run_build(
    g: Graph,
    r: Ranking,
    manifest: RunManifest,
) -> Tuple[Optional[Labeling], Optional[ClusterRun], BuildReport]:
    """Dispatch to the selected builder"""
    report = BuildReport()
    started = time.perf_counter()
    algorithm = manifest.algorithm
    build = manifest.build or BuildConfig()
    cluster = manifest.cluster or ClusterConfig()
    labeling: Optional[Labeling] = None
    run: Optional[ClusterRun] = None
    if algorithm is Algorithm.SEQPLL:
        labeling = seq_pll(g, r)
    elif algorithm is Algorithm.LCC:
        labeling = lcc(g, r, build, report)
    elif algorithm is Algorithm.GLL:
        labeling = gll(g, r, build, report)
    elif algorithm is Algorithm.PLANT and cluster.q == 1:
        labeling = plant_all(g, r, early_termination=manifest.early_termination, workers=build.workers)
    elif algorithm is Algorithm.PLANT:
        run = plant_run(g, r, cluster)
    elif algorithm is Algorithm.DGLL:
        run = dgll_run(g, r, cluster)
    else:
        run = hybrid_run(g, r, cluster)
    report.seconds = time.perf_counter() - started
    return labeling, run, report


def cmd_build(args: argparse.Namespace) -> int:
    if args.from_manifest:
        manifest = RunManifest.read(args.from_manifest)
        g, r = load_inputs(manifest)
        manifest_path = args.manifest or args.from_manifest
    else:
        algorithm = Algorithm(args.algorithm)
        if args.output is None:
            raise UsageError("--output is required")
        manifest = _input_manifest(args, algorithm, args.output)
        g, r = load_inputs(manifest, check_digests=False)
        workers = args.workers if args.workers is not None else default_workers()
        graph_class = GraphClass(args.graph_class)
        psi_th = args.psi_th if args.psi_th is not None else PSI_THRESHOLDS[graph_class]
        cluster = ClusterConfig(
            q=args.q,
            sync_count=args.syncs,
            beta=args.beta,
            psi_threshold=psi_th,
            eta=args.eta,
            workers_per_node=max(1, workers // args.q),
            seed=args.seed,
        )
        sharded = algorithm.distributed or (algorithm is Algorithm.PLANT and args.q > 1)
        manifest = manifest.model_copy(
            update={
                "build": BuildConfig(workers=workers, alpha=args.alpha, seed=args.seed),
                "cluster": cluster,
                "early_termination": not args.no_early_termination,
                "labels_path": "" if sharded else args.output,
                "shards_dir": args.output if sharded else None,
                "traffic_path": (args.traffic or args.output.rstrip("/") + ".traffic.csv")
                if sharded
                else None,
                "graph_digest": g.digest(),
                "ranking_digest": r.digest(),
            }
        )
        manifest_path = args.manifest or args.output.rstrip("/") + ".run.json"

    log.info("building %s on n=%d m=%d", manifest.algorithm.value, g.n, g.m)
    labeling, run, report = run_build(g, r, manifest)

    if run is not None:
        assert manifest.shards_dir is not None
        cluster = manifest.cluster or ClusterConfig()
        save_partitioned(run.labels, manifest.shards_dir, cluster.eta)
        if manifest.traffic_path:
            with open(manifest.traffic_path, "w", encoding="utf-8") as f:
                write_traffic_csv(meter_report(run), f)
        labeling = run.labels.union()
    else:
        assert labeling is not None
        save_labeling(labeling, manifest.labels_path)
    manifest.write(manifest_path)

    print(f"ALS: {labeling.als:.4f}")
    print(f"build time: {report.seconds:.3f} s")
    return EXIT_OK


# query


def _batch(args: argparse.Namespace, n: int) -> QueryBatch:
    if args.queries:
        with open(args.queries, encoding="utf-8") as f:
            return read_query_file(f)
    if args.random is None:
        raise UsageError("pass --queries FILE or --random N")
    if n == 0:
        return QueryBatch([])
    return QueryBatch.random(n, args.random, substream(args.seed, "queries"))


def answer_batch(
    mode: QueryMode,
    batch: QueryBatch,
    full: Optional[Labeling],
    shards: Optional[PartitionedLabeling],
    q: int = 1,
) -> Tuple[List[Answer], QueryStats]:
    """Answer `batch` in `mode`; the stored layout must fit the mode"""
    if mode is QueryMode.QFDL:
        if shards is None:
            raise LayoutError("qfdl needs hub-partitioned shards, got a full labeling")
        return time_batch(mode.value, batch, lambda b: qfdl(b, shards))
    if mode is QueryMode.QDOL:
        if full is None:
            raise LayoutError("qdol needs full label sets, got hub-partitioned shards")
        layout = QdolLayout.build(full.n, q)
        if layout.idle_nodes:
            log.info("qdol: zeta=%d leaves nodes %s idle", layout.zeta, layout.idle_nodes)
        stores = build_qdol_stores(layout, full)
        return time_batch(mode.value, batch, lambda b: qdol(b, layout, stores))
    labeling = full if full is not None else shards.union()  # type: ignore[union-attr]
    return time_batch(mode.value, batch, lambda b: qlsn(b, labeling))


def cmd_query(args: argparse.Namespace) -> int:
    mode = QueryMode(args.mode)
    if args.manifest:
        manifest = RunManifest.read(args.manifest)
        _, r = load_inputs(manifest)
        full, shards = _load_any(manifest, r, args.labels)
    else:
        if not args.labels:
            raise UsageError("pass --labels or --manifest")
        if os.path.isdir(args.labels):
            raise LayoutError("a shard directory needs --manifest to recover the ranking")
        full, shards = load_labeling(args.labels), None
    n = full.n if full is not None else shards.shards[0].n  # type: ignore[union-attr]
    batch = _batch(args, n)
    answers, stats = answer_batch(mode, batch, full, shards, args.q)

    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            write_results(answers, f)
    else:
        write_results(answers, sys.stdout)
    if args.stats:
        with open(args.stats, "w", encoding="utf-8") as f:
            write_stats_csv([stats], f)
    log.info("%s: %.1f queries/s", mode.value, stats.queries_per_s)
    return EXIT_OK


# verify


@dataclass
class CheckResult:
    name: str
    status: CheckStatus
    details: List[str] = field(default_factory=list)

    def __str__(self) -> str:
        lines = [f"{self.name}: {self.status.value}"]
        lines.extend(f"  {d}" for d in self.details)
        return "\n".join(lines)


def _pairs(n: int, limit: int, samples: int, seed: int) -> List[Tuple[int, int]]:
    """All ordered pairs when n <= limit, else a seeded sample"""
    if n <= limit:
        return [(u, v) for u in range(n) for v in range(n)]
    rng = random.Random(substream(seed, "verify"))
    return [(rng.randrange(n), rng.randrange(n)) for _ in range(samples)]


class _Distances:
    """Forward and reverse single-source trees, computed on demand"""

    def __init__(self, g: Graph):
        self.g = g
        self._cache: Dict[Tuple[int, bool], Dict[int, int]] = {}

    def row(self, source: int, reverse: bool = False) -> Dict[int, int]:
        key = (source, reverse)
        if key not in self._cache:
            self._cache[key] = distances_from(self.g, source, reverse=reverse)
        return self._cache[key]


def check_cover(labeling: Labeling, dist: _Distances, pairs: Iterable[Tuple[int, int]]) -> CheckResult:
    result = CheckResult("cover", CheckStatus.PASS)
    for u, v in pairs:
        expected = dist.row(u).get(v, UNREACHABLE)
        got = labeling.distance(u, v)
        if got != expected:
            result.status = CheckStatus.FAIL
            shown = "INF" if got == UNREACHABLE else got
            result.details.append(f"pair ({u}, {v}): labels give {shown}, true distance {expected}")
            if len(result.details) >= 10:
                break
    return result


def check_respects_ranking(
    labeling: Labeling, r: Ranking, dist: _Distances, pairs: Iterable[Tuple[int, int]]
) -> CheckResult:
    """The highest-ranked vertex on u-v shortest paths is a common hub at exact distances"""
    result = CheckResult("respects-R", CheckStatus.PASS)
    for u, v in pairs:
        if u == v:
            continue
        from_u, to_v = dist.row(u), dist.row(v, reverse=True)
        target = from_u.get(v)
        if target is None:
            continue
        best = max(
            (x for x, a in from_u.items() if x in to_v and a + to_v[x] == target),
            key=lambda x: r.rank[x],
        )
        out = {h: d for h, d in labeling.outbound[u]}
        out[u] = 0
        inb = {h: d for h, d in labeling.inbound[v]}
        inb[v] = 0
        if out.get(best) != from_u[best] or inb.get(best) != to_v[best]:
            result.status = CheckStatus.FAIL
            result.details.append(f"pair ({u}, {v}): hub {best} missing or at a wrong distance")
            if len(result.details) >= 10:
                break
    return result


def check_minimality(labeling: Labeling, r: Ranking, workers: int = 1) -> CheckResult:
    result = CheckResult("minimality", CheckStatus.PASS)
    candidates = list(labeling.iter_labels())
    for (side, v, label), redundant in zip(candidates, redundancy_mask(labeling, r, candidates, workers)):
        if redundant:
            result.status = CheckStatus.FAIL
            kind = "in" if side is Side.IN else "out"
            result.details.append(f"redundant {kind}-label ({label.hub}, {label.dist}) of vertex {v}")
    return result


def verify_labeling(
    g: Graph,
    r: Ranking,
    labeling: Labeling,
    pair_limit: int = 256,
    samples: int = 1000,
    seed: int = 0,
    workers: int = 1,
) -> List[CheckResult]:
    if labeling.n != g.n or labeling.directed != g.directed:
        raise LayoutError(
            f"labeling is for n={labeling.n} directed={labeling.directed}, "
            f"graph has n={g.n} directed={g.directed}"
        )
    pairs = _pairs(g.n, pair_limit, samples, seed)
    dist = _Distances(g)
    return [
        check_cover(labeling, dist, pairs),
        check_respects_ranking(labeling, r, dist, pairs),
        check_minimality(labeling, r, workers),
    ]


def cmd_verify(args: argparse.Namespace) -> int:
    manifest, g, r = _resolve(args)
    full, shards = _load_any(manifest, r, args.labels)
    labeling = full if full is not None else shards.union()  # type: ignore[union-attr]
    workers = args.workers if args.workers is not None else default_workers()
    results = verify_labeling(g, r, labeling, args.pair_limit, args.sample_pairs, args.seed, workers)
    for res in results:
        print(res)
    return EXIT_VERIFY if any(res.status is CheckStatus.FAIL for res in results) else EXIT_OK


# stats


def write_stats_bundle(
    out_dir: str,
    g: Graph,
    r: Ranking,
    labeling: Labeling,
    traffic_path: Optional[str] = None,
) -> List[str]:
    """Per-tree counts, ψ trace, ALS, size histogram and traffic; returns written paths"""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    path = os.path.join(out_dir, "per_tree.csv")
    with open(path, "w", encoding="utf-8") as f:
        f.write("tree_index,root,rank,labels\n")
        for i, (root, count) in enumerate(zip(r.order, labeling.hub_counts(r))):
            f.write(f"{i},{root},{r.rank[root]},{count}\n")
    written.append(path)

    path = os.path.join(out_dir, "psi.csv")
    with open(path, "w", encoding="utf-8") as f:
        write_psi_csv(psi_trace(g, r), f)
    written.append(path)

    path = os.path.join(out_dir, "als.csv")
    with open(path, "w", encoding="utf-8") as f:
        f.write("convention,als\n")
        f.write(f"excluding_self,{labeling.als:.6f}\n")
        f.write(f"including_self,{labeling.als_with_self:.6f}\n")
    written.append(path)

    path = os.path.join(out_dir, "histogram.csv")
    with open(path, "w", encoding="utf-8") as f:
        f.write("label_set_size,vertices\n")
        for size, count in sorted(labeling.size_histogram().items()):
            f.write(f"{size},{count}\n")
    written.append(path)

    path = os.path.join(out_dir, "traffic.csv")
    if traffic_path and os.path.exists(traffic_path):
        shutil.copyfile(traffic_path, path)
    else:
        with open(path, "w", encoding="utf-8") as f:
            write_traffic_csv([], f)
    written.append(path)
    return written


def cmd_stats(args: argparse.Namespace) -> int:
    manifest, g, r = _resolve(args)
    full, shards = _load_any(manifest, r, args.labels)
    labeling = full if full is not None else shards.union()  # type: ignore[union-attr]
    for path in write_stats_bundle(args.out_dir, g, r, labeling, manifest.traffic_path):
        print(path)
    return EXIT_OK


# parser


def _add_input_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("graph input")
    group.add_argument("--input", "-i", help="graph file")
    group.add_argument(
        "--format", choices=[f.value for f in GraphFormat], default=GraphFormat.DIMACS.value
    )
    group.add_argument("--directed", action="store_true", help="edge lists: read arcs")
    group.add_argument("--unweighted", action="store_true", help="edge lists: no weight column")
    group.add_argument(
        "--random-weights",
        action="store_true",
        help="replace weights with seeded integers in [1, sqrt(n))",
    )
    group.add_argument(
        "--ranking", choices=[m.value for m in RankingMethod], default=RankingMethod.DEGREE.value
    )
    group.add_argument(
        "--samples", type=int, default=DEFAULT_SAMPLES, help="betweenness sample roots"
    )
    group.add_argument("--seed", type=int, default=0, help="root of every random substream")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hublab", description="Canonical hub labeling builder and query engine")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    build = sub.add_parser("build", help="construct a labeling")
    _add_input_args(build)
    build.add_argument(
        "--algorithm", "-a", choices=[a.value for a in Algorithm], default=Algorithm.PLANT.value
    )
    build.add_argument("--output", "-o", help="label file, or shard directory for cluster runs")
    build.add_argument("--manifest", help="run manifest path (default: OUTPUT.run.json)")
    build.add_argument("--from-manifest", help="rebuild exactly as a previous run manifest says")
    build.add_argument("--traffic", help="traffic CSV path for cluster runs")
    build.add_argument(
        "--workers", type=int, default=None, help="threads (default: $HUBLAB_WORKERS or CPU count)"
    )
    build.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    build.add_argument("--q", type=int, default=1, help="simulated cluster nodes")
    build.add_argument("--beta", type=float, default=DEFAULT_BETA)
    build.add_argument("--syncs", type=int, default=None, help="supersteps (default: ceil(log8 n))")
    build.add_argument("--psi-th", type=float, default=None, help="hybrid switch threshold")
    build.add_argument(
        "--graph-class",
        choices=[c.value for c in GraphClass],
        default=GraphClass.SCALE_FREE.value,
        help="picks the default --psi-th",
    )
    build.add_argument("--eta", type=int, default=DEFAULT_ETA, help="common label table hubs")
    build.add_argument("--no-early-termination", action="store_true")
    build.set_defaults(handler=cmd_build)

    query = sub.add_parser("query", help="answer distance queries")
    query.add_argument("--mode", choices=[m.value for m in QueryMode], default=QueryMode.QLSN.value)
    query.add_argument("--labels", help="label file")
    query.add_argument("--manifest", help="run manifest of the build")
    query.add_argument("--queries", help="file of 'u v' lines")
    query.add_argument("--random", type=int, help="N seeded random queries")
    query.add_argument("--seed", type=int, default=0)
    query.add_argument("--q", type=int, default=1, help="nodes for the qdol layout")
    query.add_argument("--output", "-o", help="results file (default: stdout)")
    query.add_argument("--stats", help="throughput/latency CSV")
    query.set_defaults(handler=cmd_query)

    verify = sub.add_parser("verify", help="check cover, ranking and minimality")
    _add_input_args(verify)
    verify.add_argument("--labels", help="label file or shard directory")
    verify.add_argument("--manifest", help="run manifest of the build")
    verify.add_argument("--pair-limit", type=int, default=256, help="check all pairs up to this n")
    verify.add_argument("--sample-pairs", type=int, default=1000)
    verify.add_argument("--workers", type=int, default=None)
    verify.set_defaults(handler=cmd_verify)

    stats = sub.add_parser("stats", help="emit CSVs for plotting")
    _add_input_args(stats)
    stats.add_argument("--labels", help="label file or shard directory")
    stats.add_argument("--manifest", help="run manifest of the build")
    stats.add_argument("--out-dir", required=True)
    stats.set_defaults(handler=cmd_stats)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"hublab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return int(args.handler(args))
    except (UsageError, LayoutError, ContractViolation, ValidationError) as exc:
        print(f"hublab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, HubLabelError) as exc:
        print(f"hublab: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
