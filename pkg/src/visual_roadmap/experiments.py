"""Benchmark sweeps, path audits, planning runs and scree reports."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from PIL import Image

from .dataset import Dataset, simulate
from .errors import InCollisionError, IsolatedQueryError, UnsupportedMetricError, VisualRoadmapError
from .imaging import RobotImage, background_subtract, obstacle_image
from .metrics import METRICS, make_metric
from .planners import PLANNERS, GoldStandard, ObstacleMask
from .roadmap import (
    DEFAULT_K,
    PathResult,
    build_graph,
    insert_query,
    intrinsic_dimension,
    prune_obstacle_nodes,
    prune_unsafe_edges,
    shortest_path,
)
from .scene import Scene, load_scene

log = logging.getLogger(__name__)

METRIC_NAMES = ("img-l2", "rp-l2", "theta-g", "itp-l2", "st-h")
BENCH_PLANNERS = ("none", "lts", "itp", "jnst")
DENSITIES = (500, 1000, 2000, 5000)
COLUMNS = (
    "seed", "density", "metric", "planner", "edges_total", "edges_pruned", "bad_pct", "wall_time",
    "nodes_pruned", "edges_graph", "edges_surviving", "bad_edges", "bad_pct_surviving",
    "queries", "paths_found", "path_failures", "status",
)


@dataclass(frozen=True)
class ExperimentSpec:
    scene: str = "standard"
    densities: tuple[int, ...] = DENSITIES
    metrics: tuple[str, ...] = METRIC_NAMES
    planners: tuple[str, ...] = BENCH_PLANNERS
    k: int = DEFAULT_K
    seed: Optional[int] = None
    repeats: int = 1
    epsilon_deg: float = 1.0
    queries: int = 0

    def __post_init__(self):
        d = list(self.densities)
        if not d or any(b <= a for a, b in zip(d, d[1:])):
            raise ValueError(f"densities must be strictly ascending, got {d}")
        for m in self.metrics:
            if m not in METRICS:
                raise UnsupportedMetricError(f"unknown metric {m!r}")
        for p in self.planners:
            if p not in PLANNERS:
                raise UnsupportedMetricError(f"unknown planner {p!r}")
        if self.k < 1 or self.repeats < 1 or self.epsilon_deg <= 0 or self.queries < 0:
            raise ValueError("k, repeats and epsilon must be positive, queries non-negative")


@dataclass
class BenchmarkReport:
    root_seed: int
    rows: list[dict] = field(default_factory=list)

    def cell(self, density, metric, planner, seed=None) -> dict:
        for r in self.rows:
            if (r["density"], r["metric"], r["planner"]) == (density, metric, planner) and (seed is None or r["seed"] == seed):
                return r
        raise KeyError((density, metric, planner))

    def bad_pct(self, density, metric, planner, seed=None) -> float:
        return self.cell(density, metric, planner, seed)["bad_pct"]


def child_seeds(root: int, count: int) -> list[int]:
    if count == 1:
        return [int(root)]
    return [int(s) for s in np.random.SeedSequence(root).generate_state(count)]


def _metric_for(name: str, seed: int):
    return make_metric(name, seed=seed) if name == "rp-l2" else make_metric(name)


def scene_obstacle(scene: Scene) -> ObstacleMask:
    return ObstacleMask(obstacle_image(scene.obstacles, scene.cameras, scene.background))


def free_queries(scene: Scene, mask: ObstacleMask, count: int, rng: np.random.Generator, max_tries: int = 10000):
    """Random start/goal pose pairs whose images miss the obstacle."""
    from .robots import sample_configurations

    out = []
    tries = 0
    while len(out) < 2 * count:
        if tries > max_tries:
            raise RuntimeError("could not sample collision-free query poses")
        q = sample_configurations(1, scene.robot, int(rng.integers(2**31)))
        tries += 1
        img = simulate(scene, configs=q)
        if not _collides(img, mask):
            out.append(img)
    return list(zip(out[0::2], out[1::2]))


def _collides(store: Dataset, mask: ObstacleMask) -> bool:
    sup = store.supports[0]
    return all(sup[o + ix].any() for o, ix in zip(mask.offsets, mask.index))


def audit_path(path: PathResult, store: Dataset, gold: GoldStandard) -> bool:
    """True iff every path edge is gold-standard safe."""
    for a, b in zip(path.nodes, path.nodes[1:]):
        if not gold.check((a, b), store.configs[a], store.configs[b]).safe:
            return False
    return True


@dataclass(frozen=True)
class QueryOutcome:
    status: str  # path | no-path | rejected
    path: Optional[PathResult] = None
    safe: Optional[bool] = None


def run_queries(Gp, queries, metric, planner, k, rep, gold: GoldStandard) -> list[QueryOutcome]:
    out = []
    for s, t in queries:
        try:
            Gq = insert_query(Gp, s, t, metric, k, planner, gold.mask, rep=rep)
        except IsolatedQueryError:
            out.append(QueryOutcome("no-path"))
            continue
        except InCollisionError:
            out.append(QueryOutcome("rejected"))
            continue
        res = shortest_path(Gq, Gq.queries["start"], Gq.queries["goal"])
        if not res.found:
            out.append(QueryOutcome("no-path", res))
            continue
        out.append(QueryOutcome("path", res, audit_path(res, Gq.store, gold)))
    return out


def run_benchmark(spec: ExperimentSpec, progress: Optional[Callable[[dict], None]] = None) -> BenchmarkReport:
    """Bad-edge percentages for every (density, metric, planner) cell.

    Densities are nested prefixes of one sample sequence, so gold-standard
    verdicts are shared across densities and metrics.  ``bad_pct`` is the
    share of the obstacle-pruned graph's edges that survive the planner yet
    fail the gold standard.
    """
    scene = load_scene(spec.scene)
    root = scene.seed if spec.seed is None else int(spec.seed)
    report = BenchmarkReport(root)
    mask = scene_obstacle(scene)
    eps = math.radians(spec.epsilon_deg)
    for seed in child_seeds(root, spec.repeats):
        full = simulate(scene, spec.densities[-1], seed)
        if any(m == "st-h" for m in spec.metrics) or "jnst" in spec.planners:
            full.features
        full.supports
        gold = GoldStandard(scene.robot, scene.cameras, mask, eps)
        rng = np.random.default_rng(seed + 1)
        queries = free_queries(scene, mask, spec.queries, rng) if spec.queries else []
        for n in spec.densities:
            ds = full.subset(np.arange(n))
            for mname in spec.metrics:
                _metric_cells(report, spec, ds, mname, seed, mask, gold, queries, progress)
    return report


def _metric_cells(report, spec, ds, mname, seed, mask, gold, queries, progress):
    base = {"seed": seed, "density": ds.n, "metric": mname}
    try:
        t0 = time.perf_counter()
        metric = _metric_for(mname, seed)
        rep = metric.represent(ds)
        G = build_graph(ds, metric, spec.k, rep=rep)
        Gp = prune_obstacle_nodes(G, ds, mask)
        t_build = time.perf_counter() - t0
        candidates = Gp.edges[Gp.edge_alive]
        verdict = {}
        for i, j in candidates:
            i, j = int(i), int(j)
            verdict[(i, j)] = gold.check((i, j), ds.configs[i], ds.configs[j], key=(i, j)).safe
    except Exception as exc:  # noqa: BLE001 - cell failures are recorded, not raised
        log.exception("metric %s failed at density %d", mname, ds.n)
        for p in spec.planners:
            _emit(report, progress, {**base, "planner": p, "status": f"failed: {exc}"})
        return
    total = len(candidates)
    for p in spec.planners:
        row = {**base, "planner": p}
        try:
            t1 = time.perf_counter()
            P = prune_unsafe_edges(Gp, p, mask, dim=ds.dof)
            wall = t_build + time.perf_counter() - t1
            kept = P.edges[P.edge_alive]
            bad = sum(1 for i, j in kept if not verdict[(int(i), int(j))])
            row.update(
                edges_total=total,
                edges_pruned=total - len(kept),
                bad_pct=100.0 * bad / total if total else 0.0,
                wall_time=round(wall, 3),
                nodes_pruned=int((~Gp.node_alive).sum()),
                edges_graph=len(G.edges),
                edges_surviving=len(kept),
                bad_edges=bad,
                bad_pct_surviving=100.0 * bad / len(kept) if len(kept) else 0.0,
                status="ok",
            )
            if queries:
                outs = run_queries(P, queries, metric, p, spec.k, rep, gold)
                row.update(
                    queries=len(outs),
                    paths_found=sum(o.status == "path" for o in outs),
                    path_failures=sum(o.status == "path" and not o.safe for o in outs),
                )
        except Exception as exc:  # noqa: BLE001
            log.exception("cell %s/%s/%d failed", mname, p, ds.n)
            row["status"] = f"failed: {exc}"
        _emit(report, progress, row)


def _emit(report, progress, row):
    report.rows.append(row)
    if progress is not None:
        progress(row)


def write_report(report: BenchmarkReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# root_seed={report.root_seed}\n")
        w = csv.DictWriter(fh, fieldnames=COLUMNS, restval="", extrasaction="ignore")
        w.writeheader()
        for r in report.rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
    return path


def read_report(path) -> BenchmarkReport:
    with open(path, newline="") as fh:
        first = fh.readline()
        root = int(first.split("=", 1)[1]) if first.startswith("# root_seed=") else 0
        if not first.startswith("#"):
            fh.seek(0)
        rows = []
        for r in csv.DictReader(fh):
            rows.append({k: _parse(v) for k, v in r.items()})
    return BenchmarkReport(root, rows)


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def _parse(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


# ---------------------------------------------------------------- planning

@dataclass
class PlanOutcome:
    status: str  # path | no-path
    path: Optional[PathResult]
    certificates: list[str]
    message: str = ""

    @property
    def found(self) -> bool:
        return self.status == "path"


def _same(a: Dataset, b: Dataset) -> bool:
    return np.array_equal(a.images, b.images)


@dataclass(eq=False)
class PreparedRoadmap:
    """An obstacle- and planner-pruned roadmap ready for queries."""

    dataset: Dataset
    mask: ObstacleMask
    metric: object
    rep: object
    roadmap: object
    planner: str
    k: int


def prepare(ds: Dataset, b, metric: str = "st-h", planner: str = "jnst", k: int = DEFAULT_K,
            seed: int = 0) -> PreparedRoadmap:
    mask = ObstacleMask.of(b)
    m = _metric_for(metric, seed)
    rep = m.represent(ds)
    G = build_graph(ds, m, k, rep=rep)
    Gp = prune_unsafe_edges(prune_obstacle_nodes(G, ds, mask), planner, mask)
    return PreparedRoadmap(ds, mask, m, rep, Gp, planner, k)


def plan_query(prep: PreparedRoadmap, start: Dataset, goal: Dataset) -> tuple[PlanOutcome, Dataset]:
    """Insert start/goal into a prepared roadmap and search.

    Returns the outcome and the node store (dataset plus query images)
    against which path ids resolve.  Raises ``InCollisionError`` when the
    start or goal image overlaps the obstacle.
    """
    ds, mask = prep.dataset, prep.mask
    for name, q in (("start", start), ("goal", goal)):
        if _collides(q, mask):
            raise InCollisionError(f"{name} image overlaps the obstacle")
    if _same(start, goal):
        store = ds.concat(start)
        return PlanOutcome("path", PathResult(True, (ds.n,), 0.0), [], "start equals goal"), store
    Gp = prep.roadmap
    try:
        Gq = insert_query(Gp, start, goal, prep.metric, prep.k, prep.planner, mask, rep=prep.rep)
    except IsolatedQueryError as exc:
        certs = [c.record() for c in Gp.certificates.values()]
        return PlanOutcome("no-path", None, certs + Gp.edge_log(), str(exc)), ds.concat(start).concat(goal)
    res = shortest_path(Gq, Gq.queries["start"], Gq.queries["goal"])
    certs = [c.record() for c in Gq.certificates.values()] + Gq.edge_log()
    if not res.found:
        return PlanOutcome("no-path", res, certs, "goal unreachable in the pruned roadmap"), Gq.store
    return PlanOutcome("path", res, certs), Gq.store


def plan(ds: Dataset, b, start: Dataset, goal: Dataset, metric: str = "st-h", planner: str = "jnst",
         k: int = DEFAULT_K, seed: int = 0) -> tuple[PlanOutcome, Dataset]:
    """End-to-end query: build and prune the roadmap, insert start/goal, search."""
    mask = ObstacleMask.of(b)
    for name, q in (("start", start), ("goal", goal)):
        if _collides(q, mask):
            raise InCollisionError(f"{name} image overlaps the obstacle")
    return plan_query(prepare(ds, mask, metric, planner, k, seed), start, goal)


def write_plan(outcome: PlanOutcome, store: Dataset, out_dir) -> Path:
    """Path CSV, certificate log, filmstrip PNG (if a path exists) and a text report."""
    from .plotting import filmstrip

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "certificates.log").write_text("".join(line + "\n" for line in outcome.certificates))
    if outcome.found:
        p = outcome.path
        with open(out / "path.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "node_id"])
            for i, node in enumerate(p.nodes):
                w.writerow([i, node])
        filmstrip([store.image(i) for i in p.nodes], out / "filmstrip.png")
        text = f"status: path\nnodes: {len(p.nodes)}\nweight: {p.weight!r}\npops: {p.pops}\n"
    else:
        text = f"status: no-path\nreason: {outcome.message}\n"
    (out / "report.txt").write_text(text)
    return out


def load_view_images(paths: Sequence, ds: Dataset) -> Dataset:
    """A one-node store from one PNG per camera view."""
    arrays = [np.asarray(Image.open(p).convert("RGB"), dtype=np.uint8) for p in paths]
    views = tuple(a.shape[:2] for a in arrays)
    if views != tuple(ds.views):
        from .errors import GeometryMismatchError

        raise GeometryMismatchError(f"image views {views} != dataset views {ds.views}")
    return ds.like(np.concatenate([a.ravel() for a in arrays])[None])


def obstacle_from_images(paths: Sequence, ds: Dataset) -> RobotImage:
    """Obstacle foreground from renders of the obstacles over the empty background."""
    scene_img = load_view_images(paths, ds).image(0)
    bg = RobotImage(ds.background.astype(np.float32) / 255.0, ds.views)
    return background_subtract(scene_img, bg)


# ---------------------------------------------------------------- scree

def scree_rows(ds: Dataset, k: int = DEFAULT_K, d_max: int = 5, blur: float = 4.0):
    res = intrinsic_dimension(ds, k, d_max, blur)
    return [(d + 1, float(r)) for d, r in enumerate(res.residual)], res


def write_scree(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dimension", "residual_variance"])
        for d, r in rows:
            w.writerow([d, repr(r)])
    return path


def spec_dict(spec: ExperimentSpec) -> dict:
    return asdict(spec)
