"""Visual Roadmap: k-NN graph over robot images, obstacle pruning, queries and search."""
from __future__ import annotations

import heapq
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.optimize import nnls
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .dataset import Dataset
from .errors import (
    GeometryMismatchError,
    InCollisionError,
    InsufficientNodesError,
    IsolatedQueryError,
    UnsupportedMetricError,
)
from .metrics import Metric, Rep, make_metric
from .planners import (
    LTS_STEPS,
    LTS_THRESHOLD,
    PLANNERS,
    ObstacleMask,
    PlannerCertificate,
    build_chart,
    chart_members,
    itp_check,
    jnst_check,
    lts_check,
    lts_superimpose_check,
    pca_chart,
)

log = logging.getLogger(__name__)

DEFAULT_K = 8
BLOCK = 1000


def _take_k(d: np.ndarray, ids: np.ndarray, k: int):
    """k smallest distances, ties broken by node id."""
    if len(d) <= k:
        order = np.lexsort((ids, d))
        return ids[order], d[order]
    kth = np.partition(d, k - 1)[k - 1]
    cand = np.flatnonzero(d <= kth)
    order = np.lexsort((ids[cand], d[cand]))[:k]
    return ids[cand[order]], d[cand[order]]


def knn(metric: Metric, rep: Rep, k: int, block: int = BLOCK):
    """Exact k-NN lists ``(n, k)`` over all pairs, evaluated in row blocks."""
    n = rep.n
    idx = np.empty((n, k), dtype=np.int64)
    dist = np.empty((n, k))
    ids = np.arange(n)
    for s in range(0, n, block):
        rows = np.arange(s, min(n, s + block))
        D = metric.pairwise(rep.take(rows), rep)
        D[np.arange(len(rows)), rows] = np.inf
        for r, i in enumerate(rows):
            idx[i], dist[i] = _take_k(D[r], ids, k)
    return idx, dist


@dataclass(eq=False)
class VisualRoadmap:
    """Symmetrized k-NN graph; ``edges`` are ``(i, j)`` with ``i < j``, sorted."""

    metric: str
    k: int
    neighbors: np.ndarray
    neighbor_dist: np.ndarray
    edges: np.ndarray
    weights: np.ndarray
    n_nodes: int
    build_evaluations: int = 0

    def connected(self) -> bool:
        if self.n_nodes == 0:
            return True
        ncomp, _ = connected_components(_sparse(self.n_nodes, self.edges, self.weights), directed=False)
        return ncomp == 1

    def degree(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n_nodes)


def _sparse(n, edges, weights):
    if len(edges) == 0:
        return csr_matrix((n, n))
    w = np.maximum(weights, 1e-300)  # keep zero-weight edges as stored entries
    return csr_matrix((w, (edges[:, 0], edges[:, 1])), shape=(n, n))


def _symmetrize(neighbors: np.ndarray, dist: np.ndarray):
    n, k = neighbors.shape
    i = np.repeat(np.arange(n), k)
    j = neighbors.ravel()
    w = dist.ravel()
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    key = lo * n + hi
    _, first = np.unique(key, return_index=True)
    edges = np.stack([lo[first], hi[first]], axis=1)
    return edges, w[first]


def build_graph(store: Dataset, metric="img-l2", k: int = DEFAULT_K, rep: Optional[Rep] = None) -> VisualRoadmap:
    """Symmetrized k-NN graph with edge weights equal to the metric distance."""
    metric = make_metric(metric) if isinstance(metric, str) else metric
    if store.n < k + 1:
        raise InsufficientNodesError(f"need at least k+1 = {k + 1} nodes, have {store.n}")
    rep = metric.represent(store) if rep is None else rep
    before = metric.evaluations
    nb, nd = knn(metric, rep, k)
    edges, weights = _symmetrize(nb, nd)
    return VisualRoadmap(metric.name, k, nb, nd, edges, weights, store.n, metric.evaluations - before)


@dataclass(eq=False)
class PrunedRoadmap:
    """A roadmap with collision nodes and unsafe edges removed.

    Node and edge arrays cover the original graph plus any inserted query
    nodes; ``node_alive`` / ``edge_alive`` mark what survives.
    """

    roadmap: VisualRoadmap
    store: Dataset
    node_alive: np.ndarray
    edges: np.ndarray
    weights: np.ndarray
    edge_alive: np.ndarray
    neighbors: np.ndarray
    removed_nodes: dict = field(default_factory=dict)
    removed_edges: list = field(default_factory=list)
    certificates: dict = field(default_factory=dict)
    overlap_tests: int = 0
    planner: Optional[str] = None
    queries: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.node_alive)

    @property
    def alive_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.node_alive)

    @property
    def alive_edges(self) -> np.ndarray:
        return self.edges[self.edge_alive]

    def adjacency(self):
        """CSR-style ``(indptr, indices, weights, edge_ids)`` over surviving edges."""
        ids = np.flatnonzero(self.edge_alive)
        e = self.edges[ids]
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        eid = np.concatenate([ids, ids])
        order = np.lexsort((dst, src))
        src, dst, eid = src[order], dst[order], eid[order]
        indptr = np.searchsorted(src, np.arange(self.n_nodes + 1))
        return indptr, dst, self.weights[eid], eid

    def edge_log(self) -> list[str]:
        out = []
        for (i, j), why in self.removed_edges:
            out.append(f"removed-edge\t{i}\t{j}\t{why}")
        for i, why in sorted(self.removed_nodes.items()):
            out.append(f"removed-node\t{i}\t{why}")
        return out


def _node_collides(store: Dataset, b: ObstacleMask, idx) -> np.ndarray:
    """Per-node collision under the at-least-one-free-view rule."""
    sup = store.supports[idx]
    hit = np.ones(len(idx), dtype=bool)
    for o, ix in zip(b.offsets, b.index):
        hit &= sup[:, o + ix].any(axis=1)
    return hit


def prune_obstacle_nodes(G: VisualRoadmap, store: Dataset, b) -> PrunedRoadmap:
    """Remove nodes whose foreground overlaps the obstacle image, and their edges.

    Exactly one overlap test is made per node.
    """
    b = ObstacleMask.of(b)
    if tuple(b.views) != tuple(store.views):
        raise GeometryMismatchError(f"obstacle raster {b.views} != dataset raster {store.views}")
    idx = np.arange(G.n_nodes)
    collide = _node_collides(store, b, idx)
    alive = ~collide
    edge_alive = alive[G.edges[:, 0]] & alive[G.edges[:, 1]]
    removed = {int(i): "collision" for i in np.flatnonzero(collide)}
    removed_edges = [((int(i), int(j)), "incident-to-collision-node") for i, j in G.edges[~edge_alive]]
    return PrunedRoadmap(
        roadmap=G,
        store=store,
        node_alive=alive,
        edges=G.edges.copy(),
        weights=G.weights.copy(),
        edge_alive=edge_alive,
        neighbors=G.neighbors,
        removed_nodes=removed,
        removed_edges=removed_edges,
        overlap_tests=len(idx),
    )


class EdgeChecker:
    """Runs one local planner over roadmap edges."""

    def __init__(self, planner: str, store: Dataset, b, neighbors: np.ndarray, alive: np.ndarray,
                 dim: Optional[int] = None, steps: int = LTS_STEPS, threshold: float = LTS_THRESHOLD):
        planner = planner.lower()
        if planner not in PLANNERS:
            raise UnsupportedMetricError(f"unknown planner {planner!r}; choose from {PLANNERS}")
        if planner == "itp" and store.tracked is None:
            raise UnsupportedMetricError("itp planner needs tracked markers")
        self.planner = planner
        self.store = store
        self.b = ObstacleMask.of(b)
        self.neighbors = neighbors
        self.alive = alive
        self.dim = store.dof if dim is None else dim
        self.steps = steps
        self.threshold = threshold
        if planner == "itp":
            per_view = store.tracked.shape[1] // len(store.views)
            self.marker_views = np.repeat(np.arange(len(store.views)), per_view)

    def check(self, edge) -> PlannerCertificate:
        u, v = int(edge[0]), int(edge[1])
        e = (u, v)
        p = self.planner
        if p == "none":
            return PlannerCertificate("none", e, True)
        if p == "itp":
            return itp_check(e, self.store.tracked[u], self.store.tracked[v], self.b, self.marker_views)
        if p == "jnst":
            f = self.store.features
            return jnst_check(e, f[u], f[v], self.b)
        # pruned neighbours keep their images and still shape the chart
        members = chart_members(e, self.neighbors)
        if p == "lts-sup":
            return lts_superimpose_check(e, self.store.supports[members], self.b)
        chart = pca_chart(e, members, self.store.foreground_pixels(members), self.dim)
        return lts_check(e, chart, self.b, self.steps, self.threshold)


def prune_unsafe_edges(Gp: PrunedRoadmap, planner: str, b, dim: Optional[int] = None, **kw) -> PrunedRoadmap:
    """Run ``planner`` on every surviving edge; keep only certified-safe edges."""
    checker = EdgeChecker(planner, Gp.store, b, Gp.neighbors, Gp.node_alive, dim, **kw)
    alive = Gp.edge_alive.copy()
    certs = dict(Gp.certificates)
    removed = list(Gp.removed_edges)
    for eid in np.flatnonzero(alive):
        cert = checker.check(Gp.edges[eid])
        certs[cert.edge] = cert
        if not cert.safe:
            alive[eid] = False
            removed.append((cert.edge, f"{checker.planner}-unsafe"))
    return replace(Gp, edge_alive=alive, certificates=certs, removed_edges=removed, planner=checker.planner)


def insert_query(Gp: PrunedRoadmap, s: Dataset, t: Dataset, metric, k: int = DEFAULT_K,
                 planner: Optional[str] = None, b=None, rep: Optional[Rep] = None,
                 dim: Optional[int] = None) -> PrunedRoadmap:
    """Add start and goal images, each joined to its k nearest surviving nodes.

    ``s`` and ``t`` are one-node stores.  ``rep`` is the dataset
    representation for ``metric`` (recomputed when omitted); only
    ``2 * n_alive`` query distances are evaluated.
    """
    metric = make_metric(metric) if isinstance(metric, str) else metric
    planner = planner or Gp.planner or "none"
    mask = ObstacleMask.of(b)
    for name, q in (("start", s), ("goal", t)):
        if _node_collides(q, mask, np.array([0]))[0]:
            raise InCollisionError(f"{name} image overlaps the obstacle")
    base_n = Gp.n_nodes
    store = Gp.store.concat(s).concat(t)
    rep = metric.represent(Gp.store) if rep is None else rep
    alive_ids = Gp.alive_nodes
    alive_ids = alive_ids[alive_ids < rep.n]
    sub = rep.take(alive_ids)
    new_nb = []
    edges, weights = [], []
    for offset, q in ((0, s), (1, t)):
        d = metric.pairwise(metric.represent(q), sub)[0]
        ids, dist = _take_k(d, alive_ids, k)
        node = base_n + offset
        new_nb.append(np.pad(ids, (0, Gp.neighbors.shape[1] - len(ids)), constant_values=node)
                      if len(ids) < Gp.neighbors.shape[1] else ids[: Gp.neighbors.shape[1]])
        for j, w in zip(ids, dist):
            edges.append((int(j), node))
            weights.append(float(w))
    neighbors = np.vstack([Gp.neighbors, np.array(new_nb, dtype=np.int64)])
    node_alive = np.concatenate([Gp.node_alive, [True, True]])
    checker = EdgeChecker(planner, store, mask, neighbors, node_alive, dim)
    e_alive, certs = [], dict(Gp.certificates)
    removed = list(Gp.removed_edges)
    for e in edges:
        c = checker.check(e)
        certs[c.edge] = c
        e_alive.append(c.safe)
        if not c.safe:
            removed.append((c.edge, f"{checker.planner}-unsafe"))
    e_alive = np.asarray(e_alive, dtype=bool)
    for offset, name in ((0, "start"), (1, "goal")):
        node = base_n + offset
        if not any(a for (i, j), a in zip(edges, e_alive) if j == node):
            raise IsolatedQueryError(f"{name} has no safe edge into the roadmap")
    return replace(
        Gp,
        store=store,
        node_alive=node_alive,
        edges=np.vstack([Gp.edges, np.asarray(edges, dtype=np.int64).reshape(-1, 2)]),
        weights=np.concatenate([Gp.weights, weights]),
        edge_alive=np.concatenate([Gp.edge_alive, e_alive]),
        neighbors=neighbors,
        certificates=certs,
        removed_edges=removed,
        queries={"start": base_n, "goal": base_n + 1},
    )


@dataclass(frozen=True)
class PathResult:
    found: bool
    nodes: tuple[int, ...] = ()
    weight: float = math.inf
    certificates: tuple[PlannerCertificate, ...] = ()
    pops: int = 0
    heap_pops: int = 0


def shortest_path(Gp: PrunedRoadmap, s: int, t: int) -> PathResult:
    """Dijkstra with a lazy-deletion binary heap over surviving edges.

    ``pops`` counts settled nodes (at most the node count); stale heap
    entries are counted separately in ``heap_pops``.
    """
    if not (Gp.node_alive[s] and Gp.node_alive[t]):
        return PathResult(False)
    if s == t:
        return PathResult(True, (s,), 0.0)
    indptr, nbr, w, _ = Gp.adjacency()
    dist = np.full(Gp.n_nodes, np.inf)
    prev = np.full(Gp.n_nodes, -1, dtype=np.int64)
    done = np.zeros(Gp.n_nodes, dtype=bool)
    dist[s] = 0.0
    heap = [(0.0, s)]
    pops = heap_pops = 0
    while heap:
        d, u = heapq.heappop(heap)
        heap_pops += 1
        if done[u]:
            continue
        done[u] = True
        pops += 1
        if u == t:
            break
        for a in range(indptr[u], indptr[u + 1]):
            v = nbr[a]
            nd = d + w[a]
            if nd < dist[v] or (nd == dist[v] and prev[v] > u and not done[v]):
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, int(v)))
    if not done[t]:
        return PathResult(False, pops=pops, heap_pops=heap_pops)
    path = [t]
    while path[-1] != s:
        path.append(int(prev[path[-1]]))
    path.reverse()
    certs = tuple(
        Gp.certificates.get((min(a, b), max(a, b)), PlannerCertificate("none", (min(a, b), max(a, b)), True))
        for a, b in zip(path, path[1:])
    )
    return PathResult(True, tuple(path), float(dist[t]), certs, pops, heap_pops)


# ---------------------------------------------------------------- diagnostics

@dataclass(frozen=True)
class ScreeResult:
    residual: np.ndarray  # mean residual variance for d' = 1..d_max
    per_node: np.ndarray  # (n, d_max); NaN rows are degenerate neighbourhoods
    degenerate: np.ndarray

    def elbow_ratio(self, d: int) -> float:
        """Drop into dimension ``d`` divided by the drop into ``d + 1``."""
        r = np.concatenate([[1.0], self.residual])
        into_d = r[d - 1] - r[d]
        after = r[d] - r[d + 1]
        return float(into_d / after) if after > 0 else math.inf


def blur_images(store: Dataset, sigma: float) -> np.ndarray:
    """Per-view Gaussian low-pass of every image, as float64 ``(n, p)`` minus background."""
    out = np.empty((store.n, store.p))
    bg = store.background.astype(np.float64) / 255.0
    o = 0
    for r, c in store.views:
        size = 3 * r * c
        for s in range(0, store.n, 500):
            blk = store.images[s : s + 500, o : o + size].astype(np.float64) / 255.0 - bg[o : o + size]
            blk = blk.reshape(-1, r, c, 3)
            if sigma > 0:
                blk = ndimage.gaussian_filter(blk, (0, sigma, sigma, 0), mode="constant")
            out[s : s + 500, o : o + size] = blk.reshape(len(blk), -1)
        o += size
    return out


def intrinsic_dimension(store: Dataset, k: int = DEFAULT_K, d_max: int = 5, blur: float = 4.0) -> ScreeResult:
    """Local-PCA residual variance curve.

    For every node, the node and its ``k`` nearest neighbours are centered
    and the fraction of variance left after the top ``d'`` principal
    components is recorded; the curve averages this over nodes.  Images are
    first low-passed with a Gaussian of ``blur`` pixels.
    """
    if store.n < k + 1:
        raise InsufficientNodesError(f"need at least k+1 = {k + 1} images")
    X = blur_images(store, blur)
    sq = (X * X).sum(1)
    per = np.full((store.n, d_max), np.nan)
    for s in range(0, store.n, BLOCK):
        g = sq[s : s + BLOCK, None] + sq[None, :] - 2.0 * X[s : s + BLOCK] @ X.T
        g[np.arange(len(g)), np.arange(s, s + len(g))] = np.inf
        for r in range(len(g)):
            i = s + r
            nb, _ = _take_k(g[r], np.arange(store.n), k)
            P = X[np.concatenate([[i], nb])]
            P = P - P.mean(axis=0)
            ev = np.linalg.eigvalsh(P @ P.T)[::-1].clip(0)
            tot = ev.sum()
            if tot <= 0:
                continue
            cum = np.cumsum(ev)[:d_max] / tot
            cum = np.pad(cum, (0, d_max - len(cum)), constant_values=1.0)
            per[i] = 1.0 - cum
    degenerate = np.isnan(per[:, 0])
    if degenerate.any():
        log.warning("%d degenerate neighbourhoods (identical images)", int(degenerate.sum()))
    return ScreeResult(np.nanmean(per, axis=0), per, degenerate)


@dataclass(frozen=True)
class IKResult:
    neighbors: np.ndarray
    weights: np.ndarray
    reconstruction: np.ndarray
    residual: float
    diameter: float
    nearest_distance: float
    out_of_manifold: bool


def inverse_kinematics(x, store: Dataset, k: int = DEFAULT_K, dim: Optional[int] = None,
                       nn_quantile: Optional[float] = None) -> IKResult:
    """Locate an image on the roadmap's local chart.

    Returns the ``k`` nearest node ids (image L2), convex weights from the
    tangent-space coordinates of ``x``, and the weighted reconstruction.
    The executable answer is the nearest-node sequence; weights and
    reconstruction certify how well ``x`` sits on the sampled manifold.
    ``nn_quantile`` is the dataset's 99th-percentile nearest-neighbour
    distance (computed when omitted).
    """
    from .metrics import ImageL2

    dim = store.dof if dim is None else dim
    pixels = x.pixels if hasattr(x, "pixels") else np.asarray(x)
    q8 = np.clip(np.rint(np.asarray(pixels) * 255.0), 0, 255).astype(np.uint8)
    if q8.size != store.p:
        raise GeometryMismatchError("query image does not match the dataset raster")
    metric = ImageL2()
    rep = metric.represent(store)
    d = metric.pairwise(metric.represent(store.like(q8[None])), rep)[0]
    ids, dist = _take_k(d, np.arange(store.n), k)
    if nn_quantile is None:
        _, nd = knn(metric, rep, 1)
        nn_quantile = float(np.quantile(nd[:, 0], 0.99))
    xq = q8.astype(np.float64) / 255.0
    X = store.images[ids].astype(np.float64) / 255.0
    if dist[0] == 0.0:
        w = np.zeros(len(ids))
        w[0] = 1.0
    else:
        chart = pca_chart((int(ids[0]), int(ids[1])), ids, X, dim)
        Y = chart.coords
        y = chart.basis.T @ (xq - chart.mean)
        lam = 10.0 * (1.0 + np.abs(Y).max())
        A = np.vstack([Y, lam * np.ones(len(ids))])
        w, _ = nnls(A, np.concatenate([y, [lam]]))
        w = w / w.sum()
    rec = w @ X
    P = np.vstack([xq[None], X])
    sq = (P * P).sum(1)
    diam = float(np.sqrt(max((sq[:, None] + sq[None] - 2 * P @ P.T).max(), 0.0)))
    out = bool(dist[0] > nn_quantile)
    if out:
        warnings.warn("query image is farther from the roadmap than 99% of its nodes' neighbours", stacklevel=2)
    return IKResult(ids, w, rec, float(np.linalg.norm(xq - rec)), diam, float(dist[0]), out)
