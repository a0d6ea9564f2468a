"""Visual local planners and the joint-space gold standard.

Each check returns a :class:`PlannerCertificate`.  A check image collides
with the obstacle when it overlaps the obstacle support in *every* camera
view; with one camera that is the plain overlap test.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateChartError, DimensionMismatchError, GeometryMismatchError
from .imaging import Camera, RobotImage, robot_coverage, view_supports
from .metrics import LinkFeatureSet
from .robots import Robot, interpolate_configurations

LTS_STEPS = 10
LTS_THRESHOLD = 0.1
PLANNERS = ("none", "lts", "lts-sup", "itp", "jnst")


@dataclass(frozen=True)
class PlannerCertificate:
    planner: str
    edge: tuple[int, int]
    safe: bool
    worst_overlap: int = 0
    params: tuple = ()
    flags: tuple[str, ...] = ()

    def record(self) -> str:
        grid = " ".join(f"{p:.6g}" if isinstance(p, float) else str(p) for p in self.params)
        flags = ",".join(self.flags) or "-"
        verdict = "safe" if self.safe else "unsafe"
        return f"{self.planner}\t{self.edge[0]}\t{self.edge[1]}\t{verdict}\t{self.worst_overlap}\t{flags}\t{grid}"


class ObstacleMask:
    """Per-view pixel support of an obstacle image, with flat index lookups."""

    def __init__(self, b: RobotImage):
        self.views = b.views
        self.masks = view_supports(b)
        self.offsets = np.cumsum([0] + [r * c for r, c in b.views])[:-1]
        self.index = [np.flatnonzero(m) for m in self.masks]
        self.flat_index = np.concatenate([ix + o for ix, o in zip(self.index, self.offsets)])
        self.empty = not any(len(ix) for ix in self.index)

    @classmethod
    def of(cls, b) -> "ObstacleMask":
        return b if isinstance(b, ObstacleMask) else cls(b)

    def collides(self, per_view_counts: Sequence[int]) -> bool:
        return all(c > 0 for c in per_view_counts)

    def overlap_counts(self, support: np.ndarray) -> list[int]:
        """Overlap pixel count per view for a flat multi-view support vector."""
        return [int(support[o : o + len(m)][m].sum()) for o, m in zip(self.offsets, self.masks)]

    def collides_support(self, support: np.ndarray) -> tuple[bool, int]:
        counts = self.overlap_counts(support)
        return self.collides(counts), min(counts)


def _check_raster(b: ObstacleMask, views):
    if tuple(b.views) != tuple(views):
        raise GeometryMismatchError(f"obstacle raster {b.views} != dataset raster {tuple(views)}")


# ---------------------------------------------------------------- LTS

@dataclass(frozen=True, eq=False)
class LocalChart:
    """PCA chart over the shared neighbourhood of an edge.

    ``basis`` is ``W`` (p x dim, orthonormal columns), ``coords`` is ``Y``
    (dim x m) with ``members`` ordered as the columns of ``Y``.
    """

    edge: tuple[int, int]
    members: np.ndarray
    mean: np.ndarray
    basis: np.ndarray
    coords: np.ndarray
    variances: np.ndarray
    degenerate: bool = False
    rank_deficient: bool = False

    def coordinate(self, node: int) -> np.ndarray:
        return self.coords[:, int(np.flatnonzero(self.members == node)[0])]

    def reconstruct(self, y, index=None) -> np.ndarray:
        if index is None:
            return self.mean + self.basis @ y
        return self.mean[index] + self.basis[index] @ y


def chart_members(edge, neighbors: np.ndarray, alive: Optional[np.ndarray] = None) -> np.ndarray:
    """Sorted ids of ``(N(u) & N(v)) | {u, v}`` restricted to alive nodes."""
    u, v = edge
    shared = set(neighbors[u].tolist()) & set(neighbors[v].tolist())
    if alive is not None:
        shared = {i for i in shared if alive[i]}
    return np.array(sorted(shared | {u, v}), dtype=np.int64)


def pca_chart(edge, members: np.ndarray, X: np.ndarray, dim: int) -> LocalChart:
    """Local PCA of member vectors ``X`` (m x p) to ``dim`` components."""
    if len(members) < 2:
        raise DegenerateChartError("a chart needs at least two members")
    mean = X.mean(axis=0)
    C = X - mean
    gram = C @ C.T
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1]
    evals, evecs = np.clip(evals[order], 0.0, None), evecs[:, order]
    total = float(evals.sum())
    tol = max(total, 1.0) * 1e-10
    rank = int((evals > tol).sum())
    use = min(rank, dim)
    p = X.shape[1]
    W = np.zeros((p, dim))
    if use:
        W[:, :use] = (C.T @ evecs[:, :use]) / np.sqrt(evals[:use])
        # sign convention: largest-magnitude entry of every column positive
        piv = np.abs(W[:, :use]).argmax(axis=0)
        W[:, :use] *= np.sign(W[piv, np.arange(use)])
    if use < dim:
        W[:, use:] = _complement(W[:, :use], dim - use)
    Y = W.T @ C.T
    return LocalChart(
        edge=tuple(edge),
        members=np.asarray(members),
        mean=mean,
        basis=W,
        coords=Y,
        variances=evals[:dim] if len(evals) >= dim else np.pad(evals, (0, dim - len(evals))),
        degenerate=total <= tol,
        rank_deficient=use < dim,
    )


def _complement(W: np.ndarray, count: int) -> np.ndarray:
    """``count`` orthonormal vectors orthogonal to the columns of ``W`` (deterministic)."""
    p = W.shape[0]
    out = []
    basis = [W[:, j] for j in range(W.shape[1])]
    j = 0
    while len(out) < count:
        e = np.zeros(p)
        e[j] = 1.0
        for b in basis:
            e -= (b @ e) * b
        nrm = np.linalg.norm(e)
        if nrm > 1e-8:
            e /= nrm
            basis.append(e)
            out.append(e)
        j += 1
    return np.stack(out, axis=1)


def build_chart(edge, neighbors: np.ndarray, store, dim: int, alive=None) -> LocalChart:
    """Chart of edge ``(u, v)`` from the foregrounds of its shared k-NN neighbourhood."""
    members = chart_members(edge, neighbors, alive)
    return pca_chart(edge, members, store.foreground_pixels(members), dim)


def lts_alphas(steps: int = LTS_STEPS) -> np.ndarray:
    """Uniform interior grid of (0, 1)."""
    if steps < 1:
        raise ValueError("need at least one interpolation step")
    return np.arange(1, steps + 1) / (steps + 1)


def lts_check(edge, chart: LocalChart, b, steps: int = LTS_STEPS, threshold: float = LTS_THRESHOLD) -> PlannerCertificate:
    """Interpolate the endpoints' chart coordinates and test every reconstruction."""
    b = ObstacleMask.of(b)
    alphas = lts_alphas(steps)
    if chart.degenerate:
        return PlannerCertificate("lts", tuple(edge), False, 0, tuple(alphas), ("degenerate",))
    flags = ("rank-deficient",) if chart.rank_deficient else ()
    if b.empty:
        return PlannerCertificate("lts", tuple(edge), True, 0, tuple(alphas), flags)
    yu, yv = chart.coordinate(edge[0]), chart.coordinate(edge[1])
    chan = (3 * b.flat_index[:, None] + np.arange(3)).ravel()
    Y = alphas[None, :] * yu[:, None] + (1.0 - alphas[None, :]) * yv[:, None]
    rec = chart.mean[chan][:, None] + chart.basis[chan] @ Y
    hit = np.abs(rec).reshape(-1, 3, len(alphas)).max(axis=1) > threshold
    safe, worst = True, 0
    bounds = np.cumsum([0] + [len(ix) for ix in b.index])
    for a in range(len(alphas)):
        counts = [int(hit[bounds[i] : bounds[i + 1], a].sum()) for i in range(len(b.index))]
        if b.collides(counts):
            safe = False
            worst = max(worst, min(counts))
    return PlannerCertificate("lts", tuple(edge), safe, worst, tuple(alphas), flags)


def lts_support(chart: LocalChart, alpha: float, threshold: float = LTS_THRESHOLD) -> np.ndarray:
    """Pixel support of the reconstruction at ``alpha`` (whole raster)."""
    y = alpha * chart.coordinate(chart.edge[0]) + (1.0 - alpha) * chart.coordinate(chart.edge[1])
    rec = chart.reconstruct(y)
    return np.abs(rec).reshape(-1, 3).max(axis=1) > threshold


def lts_superimpose_check(edge, member_supports: np.ndarray, b) -> PlannerCertificate:
    """Unsafe iff the union of the neighbourhood's foreground supports meets the obstacle."""
    b = ObstacleMask.of(b)
    union = np.asarray(member_supports, dtype=bool).reshape(len(member_supports), -1).any(axis=0)
    hit, worst = b.collides_support(union)
    return PlannerCertificate("lts-sup", tuple(edge), not hit, worst if hit else 0)


# ---------------------------------------------------------------- joins

def line_pixels(p0, p1) -> np.ndarray:
    """Integer DDA line between rounded endpoints, both endpoints included; ``(k, 2)`` as (col, row)."""
    x0, y0 = (int(v) for v in np.rint(p0))
    x1, y1 = (int(v) for v in np.rint(p1))
    n = max(abs(x1 - x0), abs(y1 - y0))
    if n == 0:
        return np.array([[x0, y0]])
    t = np.arange(n + 1)
    xs = x0 + np.rint(t * (x1 - x0) / n).astype(int)
    ys = y0 + np.rint(t * (y1 - y0) / n).astype(int)
    return np.stack([xs, ys], axis=1)


def draw_joins(joins: Sequence[tuple[int, np.ndarray, np.ndarray]], views) -> np.ndarray:
    """Flat multi-view support of 1-px segments given as ``(view, start, end)``."""
    sizes = [r * c for r, c in views]
    offsets = np.cumsum([0] + sizes)[:-1]
    support = np.zeros(sum(sizes), dtype=bool)
    for v, a, bpt in joins:
        rows, cols = views[v]
        px = line_pixels(a, bpt)
        ok = (px[:, 0] >= 0) & (px[:, 0] < cols) & (px[:, 1] >= 0) & (px[:, 1] < rows)
        px = px[ok]
        support[offsets[v] + px[:, 1] * cols + px[:, 0]] = True
    return support


def itp_check(edge, tp_u, tp_v, b, marker_views=None) -> PlannerCertificate:
    """Join corresponding tracked markers and test the segment image.

    ``marker_views`` gives the camera view of each marker (default: all view 0).
    """
    b = ObstacleMask.of(b)
    tp_u, tp_v = np.asarray(tp_u, float), np.asarray(tp_v, float)
    if tp_u.shape != tp_v.shape:
        raise DimensionMismatchError("tracked point sets differ in size")
    mv = np.zeros(len(tp_u), dtype=int) if marker_views is None else np.asarray(marker_views)
    joins = [(int(mv[i]), tp_u[i], tp_v[i]) for i in range(len(tp_u))]
    hit, worst = b.collides_support(draw_joins(joins, b.views))
    return PlannerCertificate("itp", tuple(edge), not hit, worst if hit else 0)


def nearest_joins(f_u: LinkFeatureSet, f_v: LinkFeatureSet):
    """Nearest-feature joins per link in both directions; ``None`` if a link vanishes on one side."""
    if len(f_u.points) != len(f_v.points):
        raise DimensionMismatchError("feature sets differ in link count")
    joins = []
    for s, (a, c) in enumerate(zip(f_u.points, f_v.points)):
        if len(a) == 0 and len(c) == 0:
            continue
        if len(a) == 0 or len(c) == 0:
            return None
        view = f_u.view_of(s)
        D = ((a[:, None, :] - c[None, :, :]) ** 2).sum(-1)
        for i, j in enumerate(D.argmin(axis=1)):
            joins.append((view, a[i], c[j]))
        for j, i in enumerate(D.argmin(axis=0)):
            joins.append((view, c[j], a[i]))
    return joins


def jnst_check(edge, f_u: LinkFeatureSet, f_v: LinkFeatureSet, b) -> PlannerCertificate:
    """Join each link feature to its nearest counterpart (both ways) and test the join image."""
    b = ObstacleMask.of(b)
    joins = nearest_joins(f_u, f_v)
    if joins is None:
        return PlannerCertificate("jnst", tuple(edge), False, 0, (), ("vanished-link",))
    hit, worst = b.collides_support(draw_joins(joins, b.views))
    return PlannerCertificate("jnst", tuple(edge), not hit, worst if hit else 0)


# ---------------------------------------------------------------- gold standard

class GoldStandard:
    """Joint-space interpolation oracle: render every pose at ``epsilon`` and test the overlap.

    Only the obstacle's pixels are evaluated; robot coverage there equals
    the background-subtracted render's support, so the verdict is the
    one a full render would give.  Verdicts are cached per configuration pair.
    """

    def __init__(self, robot: Robot, cameras: Sequence[Camera], b, epsilon: float = math.radians(1.0)):
        self.robot = robot
        self.cameras = list(cameras)
        self.mask = ObstacleMask.of(b)
        if len(self.cameras) != len(self.mask.views):
            raise GeometryMismatchError("one camera per obstacle view is required")
        self.epsilon = float(epsilon)
        self.renders = 0
        self._cache: dict = {}

    def pose_overlaps(self, Q) -> np.ndarray:
        """Min-over-views overlap count per pose, ``(m,)``; > 0 means collision."""
        Q = np.atleast_2d(Q)
        self.renders += len(Q)
        counts = []
        for cam, ix in zip(self.cameras, self.mask.index):
            if len(ix) == 0:
                counts.append(np.zeros(len(Q), dtype=int))
                continue
            cov = robot_coverage(Q, self.robot, cam, ix).any(axis=1)
            counts.append(cov.sum(axis=1))
        return np.min(np.stack(counts), axis=0)

    def check(self, edge, q_u, q_v, key=None) -> PlannerCertificate:
        if q_u is None or q_v is None:
            raise ValueError("gold standard needs both diagnostic configurations")
        if key is not None and key in self._cache:
            return self._cache[key]
        path = interpolate_configurations(q_u, q_v, self.epsilon, self.robot.circular)
        worst = 0
        if not self.mask.empty:
            for s in range(0, len(path), 128):
                worst = max(worst, int(self.pose_overlaps(path[s : s + 128]).max()))
        cert = PlannerCertificate("gold", tuple(edge), worst == 0, worst, (self.epsilon, len(path)))
        if key is not None:
            self._cache[key] = cert
        return cert


def gold_standard_check(edge, q_u, q_v, epsilon, robot: Robot, cameras, b) -> PlannerCertificate:
    return GoldStandard(robot, [cameras] if isinstance(cameras, Camera) else cameras, b, epsilon).check(edge, q_u, q_v)
