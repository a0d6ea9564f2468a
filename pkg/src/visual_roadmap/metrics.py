"""Configuration-space representations and their distances.

Five representations are supported, each with a pairwise distance used to
build neighbourhood graphs:

========  ======================================  =====================
id        representation                          distance
========  ======================================  =====================
img-l2    raw RGB pixel vector                    Euclidean
rp-l2     Gaussian random projection of pixels    Euclidean
theta-g   joint angles                            sum of circular arcs
itp-l2    ideal tracked marker coordinates        Euclidean
st-h      per-link Shi-Tomasi corner sets         sum of Hausdorff
========  ======================================  =====================
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numba
import numpy as np
from scipy import ndimage

from .errors import (
    DimensionMismatchError,
    EmptyPointSetError,
    GeometryMismatchError,
    UnsupportedMetricError,
)
from .imaging import Camera, RobotImage
from .robots import TWO_PI, Robot

# Shi-Tomasi defaults
ST_WINDOW = 3
ST_QUALITY = 0.05
ST_NMS_RADIUS = 3.0
ST_MAX_FEATURES = 25


# ---------------------------------------------------------------- point distances

def image_l2(x1: RobotImage, x2: RobotImage) -> float:
    if x1.views != x2.views:
        raise GeometryMismatchError("images differ in raster geometry")
    d = x1.pixels.astype(np.float64) - x2.pixels.astype(np.float64)
    return float(np.sqrt(d @ d))


class RandomProjector:
    """Projection onto ``k`` Gaussian random unit vectors.

    The output is scaled by ``sqrt(p / k)`` so that Euclidean distances
    between projections estimate distances between the original vectors.
    """

    def __init__(self, p: int, k: int = 2000, seed: int = 0):
        self.p, self.k, self.seed = int(p), int(k), int(seed)
        rng = np.random.default_rng(seed)
        R = rng.standard_normal((self.p, self.k), dtype=np.float32)
        R /= np.linalg.norm(R, axis=0, keepdims=True)
        R.setflags(write=False)
        self.matrix = R
        self.scale = float(np.sqrt(self.p / self.k))

    def project_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float32)
        if X.shape[-1] != self.p:
            raise DimensionMismatchError(f"vector length {X.shape[-1]} != projector input {self.p}")
        return (X @ self.matrix).astype(np.float64) * self.scale


def project(x, rp: RandomProjector) -> np.ndarray:
    pixels = x.pixels if isinstance(x, RobotImage) else np.asarray(x)
    return rp.project_many(pixels[None])[0]


def rp_l2(x1, x2, rp: RandomProjector) -> float:
    return float(np.linalg.norm(project(x1, rp) - project(x2, rp)))


def joint_geodesic(q1, q2, circular=None) -> float:
    """Sum over coordinates of the shortest circular distance (plain distance where not circular)."""
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    if q1.shape != q2.shape:
        raise DimensionMismatchError("configurations differ in dimension")
    return float(_geodesic_terms(q1, q2, circular).sum(-1))


def _geodesic_terms(q1, q2, circular):
    d = np.abs(q1 - q2)
    wrapped = np.mod(d, TWO_PI)
    wrapped = np.minimum(wrapped, TWO_PI - wrapped)
    if circular is None:
        return wrapped
    return np.where(circular, wrapped, d)


def tracked_points(q, spec: Robot, camera) -> np.ndarray:
    """Image positions of the robot's fixed markers, shape ``(m, 2)``; occluded markers included.

    ``camera`` may be a single camera or a sequence (views are concatenated).
    """
    cams = [camera] if isinstance(camera, Camera) else list(camera)
    world = spec.marker_points(spec.check(q))
    return np.concatenate([c.project(world, spec.height) for c in cams], axis=-2)


def itp_l2(tp1, tp2) -> float:
    tp1, tp2 = np.asarray(tp1, float), np.asarray(tp2, float)
    if tp1.shape != tp2.shape:
        raise DimensionMismatchError("tracked point sets differ in size")
    return float(np.linalg.norm(tp1 - tp2))


# ---------------------------------------------------------------- Shi-Tomasi

def _as_intensity(image) -> np.ndarray:
    if isinstance(image, RobotImage):
        return image.view(0).astype(np.float64).mean(axis=2)
    arr = np.asarray(image, dtype=np.float64)
    return arr.mean(axis=2) if arr.ndim == 3 else arr


def min_eigen_response(img: np.ndarray, window: int = ST_WINDOW) -> np.ndarray:
    """Smaller eigenvalue of the box-summed gradient structure tensor at every pixel."""
    ix = ndimage.sobel(img, axis=1, mode="constant")
    iy = ndimage.sobel(img, axis=0, mode="constant")
    area = window * window
    sxx = ndimage.uniform_filter(ix * ix, window, mode="constant") * area
    syy = ndimage.uniform_filter(iy * iy, window, mode="constant") * area
    sxy = ndimage.uniform_filter(ix * iy, window, mode="constant") * area
    half_tr = 0.5 * (sxx + syy)
    disc = np.sqrt(np.maximum(0.25 * (sxx - syy) ** 2 + sxy**2, 0.0))
    return np.maximum(half_tr - disc, 0.0)


def select_corners(response: np.ndarray, quality: float = ST_QUALITY, nms_radius: float = ST_NMS_RADIUS,
                   max_features: int = ST_MAX_FEATURES) -> np.ndarray:
    """Strongest local maxima above ``quality * max``, greedily spaced more than ``nms_radius`` apart."""
    top = response.max() if response.size else 0.0
    if top <= 0:
        return np.empty((0, 2))
    peak = response == ndimage.maximum_filter(response, size=3, mode="constant")
    rows, cols = np.nonzero(peak & (response > quality * top))
    vals = response[rows, cols]
    order = np.lexsort((rows * response.shape[1] + cols, -vals))
    kept: list[tuple[float, float]] = []
    r2 = nms_radius * nms_radius
    for i in order:
        x, y = float(cols[i]), float(rows[i])
        if all((x - a) ** 2 + (y - b) ** 2 > r2 for a, b in kept):
            kept.append((x, y))
            if len(kept) == max_features:
                break
    return np.array(kept, dtype=float).reshape(-1, 2)


def shi_tomasi(link_fg, window: int = ST_WINDOW, quality: float = ST_QUALITY,
               nms_radius: float = ST_NMS_RADIUS, max_features: int = ST_MAX_FEATURES) -> np.ndarray:
    """Shi-Tomasi corners of a single-link foreground, as ``(x, y)`` = ``(col, row)`` points."""
    img = _as_intensity(link_fg)
    if not img.any():
        return np.empty((0, 2))
    # zero padding outside the crop reproduces the full-frame constant-mode result
    pad = window + 3
    rs, cs = np.nonzero(img)
    r0, c0 = rs.min() - pad, cs.min() - pad
    crop = np.zeros((rs.max() - r0 + pad + 1, cs.max() - c0 + pad + 1))
    sr0, sc0 = max(r0, 0), max(c0, 0)
    sr1, sc1 = min(rs.max() + pad + 1, img.shape[0]), min(cs.max() + pad + 1, img.shape[1])
    crop[sr0 - r0 : sr1 - r0, sc0 - c0 : sc1 - c0] = img[sr0:sr1, sc0:sc1]
    resp = min_eigen_response(crop, window)
    # responses outside the frame do not exist in the full image
    valid = np.zeros_like(resp, dtype=bool)
    valid[sr0 - r0 : sr1 - r0, sc0 - c0 : sc1 - c0] = True
    resp = np.where(valid, resp, 0.0)
    pts = select_corners(resp, quality, nms_radius, max_features)
    return pts + np.array([c0, r0], dtype=float)


def segment_parts(view: np.ndarray, colors: Sequence) -> list[np.ndarray]:
    """Boolean mask per robot part, by exact color match on an 8-bit view."""
    if view.dtype != np.uint8:
        view = np.clip(np.rint(view * 255.0), 0, 255).astype(np.uint8)
    v = view.astype(np.int16)
    return [np.abs(v - np.asarray(c, dtype=np.int16)).max(axis=2) <= 1 for c in colors]


@dataclass(frozen=True, eq=False)
class LinkFeatureSet:
    """Per-slot 2-D feature points; slots are ``view * n_links + link``."""

    points: tuple[np.ndarray, ...]
    n_links: int
    diagonals: tuple[float, ...] = ()

    @property
    def n_views(self) -> int:
        return len(self.points) // self.n_links

    def view_of(self, slot: int) -> int:
        return slot // self.n_links


def link_features(image: RobotImage, colors: Sequence, **st_params) -> LinkFeatureSet:
    """Segment each part by color in every view and detect its Shi-Tomasi corners."""
    pts, diags = [], []
    for i, (r, c) in enumerate(image.views):
        masks = segment_parts(image.view(i), colors)
        for m in masks:
            pts.append(shi_tomasi(m.astype(np.float64), **st_params))
            diags.append(float(np.hypot(r, c)))
    return LinkFeatureSet(tuple(pts), len(colors), tuple(diags))


# ---------------------------------------------------------------- Hausdorff

def directed_hausdorff(A, B) -> float:
    A, B = np.asarray(A, float), np.asarray(B, float)
    D = np.sqrt(((A[:, None, :] - B[None, :, :]) ** 2).sum(-1))
    return float(D.min(axis=1).max())


def hausdorff(A, B) -> float:
    """Symmetric Hausdorff distance between non-empty point sets."""
    A, B = np.asarray(A, float), np.asarray(B, float)
    if len(A) == 0 or len(B) == 0:
        raise EmptyPointSetError("Hausdorff distance needs non-empty point sets")
    D = np.sqrt(((A[:, None, :] - B[None, :, :]) ** 2).sum(-1))
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


def st_hausdorff(f1: LinkFeatureSet, f2: LinkFeatureSet, penalty: Optional[float] = None) -> float:
    """Sum of per-link Hausdorff distances.

    A link with features in one set only contributes ``penalty`` (default:
    the view's diagonal in pixels); two empty links contribute nothing.
    """
    if len(f1.points) != len(f2.points):
        raise DimensionMismatchError("feature sets have different link counts")
    total = 0.0
    for s, (a, b) in enumerate(zip(f1.points, f2.points)):
        if len(a) and len(b):
            total += hausdorff(a, b)
        elif len(a) or len(b):
            total += penalty if penalty is not None else (f1.diagonals or f2.diagonals)[s]
    return total


@numba.njit(cache=True)
def _st_h_block(pa, ca, pb, cb, penalty, out):
    na, S = ca.shape
    nb = cb.shape[0]
    for i in range(na):
        for j in range(nb):
            total = 0.0
            for s in range(S):
                ma, mb = ca[i, s], cb[j, s]
                if ma == 0 or mb == 0:
                    if ma != mb:
                        total += penalty[s]
                    continue
                colmin = np.full(mb, np.inf)
                hab = 0.0
                for a in range(ma):
                    ax, ay = pa[i, s, a, 0], pa[i, s, a, 1]
                    best = np.inf
                    for b in range(mb):
                        dx = ax - pb[j, s, b, 0]
                        dy = ay - pb[j, s, b, 1]
                        d2 = dx * dx + dy * dy
                        if d2 < best:
                            best = d2
                        if d2 < colmin[b]:
                            colmin[b] = d2
                    if best > hab:
                        hab = best
                hba = 0.0
                for b in range(mb):
                    if colmin[b] > hba:
                        hba = colmin[b]
                total += np.sqrt(max(hab, hba))
            out[i, j] = total


# ---------------------------------------------------------------- representations

@dataclass(frozen=True, eq=False)
class Rep:
    """Per-node arrays of one representation (axis 0 indexes nodes) plus shared constants."""

    arrays: tuple[np.ndarray, ...]
    const: tuple = ()

    @property
    def n(self) -> int:
        return len(self.arrays[0])

    def take(self, idx) -> "Rep":
        return Rep(tuple(a[idx] for a in self.arrays), self.const)


class Metric:
    """A representation of node data together with its pairwise distance.

    ``represent`` turns a node store (dataset or query) into a ``Rep``;
    ``pairwise`` returns the distance block between two reps and counts
    each evaluated pair in ``self.evaluations``.
    """

    name = "metric"
    requires_config = False
    requires_tracking = False

    def __init__(self):
        self.evaluations = 0

    def represent(self, store) -> Rep:
        raise NotImplementedError

    def _block(self, a: Rep, b: Rep) -> np.ndarray:
        raise NotImplementedError

    def pairwise(self, a: Rep, b: Rep) -> np.ndarray:
        self.evaluations += a.n * b.n
        if a.n == 0 or b.n == 0:
            return np.zeros((a.n, b.n))
        return self._block(a, b)

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


class ImageL2(Metric):
    name = "img-l2"

    def represent(self, store) -> Rep:
        return Rep((store.images,), (store.background.astype(np.float64),))

    def _block(self, a, b):
        bg = a.const[0]
        A = a.arrays[0].astype(np.float64) - bg
        B = b.arrays[0].astype(np.float64) - bg
        # 8-bit inputs make these integer sums, exact in float64
        g = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
        return np.sqrt(np.maximum(g, 0.0)) / 255.0


class RandomProjectionL2(Metric):
    name = "rp-l2"

    def __init__(self, k: int = 2000, seed: int = 0):
        super().__init__()
        self.k, self.seed = k, seed
        self._projector: Optional[RandomProjector] = None

    def projector(self, p: int) -> RandomProjector:
        if self._projector is None or self._projector.p != p:
            self._projector = RandomProjector(p, self.k, self.seed)
        return self._projector

    def represent(self, store) -> Rep:
        rp = self.projector(store.images.shape[1])
        bg = store.background.astype(np.float32) / 255.0
        out = np.empty((len(store.images), self.k))
        for s in range(0, len(out), 500):
            blk = store.images[s : s + 500].astype(np.float32) / 255.0 - bg
            out[s : s + 500] = rp.project_many(blk)
        return Rep((out,))

    def _block(self, a, b):
        A, B = a.arrays[0], b.arrays[0]
        na, nb = (A * A).sum(1), (B * B).sum(1)
        g = na[:, None] + nb[None, :] - 2.0 * (A @ B.T)
        # Gram cancellation is inexact for near pairs; recompute those directly
        i, j = np.nonzero(g <= 1e-6 * (na[:, None] + nb[None, :]))
        g[i, j] = ((A[i] - B[j]) ** 2).sum(1)
        return np.sqrt(np.maximum(g, 0.0))


class JointGeodesic(Metric):
    name = "theta-g"
    requires_config = True

    def represent(self, store) -> Rep:
        if store.configs is None:
            raise UnsupportedMetricError("theta-g needs joint configurations")
        return Rep((np.asarray(store.configs, dtype=float),), (np.asarray(store.circular, dtype=bool),))

    def _block(self, a, b):
        circ = a.const[0]
        return _geodesic_terms(a.arrays[0][:, None, :], b.arrays[0][None, :, :], circ).sum(-1)


class TrackedPointL2(Metric):
    name = "itp-l2"
    requires_tracking = True

    def represent(self, store) -> Rep:
        if store.tracked is None:
            raise UnsupportedMetricError("itp-l2 needs tracked marker positions")
        t = np.asarray(store.tracked, dtype=float)
        return Rep((t.reshape(len(t), -1),))

    def _block(self, a, b):
        A, B = a.arrays[0], b.arrays[0]
        return np.sqrt(((A[:, None, :] - B[None, :, :]) ** 2).sum(-1))


class ShiTomasiHausdorff(Metric):
    name = "st-h"

    def represent(self, store) -> Rep:
        feats = store.features
        n = len(feats)
        S = len(feats[0].points) if n else 0
        F = max([len(p) for f in feats for p in f.points] + [1])
        pts = np.zeros((n, S, F, 2))
        cnt = np.zeros((n, S), dtype=np.int64)
        for i, f in enumerate(feats):
            for s, p in enumerate(f.points):
                pts[i, s, : len(p)] = p
                cnt[i, s] = len(p)
        penalty = np.asarray(feats[0].diagonals if n else (), dtype=float)
        return Rep((pts, cnt), (penalty,))

    def _block(self, a, b):
        pa, ca = a.arrays
        pb, cb = b.arrays
        if pa.shape[2] != pb.shape[2]:
            F = max(pa.shape[2], pb.shape[2])
            pa = np.pad(pa, ((0, 0), (0, 0), (0, F - pa.shape[2]), (0, 0)))
            pb = np.pad(pb, ((0, 0), (0, 0), (0, F - pb.shape[2]), (0, 0)))
        out = np.empty((len(ca), len(cb)))
        _st_h_block(np.ascontiguousarray(pa), ca, np.ascontiguousarray(pb), cb, a.const[0], out)
        return out


METRICS = {
    "img-l2": ImageL2,
    "rp-l2": RandomProjectionL2,
    "theta-g": JointGeodesic,
    "itp-l2": TrackedPointL2,
    "st-h": ShiTomasiHausdorff,
}


def make_metric(name: str, **kw) -> Metric:
    try:
        cls = METRICS[name]
    except KeyError:
        raise UnsupportedMetricError(f"unknown metric {name!r}; choose from {sorted(METRICS)}") from None
    return cls(**kw)
