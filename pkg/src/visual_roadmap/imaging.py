"""Software renderer, background subtraction and image-overlap collision tests.

Pixel coordinates are ``(col, row)`` with pixel centers on integer positions.
Coverage is binary: a pixel belongs to a shape iff its center does.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .errors import DegenerateCameraError, GeometryMismatchError
from .robots import ObstacleSet, Robot

BG_THRESHOLD = 1.0 / 255.0


@dataclass(frozen=True)
class Camera:
    """Overhead camera mapping the workspace plane to a ``rows x cols`` raster.

    Orthographic mode uses the affine map ``pixel = A @ world + t``.
    Perspective mode places a pinhole at ``(center[0], center[1], distance)``
    looking straight down; ``focal`` is in pixels and the principal point
    sits at the raster center.  Bodies are extruded prisms, so a perspective
    view sees their silhouette cone rather than their footprint.
    """

    rows: int = 100
    cols: int = 100
    mode: str = "orthographic"
    affine: tuple[tuple[float, float, float], tuple[float, float, float]] = ((10.0, 0.0, 50.0), (0.0, -10.0, 50.0))
    center: tuple[float, float] = (0.0, 0.0)
    distance: float = 50.0
    focal: float = 500.0

    def __post_init__(self):
        if self.rows < 8 or self.cols < 8:
            raise DegenerateCameraError("raster must be at least 8x8")
        if self.mode == "orthographic":
            A = np.asarray(self.affine, dtype=float)[:, :2]
            if A.shape != (2, 2) or abs(np.linalg.det(A)) < 1e-12:
                raise DegenerateCameraError("orthographic view transform is not invertible")
        elif self.mode == "perspective":
            if self.focal <= 0 or self.distance <= 0:
                raise DegenerateCameraError("perspective camera needs positive focal length and distance")
        else:
            raise DegenerateCameraError(f"unknown camera mode {self.mode!r}")

    @classmethod
    def overhead(cls, extent: float, rows: int = 100, cols: int = 100, center=(0.0, 0.0), angle: float = 0.0):
        """Orthographic view of the square ``center +- extent`` filling the raster."""
        s = min(rows, cols) / (2.0 * extent)
        c, sn = np.cos(angle), np.sin(angle)
        # world rotated by -angle, then y flipped so +y points up the image
        A = s * np.array([[c, sn], [sn, -c]])
        t = np.array([(cols - 1) / 2.0, (rows - 1) / 2.0]) - A @ np.asarray(center, dtype=float)
        return cls(rows, cols, "orthographic", tuple(map(tuple, np.column_stack([A, t]).tolist())))

    @classmethod
    def pinhole(cls, extent: float, distance: float, rows: int = 100, cols: int = 100, center=(0.0, 0.0)):
        """Perspective camera with the same ground-plane scale as ``overhead(extent)``."""
        s = min(rows, cols) / (2.0 * extent)
        return cls(rows, cols, "perspective", center=tuple(center), distance=float(distance), focal=s * distance)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def n_pixels(self) -> int:
        return self.rows * self.cols

    @property
    def pixel_size(self) -> float:
        """Workspace length of one pixel at ground level (largest axis)."""
        if self.mode == "orthographic":
            A = np.asarray(self.affine)[:, :2]
            return float(1.0 / np.min(np.linalg.svd(A, compute_uv=False)))
        return self.distance / self.focal

    @cached_property
    def pixel_centers(self) -> np.ndarray:
        r, c = np.divmod(np.arange(self.n_pixels), self.cols)
        return np.stack([c, r], axis=1).astype(float)

    @cached_property
    def ground_points(self) -> np.ndarray:
        """Workspace point under each pixel center (orthographic only)."""
        if self.mode != "orthographic":
            raise DegenerateCameraError("ground_points needs an orthographic camera")
        M = np.asarray(self.affine, dtype=float)
        return (self.pixel_centers - M[:, 2]) @ np.linalg.inv(M[:, :2]).T

    def project(self, pts, z=0.0) -> np.ndarray:
        """Pixel coordinates of workspace points at height ``z``."""
        pts = np.asarray(pts, dtype=float)
        if self.mode == "orthographic":
            M = np.asarray(self.affine, dtype=float)
            return pts @ M[:, :2].T + M[:, 2]
        depth = self.distance - np.asarray(z, dtype=float)
        f = self.focal / depth
        f = np.asarray(f)[..., None] if np.ndim(f) else f
        rel = (pts - np.asarray(self.center)) * f
        return np.stack(
            [rel[..., 0] + (self.cols - 1) / 2.0, -rel[..., 1] + (self.rows - 1) / 2.0], axis=-1
        )


@dataclass(frozen=True, eq=False)
class RobotImage:
    """Flattened RGB raster(s), intensities in [0, 1].

    ``views`` lists ``(rows, cols)`` of each stitched camera view; a single
    camera has one entry.  ``config`` is diagnostics only.
    """

    pixels: np.ndarray
    views: tuple[tuple[int, int], ...]
    config: Optional[np.ndarray] = None

    def __post_init__(self):
        pix = np.asarray(self.pixels, dtype=np.float32).ravel()
        object.__setattr__(self, "pixels", pix)
        object.__setattr__(self, "views", tuple(tuple(v) for v in self.views))
        if pix.size != sum(3 * r * c for r, c in self.views):
            raise GeometryMismatchError("pixel vector length does not match view geometry")

    @classmethod
    def from_array(cls, arr, config=None):
        """From a ``rows x cols x 3`` array (uint8 or float in [0, 1])."""
        arr = np.asarray(arr)
        if arr.dtype == np.uint8:
            arr = arr.astype(np.float32) / 255.0
        return cls(arr.ravel(), (arr.shape[:2],), config)

    @property
    def p(self) -> int:
        return self.pixels.size

    @property
    def offsets(self) -> list[int]:
        out, o = [], 0
        for r, c in self.views:
            out.append(o)
            o += 3 * r * c
        return out

    def view(self, i: int = 0) -> np.ndarray:
        r, c = self.views[i]
        o = self.offsets[i]
        return self.pixels[o : o + 3 * r * c].reshape(r, c, 3)

    def split(self) -> list["RobotImage"]:
        return [type(self)(self.view(i).ravel(), (self.views[i],), self.config) for i in range(len(self.views))]

    def support(self) -> np.ndarray:
        """Per-pixel non-zero flag over all views, length ``p / 3``."""
        return self.pixels.reshape(-1, 3).max(axis=1) > 0

    def to_uint8(self, i: int = 0) -> np.ndarray:
        return np.clip(np.rint(self.view(i) * 255.0), 0, 255).astype(np.uint8)


class ForegroundImage(RobotImage):
    """Background-subtracted image: non-zero exactly on robot pixels."""


class ObstacleImage(ForegroundImage):
    """Background-subtracted obstacle-only image."""


def _same_geometry(a: RobotImage, b: RobotImage):
    if a.views != b.views:
        raise GeometryMismatchError(f"raster geometry {a.views} != {b.views}")


# ---------------------------------------------------------------- coverage

def _rect_coverage(points, origin, direction, lengths, widths) -> np.ndarray:
    """Half-open oriented-rectangle membership.

    points (P, 2); origin, direction (..., L, 2) -> bool (..., L, P).
    """
    rx = points[:, 0] - origin[..., None, 0]
    ry = points[:, 1] - origin[..., None, 1]
    dx, dy = direction[..., None, 0], direction[..., None, 1]
    u = rx * dx + ry * dy
    v = ry * dx - rx * dy
    L = lengths[:, None]
    hw = 0.5 * widths[:, None]
    return (u >= 0) & (u < L) & (v >= -hw) & (v < hw)


def _polygon_coverage(points, poly) -> np.ndarray:
    """Even-odd point-in-polygon test, vectorized over points."""
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    xj, yj = poly[-1]
    for xi, yi in poly:
        crosses = (yi > y) != (yj > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (xj - xi) * (y - yi) / (yj - yi) + xi
        inside ^= crosses & (x < xint)
        xj, yj = xi, yi
    return inside


def _convex_hull(pts: np.ndarray) -> np.ndarray:
    pts = np.unique(np.round(pts, 12), axis=0)
    if len(pts) < 3:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and cross(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    lower, upper = half(pts), half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def _convex_coverage(points, hull) -> np.ndarray:
    """Closed membership in a counter-clockwise convex polygon."""
    inside = np.ones(len(points), dtype=bool)
    n = len(hull)
    for i in range(n):
        a, b = hull[i], hull[(i + 1) % n]
        inside &= (b[0] - a[0]) * (points[:, 1] - a[1]) - (b[1] - a[1]) * (points[:, 0] - a[0]) >= 0
    return inside


def _prism_silhouette(camera: Camera, footprint: np.ndarray, height: float) -> np.ndarray:
    """Pixel-space convex silhouette of a vertical prism over ``footprint``."""
    base = camera.project(footprint, 0.0)
    top = camera.project(footprint, height)
    return _convex_hull(np.vstack([base, top]))


def robot_coverage(Q, spec: Robot, camera: Camera, pixel_index=None) -> np.ndarray:
    """Per-part coverage of selected pixels for a batch of configurations.

    Returns bool ``(m, n_parts, len(pixel_index))``.  This is exactly the
    support a full render would paint, evaluated only where asked.
    """
    Q = np.atleast_2d(spec.check(Q))
    idx = np.arange(camera.n_pixels) if pixel_index is None else np.asarray(pixel_index)
    if camera.mode == "orthographic":
        pts = camera.ground_points[idx]
        origin, direction = spec.part_frames(Q)
        return _rect_coverage(pts, origin, direction, spec.lengths, spec.widths)
    pts = camera.pixel_centers[idx]
    corners = spec.part_corners(Q)
    out = np.zeros((len(Q), spec.n_parts, len(idx)), dtype=bool)
    for i in range(len(Q)):
        for j in range(spec.n_parts):
            out[i, j] = _convex_coverage(pts, _prism_silhouette(camera, corners[i, j], spec.height))
    return out


def obstacle_coverage(obstacles: ObstacleSet, camera: Camera) -> np.ndarray:
    """bool ``(n_obstacles, n_pixels)``."""
    out = np.zeros((len(obstacles), camera.n_pixels), dtype=bool)
    for k, poly in enumerate(obstacles.polygons):
        if camera.mode == "orthographic":
            out[k] = _polygon_coverage(camera.ground_points, poly)
        else:
            out[k] = _convex_coverage(camera.pixel_centers, _prism_silhouette(camera, poly, obstacles.height))
    return out


def _warn_clipping(Q, spec: Robot, camera: Camera):
    corners = spec.part_corners(Q)
    px = camera.project(corners.reshape(-1, 2))
    if (px < -0.5).any() or (px[:, 0] > camera.cols - 0.5).any() or (px[:, 1] > camera.rows - 0.5).any():
        warnings.warn("robot extends beyond the raster and is clipped", stacklevel=3)


# ---------------------------------------------------------------- rendering

def render_batch(Q, spec: Robot, camera: Camera, obstacles: Optional[ObstacleSet] = None) -> np.ndarray:
    """uint8 renders ``(m, rows, cols, 3)``: background, obstacles, then parts in index order."""
    Q = np.atleast_2d(spec.check(Q))
    _warn_clipping(Q, spec, camera)
    out = np.empty((len(Q), camera.n_pixels, 3), dtype=np.uint8)
    out[:] = np.asarray(spec.background, dtype=np.uint8)
    if obstacles is not None and len(obstacles):
        for cov, col in zip(obstacle_coverage(obstacles, camera), obstacles.colors):
            out[:, cov] = col
    colors = np.asarray(spec.colors, dtype=np.uint8)
    for start in range(0, len(Q), 256):
        cov = robot_coverage(Q[start : start + 256], spec, camera)
        block = out[start : start + 256]
        for j in range(spec.n_parts):
            block[cov[:, j]] = colors[j]
    return out.reshape(len(Q), camera.rows, camera.cols, 3)


def render(q, spec: Robot, obstacles: Optional[ObstacleSet], camera: Camera, background=None) -> RobotImage:
    """Render one configuration.  ``background`` only supplies the fill color check."""
    if background is not None:
        bg = background.to_uint8()[0, 0] if isinstance(background, RobotImage) else np.asarray(background)
        if tuple(int(v) for v in bg) != tuple(spec.background):
            raise GeometryMismatchError("background color disagrees with the robot scene")
    arr = render_batch(np.asarray(q, dtype=float)[None], spec, camera, obstacles)[0]
    return RobotImage.from_array(arr, config=np.asarray(q, dtype=float))


def background_image(camera: Camera, color) -> RobotImage:
    arr = np.empty((camera.rows, camera.cols, 3), dtype=np.uint8)
    arr[:] = np.asarray(color, dtype=np.uint8)
    return RobotImage.from_array(arr)


def render_obstacles(obstacles: ObstacleSet, camera: Camera, background_color) -> RobotImage:
    arr = np.empty((camera.n_pixels, 3), dtype=np.uint8)
    arr[:] = np.asarray(background_color, dtype=np.uint8)
    for cov, col in zip(obstacle_coverage(obstacles, camera), obstacles.colors):
        arr[cov] = col
    return RobotImage.from_array(arr.reshape(camera.rows, camera.cols, 3))


def background_subtract(x: RobotImage, background: RobotImage, threshold: float = BG_THRESHOLD) -> ForegroundImage:
    """Keep pixels whose max-channel distance to the background exceeds ``threshold``."""
    _same_geometry(x, background)
    px = x.pixels.reshape(-1, 3)
    diff = np.abs(px - background.pixels.reshape(-1, 3)).max(axis=1)
    keep = diff > threshold
    out = np.where(keep[:, None], px, 0.0)
    return ForegroundImage(out.ravel(), x.views, x.config)


def obstacle_image(obstacles: ObstacleSet, cameras: Sequence[Camera], background_color) -> ObstacleImage:
    """Obstacle-only render, background-subtracted and stitched over ``cameras``."""
    views = []
    for cam in cameras:
        scene = render_obstacles(obstacles, cam, background_color)
        fg = background_subtract(scene, background_image(cam, background_color))
        views.append(fg)
    st = stitch_views(views)
    return ObstacleImage(st.pixels, st.views)


# ---------------------------------------------------------------- overlap tests

def hadamard_overlap(fg: RobotImage, b: RobotImage) -> bool:
    """True iff some pixel is non-zero in both images (the entry-wise product is non-zero)."""
    _same_geometry(fg, b)
    return bool(np.any(fg.support() & b.support()))


def superimpose(images: Sequence[RobotImage]) -> ForegroundImage:
    """Pixel-wise maximum; its support is the union of the supports."""
    if len(images) == 0:
        raise ValueError("superimpose needs at least one image")
    for im in images[1:]:
        _same_geometry(images[0], im)
    out = np.max(np.stack([im.pixels for im in images]), axis=0)
    return ForegroundImage(out, images[0].views)


def stitch_views(views: Sequence[RobotImage], expected=None) -> RobotImage:
    """Concatenate per-camera images into one vector; ``expected`` pins the view layout."""
    if len(views) == 0:
        raise ValueError("stitch_views needs at least one view")
    layout = tuple(v for im in views for v in im.views)
    if expected is not None and tuple(tuple(v) for v in expected) != layout:
        raise GeometryMismatchError(f"view layout {layout} != dataset layout {tuple(expected)}")
    cls = type(views[0]) if all(type(v) is type(views[0]) for v in views) else RobotImage
    return cls(np.concatenate([im.pixels for im in views]), layout, views[0].config)


def multi_view_free(fg_views: Sequence[RobotImage], b_views: Sequence[RobotImage]) -> bool:
    """Free iff the robot misses the obstacle in at least one view."""
    if len(fg_views) == 0:
        raise ValueError("multi_view_free needs at least one view")
    if len(fg_views) != len(b_views):
        raise GeometryMismatchError("view counts differ")
    return any(not hadamard_overlap(f, b) for f, b in zip(fg_views, b_views))


def view_supports(image: RobotImage) -> list[np.ndarray]:
    """Per-view pixel support masks."""
    sup = image.support()
    out, o = [], 0
    for r, c in image.views:
        out.append(sup[o : o + r * c])
        o += r * c
    return out


# ---------------------------------------------------------------- files

def save_png(path, image: RobotImage, view: int = 0):
    Image.fromarray(image.to_uint8(view), mode="RGB").save(path)


def load_png(path, config=None) -> RobotImage:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"))
    return RobotImage.from_array(arr, config)
