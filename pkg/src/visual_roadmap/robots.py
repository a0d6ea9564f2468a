"""Planar robot models, kinematics, sampling and the geometric ground-truth oracle.

Every robot part is an oriented rectangle.  A part occupies the points whose
local coordinates ``(u, v)`` satisfy ``0 <= u < length`` and
``-width/2 <= v < width/2``; the half-open bounds make rasterization
deterministic on pixel-center ties.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import shapely

from .errors import DimensionMismatchError

TWO_PI = 2.0 * np.pi

Color = tuple[int, int, int]


@dataclass(frozen=True)
class LinkPolygon:
    """Workspace footprint of one robot part."""

    vertices: np.ndarray  # (4, 2), counter-clockwise
    link: int


@dataclass(frozen=True)
class ObstacleSet:
    polygons: tuple[np.ndarray, ...] = ()
    colors: tuple[Color, ...] = ()
    height: float = 0.3

    def __post_init__(self):
        polys = tuple(np.asarray(p, dtype=float).reshape(-1, 2) for p in self.polygons)
        object.__setattr__(self, "polygons", polys)
        if len(self.colors) != len(polys):
            raise ValueError("one fill color per obstacle polygon is required")
        for p in polys:
            if len(p) < 3 or not np.all(np.isfinite(p)):
                raise ValueError("obstacle polygons need >= 3 finite vertices")
            if not shapely.Polygon(p).is_valid:
                raise ValueError("obstacle polygon is not simple")

    def __len__(self) -> int:
        return len(self.polygons)

    @classmethod
    def rectangles(cls, rects: Sequence[Sequence[float]], colors: Sequence[Color], **kw):
        """Axis-aligned rectangles given as ``(x, y, w, h)`` with ``(x, y)`` the lower-left corner."""
        polys = [
            np.array([[x, y], [x + w, y], [x + w, y + h], [x, y + h]], dtype=float)
            for x, y, w, h in rects
        ]
        return cls(tuple(polys), tuple(tuple(c) for c in colors), **kw)

    def shapes(self):
        return [shapely.Polygon(p) for p in self.polygons]


class Robot:
    """Shared behaviour of the planar robot presets.

    Subclasses supply ``dof``, ``circular``, ``bounds``, ``lengths``,
    ``widths``, ``colors``, ``part_frames`` and ``marker_points``.
    """

    height: float

    @property
    def n_parts(self) -> int:
        return len(self.lengths)

    def check(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape[-1] != self.dof:
            raise DimensionMismatchError(
                f"configuration has {q.shape[-1]} coordinates, robot has {self.dof}"
            )
        return q

    def normalize(self, q) -> np.ndarray:
        """Reduce circular coordinates to [0, 2pi)."""
        q = self.check(q).copy()
        circ = self.circular
        q[..., circ] = np.mod(q[..., circ], TWO_PI)
        return q

    def part_corners(self, q) -> np.ndarray:
        """Rectangle corners, shape ``(..., n_parts, 4, 2)``."""
        origin, direction = self.part_frames(q)
        normal = np.stack([-direction[..., 1], direction[..., 0]], axis=-1)
        L = self.lengths[:, None]
        hw = 0.5 * self.widths[:, None]
        along = direction * L
        side = normal * hw
        return np.stack(
            [origin - side, origin + along - side, origin + along + side, origin + side],
            axis=-2,
        )


@dataclass(frozen=True)
class ArmSpec(Robot):
    """Serial planar arm with revolute joints chained from ``base_position``."""

    link_lengths: tuple[float, ...]
    link_widths: tuple[float, ...]
    link_colors: tuple[Color, ...]
    base_position: tuple[float, float] = (0.0, 0.0)
    joint_limits: Optional[tuple[Optional[tuple[float, float]], ...]] = None
    height: float = 0.2
    background: Color = (235, 235, 235)

    def __post_init__(self):
        object.__setattr__(self, "link_lengths", tuple(float(v) for v in self.link_lengths))
        object.__setattr__(self, "link_widths", tuple(float(v) for v in self.link_widths))
        object.__setattr__(self, "link_colors", tuple(tuple(int(c) for c in col) for col in self.link_colors))
        d = len(self.link_lengths)
        if not (len(self.link_widths) == len(self.link_colors) == d) or d == 0:
            raise ValueError("link lengths, widths and colors must have equal non-zero length")
        if min(self.link_lengths) <= 0 or min(self.link_widths) <= 0:
            raise ValueError("link lengths and widths must be positive")
        _check_colors(self.link_colors, self.background)
        if self.joint_limits is not None:
            if len(self.joint_limits) != d:
                raise ValueError("joint_limits needs one entry per joint")
            for lim in self.joint_limits:
                if lim is not None and not lim[0] < lim[1]:
                    raise ValueError(f"empty joint interval {lim}")

    @property
    def dof(self) -> int:
        return len(self.link_lengths)

    @property
    def lengths(self) -> np.ndarray:
        return np.asarray(self.link_lengths)

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.link_widths)

    @property
    def colors(self) -> tuple[Color, ...]:
        return self.link_colors

    @property
    def circular(self) -> np.ndarray:
        if self.joint_limits is None:
            return np.ones(self.dof, dtype=bool)
        return np.array([lim is None for lim in self.joint_limits])

    @property
    def bounds(self) -> np.ndarray:
        out = np.tile([0.0, TWO_PI], (self.dof, 1))
        if self.joint_limits is not None:
            for i, lim in enumerate(self.joint_limits):
                if lim is not None:
                    out[i] = lim
        return out

    @property
    def reach(self) -> float:
        return float(sum(self.link_lengths) + max(self.link_widths))

    def part_frames(self, q):
        q = self.check(q)
        ang = np.cumsum(q, axis=-1)
        direction = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        steps = direction * self.lengths[:, None]
        ends = np.cumsum(steps, axis=-2)
        origin = np.concatenate([np.zeros_like(ends[..., :1, :]), ends[..., :-1, :]], axis=-2)
        return origin + np.asarray(self.base_position), direction

    def marker_points(self, q) -> np.ndarray:
        """Three markers per link: proximal end, midpoint, distal end."""
        origin, direction = self.part_frames(q)
        fr = np.array([0.0, 0.5, 1.0])
        pts = origin[..., :, None, :] + direction[..., :, None, :] * (self.lengths[:, None, None] * fr[:, None])
        return pts.reshape(*pts.shape[:-3], -1, 2)


@dataclass(frozen=True)
class MobileSpec(Robot):
    """Rigid planar body translating in (x, y), optionally rotating.

    ``parts`` are rectangles ``(u0, v0, angle, length, width)`` in the body
    frame, ``(u0, v0)`` being the midpoint of the rectangle's back edge.
    """

    parts: tuple[tuple[float, float, float, float, float], ...]
    part_colors: tuple[Color, ...]
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    rotates: bool = False
    markers: tuple[tuple[float, float], ...] = ()
    height: float = 0.2
    background: Color = (235, 235, 235)

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(tuple(float(v) for v in p) for p in self.parts))
        object.__setattr__(self, "part_colors", tuple(tuple(int(c) for c in col) for col in self.part_colors))
        if len(self.parts) == 0 or len(self.parts) != len(self.part_colors):
            raise ValueError("one color per body part is required")
        if min(p[3] for p in self.parts) <= 0 or min(p[4] for p in self.parts) <= 0:
            raise ValueError("part lengths and widths must be positive")
        _check_colors(self.part_colors, self.background)
        if not self.markers:
            u0, v0, a, L, _ = self.parts[0]
            c, s = math.cos(a), math.sin(a)
            object.__setattr__(self, "markers", ((u0, v0), (u0 + L * c, v0 + L * s)))

    @property
    def dof(self) -> int:
        return 3 if self.rotates else 2

    @property
    def lengths(self) -> np.ndarray:
        return np.array([p[3] for p in self.parts])

    @property
    def widths(self) -> np.ndarray:
        return np.array([p[4] for p in self.parts])

    @property
    def colors(self) -> tuple[Color, ...]:
        return self.part_colors

    @property
    def circular(self) -> np.ndarray:
        return np.array([False, False, True][: self.dof])

    @property
    def bounds(self) -> np.ndarray:
        b = [self.x_range, self.y_range, (0.0, TWO_PI)]
        return np.array(b[: self.dof], dtype=float)

    def _pose(self, q):
        q = self.check(q)
        heading = q[..., 2] if self.rotates else np.zeros(q.shape[:-1])
        return q[..., :2], heading

    def part_frames(self, q):
        pos, heading = self._pose(q)
        p = np.asarray(self.parts)
        c, s = np.cos(heading)[..., None], np.sin(heading)[..., None]
        ox = pos[..., None, 0] + c * p[:, 0] - s * p[:, 1]
        oy = pos[..., None, 1] + s * p[:, 0] + c * p[:, 1]
        ang = heading[..., None] + p[:, 2]
        return np.stack([ox, oy], -1), np.stack([np.cos(ang), np.sin(ang)], -1)

    def marker_points(self, q) -> np.ndarray:
        pos, heading = self._pose(q)
        m = np.asarray(self.markers, dtype=float)
        c, s = np.cos(heading)[..., None], np.sin(heading)[..., None]
        x = pos[..., None, 0] + c * m[:, 0] - s * m[:, 1]
        y = pos[..., None, 1] + s * m[:, 0] + c * m[:, 1]
        return np.stack([x, y], -1)


def _check_colors(colors, background):
    if len(set(colors)) != len(colors):
        raise ValueError("part colors must be pairwise distinct")
    if tuple(background) in colors:
        raise ValueError("part colors must differ from the background")
    if any(max(c) == 0 for c in colors):
        # foreground pixels keep their color, so black would read as background
        raise ValueError("part colors must not be pure black")


def forward_kinematics(q, spec: Robot) -> list[LinkPolygon]:
    corners = spec.part_corners(spec.check(q))
    if corners.ndim != 3:
        raise DimensionMismatchError("forward_kinematics takes a single configuration")
    return [LinkPolygon(c, i) for i, c in enumerate(corners)]


def sample_configurations(n: int, spec: Robot, seed: int) -> np.ndarray:
    """``n`` configurations drawn uniformly over each coordinate's admissible interval."""
    rng = np.random.default_rng(seed)
    b = spec.bounds
    if n <= 0:
        return np.empty((0, spec.dof))
    return rng.uniform(b[:, 0], b[:, 1], size=(n, spec.dof))


def circular_difference(a, b) -> np.ndarray:
    """Signed shortest arc from ``a`` to ``b`` in [-pi, pi]; exactly pi resolves to +pi."""
    d = np.mod(np.asarray(b, dtype=float) - np.asarray(a, dtype=float), TWO_PI)
    return np.where(d > np.pi, d - TWO_PI, d)


def interpolate_configurations(q_u, q_v, epsilon: float, circular=None) -> np.ndarray:
    """Joint-space path from ``q_u`` to ``q_v`` with per-coordinate steps of at most ``epsilon``.

    Circular coordinates follow the shortest arc and are returned in [0, 2pi).
    ``circular`` defaults to all-True (pure revolute configuration).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    q_u = np.asarray(q_u, dtype=float)
    q_v = np.asarray(q_v, dtype=float)
    if q_u.shape != q_v.shape:
        raise DimensionMismatchError("configurations differ in dimension")
    circ = np.ones(q_u.shape, dtype=bool) if circular is None else np.asarray(circular, dtype=bool)
    delta = np.where(circ, circular_difference(q_u, q_v), q_v - q_u)
    span = float(np.max(np.abs(delta))) if delta.size else 0.0
    # tolerance keeps exact multiples of epsilon from gaining a spurious step
    steps = int(math.ceil(span / epsilon - 1e-9))
    if steps == 0:
        path = q_u[None].copy()
    else:
        path = q_u + np.linspace(0.0, 1.0, steps + 1)[:, None] * delta
    path[:, circ] = np.mod(path[:, circ], TWO_PI)
    return path


def geometric_collision(q, spec: Robot, obstacles: ObstacleSet) -> bool:
    """Exact test: does any part polygon intersect (or contain, or lie in) any obstacle."""
    if len(obstacles) == 0:
        return False
    parts = [shapely.Polygon(p.vertices) for p in forward_kinematics(q, spec)]
    return any(a.intersects(b) for a in parts for b in obstacles.shapes())


def contact_margin(q, spec: Robot, obstacles: ObstacleSet) -> float:
    """Signed distance to contact: clearance when free, minus penetration when colliding.

    Penetration is the radius of the largest disc inside the robot/obstacle
    intersection, so a margin below ``-r`` guarantees a point of overlap with
    an r-neighbourhood fully inside both bodies.
    """
    if len(obstacles) == 0:
        return math.inf
    robot = shapely.union_all([shapely.Polygon(p.vertices) for p in forward_kinematics(q, spec)])
    obst = shapely.union_all(obstacles.shapes())
    if not robot.intersects(obst):
        return float(robot.distance(obst))
    overlap = robot.intersection(obst)
    if overlap.area == 0.0:
        return 0.0
    radius = 0.0
    for g in getattr(overlap, "geoms", [overlap]):
        if g.area > 0:
            circle = shapely.maximum_inscribed_circle(g, tolerance=1e-4)
            radius = max(radius, circle.length)
    return -radius
