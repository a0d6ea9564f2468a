"""Scene description files (YAML): robot, obstacles, cameras, raster size, seed."""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Union

import yaml

from .imaging import Camera
from .robots import ArmSpec, MobileSpec, ObstacleSet, Robot

BUNDLED = ("standard", "torus2", "mobile", "stereo")


@dataclass(frozen=True)
class Scene:
    name: str
    robot: Robot
    obstacles: ObstacleSet
    cameras: tuple[Camera, ...]
    seed: int = 0
    source: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def background(self):
        return self.robot.background

    @property
    def camera(self) -> Camera:
        return self.cameras[0]

    def without_obstacles(self) -> "Scene":
        return Scene(self.name, self.robot, ObstacleSet(), self.cameras, self.seed, self.source)

    def with_obstacles(self, obstacles: ObstacleSet) -> "Scene":
        return Scene(self.name, self.robot, obstacles, self.cameras, self.seed, self.source)


def _robot(d: dict, background) -> Robot:
    kind = d.get("type", "arm")
    if kind == "arm":
        limits = d.get("joint_limits")
        if limits is not None:
            limits = tuple(None if lim is None else tuple(lim) for lim in limits)
        return ArmSpec(
            link_lengths=tuple(d["link_lengths"]),
            link_widths=tuple(d["link_widths"]),
            link_colors=tuple(tuple(c) for c in d["link_colors"]),
            base_position=tuple(d.get("base_position", (0.0, 0.0))),
            joint_limits=limits,
            height=float(d.get("height", 0.2)),
            background=background,
        )
    if kind == "mobile":
        return MobileSpec(
            parts=tuple(tuple(p) for p in d["parts"]),
            part_colors=tuple(tuple(c) for c in d["part_colors"]),
            x_range=tuple(d["x_range"]),
            y_range=tuple(d["y_range"]),
            rotates=bool(d.get("rotates", False)),
            markers=tuple(tuple(m) for m in d.get("markers", ())),
            height=float(d.get("height", 0.2)),
            background=background,
        )
    raise ValueError(f"unknown robot type {kind!r}")


def _camera(d: dict, rows: int, cols: int) -> Camera:
    mode = d.get("mode", "orthographic")
    extent = float(d["extent"])
    center = tuple(d.get("center", (0.0, 0.0)))
    if mode == "orthographic":
        return Camera.overhead(extent, rows, cols, center=center, angle=float(d.get("angle", 0.0)))
    return Camera.pinhole(extent, float(d["distance"]), rows, cols, center=center)


def _obstacles(d: dict) -> ObstacleSet:
    if not d:
        return ObstacleSet()
    height = float(d.get("height", 0.3))
    if "rectangles" in d:
        return ObstacleSet.rectangles(d["rectangles"], d["colors"], height=height)
    return ObstacleSet(tuple(d.get("polygons", ())), tuple(tuple(c) for c in d.get("colors", ())), height=height)


def scene_from_dict(d: dict) -> Scene:
    rows = int(d.get("image", {}).get("rows", 100))
    cols = int(d.get("image", {}).get("cols", 100))
    background = tuple(int(v) for v in d.get("background", (235, 235, 235)))
    robot = _robot(d["robot"], background)
    obstacles = _obstacles(d.get("obstacles") or {})
    for c in obstacles.colors:
        if c in robot.colors or c == background:
            raise ValueError(f"obstacle color {c} collides with a robot or background color")
    cams = d.get("cameras") or [{"extent": 3.0}]
    return Scene(
        name=str(d.get("name", "scene")),
        robot=robot,
        obstacles=obstacles,
        cameras=tuple(_camera(c, rows, cols) for c in cams),
        seed=int(d.get("seed", 0)),
        source=d,
    )


def load_scene(path_or_name: Union[str, Path]) -> Scene:
    """Load a scene file, or one of the bundled presets by name."""
    p = Path(path_or_name)
    if not p.exists() and str(path_or_name) in BUNDLED:
        text = resources.files("visual_roadmap").joinpath(f"scenes/{path_or_name}.yaml").read_text()
    else:
        text = p.read_text()
    return scene_from_dict(yaml.safe_load(text))


def dump_scene(scene: Scene, path):
    Path(path).write_text(yaml.safe_dump(scene.source, sort_keys=False))
