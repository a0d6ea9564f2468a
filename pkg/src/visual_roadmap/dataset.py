"""Image datasets: in-memory node store, simulated generation, PNG + manifest persistence."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .imaging import (
    BG_THRESHOLD,
    ForegroundImage,
    RobotImage,
    load_png,
    render_batch,
    save_png,
)
from .metrics import LinkFeatureSet, link_features, tracked_points
from .robots import sample_configurations
from .scene import Scene, scene_from_dict

log = logging.getLogger(__name__)

MANIFEST = "manifest.csv"
META = "dataset.yaml"
FEATURES = "features.txt"


@dataclass(eq=False)
class Dataset:
    """Stacked node data.

    ``images`` holds the stitched 8-bit pixel vectors ``(n, p)``.
    ``configs`` is diagnostics only; the planning pipeline reads it solely
    through the joint-angle metric, whose representation *is* the
    configuration.  ``tracked`` holds ideal marker pixel positions.
    """

    images: np.ndarray
    background: np.ndarray
    views: tuple[tuple[int, int], ...]
    colors: tuple[tuple[int, int, int], ...]
    circular: np.ndarray
    dof: int
    configs: Optional[np.ndarray] = None
    tracked: Optional[np.ndarray] = None
    _features: Optional[list] = field(default=None, repr=False)
    _supports: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.images)

    @property
    def p(self) -> int:
        return self.images.shape[1]

    @property
    def view_pixels(self) -> list[int]:
        return [r * c for r, c in self.views]

    def __len__(self):
        return self.n

    def image(self, i: int) -> RobotImage:
        cfg = None if self.configs is None else self.configs[i]
        return RobotImage(self.images[i].astype(np.float32) / 255.0, self.views, cfg)

    def foreground(self, i: int) -> ForegroundImage:
        x = self.images[i].astype(np.float32) / 255.0
        keep = np.repeat(self.supports[i], 3)
        return ForegroundImage(np.where(keep, x, 0.0), self.views)

    def foreground_pixels(self, idx) -> np.ndarray:
        """Foreground vectors ``(len(idx), p)`` as float64."""
        x = self.images[idx].astype(np.float64) / 255.0
        keep = np.repeat(self.supports[idx], 3, axis=1)
        return np.where(keep, x, 0.0)

    @property
    def supports(self) -> np.ndarray:
        """Per-pixel foreground flags ``(n, sum(rows*cols))`` from background subtraction."""
        if self._supports is None:
            out = np.empty((self.n, self.p // 3), dtype=bool)
            bg = self.background.reshape(-1, 3).astype(np.int16)
            tau = BG_THRESHOLD * 255.0
            for s in range(0, self.n, 1000):
                blk = self.images[s : s + 1000].reshape(-1, self.p // 3, 3).astype(np.int16)
                out[s : s + 1000] = np.abs(blk - bg).max(axis=2) > tau
            self._supports = out
        return self._supports

    @property
    def features(self) -> list[LinkFeatureSet]:
        if self._features is None:
            self._features = [link_features(self.image(i), self.colors) for i in range(self.n)]
        return self._features

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.images[idx],
            self.background,
            self.views,
            self.colors,
            self.circular,
            self.dof,
            None if self.configs is None else self.configs[idx],
            None if self.tracked is None else self.tracked[idx],
            None if self._features is None else [self._features[i] for i in idx],
            None if self._supports is None else self._supports[idx],
        )

    def concat(self, other: "Dataset") -> "Dataset":
        if other.views != self.views:
            raise ValueError("datasets differ in view layout")

        def cat(a, b):
            return None if a is None or b is None else np.concatenate([a, b])

        feats = None
        if self._features is not None:
            feats = self._features + other.features
        sup = None
        if self._supports is not None:
            sup = np.concatenate([self._supports, other.supports])
        return Dataset(
            np.concatenate([self.images, other.images]),
            self.background,
            self.views,
            self.colors,
            self.circular,
            self.dof,
            cat(self.configs, other.configs),
            cat(self.tracked, other.tracked),
            feats,
            sup,
        )

    def like(self, images, configs=None, tracked=None) -> "Dataset":
        """A store with this dataset's geometry holding other images (e.g. queries)."""
        images = np.atleast_2d(np.asarray(images, dtype=np.uint8))
        return Dataset(images, self.background, self.views, self.colors, self.circular, self.dof,
                       configs, tracked)


def simulate(scene: Scene, n: int = 0, seed: Optional[int] = None, configs=None) -> Dataset:
    """Render obstacle-free images of sampled (or given) configurations."""
    robot = scene.robot
    if configs is None:
        configs = sample_configurations(n, robot, scene.seed if seed is None else seed)
    configs = robot.normalize(np.atleast_2d(np.asarray(configs, dtype=float)))
    views = []
    for cam in scene.cameras:
        views.append(render_batch(configs, robot, cam).reshape(len(configs), -1))
    images = np.concatenate(views, axis=1)
    bg = np.concatenate(
        [np.tile(np.asarray(robot.background, dtype=np.uint8), cam.n_pixels) for cam in scene.cameras]
    )
    tracked = tracked_points(configs, robot, scene.cameras)
    return Dataset(
        images=images,
        background=bg,
        views=tuple(cam.shape for cam in scene.cameras),
        colors=tuple(robot.colors),
        circular=robot.circular,
        dof=robot.dof,
        configs=configs,
        tracked=tracked,
    )


# ---------------------------------------------------------------- persistence

def _fmt_points(pts) -> str:
    return ";".join(f"{float(x)!r} {float(y)!r}" for x, y in np.asarray(pts).reshape(-1, 2))


def _parse_points(s: str) -> np.ndarray:
    if not s:
        return np.empty((0, 2))
    return np.array([[float(v) for v in item.split()] for item in s.split(";")], dtype=float)


def _image_from_row(images: np.ndarray, i: int, views, v: int) -> RobotImage:
    off = sum(3 * r * c for r, c in views[:v])
    r, c = views[v]
    return RobotImage(images[i, off : off + 3 * r * c].astype(np.float32) / 255.0, (views[v],))


def _view_name(stem: str, v: int) -> str:
    return f"{stem}.png" if v == 0 else f"{stem}_v{v}.png"


def save_dataset(ds: Dataset, out_dir, scene: Optional[Scene] = None, seed: Optional[int] = None,
                 with_features: bool = True) -> Path:
    """Write PNG images, foregrounds, background, manifest and metadata."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "foreground").mkdir(exist_ok=True)
    nv = len(ds.views)
    bg_rows = ds.background[None]
    for v in range(nv):
        save_png(out / _view_name("background", v), _image_from_row(bg_rows, 0, ds.views, v))
    with open(out / MANIFEST, "w", newline="") as fh:
        w = csv.writer(fh)
        d = ds.dof
        w.writerow(["node_id", "image", "foreground", "view_images"] + [f"q{j}" for j in range(d)] + ["markers"])
        for i in range(ds.n):
            stem = f"node_{i:06d}"
            names = []
            for v in range(nv):
                name = _view_name(stem, v)
                save_png(out / "images" / name, _image_from_row(ds.images, i, ds.views, v))
                fg = ds.foreground(i)
                save_png(out / "foreground" / name, fg.split()[v])
                names.append(f"images/{name}")
            q = [] if ds.configs is None else [repr(float(a)) for a in ds.configs[i]]
            marks = "" if ds.tracked is None else _fmt_points(ds.tracked[i])
            w.writerow([i, names[0], f"foreground/{_view_name(stem, 0)}", "|".join(names[1:])] + q + [marks])
    meta = {
        "n": ds.n,
        "seed": seed,
        "views": [list(v) for v in ds.views],
        "colors": [list(c) for c in ds.colors],
        "circular": [bool(c) for c in ds.circular],
        "dof": ds.dof,
        "scene": None if scene is None else scene.source,
    }
    (out / META).write_text(yaml.safe_dump(meta, sort_keys=False))
    if with_features:
        save_features(ds, out / FEATURES)
    return out


def save_features(ds: Dataset, path):
    with open(path, "w") as fh:
        for i, f in enumerate(ds.features):
            for s, pts in enumerate(f.points):
                fh.write(f"{i} {s} {f.diagonals[s]!r} {_fmt_points(pts)}\n")


def load_features(path, n: int, n_links: int) -> list[LinkFeatureSet]:
    per: list[dict] = [dict() for _ in range(n)]
    diag: list[dict] = [dict() for _ in range(n)]
    with open(path) as fh:
        for line in fh:
            parts = line.rstrip("\n").split(" ", 3)
            i, s = int(parts[0]), int(parts[1])
            diag[i][s] = float(parts[2])
            per[i][s] = _parse_points(parts[3] if len(parts) > 3 else "")
    out = []
    for i in range(n):
        slots = sorted(per[i])
        out.append(LinkFeatureSet(tuple(per[i][s] for s in slots), n_links, tuple(diag[i][s] for s in slots)))
    return out


def load_dataset(path) -> Dataset:
    root = Path(path)
    meta = yaml.safe_load((root / META).read_text())
    views = tuple(tuple(v) for v in meta["views"])
    nv = len(views)
    bg = np.concatenate([load_png(root / _view_name("background", v)).to_uint8().ravel() for v in range(nv)])
    images, configs, tracked = [], [], []
    with open(root / MANIFEST, newline="") as fh:
        rows = list(csv.DictReader(fh))
    d = int(meta["dof"])
    for row in rows:
        paths = [row["image"]] + [p for p in row["view_images"].split("|") if p]
        images.append(np.concatenate([load_png(root / p).to_uint8().ravel() for p in paths]))
        if row.get("q0", "") != "":
            configs.append([float(row[f"q{j}"]) for j in range(d)])
        if row.get("markers"):
            tracked.append(_parse_points(row["markers"]))
    ds = Dataset(
        images=np.stack(images) if images else np.empty((0, len(bg)), np.uint8),
        background=bg,
        views=views,
        colors=tuple(tuple(c) for c in meta["colors"]),
        circular=np.asarray(meta["circular"], dtype=bool),
        dof=d,
        configs=np.asarray(configs) if len(configs) == len(rows) and rows else None,
        tracked=np.stack(tracked) if len(tracked) == len(rows) and rows else None,
    )
    if (root / FEATURES).exists():
        ds._features = load_features(root / FEATURES, ds.n, len(ds.colors))
    return ds


def dataset_scene(path) -> Optional[Scene]:
    meta = yaml.safe_load((Path(path) / META).read_text())
    return None if meta.get("scene") is None else scene_from_dict(meta["scene"])
