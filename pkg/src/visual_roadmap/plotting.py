"""Figures written next to the CSV outputs (PNG, non-interactive backend)."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from PIL import Image  # noqa: E402

from .imaging import RobotImage  # noqa: E402


def filmstrip(images: Sequence[RobotImage], path, view: int = 0, gap: int = 2, max_frames: int = 40) -> Path:
    """Frames side by side on a white strip; long paths are subsampled evenly."""
    if len(images) > max_frames:
        keep = np.unique(np.linspace(0, len(images) - 1, max_frames).round().astype(int))
        images = [images[i] for i in keep]
    frames = [im.to_uint8(view) for im in images]
    r, c = frames[0].shape[:2]
    strip = np.full((r, len(frames) * (c + gap) - gap, 3), 255, dtype=np.uint8)
    for i, f in enumerate(frames):
        strip[:, i * (c + gap) : i * (c + gap) + c] = f
    Image.fromarray(strip).save(path)
    return Path(path)


def plot_density(rows: Sequence[dict], path) -> Path:
    """Bad-edge percentage against node count, one panel per planner."""
    ok = [r for r in rows if r.get("status") == "ok"]
    planners = list(dict.fromkeys(r["planner"] for r in ok))
    fig, axes = plt.subplots(1, max(1, len(planners)), figsize=(4 * max(1, len(planners)), 3.2), squeeze=False)
    for ax, p in zip(axes[0], planners):
        series = defaultdict(lambda: defaultdict(list))
        for r in ok:
            if r["planner"] == p:
                series[r["metric"]][int(r["density"])].append(float(r["bad_pct"]))
        for metric, pts in series.items():
            xs = sorted(pts)
            ax.plot(xs, [np.mean(pts[x]) for x in xs], marker="o", label=metric)
        ax.set_title(f"planner: {p}")
        ax.set_xlabel("nodes")
        ax.set_ylabel("bad edges (%)")
        ax.grid(alpha=0.3)
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def plot_scree(rows: Sequence[tuple[int, float]], path) -> Path:
    fig, ax = plt.subplots(figsize=(4, 3.2))
    ax.plot([d for d, _ in rows], [v for _, v in rows], marker="o")
    ax.set_xlabel("dimension")
    ax.set_ylabel("residual variance")
    ax.set_ylim(bottom=0)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)
