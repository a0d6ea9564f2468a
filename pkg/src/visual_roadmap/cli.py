"""Command-line driver: ``vrm generate | plan | benchmark | scree``."""
from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from .dataset import dataset_scene, load_dataset, save_dataset, simulate
from .errors import VisualRoadmapError
from .experiments import (
    BENCH_PLANNERS,
    DENSITIES,
    METRIC_NAMES,
    ExperimentSpec,
    load_view_images,
    obstacle_from_images,
    plan,
    run_benchmark,
    scree_rows,
    write_plan,
    write_report,
    write_scree,
)
from .metrics import METRICS
from .planners import PLANNERS
from .roadmap import DEFAULT_K
from .scene import load_scene


def _csv_list(value, cast=str):
    return tuple(cast(v.strip()) for v in value.split(",") if v.strip())


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Visual roadmap planning from robot images."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@main.command()
@click.option("--scene", default="standard", show_default=True, help="Scene file or bundled preset name.")
@click.option("-n", "--nodes", type=int, required=True, help="Number of images.")
@click.option("--seed", type=int, default=None, help="Sampling seed (default: the scene's seed).")
@click.option("-o", "--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--no-features", is_flag=True, help="Skip the Shi-Tomasi feature file.")
def generate(scene, nodes, seed, out_dir, no_features):
    """Render an obstacle-free image dataset."""
    sc = load_scene(scene)
    seed = sc.seed if seed is None else seed
    ds = simulate(sc, nodes, seed)
    try:
        save_dataset(ds, out_dir, sc, seed, with_features=not no_features)
    except OSError as exc:
        raise click.ClickException(f"cannot write dataset: {exc}") from exc
    click.echo(f"wrote {ds.n} images to {out_dir}")


@main.command("plan")
@click.option("-d", "--dataset", "dataset_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--obstacle", multiple=True, type=click.Path(exists=True, dir_okay=False),
              help="Obstacle render over the empty background, one per view.")
@click.option("--start", multiple=True, type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--goal", multiple=True, type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--metric", type=click.Choice(sorted(METRICS)), default="st-h", show_default=True)
@click.option("--planner", type=click.Choice(PLANNERS), default="jnst", show_default=True)
@click.option("-k", type=int, default=DEFAULT_K, show_default=True)
@click.option("-o", "--out", "out_dir", type=click.Path(file_okay=False), required=True)
def plan_cmd(dataset_dir, obstacle, start, goal, metric, planner, k, out_dir):
    """Plan between two images; writes path.csv, filmstrip.png, certificates.log, report.txt.

    Without --obstacle, the obstacles of the dataset's scene file are rendered.
    """
    try:
        ds = load_dataset(dataset_dir)
        if obstacle:
            b = obstacle_from_images(obstacle, ds)
        else:
            sc = dataset_scene(dataset_dir)
            if sc is None:
                raise click.UsageError("dataset has no scene; pass --obstacle")
            from .imaging import obstacle_image

            b = obstacle_image(sc.obstacles, sc.cameras, sc.background)
        s = load_view_images(start, ds)
        g = load_view_images(goal, ds)
        outcome, store = plan(ds, b, s, g, metric, planner, k)
        write_plan(outcome, store, out_dir)
    except VisualRoadmapError as exc:
        raise click.ClickException(str(exc)) from exc
    if outcome.found:
        click.echo(f"path: {len(outcome.path.nodes)} nodes, weight {outcome.path.weight:.6g}")
    else:
        click.echo(f"no path: {outcome.message}")


@main.command()
@click.option("--scene", default="standard", show_default=True)
@click.option("--densities", default=",".join(map(str, DENSITIES)), show_default=True)
@click.option("--metrics", default=",".join(METRIC_NAMES), show_default=True)
@click.option("--planners", default=",".join(BENCH_PLANNERS), show_default=True)
@click.option("-k", type=int, default=DEFAULT_K, show_default=True)
@click.option("--seed", type=int, default=None, help="Root seed (default: the scene's seed).")
@click.option("--repeats", type=int, default=1, show_default=True)
@click.option("--epsilon", "epsilon_deg", type=float, default=1.0, show_default=True,
              help="Gold-standard joint step in degrees.")
@click.option("--queries", type=int, default=0, show_default=True, help="Random path queries per cell.")
@click.option("-o", "--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--no-figures", is_flag=True, help="Only write the CSV.")
def benchmark(scene, densities, metrics, planners, k, seed, repeats, epsilon_deg, queries, out_path, no_figures):
    """Bad-edge percentages over densities x metrics x planners (CSV)."""
    try:
        spec = ExperimentSpec(scene, _csv_list(densities, int), _csv_list(metrics), _csv_list(planners),
                              k, seed, repeats, epsilon_deg, queries)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc

    def show(row):
        pct = row.get("bad_pct")
        pct = "-" if pct is None else f"{pct:.2f}%"
        click.echo(f"n={row['density']:<6} {row['metric']:<8} {row['planner']:<8} bad={pct} {row.get('status', '')}",
                   err=True)

    report = run_benchmark(spec, progress=show)
    write_report(report, out_path)
    if not no_figures:
        from .plotting import plot_density

        plot_density(report.rows, Path(out_path).with_suffix(".png"))
    click.echo(f"wrote {len(report.rows)} cells to {out_path}")


@main.command()
@click.option("-d", "--dataset", "dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--scene", default=None, help="Simulate from a scene instead of reading a dataset.")
@click.option("-n", "--nodes", type=int, default=2000, show_default=True, help="Images to simulate with --scene.")
@click.option("-k", type=int, default=DEFAULT_K, show_default=True)
@click.option("--d-max", type=int, default=5, show_default=True)
@click.option("--blur", type=float, default=4.0, show_default=True, help="Gaussian blur sigma in pixels.")
@click.option("-o", "--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--no-figures", is_flag=True)
def scree(dataset_dir, scene, nodes, k, d_max, blur, out_path, no_figures):
    """Local-PCA residual variance against dimension (CSV)."""
    if (dataset_dir is None) == (scene is None):
        raise click.UsageError("pass exactly one of --dataset or --scene")
    ds = load_dataset(dataset_dir) if dataset_dir else simulate(load_scene(scene), nodes)
    try:
        rows, _ = scree_rows(ds, k, d_max, blur)
    except VisualRoadmapError as exc:
        raise click.ClickException(str(exc)) from exc
    write_scree(rows, out_path)
    if not no_figures:
        from .plotting import plot_scree

        plot_scree(rows, Path(out_path).with_suffix(".png"))
    for d, r in rows:
        click.echo(f"{d}\t{r:.6f}")


if __name__ == "__main__":
    sys.exit(main())
