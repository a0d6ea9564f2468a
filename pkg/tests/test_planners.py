import math

import numpy as np
import pytest

from visual_roadmap.errors import DegenerateChartError
from visual_roadmap.imaging import RobotImage, background_image, background_subtract, hadamard_overlap, render
from visual_roadmap.metrics import LinkFeatureSet
from visual_roadmap.planners import (
    GoldStandard,
    ObstacleMask,
    build_chart,
    chart_members,
    draw_joins,
    itp_check,
    jnst_check,
    line_pixels,
    lts_alphas,
    lts_check,
    lts_superimpose_check,
    lts_support,
    nearest_joins,
    pca_chart,
)
from visual_roadmap.robots import interpolate_configurations
from visual_roadmap.roadmap import build_graph, prune_obstacle_nodes


def mask_from(support2d):
    r, c = support2d.shape
    pix = np.repeat(support2d.astype(np.float32).ravel(), 3)
    return ObstacleMask(RobotImage(pix, ((r, c),)))


class TestLines:
    @pytest.mark.parametrize("p0,p1", [((0, 0), (7, 3)), ((5, 5), (5, 5)), ((9, 2), (1, 8)), ((3, 0), (3, 9))])
    def test_dda_properties(self, p0, p1):
        px = line_pixels(p0, p1)
        assert tuple(px[0]) == p0 and tuple(px[-1]) == p1
        assert len(px) == max(abs(p1[0] - p0[0]), abs(p1[1] - p0[1])) + 1
        if len(px) > 1:
            assert np.abs(np.diff(px, axis=0)).max() == 1

    def test_pixels_near_segment(self):
        a, b = np.array([0.0, 0.0]), np.array([17.0, 6.0])
        d = b - a
        for p in line_pixels(a, b):
            t = np.clip((p - a) @ d / (d @ d), 0, 1)
            assert np.linalg.norm(p - (a + t * d)) <= 0.71

    def test_draw_joins_clips_to_raster(self):
        sup = draw_joins([(0, np.array([-5.0, 2.0]), np.array([3.0, 2.0]))], ((5, 5),))
        assert sup.reshape(5, 5)[2].tolist() == [True, True, True, True, False]


class TestCharts:
    def test_alpha_grid(self):
        assert np.allclose(lts_alphas(10), np.arange(1, 11) / 11)

    def test_members(self):
        nb = np.array([[1, 2, 3], [0, 2, 4], [0, 1, 3], [0, 2, 4], [1, 3, 2]])
        assert chart_members((0, 1), nb).tolist() == [0, 1, 2]
        alive = np.array([True, True, False, True, True])
        assert chart_members((0, 1), nb, alive).tolist() == [0, 1]

    def test_full_rank_reconstruction_is_exact(self, rng):
        X = rng.random((5, 30))
        ch = pca_chart((0, 1), np.arange(5), X, dim=4)
        for i in range(5):
            assert np.allclose(ch.reconstruct(ch.coordinate(i)), X[i])
        assert np.allclose(ch.basis.T @ ch.basis, np.eye(4), atol=1e-10)

    def test_rank_deficient_and_degenerate(self, rng):
        x = rng.random(20)
        ch = pca_chart((0, 1), np.arange(3), np.stack([x, 2 * x, 3 * x]), dim=2)
        assert ch.rank_deficient and not ch.degenerate
        same = pca_chart((0, 1), np.arange(3), np.stack([x, x, x]), dim=2)
        assert same.degenerate
        with pytest.raises(DegenerateChartError):
            pca_chart((0, 0), np.arange(1), x[None], dim=1)


class TestLTS:
    def test_empty_obstacle_is_safe(self, rng):
        X = rng.random((4, 12))
        ch = pca_chart((0, 1), np.arange(4), X, 2)
        b = mask_from(np.zeros((2, 2), dtype=bool))
        assert lts_check((0, 1), ch, b).safe

    def test_degenerate_chart_is_unsafe(self):
        x = np.ones(12)
        ch = pca_chart((0, 1), np.arange(2), np.stack([x, x]), 1)
        assert not lts_check((0, 1), ch, mask_from(np.zeros((2, 2), dtype=bool))).safe

    def test_midpoint_blob_detected(self):
        # two endpoints on either side of a pixel; their 1-D interpolation fades through it
        X = np.zeros((2, 3 * 9))
        X[0, 0:3] = 1.0
        X[1, 6:9] = 1.0
        ch = pca_chart((0, 1), np.arange(2), X, 1)
        obs = np.zeros((3, 3), dtype=bool)
        obs[0, 0] = True
        assert not lts_check((0, 1), ch, mask_from(obs)).safe
        obs2 = np.zeros((3, 3), dtype=bool)
        obs2[2, 2] = True
        assert lts_check((0, 1), ch, mask_from(obs2)).safe

    def test_matches_full_support_evaluation(self, small_ds, small_mask):
        G = build_graph(small_ds, "img-l2")
        for e in G.edges[:40]:
            ch = build_chart(tuple(e), G.neighbors, small_ds, 2)
            cert = lts_check(tuple(e), ch, small_mask)
            full = any(
                small_mask.collides_support(lts_support(ch, a))[0] for a in lts_alphas()
            )
            assert cert.safe == (not full)

    def test_superimposition_is_more_conservative(self, small_ds, small_mask):
        G = build_graph(small_ds, "img-l2")
        sup = small_ds.supports
        for e in G.edges:
            e = tuple(int(v) for v in e)
            ch = build_chart(e, G.neighbors, small_ds, 2)
            if not lts_check(e, ch, small_mask).safe:
                assert not lts_superimpose_check(e, sup[ch.members], small_mask).safe


class TestJoinPlanners:
    def test_itp_crossing(self):
        obs = np.zeros((10, 10), dtype=bool)
        obs[4:6, 4:6] = True
        b = mask_from(obs)
        assert not itp_check((0, 1), [[0.0, 5.0]], [[9.0, 5.0]], b).safe
        assert itp_check((0, 1), [[0.0, 0.0]], [[9.0, 0.0]], b).safe

    def test_jnst_vanished_link(self):
        a = LinkFeatureSet((np.array([[1.0, 1.0]]),), 1)
        b = LinkFeatureSet((np.empty((0, 2)),), 1)
        assert nearest_joins(a, b) is None
        cert = jnst_check((0, 1), a, b, mask_from(np.zeros((4, 4), dtype=bool)))
        assert not cert.safe and "vanished-link" in cert.flags

    def test_jnst_joins_both_directions(self):
        a = LinkFeatureSet((np.array([[0.0, 0.0], [0.0, 9.0]]),), 1)
        b = LinkFeatureSet((np.array([[9.0, 0.0]]),), 1)
        joins = nearest_joins(a, b)
        assert len(joins) == 3
        obs = np.zeros((10, 10), dtype=bool)
        obs[5, 4] = True  # on the diagonal join from (0, 9) to (9, 0)
        assert not jnst_check((0, 1), a, b, mask_from(obs)).safe


class TestGoldStandard:
    def test_against_full_render_oracle(self, small_scene, small_ds, small_mask):
        gold = GoldStandard(small_scene.robot, small_scene.cameras, small_mask, math.radians(1.0))
        cam = small_scene.camera
        bg = background_image(cam, small_scene.background)
        b = RobotImage(np.repeat(small_mask.masks[0].astype(np.float32), 3), small_mask.views)
        G = prune_obstacle_nodes(build_graph(small_ds, "theta-g"), small_ds, small_mask)
        edges = G.edges[G.edge_alive][:12]
        for i, j in edges:
            qu, qv = small_ds.configs[i], small_ds.configs[j]
            oracle = all(
                not hadamard_overlap(background_subtract(render(q, small_scene.robot, None, cam), bg), b)
                for q in interpolate_configurations(qu, qv, math.radians(1.0), small_scene.robot.circular)
            )
            assert gold.check((i, j), qu, qv).safe == oracle

    def test_cache(self, small_scene, small_ds, small_mask):
        gold = GoldStandard(small_scene.robot, small_scene.cameras, small_mask)
        q0, q1 = small_ds.configs[0], small_ds.configs[1]
        gold.check((0, 1), q0, q1, key=(0, 1))
        n = gold.renders
        gold.check((0, 1), q0, q1, key=(0, 1))
        assert gold.renders == n
