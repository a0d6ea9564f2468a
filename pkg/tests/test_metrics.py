import math

import numpy as np
import pytest
from scipy.spatial.distance import directed_hausdorff as scipy_directed

from visual_roadmap.errors import DimensionMismatchError, EmptyPointSetError, UnsupportedMetricError
from visual_roadmap.imaging import RobotImage
from visual_roadmap.metrics import (
    LinkFeatureSet,
    RandomProjector,
    directed_hausdorff,
    hausdorff,
    image_l2,
    itp_l2,
    joint_geodesic,
    link_features,
    make_metric,
    min_eigen_response,
    rp_l2,
    segment_parts,
    select_corners,
    shi_tomasi,
    st_hausdorff,
)


class TestImageDistances:
    def test_image_l2_direct(self, rng):
        a = RobotImage(rng.random(48), ((4, 4),))
        b = RobotImage(rng.random(48), ((4, 4),))
        assert image_l2(a, b) == pytest.approx(np.sqrt(((a.pixels.astype(float) - b.pixels) ** 2).sum()))

    def test_pairwise_matches_pointwise(self, small_ds):
        m = make_metric("img-l2")
        rep = m.represent(small_ds)
        D = m.pairwise(rep.take(np.arange(5)), rep.take(np.arange(5, 12)))
        for i in range(5):
            for j in range(7):
                d = image_l2(small_ds.image(i), small_ds.image(5 + j))
                assert D[i, j] == pytest.approx(d, rel=1e-6)  # float32 image storage
        assert m.evaluations == 35

    def test_projector_scaling_preserves_norm_on_average(self, rng):
        rp = RandomProjector(3000, 500, seed=2)
        x = rng.standard_normal(3000)
        ratios = [np.linalg.norm(rp.project_many(x[None] * s)) / np.linalg.norm(x * s) for s in (1.0, 2.0)]
        assert ratios[0] == pytest.approx(ratios[1])
        assert ratios[0] == pytest.approx(1.0, abs=0.15)

    def test_jl_distortion_bound(self, rng):
        # JL: k = 2000 gives relative error well under 20% with high probability
        p = 5000
        rp = RandomProjector(p, 2000, seed=5)
        X = rng.standard_normal((30, p))
        P = rp.project_many(X)
        for i in range(29):
            true = np.linalg.norm(X[i] - X[i + 1])
            assert abs(np.linalg.norm(P[i] - P[i + 1]) - true) / true < 0.2

    def test_rp_metric_matches_function(self, small_ds):
        m = make_metric("rp-l2", k=300, seed=9)
        rep = m.represent(small_ds)
        D = m.pairwise(rep.take([0]), rep.take([1]))
        bg = RobotImage(small_ds.background.astype(np.float32) / 255.0, small_ds.views)
        x0 = RobotImage(small_ds.image(0).pixels - bg.pixels, small_ds.views)
        x1 = RobotImage(small_ds.image(1).pixels - bg.pixels, small_ds.views)
        assert D[0, 0] == pytest.approx(rp_l2(x0, x1, m.projector(small_ds.p)), rel=1e-5)


class TestConfigDistances:
    def test_joint_geodesic_wraps(self):
        assert joint_geodesic([0.1, 0.0], [2 * math.pi - 0.1, math.pi]) == pytest.approx(0.2 + math.pi)

    def test_joint_geodesic_non_circular(self):
        assert joint_geodesic([0.0, 0.0], [0.0, 5.0], circular=[True, False]) == pytest.approx(5.0)

    def test_itp_l2(self):
        assert itp_l2([[0, 0], [1, 1]], [[3, 4], [1, 1]]) == pytest.approx(5.0)
        with pytest.raises(DimensionMismatchError):
            itp_l2([[0, 0]], [[0, 0], [1, 1]])


class TestHausdorff:
    def test_against_scipy(self, rng):
        for _ in range(20):
            A = rng.random((rng.integers(1, 15), 2)) * 50
            B = rng.random((rng.integers(1, 15), 2)) * 50
            assert directed_hausdorff(A, B) == pytest.approx(scipy_directed(A, B)[0])
            assert hausdorff(A, B) == pytest.approx(max(scipy_directed(A, B)[0], scipy_directed(B, A)[0]))

    def test_empty(self):
        with pytest.raises(EmptyPointSetError):
            hausdorff(np.empty((0, 2)), np.ones((1, 2)))

    def test_st_h_penalty_and_empty_pairs(self):
        a = LinkFeatureSet((np.array([[0.0, 0.0]]), np.empty((0, 2)), np.empty((0, 2))), 3, (10.0, 10.0, 10.0))
        b = LinkFeatureSet((np.array([[3.0, 4.0]]), np.array([[1.0, 1.0]]), np.empty((0, 2))), 3, (10.0, 10.0, 10.0))
        assert st_hausdorff(a, b) == pytest.approx(5.0 + 10.0)
        assert st_hausdorff(a, b, penalty=2.0) == pytest.approx(7.0)

    def test_numba_block_matches_reference(self, small_ds):
        m = make_metric("st-h")
        rep = m.represent(small_ds)
        D = m.pairwise(rep.take(np.arange(6)), rep.take(np.arange(6, 14)))
        f = small_ds.features
        for i in range(6):
            for j in range(8):
                assert D[i, j] == pytest.approx(st_hausdorff(f[i], f[6 + j]), abs=1e-9)


class TestShiTomasi:
    def test_square_corners(self):
        img = np.zeros((30, 30))
        img[10:20, 8:22] = 1.0
        pts = shi_tomasi(img)
        assert len(pts) == 4
        corners = np.array([[8, 10], [21, 10], [8, 19], [21, 19]])
        for c in corners:
            assert np.min(np.linalg.norm(pts - c, axis=1)) <= 1.5

    def test_crop_equals_full_frame(self, rng):
        for _ in range(10):
            img = np.zeros((40, 40))
            r, c = rng.integers(0, 30, 2)
            img[r : r + rng.integers(3, 10), c : c + rng.integers(3, 10)] = 1.0
            full = select_corners(min_eigen_response(img))
            assert np.array_equal(shi_tomasi(img), full)

    def test_blank_has_no_features(self):
        assert shi_tomasi(np.zeros((10, 10))).shape == (0, 2)

    def test_nms_spacing_and_cap(self, rng):
        resp = rng.random((40, 40))
        pts = select_corners(resp, quality=0.0, nms_radius=3.0, max_features=25)
        assert len(pts) == 25
        d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        assert d[np.triu_indices(len(pts), 1)].min() > 3.0

    def test_segmentation_by_color(self, small_ds):
        view = small_ds.image(0).to_uint8()
        masks = segment_parts(view, small_ds.colors)
        assert all(m.any() for m in masks)
        assert not (masks[0] & masks[1]).any()
        f = link_features(small_ds.image(0), small_ds.colors)
        assert len(f.points) == 2 and f.diagonals[0] == pytest.approx(math.hypot(40, 40))


def test_unknown_metric():
    with pytest.raises(UnsupportedMetricError):
        make_metric("cosine")
