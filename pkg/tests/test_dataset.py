import hashlib

import numpy as np
import pytest

from visual_roadmap.dataset import dataset_scene, load_dataset, save_dataset, simulate
from visual_roadmap.metrics import st_hausdorff
from visual_roadmap.scene import BUNDLED, dump_scene, load_scene


def digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


class TestDataset:
    def test_roundtrip(self, tmp_path, small_scene, small_ds):
        ds = small_ds.subset(np.arange(12))
        save_dataset(ds, tmp_path / "d", small_scene, seed=3)
        back = load_dataset(tmp_path / "d")
        assert np.array_equal(back.images, ds.images)
        assert np.array_equal(back.configs, ds.configs)
        assert np.array_equal(back.tracked, ds.tracked)
        assert np.array_equal(back.background, ds.background)
        for a, b in zip(back.features, ds.features):
            assert st_hausdorff(a, b) == 0.0
        assert dataset_scene(tmp_path / "d").robot == small_scene.robot
        assert len(list((tmp_path / "d" / "images").iterdir())) == 12

    def test_deterministic_bytes(self, tmp_path, small_scene):
        for name in ("a", "b"):
            save_dataset(simulate(small_scene, 6, seed=1), tmp_path / name, small_scene, seed=1)
        assert digest(tmp_path / "a") == digest(tmp_path / "b")

    def test_nested_prefix(self, small_scene):
        big = simulate(small_scene, 30, seed=4)
        small = simulate(small_scene, 10, seed=4)
        assert np.array_equal(big.images[:10], small.images)

    def test_supports_match_foreground(self, small_ds):
        for i in range(5):
            assert np.array_equal(small_ds.supports[i], small_ds.foreground(i).support())

    def test_concat_keeps_geometry(self, small_ds):
        both = small_ds.subset([0, 1]).concat(small_ds.subset([2]))
        assert both.n == 3 and np.array_equal(both.images[2], small_ds.images[2])


class TestScenes:
    @pytest.mark.parametrize("name", BUNDLED)
    def test_bundled_load_and_render(self, name):
        sc = load_scene(name)
        ds = simulate(sc, 3)
        assert ds.views == tuple(c.shape for c in sc.cameras)
        assert ds.supports.any(axis=1).all()

    def test_dump_roundtrip(self, tmp_path):
        sc = load_scene("standard")
        dump_scene(sc, tmp_path / "s.yaml")
        assert load_scene(tmp_path / "s.yaml").robot == sc.robot

    def test_obstacle_color_clash(self):
        from visual_roadmap.scene import scene_from_dict

        d = dict(load_scene("standard").source)
        d["obstacles"] = {"rectangles": [[0, 0, 1, 1]], "colors": [[200, 40, 40]]}
        with pytest.raises(ValueError):
            scene_from_dict(d)
