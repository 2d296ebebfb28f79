import math

import numpy as np
import pytest
from PIL import Image

from morphspace.data import (
    DatasetSpec,
    FolderDataset,
    SyntheticConfig,
    array_to_image,
    export_synthetic,
    generate_synthetic,
    image_to_array,
    load_dataset,
    paired_factor_query,
    render_factor_pairs,
    render_scene,
    PAIR_DISTANCE_THRESHOLD,
)

BASE = dict(brightness=0.7, hue=2.0, object_count=1, object_size=0.12, object_x=0.5, object_y=0.6)


class TestRenderer:
    def test_deterministic_pure_function(self):
        a = render_scene(BASE, seed=9, resolution=32)
        b = render_scene(BASE, seed=9, resolution=32)
        assert np.array_equal(a, b)
        c = render_scene(BASE, seed=10, resolution=32)
        assert not np.array_equal(a, c)  # seed moves nuisance detail

    def test_output_range_and_shape(self):
        img = render_scene(BASE, seed=0, resolution=64)
        assert img.shape == (3, 64, 64) and img.dtype == np.float32
        assert img.min() >= -1.0 and img.max() <= 1.0

    def test_zero_brightness_is_all_dark(self):
        img = render_scene({**BASE, "brightness": 0.0}, seed=1, resolution=32)
        assert img.max() < -0.8

    def test_brightness_scales_luminance_linearly(self):
        lum = []
        for b in (0.25, 0.5, 1.0):
            img = render_scene({**BASE, "brightness": b}, seed=2, resolution=64)
            y01 = np.tensordot([0.299, 0.587, 0.114], (img + 1) / 2, axes=(0, 0))
            lum.append(y01.mean())
        assert abs(lum[2] / lum[0] - 4.0) < 0.02
        assert abs(lum[1] / lum[0] - 2.0) < 0.02

    def test_factor_validation(self):
        with pytest.raises(ValueError):
            render_scene({**BASE, "brightness": 1.5}, seed=0)
        with pytest.raises(ValueError):
            render_scene({**BASE, "object_count": 9}, seed=0)


class TestSyntheticDataset:
    def test_factors_within_ranges(self):
        cfg = SyntheticConfig(n_samples=300, brightness_range=(0.3, 0.8), count_range=(1, 3))
        ds = generate_synthetic(cfg, seed=4, resolution=32)
        assert len(ds) == 300
        b = ds.factor_array("brightness")
        assert b.min() >= 0.3 and b.max() <= 0.8
        counts = ds.factor_array("object_count")
        assert set(np.unique(counts)) <= {1.0, 2.0, 3.0}

    def test_same_seed_same_dataset(self):
        cfg = SyntheticConfig(n_samples=32)
        a = generate_synthetic(cfg, seed=5, resolution=16)
        b = generate_synthetic(cfg, seed=5, resolution=16)
        assert np.array_equal(a.image(7), b.image(7))
        assert np.array_equal(a.factor_array("hue"), b.factor_array("hue"))

    def test_split_deterministic_and_disjoint(self):
        ds = generate_synthetic(SyntheticConfig(n_samples=200), seed=6, resolution=16, holdout=0.1)
        assert len(ds.test_indices) == 20
        assert len(set(ds.train_indices) & set(ds.test_indices)) == 0
        assert len(set(ds.train_indices) | set(ds.test_indices)) == 200
        again = generate_synthetic(SyntheticConfig(n_samples=200), seed=6, resolution=16, holdout=0.1)
        assert np.array_equal(ds.test_indices, again.test_indices)

    def test_downscale_block_mean(self):
        ds = generate_synthetic(SyntheticConfig(n_samples=4), seed=7, resolution=32)
        full = ds.image(0, 32)
        half = ds.image(0, 16)
        manual = full.reshape(3, 16, 2, 16, 2).mean(axis=(2, 4))
        assert np.allclose(half, manual, atol=1e-6)
        with pytest.raises(ValueError):
            ds.image(0, 64)  # cannot upsample past the base resolution

    def test_batch_stacks_requested_indices(self):
        ds = generate_synthetic(SyntheticConfig(n_samples=10), seed=8, resolution=16)
        batch = ds.batch([2, 5], 16)
        assert batch.shape == (2, 3, 16, 16)
        assert np.array_equal(batch[1], ds.image(5, 16))

    def test_unknown_factor_rejected(self):
        ds = generate_synthetic(SyntheticConfig(n_samples=8), seed=9, resolution=16)
        with pytest.raises(KeyError):
            ds.factor_array("season")


class TestImageConversion:
    def test_round_trip_within_quantization(self):
        rng = np.random.default_rng(10)
        arr = rng.uniform(-1, 1, (3, 24, 24)).astype(np.float32)
        back = image_to_array(array_to_image(arr), 24)
        assert np.abs(back - arr).max() <= 1.0 / 127.5 + 1e-6

    def test_center_crop_and_resize(self):
        im = Image.new("RGB", (64, 32), (255, 0, 0))
        arr = image_to_array(im, 16)
        assert arr.shape == (3, 16, 16)
        assert np.allclose(arr[0], 1.0, atol=1e-6)  # red channel saturated


class TestFolderDataset:
    def _write_folder(self, tmp_path, n=12):
        ds = generate_synthetic(SyntheticConfig(n_samples=n), seed=11, resolution=32)
        out = tmp_path / "imgs"
        export_synthetic(ds, out)
        return ds, out

    def test_export_then_load(self, tmp_path):
        ds, out = self._write_folder(tmp_path)
        assert (out / "factors.json").exists()
        folder = FolderDataset(str(out), resolution=32, holdout=0.1)
        assert len(folder) == len(ds)
        # pixel content survives the 8-bit round trip
        i = folder.keys.index("scene_000003.png")
        assert np.abs(folder.image(i) - ds.image(3)).max() <= 1.0 / 127.5 + 1e-6

    def test_undecodable_files_skipped_and_counted(self, tmp_path):
        _, out = self._write_folder(tmp_path, n=6)
        (out / "broken.png").write_bytes(b"\x89PNG\r\n\x1a\nnot really a png")
        (out / "readme.txt").write_text("not an image")
        folder = FolderDataset(str(out), resolution=32, holdout=0.1)
        assert len(folder) == 6
        assert folder.skipped == 1

    def test_missing_folder_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            FolderDataset(str(tmp_path / "nope"), resolution=32, holdout=0.1)

    def test_spec_dispatch(self, tmp_path):
        _, out = self._write_folder(tmp_path, n=6)
        ds = load_dataset(DatasetSpec(kind="folder", path=str(out), resolution=32), seed=0)
        assert isinstance(ds, FolderDataset)
        with pytest.raises(ValueError):
            DatasetSpec(kind="folder", path="").validate()
        with pytest.raises(ValueError):
            DatasetSpec(kind="database").validate()


@pytest.fixture(scope="module")
def big():
    return generate_synthetic(SyntheticConfig(n_samples=10000), seed=12, resolution=16)


class TestPairedFactorQuery:
    def test_ten_pairs_from_ten_thousand(self, big):
        pairs = paired_factor_query(big, "brightness", delta=0.3, n_pairs=10, indices=np.arange(len(big)))
        assert len(pairs) == 10
        b = big.factor_array("brightness")
        h = big.factor_array("hue")
        for i, j in pairs:
            assert abs((b[j] - b[i]) - 0.3) <= 0.05
            # everything else stayed put, hue circularly
            assert abs(math.remainder(h[j] - h[i], 2 * math.pi)) < 2 * math.pi * PAIR_DISTANCE_THRESHOLD

    def test_zero_delta_gives_near_identical_factors(self, big):
        pairs = paired_factor_query(big, "brightness", delta=0.0, n_pairs=10, indices=np.arange(len(big)))
        b = big.factor_array("brightness")
        for i, j in pairs:
            assert i != j
            assert abs(b[j] - b[i]) <= 0.05

    def test_pairs_are_disjoint(self, big):
        pairs = paired_factor_query(big, "hue", delta=0.5, n_pairs=10, indices=np.arange(len(big)))
        flat = [idx for pair in pairs for idx in pair]
        assert len(flat) == len(set(flat))

    def test_unknown_factor_rejected(self, big):
        with pytest.raises(KeyError):
            paired_factor_query(big, "temperature", delta=0.1)

    def test_impossible_request_raises(self):
        small = generate_synthetic(SyntheticConfig(n_samples=12), seed=13, resolution=16)
        with pytest.raises(ValueError):
            paired_factor_query(small, "brightness", delta=0.4, n_pairs=10, indices=np.arange(12))


class TestRenderFactorPairs:
    def test_brightness_pairs_move_luminance_and_keep_hue(self):
        from morphspace.metrics import hue_series, luminance_series

        pairs = render_factor_pairs(SyntheticConfig(), "brightness", 0.3, n_pairs=5, seed=3)
        for a, b in pairs:
            lum = luminance_series(np.stack([a, b]))
            assert lum[1] > lum[0]
            hue = hue_series(np.stack([a, b]))
            assert abs(math.remainder(hue[1] - hue[0], 2 * math.pi)) < 0.02

    def test_hue_pairs_shift_the_hue_angle_by_delta(self):
        from morphspace.metrics import hue_series, luminance_series

        pairs = render_factor_pairs(SyntheticConfig(), "hue", 0.7, n_pairs=5, seed=4)
        for a, b in pairs:
            hue = hue_series(np.stack([a, b]))
            assert abs(math.remainder(hue[1] - hue[0], 2 * math.pi) - 0.7) < 0.05
            lum = luminance_series(np.stack([a, b]))
            assert abs(lum[1] - lum[0]) < 0.02

    def test_zero_delta_renders_identical_images(self):
        pairs = render_factor_pairs(SyntheticConfig(), "brightness", 0.0, n_pairs=3, seed=5)
        for a, b in pairs:
            assert np.array_equal(a, b)

    def test_negative_delta_stays_in_range(self):
        pairs = render_factor_pairs(SyntheticConfig(brightness_range=(0.2, 0.9)), "brightness", -0.5,
                                    n_pairs=8, seed=6)
        assert len(pairs) == 8

    def test_requested_resolution(self):
        (a, b), = render_factor_pairs(SyntheticConfig(), "hue", 0.5, n_pairs=1, seed=7, resolution=16)
        assert a.shape == (3, 16, 16)

    def test_bad_factor_or_delta_rejected(self):
        with pytest.raises(ValueError):
            render_factor_pairs(SyntheticConfig(), "object_count", 1.0)
        with pytest.raises(ValueError):
            render_factor_pairs(SyntheticConfig(), "brightness", 2.0)
