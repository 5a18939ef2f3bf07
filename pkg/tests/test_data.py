import math

import numpy as np
import pytest
import torch

from thawgan.data import (
    DataError,
    ImageFolderDataset,
    ProceduralTextures,
    array_to_tensor,
    bicubic_resize,
    bicubic_upscale,
    cubic_kernel,
    degrade,
    derive_seeds,
    epoch_index_batches,
    load_image,
    save_image,
    stack_batch,
    tensor_to_array,
)

# ---------------------------------------------------------------- reference
# Naive per-pixel bicubic resampler, written independently of the
# matrix-based implementation: taps are found by scanning a generous window
# and keeping nonzero kernel weights.


def ref_kernel(x, a=-0.5):
    x = abs(x)
    if x <= 1:
        return (a + 2) * x**3 - (a + 3) * x**2 + 1
    if x < 2:
        return a * x**3 - 5 * a * x**2 + 8 * a * x - 4 * a
    return 0.0


def ref_axis_weights(center, stretch, in_size):
    """Normalized tap weights for one output coordinate, edge taps clamped."""
    pairs = []
    lo = int(math.floor(center - 2 * stretch - 2))
    hi = int(math.ceil(center + 2 * stretch + 2))
    for k in range(lo, hi + 1):
        w = ref_kernel((k - center) / stretch) / stretch
        if w != 0.0:
            pairs.append((k, w))
    total = sum(w for _, w in pairs)
    merged = {}
    for k, w in pairs:
        k = min(max(k, 0), in_size - 1)
        merged[k] = merged.get(k, 0.0) + w / total
    return merged


def ref_resize(img, out_h, out_w):
    img = np.asarray(img, dtype=np.float64)
    in_h, in_w = img.shape[:2]
    sy, sx = in_h / out_h, in_w / out_w
    ty, tx = max(sy, 1.0), max(sx, 1.0)
    out = np.zeros((out_h, out_w) + img.shape[2:])
    for i in range(out_h):
        wy = ref_axis_weights((i + 0.5) * sy - 0.5, ty, in_h)
        for j in range(out_w):
            wx = ref_axis_weights((j + 0.5) * sx - 0.5, tx, in_w)
            acc = 0.0
            for ky, vy in wy.items():
                for kx, vx in wx.items():
                    acc = acc + vy * vx * img[ky, kx]
            out[i, j] = acc
    return out


def test_downscale_matches_naive_reference():
    rng = np.random.default_rng(0)
    img = rng.uniform(size=(16, 16, 3))
    got = bicubic_resize(img, 8, 8)
    want = ref_resize(img, 8, 8)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_upscale_matches_naive_reference():
    rng = np.random.default_rng(1)
    img = rng.uniform(size=(8, 8, 3))
    np.testing.assert_allclose(bicubic_resize(img, 16, 16), ref_resize(img, 16, 16), atol=1e-12)


def test_fractional_resize_matches_naive_reference():
    rng = np.random.default_rng(2)
    img = rng.uniform(size=(16, 12))
    np.testing.assert_allclose(bicubic_resize(img, 10, 9), ref_resize(img, 10, 9), atol=1e-12)


def test_identity_resize_is_exact():
    rng = np.random.default_rng(3)
    img = rng.uniform(size=(9, 9, 3))
    np.testing.assert_allclose(bicubic_resize(img, 9, 9), img, atol=1e-12)


def test_constant_images_are_preserved():
    const = np.full((12, 12, 3), 0.7)
    np.testing.assert_allclose(degrade(const, 4), np.full((3, 3, 3), 0.7), atol=1e-12)
    np.testing.assert_allclose(bicubic_upscale(const, 2), np.full((24, 24, 3), 0.7), atol=1e-12)


def test_kernel_properties():
    assert cubic_kernel(np.array([0.0]))[0] == 1.0
    assert cubic_kernel(np.array([1.0]))[0] == pytest.approx(0.0)
    assert cubic_kernel(np.array([2.0]))[0] == 0.0
    assert cubic_kernel(np.array([2.5]))[0] == 0.0
    x = np.linspace(-1.9, 1.9, 21)
    np.testing.assert_allclose(cubic_kernel(x), cubic_kernel(-x))


def test_degrade_validates_divisibility():
    with pytest.raises(ValueError):
        degrade(np.zeros((10, 10, 3)), 4)
    with pytest.raises(ValueError):
        degrade(np.zeros((8, 8, 3)), 0)


def test_degrade_then_upscale_shapes():
    img = np.random.default_rng(4).uniform(size=(32, 32, 3))
    small = degrade(img, 4)
    assert small.shape == (8, 8, 3)
    assert bicubic_upscale(small, 4).shape == (32, 32, 3)


# ---------------------------------------------------------------- conversions


def test_tensor_round_trip():
    rng = np.random.default_rng(5)
    arr = rng.uniform(size=(10, 12, 3))
    t = array_to_tensor(arr)
    assert t.shape == (3, 10, 12)
    assert t.dtype == torch.float32
    assert t.min() >= -1.0 and t.max() <= 1.0
    back = tensor_to_array(t)
    np.testing.assert_allclose(back, arr, atol=1e-6)


def test_tensor_to_array_clips():
    t = torch.tensor([[[-3.0, 3.0]]])
    arr = tensor_to_array(t)
    assert arr.min() == 0.0 and arr.max() == 1.0


def test_stack_batch():
    arrays = [np.zeros((8, 8, 3)), np.ones((8, 8, 3))]
    batch = stack_batch(arrays)
    assert batch.shape == (2, 3, 8, 8)
    assert batch[0].min() == -1.0 and batch[1].max() == 1.0


# ---------------------------------------------------------------- textures


def test_textures_deterministic_and_order_free():
    a = ProceduralTextures("noise", size=32, count=4, seed=9)
    b = ProceduralTextures("noise", size=32, count=4, seed=9)
    third_first = b[3]
    np.testing.assert_array_equal(a[3], third_first)
    np.testing.assert_array_equal(a[0], b[0])
    c = ProceduralTextures("noise", size=32, count=4, seed=10)
    assert not np.array_equal(a[0], c[0])


@pytest.mark.parametrize("kind", ["checker", "stripes", "noise"])
def test_texture_kinds_produce_valid_images(kind):
    ds = ProceduralTextures(kind, size=48, count=3, seed=1)
    assert len(ds) == 3
    for i in range(3):
        img = ds[i]
        assert img.shape == (48, 48, 3)
        assert img.min() >= 0.0 and img.max() <= 1.0


def test_stripes_are_axis_aligned():
    ds = ProceduralTextures("stripes", size=32, count=6, seed=2)
    for i in range(6):
        img = ds[i]
        rows_const = np.allclose(img, img[:, :1, :])
        cols_const = np.allclose(img, img[:1, :, :])
        assert rows_const or cols_const


def test_texture_errors():
    with pytest.raises(DataError):
        ProceduralTextures("plaid", 32, 2, 0)
    with pytest.raises(DataError):
        ProceduralTextures("noise", 8, 2, 0)
    ds = ProceduralTextures("noise", 32, 2, 0)
    with pytest.raises(IndexError):
        ds[2]


# ---------------------------------------------------------------- seeds, sampling


def test_derive_seeds_named_and_stable():
    seeds = derive_seeds(123)
    again = derive_seeds(123)
    assert seeds == again
    assert set(seeds) == {"policy", "sampler", "torch", "train_a", "train_b", "eval_a", "eval_b"}
    assert len(set(seeds.values())) == len(seeds)
    assert derive_seeds(124) != seeds


def test_epoch_index_batches_shape_and_range():
    rng = np.random.default_rng(0)
    batches = epoch_index_batches(rng, count=10, batch_size=3, steps=7)
    assert len(batches) == 7
    assert all(len(b) == 3 for b in batches)
    assert all(0 <= i < 10 for b in batches for i in b)


def test_epoch_index_batches_is_permutation_when_exact():
    rng = np.random.default_rng(1)
    batches = epoch_index_batches(rng, count=12, batch_size=4, steps=3)
    flat = [i for b in batches for i in b]
    assert sorted(flat) == list(range(12))


def test_epoch_index_batches_deterministic():
    a = epoch_index_batches(np.random.default_rng(7), 20, 4, 10)
    b = epoch_index_batches(np.random.default_rng(7), 20, 4, 10)
    assert a == b


def test_epoch_index_batches_empty_dataset():
    with pytest.raises(DataError):
        epoch_index_batches(np.random.default_rng(0), 0, 2, 2)


# ---------------------------------------------------------------- files


def test_image_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    arr = rng.uniform(size=(16, 16, 3))
    path = tmp_path / "img.png"
    save_image(arr, path)
    back = load_image(path)
    np.testing.assert_allclose(back, arr, atol=1.0 / 255.0 + 1e-9)


def test_load_image_missing(tmp_path):
    with pytest.raises(DataError):
        load_image(tmp_path / "missing.png")


def test_image_folder_dataset(tmp_path):
    for name in ("b.png", "a.png", "c.png"):
        save_image(np.full((8, 8, 3), float(ord(name[0]) - ord("a")) / 4), tmp_path / name)
    (tmp_path / "notes.txt").write_text("ignored")
    ds = ImageFolderDataset(tmp_path)
    assert len(ds) == 3
    assert [p.name for p in ds.paths] == ["a.png", "b.png", "c.png"]
    assert ds[0].shape == (8, 8, 3)


def test_image_folder_errors(tmp_path):
    with pytest.raises(DataError):
        ImageFolderDataset(tmp_path / "nope")
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(DataError):
        ImageFolderDataset(empty)
