import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from qnnextract import datapipe as dp
from qnnextract.errors import BadMagicError, CountMismatchError, DimensionError, TruncatedFileError


@pytest.fixture
def idx_pair(tmp_path, rng):
    imgs = rng.integers(0, 256, (6, 5, 3), dtype=np.uint8)
    labels = np.array([7, 0, 1, 2, 3, 9], dtype=np.uint8)
    pi, pl = tmp_path / "img.idx", tmp_path / "lab.idx"
    dp.write_idx(imgs, labels, pi, pl)
    return imgs, labels, pi, pl


def test_idx_roundtrip(idx_pair):
    imgs, labels, pi, pl = idx_pair
    X, y = dp.read_idx(pi, pl)
    assert X.shape == (6, 5, 3) and np.array_equal(X * 255, imgs)
    samples = dp.load_idx(pi, pl)
    assert samples[0].label == 7 and samples[0].width == 3 and samples[0].height == 5


def test_idx_gzip_roundtrip(tmp_path, idx_pair):
    imgs, labels, _, _ = idx_pair
    pi, pl = tmp_path / "img.gz", tmp_path / "lab.gz"
    dp.write_idx(imgs, labels, pi, pl)
    assert pi.read_bytes()[:2] == b"\x1f\x8b"
    assert np.array_equal(dp.read_idx(pi, pl)[1], labels)


def test_idx_header_fields(tmp_path):
    pi, pl = tmp_path / "i", tmp_path / "l"
    dp.write_idx(np.zeros((3, 28, 28), np.uint8), np.zeros(3, np.uint8), pi, pl)
    assert struct.unpack(">IIII", pi.read_bytes()[:16]) == (0x803, 3, 28, 28)


def test_idx_bad_magic(idx_pair, tmp_path):
    _, _, pi, pl = idx_pair
    with pytest.raises(BadMagicError):
        dp.read_idx(pl, pl)


def test_idx_truncated(idx_pair, tmp_path):
    _, _, pi, pl = idx_pair
    short = tmp_path / "short"
    short.write_bytes(pi.read_bytes()[:-4])
    with pytest.raises(TruncatedFileError):
        dp.read_idx(short, pl)
    short.write_bytes(pi.read_bytes()[:10])
    with pytest.raises(TruncatedFileError):
        dp.read_idx(short, pl)
    short.write_bytes(gzip.compress(pi.read_bytes())[:20])
    with pytest.raises(TruncatedFileError):
        dp.read_idx(short, pl)


def test_idx_count_mismatch(tmp_path, rng):
    pi, pl = tmp_path / "i", tmp_path / "l"
    dp.write_idx(np.zeros((4, 2, 2), np.uint8), np.zeros(4, np.uint8), pi, pl)
    dp.write_idx(np.zeros((3, 2, 2), np.uint8), np.zeros(3, np.uint8), tmp_path / "x", pl)
    with pytest.raises(CountMismatchError):
        dp.read_idx(pi, pl)


def test_resize_center_example():
    out = dp.bilinear_downsample(dp.ImageSample.from_array([[0.0, 1.0], [1.0, 0.0]]), 1, 1)
    assert out.pixels.tolist() == [0.5]


def test_resize_shapes(rng):
    img = dp.ImageSample.from_array(rng.random((28, 28)))
    assert dp.bilinear_downsample(img, 16, 16).pixels.size == 256
    assert dp.bilinear_downsample(img, 4, 4).pixels.size == 16
    with pytest.raises(DimensionError):
        dp.resize_batch(rng.random((4, 4)), 0, 2)


@settings(max_examples=40, deadline=None)
@given(c=st.floats(0, 1), h=st.integers(1, 12), w=st.integers(1, 12))
def test_resize_constant(c, h, w):
    out = dp.resize_batch(np.full((7, 9), c), h, w)
    assert out.shape == (h, w) and np.allclose(out, c, atol=1e-12)


def test_upsample_is_linear_interpolation():
    out = dp.resize_batch(np.array([[0.0, 1.0]]), 1, 3)
    assert np.allclose(out, [[0.0, 0.5, 1.0]])


def test_jitter_constant_oracle():
    cfg = dp.AugmentConfig("jitter", gaussian_blur=False, rng_seed=5)
    c = 0.6
    img = dp.ImageSample.from_array(np.full((6, 6), c))
    rng = np.random.default_rng(5)
    expect = []
    for _ in range(2):
        b = rng.uniform(-0.2, 0.2)
        k = np.exp(rng.uniform(np.log(0.8), np.log(1.25)))
        expect.append(min(max(k * c + b, 0.0), 1.0))
    v1, v2 = dp.augment_pair(img, cfg)
    assert np.allclose(v1.pixels, expect[0]) and np.allclose(v2.pixels, expect[1])


def test_flip_semantics(rng):
    src = rng.random((5, 5))
    img = dp.ImageSample.from_array(src)
    for seed in range(8):
        for v in dp.augment_pair(img, dp.AugmentConfig("flip", False, seed)):
            a = v.as_array()
            assert np.array_equal(a, src) or np.array_equal(a, src[:, ::-1])


def test_blur_preserves_mass():
    img = np.zeros((15, 15))
    img[7, 7] = 1.0
    for sigma in (0.1, 0.5, 1.0):
        out = dp.gaussian_blur(img, sigma, clamp=False)
        assert abs(out.sum() - 1.0) < 1e-6
    assert dp.gaussian_blur(img, 1.0)[7, 8] > 0


def test_rotation_zero_and_crop_full(rng):
    src = rng.random((8, 8))
    assert np.allclose(dp.rotate(src, 0.0), src)
    assert np.allclose(dp.crop_resize(src, 1.0, 0.3, 0.7), src)


@settings(max_examples=30, deadline=None)
@given(img=hnp.arrays(np.float64, (8, 8), elements=st.floats(0, 1)),
       method=st.sampled_from(dp.AUGMENT_METHODS), blur=st.booleans(), seed=st.integers(0, 2**16))
def test_views_stay_in_range(img, method, blur, seed):
    v = dp.random_view(img, method, blur, np.random.default_rng(seed))
    assert v.shape == img.shape and v.min() >= 0.0 and v.max() <= 1.0


def test_augment_determinism(rng):
    X = rng.random((4, 6, 6))
    cfg = dp.AugmentConfig("crop", True, 3)
    a = dp.augment_batch(X, cfg, 2)
    b = dp.augment_batch(X, cfg, 2)
    assert all(np.array_equal(p, q) for p, q in zip(a, b))
    assert not np.array_equal(a[0], dp.augment_batch(X, cfg, 3)[0])


def test_bad_augment_method():
    with pytest.raises(ValueError):
        dp.AugmentConfig("shear")


def test_mixup_examples(rng):
    a, b = rng.random(4), rng.random(4)
    x, lab, _ = dp.mixup(a, b, [0.3, 0.7], [0.9, 0.1], lam=1.0)
    assert np.array_equal(x, a) and np.allclose(lab, [0.3, 0.7])
    _, lab, _ = dp.mixup(a, b, [1, 0], [0, 1], lam=0.5)
    assert np.allclose(lab, [0.5, 0.5])
    for seed in range(20):
        _, lab, lam = dp.mixup(a, b, [1, 0], [0.2, 0.8], alpha=0.2, rng=seed)
        assert 0 <= lam <= 1 and abs(lab.sum() - 1) < 1e-12
    with pytest.raises(DimensionError):
        dp.mixup(a, rng.random(5), [1, 0], [0, 1])


def test_mixup_within_class_keeps_class(rng):
    X = rng.random((10, 3, 3))
    hard = np.array([0, 1] * 5)
    soft = np.eye(2)[hard]
    Xm, sm = dp.mixup_within_class(X, soft, hard, 0.2, rng)
    assert np.array_equal(sm, soft)
    assert Xm.min() >= 0 and Xm.max() <= 1


def test_task_construction(mnist):
    X, y = mnist
    t = dp.make_binary_task(X, y, 0, 1, 100, 40, 30, seed=1)
    assert set(np.unique(t.train_y)) == {0, 1} and t.train_y.sum() == 50
    assert len(t.train_x) == 100 and len(t.test_x) == 40 and len(t.pool_x) == 30
    flat = lambda a: {arr.tobytes() for arr in a}
    assert not flat(t.train_x) & flat(t.test_x)
    assert not flat(t.pool_x) & (flat(t.train_x) | flat(t.test_x))
    u = dp.make_binary_task(X, y, 0, 1, 100, 40, 30, seed=1)
    assert np.array_equal(t.train_x, u.train_x)


def test_task_names():
    assert dp.parse_task_name("m23") == ("m", 2, 3)
    assert dp.task_name("f", 4, 5) == "f45"
    with pytest.raises(ValueError):
        dp.parse_task_name("mnist")


def test_task_config(tmp_path):
    p = tmp_path / "t.json"
    p.write_text('{"dataset": "m", "classes": [0, 1], "train_size": 10}')
    with pytest.raises(ValueError):
        dp.load_task_config(p)


def test_pgm_dump(tmp_path):
    dp.save_pgm(tmp_path / "x.pgm", np.ones((2, 3)))
    assert (tmp_path / "x.pgm").read_bytes() == b"P5\n3 2\n255\n" + bytes([255] * 6)


def test_sample_validation():
    with pytest.raises(DimensionError):
        dp.ImageSample(np.zeros(5), 2, 2)
