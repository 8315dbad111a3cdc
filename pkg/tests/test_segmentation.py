import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrfsdp.io import read_pgm, read_ppm, write_pgm, write_ppm
from mrfsdp.segmentation import (
    KernelParams,
    PixelFeatures,
    UnaryPrior,
    build_unary,
    bundled_test_image,
    kernel,
    kernel_matrix,
    make_test_image,
    segment,
)


def _features(pos, color):
    pos = np.asarray(pos, dtype=float)
    return PixelFeatures(pos=pos, color=np.asarray(color, dtype=float), width=len(pos), height=1)


def test_kernel_examples():
    p = KernelParams(w_app=2.0, w_smooth=0.5)
    f = np.array([3.0, 4.0, 10, 20, 30])
    assert kernel(f, f, p) == 2.5
    far = f + np.array([1000.0, 0, 0, 0, 0])
    assert kernel(f, far, p) == 0.0
    near = f + np.array([5.0, 0, 3, 0, 0])
    want = 2 * np.exp(-25 / (2 * 40**2) - 9 / (2 * 13**2)) + 0.5 * np.exp(-25 / (2 * 9))
    assert kernel(f, near, p) == pytest.approx(want, rel=1e-14)


def test_kernel_truncation_boundary():
    p = KernelParams()
    f = np.zeros(5)
    inside = np.array([239.9, 0, 0, 0, 0])
    assert kernel(f, inside, p) > 0
    assert kernel(f, np.array([240.1, 0, 0, 0, 0]), p) == 0.0
    assert kernel(f, np.array([240.1, 0, 0, 0, 0]), KernelParams(truncate=False)) > 0


def test_kernel_symmetric():
    rng = np.random.default_rng(0)
    p = KernelParams()
    for _ in range(1000):
        a = np.concatenate([rng.uniform(0, 60, 2), rng.uniform(0, 255, 3)])
        b = np.concatenate([rng.uniform(0, 60, 2), rng.uniform(0, 255, 3)])
        assert kernel(a, b, p) == kernel(b, a, p)


def test_kernel_params_positive():
    with pytest.raises(ValueError):
        KernelParams(theta_beta=0.0)


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1))
def test_kernel_matrix_matches_scalar(seed):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 256, size=(5, 6, 3))
    feats = PixelFeatures.from_image(img)
    p = KernelParams(theta_alpha=2.0, theta_gamma=0.5)
    K = kernel_matrix(feats, p)
    assert np.all(np.diag(K) == 0)
    assert np.array_equal(K, K.T)
    for i in range(feats.n):
        for j in range(feats.n):
            if i != j:
                want = kernel(feats.vector(i), feats.vector(j), p)
                got = float(K[i, j])
                if want < np.finfo(np.float32).tiny:
                    assert got == 0.0
                else:
                    assert got == pytest.approx(want, rel=1e-6)


def test_build_unary_examples():
    p = build_unary(np.array([[2, 0]]), 3, 0.95)
    assert p[0] == pytest.approx([0.025, 0.95, 0.025])
    assert p[1] == pytest.approx([1 / 3] * 3)
    assert np.allclose(p.sum(axis=1), 1.0)
    with pytest.raises(ValueError):
        build_unary(np.array([4]), 3)
    with pytest.raises(ValueError):
        build_unary(np.array([1]), 3, confidence=1.0)


def test_prior_validation():
    with pytest.raises(ValueError):
        UnaryPrior(np.array([[1.0, 0.0]]))
    with pytest.raises(ValueError):
        UnaryPrior(np.array([[0.6, 0.6]]))
    with pytest.raises(ValueError):
        UnaryPrior(np.array([[0.5, 0.5]]), theta=-1.0)


def test_two_identical_pixels_follow_the_confident_one():
    feats = _features([[0, 0], [0, 0]], [[9, 9, 9], [9, 9, 9]])
    prior = UnaryPrior(np.array([[0.98, 0.01, 0.01], [1 / 3, 1 / 3, 1 / 3]]))
    for seed in range(10):
        res = segment(feats, prior, seed=seed)
        assert res.labels.tolist() == [[0, 0]]


def test_single_pixel_without_unary_is_uniform():
    feats = _features([[0, 0]], [[0, 0, 0]])
    prior = UnaryPrior(np.array([[0.2, 0.3, 0.5]]), theta=0.0)
    labels = [int(segment(feats, prior, seed=s, rounding_iters=1).labels[0, 0]) for s in range(600)]
    counts = np.bincount(labels, minlength=3)
    assert np.all(np.abs(counts - 200) < 4 * np.sqrt(600 * (1 / 3) * (2 / 3)))


@pytest.fixture(scope="module")
def small_scene():
    img, annot = make_test_image(size=32, margin=2)
    feats = PixelFeatures.from_image(img)
    prior = UnaryPrior(build_unary(annot, 3))
    params = KernelParams(theta_alpha=10.0, theta_gamma=1.5)
    return img, annot, feats, prior, params, kernel_matrix(feats, params)


def test_small_scene_keeps_annotations(small_scene):
    img, annot, feats, prior, params, K = small_scene
    res = segment(feats, prior, params, kernel=K, max_iters=200)
    assert res.labels.shape == (32, 32)
    assert res.labels.min() >= 0 and res.labels.max() < 3
    marked = annot > 0
    assert np.mean(res.labels[marked] == annot[marked] - 1) >= 0.99
    again = segment(feats, prior, params, kernel=K, max_iters=200)
    assert again.labels.tobytes() == res.labels.tobytes()


def test_trace_monotone_and_unit_norm(small_scene):
    img, annot, feats, prior, params, K = small_scene
    res = segment(feats, prior, params, kernel=K, alpha=5.0, max_iters=30)
    assert np.all(np.diff(res.objective_trace) >= 0)
    assert np.allclose(np.linalg.norm(res.v, axis=1), 1.0, atol=1e-9)
    assert res.alpha <= 5.0
    assert segment(feats, prior, params, kernel=K, d=5, max_iters=3).v.shape == (feats.n, 5)


def test_segment_errors(small_scene):
    img, annot, feats, prior, params, K = small_scene
    with pytest.raises(ValueError, match="cap"):
        segment(feats, prior, params, pixel_cap=100)
    with pytest.raises(ValueError):
        segment(feats, prior, params, alpha=0.0)
    with pytest.raises(ValueError):
        segment(feats, UnaryPrior(np.full((3, 2), 0.5)), params)
    with pytest.raises(ValueError):
        segment(feats, prior, params, kernel=K[:10, :10])


def test_netpbm_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(4, 7, 3), dtype=np.uint8)
    write_ppm(tmp_path / "a.ppm", img)
    assert np.array_equal(read_ppm(tmp_path / "a.ppm"), img)
    lab = rng.integers(0, 4, size=(4, 7), dtype=np.uint8)
    write_pgm(tmp_path / "a.pgm", lab)
    assert np.array_equal(read_pgm(tmp_path / "a.pgm"), lab)
    (tmp_path / "c.pgm").write_bytes(b"P5\n# note\n2 1\n255\n\x01\x02")
    assert read_pgm(tmp_path / "c.pgm").tolist() == [[1, 2]]
    with pytest.raises(ValueError):
        read_ppm(tmp_path / "a.pgm")


def test_bundled_image_matches_generator():
    img, annot = bundled_test_image()
    gimg, gannot = make_test_image()
    assert img.shape == (128, 128, 3)
    assert np.array_equal(img, gimg) and np.array_equal(annot, gannot)
    assert set(np.unique(annot)) == {0, 1, 2, 3}
