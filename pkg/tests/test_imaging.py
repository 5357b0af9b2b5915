import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image
from skimage.metrics import structural_similarity

from semlle.imaging import (PSNR_SENTINEL, SSIM_C1, DegenerateInputError, ImageFormatError, evaluate_pair,
                            load_image, psnr, save_image, spatial_gradient, ssim)

images = arrays(np.float64, st.tuples(st.integers(2, 9), st.integers(2, 9), st.sampled_from([1, 3])),
                elements=st.floats(0, 1))


def _write_png(path, codes, mode=None):
    Image.fromarray(np.asarray(codes), mode=mode).save(path)


class TestIO:
    def test_white_png_loads_as_ones(self, tmp_path):
        _write_png(tmp_path / "w.png", np.full((2, 2, 3), 255, np.uint8))
        np.testing.assert_array_equal(load_image(tmp_path / "w.png"), np.ones((2, 2, 3)))

    def test_black_png_loads_as_zeros(self, tmp_path):
        _write_png(tmp_path / "b.png", np.zeros((2, 2, 3), np.uint8))
        np.testing.assert_array_equal(load_image(tmp_path / "b.png"), np.zeros((2, 2, 3)))

    def test_single_pixel_codes(self, tmp_path):
        _write_png(tmp_path / "p.png", np.array([[[128, 64, 32]]], np.uint8))
        img = load_image(tmp_path / "p.png")
        assert img.shape == (1, 1, 3)
        np.testing.assert_allclose(img[0, 0], [128 / 255, 64 / 255, 32 / 255], rtol=0, atol=1e-15)

    def test_sixteen_bit_grayscale(self, tmp_path):
        codes = np.array([[0, 65535], [32768, 1000]], np.uint16)
        Image.fromarray(codes).save(tmp_path / "g16.png")
        img = load_image(tmp_path / "g16.png")
        assert img.shape == (2, 2, 1)
        np.testing.assert_allclose(img[..., 0], codes / 65535.0)

    def test_sixteen_bit_rgb(self, tmp_path):
        import cv2
        codes = np.zeros((3, 2, 3), np.uint16)
        codes[..., 0] = 65535  # red
        cv2.imwrite(str(tmp_path / "rgb16.png"), codes[..., ::-1])
        img = load_image(tmp_path / "rgb16.png")
        np.testing.assert_array_equal(img[..., 0], 1.0)
        np.testing.assert_array_equal(img[..., 1:], 0.0)

    def test_jpeg_is_read(self, tmp_path):
        _write_png(tmp_path / "x.jpg", np.full((8, 8, 3), 200, np.uint8))
        img = load_image(tmp_path / "x.jpg")
        assert img.shape == (8, 8, 3)
        np.testing.assert_allclose(img, 200 / 255, atol=2 / 255)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "nope.png")

    def test_unsupported_format(self, tmp_path):
        Image.fromarray(np.zeros((4, 4, 3), np.uint8)).save(tmp_path / "x.bmp")
        with pytest.raises(ImageFormatError):
            load_image(tmp_path / "x.bmp")

    @pytest.mark.parametrize("value", [0.0, 1.0])
    def test_constant_round_trip(self, tmp_path, value):
        save_image(np.full((4, 4, 3), value), tmp_path / "c.png")
        np.testing.assert_array_equal(load_image(tmp_path / "c.png"), value)

    def test_random_round_trip_within_quantization(self, tmp_path, rng):
        img = rng.uniform(size=(8, 8, 3))
        save_image(img, tmp_path / "r.png")
        assert np.max(np.abs(load_image(tmp_path / "r.png") - img)) <= 1 / 255

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(OSError):
            save_image(np.zeros((2, 2, 3)), tmp_path / "missing_dir" / "x.png")

    @settings(max_examples=25, deadline=None)
    @given(images)
    def test_round_trip_property(self, tmp_path_factory, img):
        path = tmp_path_factory.mktemp("rt") / "x.png"
        save_image(img, path)
        assert np.max(np.abs(load_image(path) - img)) <= 1 / 255


class TestGradient:
    def test_constant_image_has_zero_gradient(self):
        g = spatial_gradient(np.full((5, 6, 3), 0.5))
        assert not g.dx.any() and not g.dy.any()

    def test_horizontal_ramp(self):
        h, w = 4, 8
        img = np.tile((np.arange(w) / w)[None, :, None], (h, 1, 3))
        g = spatial_gradient(img)
        np.testing.assert_allclose(g.dx[:, :-1], 1 / w, atol=1e-15)
        np.testing.assert_array_equal(g.dx[:, -1], 0.0)
        np.testing.assert_array_equal(g.dy, 0.0)

    def test_degenerate_input(self):
        with pytest.raises(DegenerateInputError):
            spatial_gradient(np.zeros((1, 1, 3)))

    def test_torch_matches_numpy_and_batches(self, rng):
        img = rng.uniform(size=(2, 5, 4, 3))
        gn = spatial_gradient(img)
        gt = spatial_gradient(torch.tensor(img))
        np.testing.assert_allclose(gt.dx.numpy(), gn.dx)
        np.testing.assert_allclose(gt.dy.numpy(), gn.dy)

    def test_sobel_flag(self):
        img = np.tile((np.arange(6) / 6)[None, :, None], (5, 1, 1))
        g = spatial_gradient(img, method="sobel")
        np.testing.assert_allclose(g.dx[:, 1:-1], 1 / 6, atol=1e-12)  # normalized Sobel recovers the slope
        np.testing.assert_allclose(g.dy, 0.0, atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(images, st.floats(-1, 1))
    def test_shift_invariance(self, img, c):
        a, b = spatial_gradient(img), spatial_gradient(img + c)
        np.testing.assert_allclose(b.dx, a.dx, atol=1e-12)
        np.testing.assert_allclose(b.dy, a.dy, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(-2, 2), st.floats(-2, 2))
    def test_linearity(self, seed, alpha, beta):
        r = np.random.default_rng(seed)
        a, b = r.uniform(size=(2, 4, 5, 3))
        lhs = spatial_gradient(alpha * a + beta * b)
        ga, gb = spatial_gradient(a), spatial_gradient(b)
        np.testing.assert_allclose(lhs.dx, alpha * ga.dx + beta * gb.dx, atol=1e-12)
        np.testing.assert_allclose(lhs.dy, alpha * ga.dy + beta * gb.dy, atol=1e-12)


class TestMetrics:
    def test_psnr_identical_is_sentinel(self, rng):
        x = rng.uniform(size=(4, 4, 3))
        assert psnr(x, x) == PSNR_SENTINEL

    def test_psnr_closed_forms(self):
        assert psnr(np.full((4, 4, 3), 0.5), np.full((4, 4, 3), 0.6)) == pytest.approx(20.0, abs=1e-9)
        assert psnr(np.zeros((4, 4, 3)), np.ones((4, 4, 3))) == 0.0

    def test_psnr_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_psnr_symmetry(self, seed):
        a, b = np.random.default_rng(seed).uniform(size=(2, 6, 5, 3))
        assert psnr(a, b) == psnr(b, a)

    def test_ssim_identity(self, rng):
        x = rng.uniform(size=(16, 16, 3))
        assert abs(ssim(x, x) - 1.0) <= 1e-9

    def test_ssim_constant_images(self):
        assert ssim(np.zeros((12, 12, 3)), np.ones((12, 12, 3))) == pytest.approx(SSIM_C1 / (1 + SSIM_C1), rel=1e-9)

    def test_ssim_one_flipped_pixel_matches_reference(self, rng):
        a = rng.uniform(size=(32, 32))
        b = a.copy()
        b[10, 20] = 1.0 - b[10, 20]
        ours = ssim(a[..., None], b[..., None])
        ref = structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                    data_range=1.0)
        assert 0.9 < ours < 1.0
        assert ours == pytest.approx(ref, abs=1e-9)

    def test_ssim_uses_luma_for_rgb(self, rng):
        a, b = rng.uniform(size=(2, 16, 16, 3))
        luma = np.array([0.299, 0.587, 0.114])
        assert ssim(a, b) == pytest.approx(ssim((a @ luma)[..., None], (b @ luma)[..., None]), abs=1e-12)

    def test_ssim_too_small(self):
        with pytest.raises(DegenerateInputError):
            ssim(np.zeros((10, 10, 3)), np.zeros((10, 10, 3)))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_ssim_symmetry_and_range(self, seed):
        a, b = np.random.default_rng(seed).uniform(size=(2, 13, 14, 3))
        s = ssim(a, b)
        assert -1.0 <= s <= 1.0
        assert s == pytest.approx(ssim(b, a), abs=1e-12)

    def test_report(self):
        r = evaluate_pair(np.full((12, 12, 3), 0.5), np.full((12, 12, 3), 0.6))
        assert r.psnr == pytest.approx(20.0)
        assert 0 < r.ssim < 1
