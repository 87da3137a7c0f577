import numpy as np
import pytest
from PIL import Image

from phasemark.exceptions import ConfigError, ImageIOError
from phasemark.imagecore import SensorSpec, degrade, gaussian_blur, gaussian_kernel, load_image, quantize, save_image


def test_pgm_8bit_read(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    np.testing.assert_allclose(load_image(path), [[0.0, 1.0], [128 / 255, 64 / 255]])


def test_pgm_header_comment_and_16bit(tmp_path):
    path = tmp_path / "b.pgm"
    raster = np.array([[0, 4095], [65535, 1]], dtype=">u2").tobytes()
    path.write_bytes(b"P5\n# comment\n2 2\n65535\n" + raster)
    np.testing.assert_allclose(load_image(path), [[0.0, 4095 / 65535], [1.0, 1 / 65535]])


def test_png_16bit_value(tmp_path):
    path = tmp_path / "c.png"
    Image.fromarray(np.full((3, 4), 4095, dtype=np.uint16)).save(path)
    np.testing.assert_allclose(load_image(path), 4095 / 65535)


@pytest.mark.parametrize("suffix", [".png", ".pgm"])
def test_round_trip_8bit(tmp_path, suffix):
    rng = np.random.default_rng(0)
    img = rng.random((17, 23))
    path = tmp_path / f"x{suffix}"
    save_image(img, path)
    assert np.abs(load_image(path) - img).max() <= 0.5 / 255 + 1e-12


@pytest.mark.parametrize("suffix", [".png", ".pgm"])
def test_round_trip_16bit_lossless(tmp_path, suffix):
    rng = np.random.default_rng(1)
    img = rng.integers(0, 65536, size=(9, 11)) / 65535.0
    path = tmp_path / f"y{suffix}"
    save_image(img, path, bit_depth=16)
    np.testing.assert_array_equal(load_image(path), img)


def test_quantization_rule(tmp_path):
    path = tmp_path / "q.pgm"
    save_image(np.array([[0.5, 1.0, 0.0]]), path)
    assert path.read_bytes().endswith(bytes([128, 255, 0]))
    path16 = tmp_path / "q16.pgm"
    save_image(np.array([[1.0]]), path16, bit_depth=16)
    assert path16.read_bytes().endswith(b"\xff\xff")


def test_zero_image_saves_zeros(tmp_path):
    path = tmp_path / "z.png"
    save_image(np.zeros((5, 5)), path)
    assert np.asarray(Image.open(path)).max() == 0


def test_io_errors(tmp_path):
    with pytest.raises(ImageIOError, match="no such file"):
        load_image(tmp_path / "missing.png")
    rgb = tmp_path / "rgb.png"
    Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(rgb)
    with pytest.raises(ImageIOError, match="color"):
        load_image(rgb)
    bad = tmp_path / "bad.bmp"
    Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(bad, format="BMP")
    with pytest.raises(ImageIOError, match="unsupported"):
        load_image(bad)
    with pytest.raises(ImageIOError):
        save_image(np.zeros((4, 4)), tmp_path / "nodir" / "x.png")
    with pytest.raises(ConfigError):
        save_image(np.zeros((4, 4)), tmp_path / "x.png", bit_depth=12)


def test_sensor_spec_validation():
    with pytest.raises(ConfigError):
        SensorSpec(bit_depth=9)
    with pytest.raises(ConfigError):
        SensorSpec(gaussian_noise_sigma=-0.1)


def test_identity_degradation():
    img = np.random.default_rng(2).random((32, 32))
    out = degrade(img, SensorSpec(bit_depth=16))
    assert np.abs(out - img).max() <= 0.5 / 65535 + 1e-12


def test_noise_statistics_and_determinism():
    img = np.full((100, 100), 0.5)
    spec = SensorSpec(bit_depth=16, gaussian_noise_sigma=0.1)
    a = degrade(img, spec, seed=7)
    assert abs(a.mean() - 0.5) < 0.01 and abs(a.std() - 0.1) < 0.01
    np.testing.assert_array_equal(a, degrade(img, spec, seed=7))
    assert not np.array_equal(a, degrade(img, spec, seed=8))


def test_degrade_output_in_range():
    img = np.random.default_rng(3).random((40, 40))
    out = degrade(img, SensorSpec(bit_depth=8, gaussian_noise_sigma=0.5, blur_sigma=1.0), seed=1)
    assert out.min() >= 0 and out.max() <= 1


def test_quantize_levels():
    q = quantize(np.linspace(0, 1, 1000), 10)
    assert len(np.unique(q)) <= 1024


def test_blur_kernel_and_mean():
    k = gaussian_kernel(1.5)
    assert len(k) == 2 * 5 + 1 and abs(k.sum() - 1) < 1e-12
    np.testing.assert_allclose(k, k[::-1])
    # interior-dominated image: a small bright blob far from the edges
    img = np.zeros((64, 64))
    img[28:36, 28:36] = 1.0
    assert abs(gaussian_blur(img, 2.0).mean() - img.mean()) < 1e-6
    np.testing.assert_array_equal(gaussian_blur(img, 0.0), img)


def test_blur_matches_scipy_reference():
    from scipy.ndimage import gaussian_filter

    img = np.random.default_rng(4).random((50, 60))
    # same truncation radius (ceil(3 sigma)) and clamped edges
    ref = gaussian_filter(img, 1.3, mode="nearest", truncate=np.ceil(3 * 1.3) / 1.3)
    np.testing.assert_allclose(gaussian_blur(img, 1.3), ref, atol=1e-12)


def test_check_image_rejections():
    with pytest.raises(ValueError):
        degrade(np.zeros((3, 3, 3)), SensorSpec())
    with pytest.raises(ValueError):
        degrade(np.full((3, 3), 2.0), SensorSpec())
    with pytest.raises(ValueError):
        degrade(np.full((3, 3), np.nan), SensorSpec())
