import math
import re
import warnings

import numpy as np
import pytest
from skimage.registration import phase_cross_correlation

from phasemark.exceptions import ConfigError
from phasemark.patterngen import (
    DotLayout,
    GuidelineWarning,
    HpCodeSpec,
    MegarenaSpec,
    RenderPose,
    StampSpec,
    decode_id,
    encode_id,
    export_svg,
    layout_hpcode,
    layout_megarena,
    layout_stamp,
    layout_to_image,
    lattice_layout,
    render,
    view_center,
    view_pose,
)
from phasemark.sequencer import default_sequence


def test_megarena_coding_columns_follow_sequence():
    spec = MegarenaSpec(n=4, extent_codes=5)
    layout = layout_megarena(spec)
    assert layout.present.shape == (15, 15)
    xseq = default_sequence(4)
    assert "".join(map(str, xseq[:5])) == "00010"
    # a non-coding row: coding columns 2,5,8,11,14 are present iff the bit is 1
    row = layout.present[0]
    assert [bool(row[j]) for j in (2, 5, 8, 11, 14)] == [False, False, False, True, False]
    assert row[[0, 1, 3, 4, 6, 7, 9, 10, 12, 13]].all()


def test_megarena_always_absent_crossing_and_density():
    for n in (4, 6, 8):
        layout = layout_megarena(MegarenaSpec(n=n))
        p = layout.present
        assert not p[2::3, 2::3].any()
        assert p.mean() <= 8 / 9
    spec = MegarenaSpec(n=6)
    layout = layout_megarena(spec)
    xseq, yseq = spec.sequences()
    # rows: a coding row is empty off the crossings iff its y bit is 0
    for i in range(2, spec.cells, 3):
        row = layout.present[i]
        assert bool(row[0]) == bool(yseq[i // 3])


def test_megarena_spec_validation_and_determinism():
    with pytest.raises(ConfigError):
        MegarenaSpec(n=4, extent_codes=16)
    a = layout_megarena(MegarenaSpec(n=5)).present
    b = layout_megarena(MegarenaSpec(n=5)).present
    np.testing.assert_array_equal(a, b)
    spec = MegarenaSpec(n=8)
    assert spec.x_spec.taps != spec.y_spec.taps
    assert spec.min_visible_periods == 27


def test_hpcode_id_zone():
    zero = layout_hpcode(HpCodeSpec(20, marker_id=0))
    geom = zero.geometry
    assert all(zero.present[r, c] for r, c in geom.id_cells)
    five = layout_hpcode(HpCodeSpec(20, marker_id=5))
    bits = [int(not five.present[r, c]) for r, c in geom.id_cells]
    assert decode_id(bits) == 5
    with pytest.raises(ConfigError):
        layout_hpcode(HpCodeSpec(9, marker_id=1 << 12))


def test_id_codec():
    for cap in (3, 8, 12):
        for v in (0, 1, (1 << cap) - 1):
            bits = encode_id(v, cap)
            assert len(bits) == cap and decode_id(bits) == v
    assert encode_id(5, 4) == [0, 1, 0, 1]


def _full_raster(layout, ppp=6):
    return render(layout, RenderPose(0, 0, 0, ppp), (layout.cols + 2) * ppp, supersample=2)


@pytest.mark.parametrize("maker", [lambda: layout_hpcode(HpCodeSpec(17, 3)), lambda: layout_stamp(StampSpec(17, 1, 3))])
def test_small_marker_has_no_rotational_symmetry(maker):
    warnings.simplefilter("ignore", GuidelineWarning)
    layout = maker()
    img = _full_raster(layout)
    for q in (1, 2, 3):
        rotated = np.rot90(img, q)
        assert np.abs(rotated - img).max() > 0.5
    # the dot grid alone is also asymmetric
    for q in (1, 2, 3):
        assert not np.array_equal(np.rot90(layout.present, q), layout.present)


def test_stamp_interior():
    layout = layout_stamp(StampSpec(20, border_thickness=1))
    zone = layout.geometry.dot_zone
    rows, cols = np.nonzero(zone)
    assert (rows.max() - rows.min() + 1, cols.max() - cols.min() + 1) == (18, 18)
    assert zone.sum() == 18 * 18
    with pytest.raises(ConfigError):
        StampSpec(20, border_thickness=0)
    with pytest.raises(ConfigError):
        layout_stamp(StampSpec(9, border_thickness=2))


def test_small_marker_minimum_size():
    with pytest.raises(ConfigError):
        HpCodeSpec(8)
    with pytest.raises(ConfigError):
        StampSpec(8)


def test_empty_layout_renders_black():
    layout = DotLayout(np.zeros((10, 10), dtype=bool))
    assert render(layout, RenderPose(), 64).max() == 0.0


def test_mean_intensity_area_oracle():
    d = 0.5
    layout = lattice_layout(80, 80, dot_diameter_ratio=d, origin=(39.5, 39.5))
    img = render(layout, RenderPose(0.13, -0.27, 0.07, 10.0), 400)
    expected = math.pi / 4 * d * d
    assert abs(img.mean() / expected - 1) < 0.02


def test_mean_intensity_scales_with_density():
    layout = layout_megarena(MegarenaSpec(n=6))
    img = render(layout, view_pose(90.3, 80.6, 0.05, 10.0), 500)
    x, y = 90.3, 80.6
    half = 25
    window = layout.present[int(y - half) : int(y + half), int(x - half) : int(x + half)]
    expected = math.pi / 16 * window.mean()
    assert abs(img.mean() / expected - 1) < 0.02


def test_translation_moves_phase_correlation_peak():
    # a finite patch, so the envelope fixes the half-period shift
    layout = lattice_layout(12, 12, origin=(5.5, 5.5))
    a = render(layout, RenderPose(0.0, 0.0, 0.0, 10.0), 256)
    b = render(layout, RenderPose(0.5, 0.0, 0.0, 10.0), 256)
    shift, _, _ = phase_cross_correlation(a, b, upsample_factor=20)
    # shift that registers b onto a is (-dy, -dx)
    np.testing.assert_allclose(shift, [0.0, -5.0], atol=0.05)


def test_translation_equivariance():
    layout = layout_megarena(MegarenaSpec(n=6))
    ppp = 10.0
    a = render(layout, view_pose(60.0, 60.0, 0.0, ppp), 200)
    # moving the view by +0.7 period slides the image content 7 px towards -x
    b = render(layout, view_pose(60.7, 60.0, 0.0, ppp), 200)
    rms = np.sqrt(np.mean((b[:, :-7] - a[:, 7:]) ** 2))
    assert rms < 0.02


def test_view_pose_round_trip():
    for origin in ((0.0, 0.0), (8.0, 8.0)):
        pose = view_pose(12.25, 3.5, 0.4, 9.0, origin=origin)
        np.testing.assert_allclose(view_center(pose, origin), (12.25, 3.5), atol=1e-12)


def test_render_pose_guideline_warning():
    with pytest.warns(GuidelineWarning):
        RenderPose(pixels_per_period=4)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        RenderPose(pixels_per_period=10)
    with pytest.raises(ConfigError):
        RenderPose(pixels_per_period=0)


def test_render_rectangular_frame():
    img = render(lattice_layout(10), RenderPose(), (120, 80))
    assert img.shape == (80, 120)
    assert 0.0 <= img.min() and img.max() <= 1.0


def test_periodic_render_tiles():
    layout = layout_megarena(MegarenaSpec(n=4))
    L = layout.cols
    a = render(layout, view_pose(5.0, 5.0, 0.1, 10.0), 128, periodic=True)
    b = render(layout, view_pose(5.0 + L, 5.0 - L, 0.1, 10.0), 128, periodic=True)
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_svg_export(tmp_path):
    layout = layout_megarena(MegarenaSpec(n=4, extent_codes=10, period=0.01))
    path = tmp_path / "m.svg"
    export_svg(layout, path)
    text = path.read_text()
    assert text.count("<circle") == layout.dot_count
    assert re.search(r'width="0.3mm"', text)
    export_svg(layout, tmp_path / "m2.svg")
    assert (tmp_path / "m2.svg").read_bytes() == path.read_bytes()


def test_svg_empty_layout(tmp_path):
    path = tmp_path / "e.svg"
    export_svg(DotLayout(np.zeros((4, 4), dtype=bool)), path)
    text = path.read_text()
    assert text.startswith("<?xml") and text.rstrip().endswith("</svg>")
    assert "<circle" not in text


def test_layout_to_image_counts_dots():
    from scipy import ndimage

    layout = layout_stamp(StampSpec(12, marker_id=3))
    img = layout_to_image(layout, 10)
    inner = img.copy()
    # blobs strictly inside the border ring are the dots
    labels, count = ndimage.label(inner > 0.5)
    sizes = ndimage.sum(np.ones_like(inner), labels, range(1, count + 1))
    assert (sizes < 50).sum() == layout.dot_count
