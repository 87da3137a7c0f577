import math

import numpy as np
import pytest

from phasemark.decoder import (
    CodeWindows,
    DotSampleGrid,
    MegarenaDecoder,
    classify_dots,
    decode_megarena,
    extract_code,
    resolve_absolute,
    sample_dots,
)
from phasemark.exceptions import DecodeFailed, DegenerateClustering, FewerThanMinimumCells
from phasemark.imagecore import SensorSpec, degrade
from phasemark.phaseengine import analyze
from phasemark.sequencer import build_window_index

from conftest import angle_diff, render_megarena

POSE = (123.456, 78.901, 0.3)
SIZE = 512


def pattern_coords(x_px, y_px, pose, size=SIZE, ppp=10.0):
    """Invert the render model: pattern point (periods) seen at a pixel."""
    x, y, theta = pose
    c, s = math.cos(theta), math.sin(theta)
    cx = cy = (size - 1) / 2
    dx, dy = (np.asarray(x_px) - cx) / ppp, (np.asarray(y_px) - cy) / ppp
    return x + c * dx + s * dy, y - s * dx + c * dy


@pytest.fixture(scope="module")
def scene(megarena8):
    spec, layout = megarena8
    img = render_megarena(layout, *POSE)
    phase = analyze(img)
    grid = sample_dots(img, phase)
    return img, phase, grid


def truth_grid(grid, layout, pose=POSE, size=SIZE):
    px, py = pattern_coords(grid.x, grid.y, pose, size)
    j, i = np.rint(px).astype(int), np.rint(py).astype(int)
    return layout.present[i, j], np.hypot(px - j, py - i)


def test_samples_sit_on_dot_centers(scene, megarena8):
    _, _, grid = scene
    _, dist = truth_grid(grid, megarena8[1])
    # 0.2 px expressed in periods
    assert dist[grid.valid].max() < 0.02


def test_sample_levels(scene, megarena8):
    _, _, grid = scene
    truth, _ = truth_grid(grid, megarena8[1])
    values = grid.intensity[grid.valid]
    assert values[truth[grid.valid]].min() > 0.5
    assert values[~truth[grid.valid]].max() < 0.1


def test_one_period_shift_moves_grid_by_one_cell(megarena8, scene):
    _, layout = megarena8
    _, _, a = scene
    img = render_megarena(layout, POSE[0] + 1, POSE[1], POSE[2])
    b = sample_dots(img, analyze(img))

    def by_node(g):
        present = classify_dots(g).present
        return {
            (g.m0 + c, g.n0 + r): (present[r, c], g.intensity[r, c], g.x[r, c], g.y[r, c])
            for r, c in zip(*np.nonzero(g.valid))
        }

    na, nb = by_node(a), by_node(b)
    shared = [k for k in nb if (k[0] + 1, k[1]) in na and k in na]
    assert len(shared) > 1000
    for m, n in shared:
        pb, ib, xb, yb = nb[(m, n)]
        # a one-period step is not a whole number of pixels at this angle, so
        # anti-aliased dot edges differ slightly between the two renders
        assert pb == na[(m + 1, n)][0]
        assert ib == pytest.approx(na[(m + 1, n)][1], abs=0.02)
        assert (xb, yb) == pytest.approx(na[(m, n)][2:], abs=0.01)


def test_too_few_visible_periods(megarena8):
    _, layout = megarena8
    img = render_megarena(layout, 60.3, 60.7, 0.0, size=200)
    with pytest.raises(FewerThanMinimumCells):
        sample_dots(img, analyze(img), min_cells=27)
    with pytest.raises(FewerThanMinimumCells):
        MegarenaDecoder().estimate(img)


def test_classification_exact(scene, megarena8):
    _, _, grid = scene
    truth, _ = truth_grid(grid, megarena8[1])
    cls = classify_dots(grid)
    assert np.array_equal(cls.present[grid.valid], truth[grid.valid])
    assert cls.confidence > 0.95


def test_classification_under_vignetting(scene, megarena8):
    img, phase, _ = scene
    ramp = np.linspace(0.5, 1.0, SIZE)
    vignetted = img * ramp[None, :] * ramp[:, None] ** 0.5
    grid = sample_dots(vignetted, phase)
    truth, _ = truth_grid(grid, megarena8[1])
    cls = classify_dots(grid)
    assert np.array_equal(cls.present[grid.valid], truth[grid.valid])


def _synthetic_grid(values):
    valid = np.isfinite(values)
    r, c = np.mgrid[0 : values.shape[0], 0 : values.shape[1]].astype(float)
    return DotSampleGrid(0, 0, values, c * 10, r * 10, valid, 10.0)


def test_flat_block_inherits_threshold():
    rng = np.random.default_rng(5)
    truth = rng.random((30, 30)) < 0.7
    truth[8:22, 8:22] = True
    grid = _synthetic_grid(np.where(truth, 0.8, 0.05) + rng.normal(0, 0.01, truth.shape))
    cls = classify_dots(grid)
    assert cls.degenerate_windows > 0
    assert np.array_equal(cls.present, truth)


def test_flat_grid_is_degenerate():
    with pytest.raises(DegenerateClustering):
        classify_dots(_synthetic_grid(np.full((20, 20), 0.6)))


def _bit_truth(windows, grid, spec, pose=POSE, size=SIZE):
    """Expected bit of every read coding line, from the pattern coordinate of one node on it."""
    xseq, yseq = spec.sequences()
    expected = {}
    for bits, lines, axis in ((windows.col_bits, windows.col_lines, 0), (windows.row_bits, windows.row_lines, 1)):
        for bit, line in zip(bits, lines):
            if axis == 0:
                col = line - grid.m0
                rows = np.flatnonzero(grid.valid[:, col])
                px, py = pattern_coords(grid.x[rows[0], col], grid.y[rows[0], col], pose, size)
            else:
                row = line - grid.n0
                cols = np.flatnonzero(grid.valid[row])
                px, py = pattern_coords(grid.x[row, cols[0]], grid.y[row, cols[0]], pose, size)
            j, i = int(np.rint(px)), int(np.rint(py))
            k = j if axis == 0 else i
            assert k % 3 == 2
            expected[(axis, line)] = (bit, int((xseq if axis == 0 else yseq)[k // 3]))
    return expected


def test_extracted_bits_match_sequence(scene, megarena8):
    spec, _ = megarena8
    _, _, grid = scene
    windows = extract_code(classify_dots(grid), grid)
    pairs = _bit_truth(windows, grid, spec)
    assert len(windows.col_bits) >= spec.n and len(windows.row_bits) >= spec.n
    assert all(bit == want for bit, want in pairs.values())
    assert windows.intersections_absent == 1.0


def test_occlusion_gives_unknowns_not_errors(scene, megarena8):
    spec, _ = megarena8
    img, phase, _ = scene
    yy, xx = np.mgrid[0:SIZE, 0:SIZE]
    radius = math.sqrt(0.1 * SIZE * SIZE / math.pi)
    occluded = np.where(np.hypot(xx - 180, yy - 300) < radius, 0.0, img)
    grid = sample_dots(occluded, phase)
    windows = extract_code(classify_dots(grid), grid)
    pairs = _bit_truth(windows, grid, spec)
    known = [(bit, want) for bit, want in pairs.values() if bit is not None]
    assert len(known) >= 2 * spec.n
    assert all(bit == want for bit, want in known)
    pose = MegarenaDecoder(spec).estimate(occluded)[0]
    assert (pose.x, pose.y) == pytest.approx(POSE[:2], abs=0.01)


def test_quarter_turn_swaps_code_axes(scene):
    img, _, grid = scene
    ref = extract_code(classify_dots(grid), grid)
    turned = np.rot90(img).copy()
    tg = sample_dots(turned, analyze(turned))
    rot = extract_code(classify_dots(tg), tg)
    assert rot.col_bits in (ref.row_bits, ref.row_bits[::-1])
    assert rot.row_bits in (ref.col_bits, ref.col_bits[::-1])


def test_full_pipeline_example(scene, megarena8):
    spec, _ = megarena8
    img, _, _ = scene
    pose, phase = MegarenaDecoder(spec).estimate(img)
    assert pose.x == pytest.approx(POSE[0], abs=0.01)
    assert pose.y == pytest.approx(POSE[1], abs=0.01)
    assert abs(angle_diff(pose.theta, POSE[2])) < 2e-3
    assert pose.quadrant == 0
    assert (pose.code_x, pose.code_y) == (41, 26)
    assert 0 <= pose.theta < 2 * math.pi


@pytest.mark.parametrize("k", [1, 2, 3])
def test_exact_quarter_turn_of_scene(scene, megarena8, k):
    spec, _ = megarena8
    img, _, _ = scene
    ref = MegarenaDecoder(spec).estimate(img)[0]
    # rot90 with k=-1 turns the image by +pi/2 in the y-down frame
    pose = MegarenaDecoder(spec).estimate(np.rot90(img, -k).copy())[0]
    assert (pose.x, pose.y) == pytest.approx((ref.x, ref.y), abs=1e-3)
    assert angle_diff(pose.theta, ref.theta + k * math.pi / 2) == pytest.approx(0, abs=1e-4)


def test_all_unknown_windows_fail(scene, megarena8):
    spec, _ = megarena8
    _, phase, _ = scene
    seq_x, seq_y = spec.sequences()
    windows = CodeWindows([None] * 12, list(range(2, 36, 3)), [None] * 12, list(range(2, 36, 3)), 2, 2)
    with pytest.raises(DecodeFailed):
        resolve_absolute(
            windows, build_window_index(seq_x, spec.n), build_window_index(seq_y, spec.n), phase, spec
        )


def test_present_crossings_fail(scene, megarena8):
    spec, _ = megarena8
    _, phase, _ = scene
    seq_x, seq_y = spec.sequences()
    windows = CodeWindows([1] * 12, list(range(12)), [1] * 12, list(range(12)), 2, 2, intersections_absent=0.5)
    with pytest.raises(DecodeFailed):
        resolve_absolute(
            windows, build_window_index(seq_x, spec.n), build_window_index(seq_y, spec.n), phase, spec
        )


def test_continuity_across_period_boundary(megarena8):
    spec, layout = megarena8
    decoder = MegarenaDecoder(spec)
    p = 200
    xs = []
    for dx in np.arange(-0.4, 0.41, 0.1):
        xs.append(decoder.estimate(render_megarena(layout, p + dx, 150.37, 0.11))[0].x)
    steps = np.diff(xs)
    assert np.all(steps > 0)
    assert np.allclose(steps, 0.1, atol=0.01)


def test_noisy_blurred_decodes(megarena8):
    spec, layout = megarena8
    decoder = MegarenaDecoder(spec)
    rng = np.random.default_rng(21)
    sensor = SensorSpec(bit_depth=16, gaussian_noise_sigma=0.02, blur_sigma=0.5)
    for k in range(8):
        x, y = rng.uniform(30, 730, size=2)
        theta = rng.uniform(0, 2 * math.pi)
        img = degrade(render_megarena(layout, x, y, theta), sensor, seed=k)
        pose = decoder.estimate(img)[0]
        assert (pose.x, pose.y) == pytest.approx((x, y), abs=0.02)
        assert abs(angle_diff(pose.theta, theta)) < 5e-3


def test_decode_convenience_wrapper(scene, megarena8):
    img, _, _ = scene
    pose = decode_megarena(img, megarena8[0])
    assert (pose.x, pose.y) == pytest.approx(POSE[:2], abs=0.01)


def test_physical_coordinates(megarena8):
    from phasemark.patterngen import MegarenaSpec, layout_megarena

    spec = MegarenaSpec(n=8, period=0.25)
    img = render_megarena(layout_megarena(spec), *POSE)
    pose = MegarenaDecoder(spec).estimate(img)[0]
    assert pose.x_physical == pytest.approx(POSE[0] * 0.25, abs=0.0025)
    assert pose.y_physical == pytest.approx(POSE[1] * 0.25, abs=0.0025)
