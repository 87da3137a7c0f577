"""Detection and pose of small markers (HP codes and stamps).

HP codes are found through their three corner finder squares, scanned as
1:1:3:1:1 run-length signatures; stamps through their solid square border.
Either way the detector delivers four corners that fix the marker center to
well within half a period. The dot lattice inside the marker then gives the
fine position through :func:`phaseengine.analyze`, and the orientation glyph
of missing dots resolves the quarter-turn ambiguity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Optional

import numpy as np
from scipy import ndimage
from skimage.filters import threshold_otsu
from skimage.measure import approximate_polygon, find_contours

from ._validation import check_image
from .decoder import MARGIN_CONFIDENT, two_means_1d
from .exceptions import FitDegenerate, GlyphAmbiguous, NoLatticeFound
from .patterngen import FINDER_MODULE, MarkerGeometry, decode_id, hpcode_geometry, rotate_cell, stamp_geometry
from .phaseengine import TWO_PI, AnalysisSettings, PhaseResult, _timed, analyze, centered_hann

RUN_TOLERANCE = 0.4
RUN_PATTERN = np.array([1.0, 1.0, 3.0, 1.0, 1.0])
FINDER_SHAPE_AGREEMENT = 0.8


@dataclass(frozen=True)
class FinderPattern:
    """A finder square candidate; ``center`` is ``(x, y)`` in pixels."""

    center: tuple
    module_size: float
    score: float


@dataclass
class MarkerRegion:
    """Four corners of a detected marker, clockwise in the y-down image.

    For HP codes the corners are the centers of the TL, TR and BL finder
    squares plus the completed fourth corner, starting at TL. For stamps
    they are the outer border corners, starting from the corner nearest the
    image origin (the true origin corner is fixed later by the glyph).
    """

    corners: np.ndarray
    kind: str
    marker_id: Optional[int] = None
    score: float = 1.0

    def __post_init__(self):
        self.corners = np.asarray(self.corners, dtype=np.float64).reshape(4, 2)

    @property
    def center(self) -> np.ndarray:
        return self.corners.mean(axis=0)

    @property
    def side_px(self) -> float:
        c = self.corners
        return float(np.mean(np.linalg.norm(c - np.roll(c, -1, axis=0), axis=1)))


@dataclass
class SmallMarkerPose:
    """Pose of one small marker inside the image.

    ``center_px`` is the marker center in pixels; ``tx``/``ty`` express the
    same point in periods relative to the image center; ``theta`` in
    [0, 2*pi) rotates marker axes onto image axes.
    """

    kind: str
    center_px: tuple
    tx: float
    ty: float
    theta: float
    period_px: float
    marker_id: int
    quadrant: int
    confidence: float
    origin_px: tuple = ()
    rms_residual: float = 0.0
    phase: Optional[PhaseResult] = field(default=None, repr=False)
    region: Optional[MarkerRegion] = field(default=None, repr=False)


# -- finder patterns ---------------------------------------------------------


def _binarize(img: np.ndarray):
    spread = float(img.max() - img.min())
    if spread <= 0.1:
        return None
    return img > threshold_otsu(img)


def _runs(line: np.ndarray):
    """Start indices, lengths and values of the runs of a boolean line."""
    change = np.flatnonzero(np.diff(line.astype(np.int8))) + 1
    starts = np.concatenate([[0], change])
    lengths = np.diff(np.concatenate([starts, [line.size]]))
    return starts, lengths, line[starts]


def _scan(binary: np.ndarray):
    """Centers ``(along, across, module, score)`` of 1:1:3:1:1 bright runs."""
    found = []
    for r in range(binary.shape[0]):
        starts, lengths, values = _runs(binary[r])
        if lengths.size < 5:
            continue
        win = np.lib.stride_tricks.sliding_window_view(lengths, 5).astype(np.float64)
        bright_first = values[: win.shape[0]]
        unit = win.sum(axis=1) / 7.0
        dev = np.abs(win / unit[:, None] - RUN_PATTERN[None, :]) / RUN_PATTERN[None, :]
        ok = bright_first & np.all(dev <= RUN_TOLERANCE, axis=1) & (unit > 1.0)
        # the outer bright runs must be bounded by dark on both sides
        for k in np.flatnonzero(ok):
            if k == 0 or k + 5 >= lengths.size:
                continue
            mid = starts[k + 2] + 0.5 * (lengths[k + 2] - 1)
            found.append((mid, r, unit[k], 1.0 - float(dev[k].mean()) / RUN_TOLERANCE))
    return found


def _cluster(points: np.ndarray, radius: np.ndarray):
    """Greedy clustering of rows ``(x, y, module, score)``."""
    order = np.argsort(-points[:, 3]) if len(points) else []
    used = np.zeros(len(points), dtype=bool)
    clusters = []
    for i in order:
        if used[i]:
            continue
        d = np.hypot(points[:, 0] - points[i, 0], points[:, 1] - points[i, 1])
        members = (~used) & (d <= radius[i])
        used |= members
        clusters.append(points[members])
    return clusters


def _refine_center(img, x, y, module):
    r = 1.5 * module
    x0, x1 = int(math.floor(x - r)), int(math.ceil(x + r))
    y0, y1 = int(math.floor(y - r)), int(math.ceil(y + r))
    h, w = img.shape
    if x0 < 0 or y0 < 0 or x1 >= w or y1 >= h:
        return x, y
    patch = img[y0 : y1 + 1, x0 : x1 + 1]
    yy, xx = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    # the central bright square inside a dark ring; weigh the ring out
    weight = np.clip(patch - patch.min(), 0, None)
    inside = ((xx - x) ** 2 + (yy - y) ** 2) <= r * r
    weight = weight * inside
    total = weight.sum()
    if not total > 0:
        return x, y
    return float((weight * xx).sum() / total), float((weight * yy).sum() / total)


def _finder_shape_ok(img, x, y, module, threshold) -> bool:
    """Rotation-free check of the nested squares around a candidate center.

    Scan lines through a square turned by ``phi`` read the module as
    ``module / cos(phi)``. A disc of one scanned module therefore always fits
    inside the bright central square, and for some ``cos(phi)`` in
    ``[0.71, 1]`` a circle of ``2.3 * cos(phi)`` scanned modules runs inside
    the dark ring.
    """
    k = np.arange(24) * (TWO_PI / 24)
    rr = np.linspace(0.0, module, 4)[:, None]
    disc_x = (x + rr * np.cos(k[None, ::3])).ravel()
    disc_y = (y + rr * np.sin(k[None, ::3])).ravel()
    disc = ndimage.map_coordinates(img, [disc_y, disc_x], order=1, mode="nearest")
    if np.mean(disc > threshold) < FINDER_SHAPE_AGREEMENT:
        return False
    for scale in np.linspace(math.sqrt(0.5), 1.0, 6):
        r = 2.3 * scale * module
        ring = ndimage.map_coordinates(img, [y + r * np.sin(k), x + r * np.cos(k)], order=1, mode="nearest")
        if np.mean(ring <= threshold) >= FINDER_SHAPE_AGREEMENT:
            return True
    return False


def detect_finder_patterns(img) -> list:
    """Finder squares located by row and column run-length scans.

    A row candidate and a column candidate agreeing within 1.5 modules make
    one pattern, whose center is refined by the intensity centroid of the
    central bright square and must then show the bright center and dark
    ring of a finder.
    """
    img = check_image(img)
    binary = _binarize(img)
    if binary is None:
        return []
    threshold = threshold_otsu(img)
    horiz = np.array(_scan(binary), dtype=np.float64).reshape(-1, 4)
    vert = np.array(_scan(binary.T), dtype=np.float64).reshape(-1, 4)
    if not len(horiz) or not len(vert):
        return []
    vert = vert[:, [1, 0, 2, 3]]  # back to (x, y, ...)
    # a finder spans 7 modules, so everything within half of that is one pattern
    h_clusters = _cluster(horiz, 3.5 * horiz[:, 2])
    v_clusters = _cluster(vert, 3.5 * vert[:, 2])
    v_summary = np.array([[c[:, 0].mean(), c[:, 1].mean(), c[:, 2].mean(), c[:, 3].mean(), len(c)] for c in v_clusters])
    patterns = []
    taken = np.zeros(len(v_summary), dtype=bool)
    for hc in h_clusters:
        # the row scans hit the center column, the column scans the center row
        hx, hy = np.median(hc[:, 0]), hc[:, 1].mean()
        hm, hs = hc[:, 2].mean(), hc[:, 3].mean()
        if len(hc) < 2:
            continue
        d = np.hypot(v_summary[:, 0] - hx, v_summary[:, 1] - hy)
        d[taken] = np.inf
        j = int(np.argmin(d))
        if d[j] > 1.5 * hm or v_summary[j, 4] < 2:
            continue
        vm = v_summary[j, 2]
        if not 0.7 <= hm / vm <= 1.0 / 0.7:
            continue
        taken[j] = True
        x0 = float(v_summary[j, 0])
        y0 = float(np.median(v_clusters[j][:, 1]))
        module = 0.5 * (hm + vm)
        x, y = _refine_center(img, 0.5 * (hx + x0), 0.5 * (hy + y0), module)
        if not _finder_shape_ok(img, x, y, module, threshold):
            continue
        score = float(np.clip(0.5 * (hs + v_summary[j, 3]), 0.0, 1.0))
        patterns.append(FinderPattern((x, y), float(module), score))
    patterns.sort(key=lambda p: -p.score)
    return patterns


def group_markers(
    patterns: list,
    periods_across: Optional[int] = None,
    module_tolerance: float = 0.2,
    angle_tolerance: float = 0.15,
) -> list:
    """Group finder patterns into HP code regions.

    A triad qualifies when its module sizes agree within 20%, one vertex
    sees the other two at a right angle (within 0.15 rad) with legs equal
    within 20%, and, if ``periods_across`` is given, the legs match the
    finder spacing of that marker size. Triads are taken greedily by
    geometric quality, each pattern at most once.
    """
    cands = []
    pts = [np.asarray(p.center, dtype=np.float64) for p in patterns]
    for tri in combinations(range(len(patterns)), 3):
        mods = [patterns[k].module_size for k in tri]
        if max(mods) > (1 + module_tolerance) * min(mods):
            continue
        module = float(np.mean(mods))
        for a in tri:
            b, c = [k for k in tri if k != a]
            ab, ac = pts[b] - pts[a], pts[c] - pts[a]
            lb, lc = np.linalg.norm(ab), np.linalg.norm(ac)
            if min(lb, lc) < 7 * module:
                continue
            if max(lb, lc) > (1 + module_tolerance) * min(lb, lc):
                continue
            cross = ab[0] * ac[1] - ab[1] * ac[0]
            angle = math.atan2(abs(cross), float(ab @ ac))
            if abs(angle - math.pi / 2) > angle_tolerance:
                continue
            if periods_across is not None:
                # scan-line runs through a square rotated by phi read module / cos(phi)
                phi = math.atan2(ab[1], ab[0])
                phi = (phi + math.pi / 4) % (math.pi / 2) - math.pi / 4
                expected = (periods_across - 3) / FINDER_MODULE * module * math.cos(phi)
                if abs(0.5 * (lb + lc) / expected - 1) > module_tolerance:
                    continue
            tr, bl = (b, c) if cross > 0 else (c, b)
            quality = abs(angle - math.pi / 2) + abs(lb - lc) / max(lb, lc)
            cands.append((quality, a, tr, bl))
            break
    cands.sort()
    used = set()
    regions = []
    for quality, tl, tr, bl in cands:
        if {tl, tr, bl} & used:
            continue
        used |= {tl, tr, bl}
        br = pts[tr] + pts[bl] - pts[tl]
        corners = np.array([pts[tl], pts[tr], br, pts[bl]])
        score = float(np.mean([patterns[k].score for k in (tl, tr, bl)]))
        regions.append(MarkerRegion(corners, "hpcode", score=score))
    return regions


# -- stamp quadrilaterals ----------------------------------------------------


def _shoelace(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _line_fit(points: np.ndarray):
    """Total least-squares line ``(point, direction)``."""
    mean = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - mean, full_matrices=False)
    return mean, vt[0]


def _intersect(l1, l2):
    (p, d), (q, e) = l1, l2
    mat = np.array([d, -e]).T
    if abs(np.linalg.det(mat)) < 1e-9:
        return None
    s, _ = np.linalg.solve(mat, q - p)
    return p + s * d


def _refine_quad(contour: np.ndarray, vertices: np.ndarray) -> Optional[np.ndarray]:
    """Corners from lines fitted to the contour between simplified vertices."""
    n = len(contour)
    idx = [int(np.argmin(np.hypot(*(contour - v).T))) for v in vertices]
    lines = []
    for k in range(4):
        i0, i1 = idx[k], idx[(k + 1) % 4]
        seg = contour[i0 : i1 + 1] if i1 > i0 else np.concatenate([contour[i0:], contour[: i1 + 1]])
        trim = max(1, len(seg) // 8)
        seg = seg[trim:-trim] if len(seg) > 2 * trim + 2 else seg
        if len(seg) < 2 or n < 8:
            return None
        lines.append(_line_fit(seg))
    corners = []
    for k in range(4):
        p = _intersect(lines[k - 1], lines[k])
        if p is None:
            return None
        corners.append(p)
    return np.array(corners)


def _quad_vertices(contour: np.ndarray, tolerance: float) -> Optional[np.ndarray]:
    """Douglas-Peucker simplification of a closed contour to four vertices.

    The closed contour is restarted at its point farthest from the centroid,
    which is a corner of any convex quadrilateral, so no edge gets split at
    the seam. Returns None unless exactly four vertices remain.
    """
    pts = contour[:-1] if np.allclose(contour[0], contour[-1]) else contour
    if len(pts) < 8:
        return None
    start = int(np.argmax(np.hypot(*(pts - pts.mean(axis=0)).T)))
    ring = np.roll(pts, -start, axis=0)
    poly = approximate_polygon(np.vstack([ring, ring[:1]]), tolerance=tolerance)
    if len(poly) != 5:  # the closed polygon repeats its first vertex
        return None
    return poly[:4]


def _order_clockwise(corners: np.ndarray) -> np.ndarray:
    if _shoelace(corners) < 0:
        corners = corners[::-1]
    start = int(np.argmin(corners.sum(axis=1)))
    return np.roll(corners, -start, axis=0)


def detect_quadrilateral(img, min_side_px: float = 40.0, min_interior_blobs: int = 16) -> list:
    """Stamp borders: bright convex quadrilaterals enclosing a dot lattice.

    Otsu binarization, connected components (those within 2 px of the frame
    edge are dropped), hole filling, sub-pixel border tracing, Douglas-Peucker simplification at 2% of the perimeter, then
    convexity, solidity (> 0.9) and aspect ratio ([0.8, 1.25]) checks.
    """
    img = check_image(img)
    binary = _binarize(img)
    if binary is None:
        return []
    level = threshold_otsu(img)
    labels, count = ndimage.label(binary, structure=np.ones((3, 3)))
    regions = []
    for k, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        hgt, wid = sl[0].stop - sl[0].start, sl[1].stop - sl[1].start
        if min(hgt, wid) < min_side_px:
            continue
        # markers must lie wholly inside the frame
        if sl[0].start < 2 or sl[1].start < 2 or sl[0].stop > img.shape[0] - 2 or sl[1].stop > img.shape[1] - 2:
            continue
        y0, x0 = max(sl[0].start - 3, 0), max(sl[1].start - 3, 0)
        y1, x1 = min(sl[0].stop + 3, img.shape[0]), min(sl[1].stop + 3, img.shape[1])
        comp = labels[y0:y1, x0:x1] == k
        filled = ndimage.binary_fill_holes(comp)
        holes = filled & ~comp
        inner = binary[y0:y1, x0:x1] & holes
        _, n_blobs = ndimage.label(inner)
        if n_blobs < min_interior_blobs:
            continue
        # keep only the outer edge: flatten the inside, zero the outside
        crop = img[y0:y1, x0:x1].copy()
        outside = ~ndimage.binary_dilation(filled, iterations=2)
        core = ndimage.binary_erosion(filled, iterations=3)
        crop[outside] = 0.0
        crop[core] = 1.0
        contours = find_contours(np.pad(crop, 1), level)
        if not contours:
            continue
        contour = max(contours, key=len)[:, ::-1] - 1.0  # (x, y)
        perimeter = float(np.sum(np.hypot(*np.diff(contour, axis=0).T)))
        vertices = _quad_vertices(contour, 0.02 * perimeter)
        if vertices is None:
            continue
        area_poly = abs(_shoelace(vertices))
        if not area_poly > 0:
            continue
        solidity = float(filled.sum()) / area_poly
        if not 0.9 < solidity < 1.1:
            continue
        edges = vertices - np.roll(vertices, 1, axis=0)
        crosses = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
        if not (np.all(crosses > 0) or np.all(crosses < 0)):
            continue
        sides = np.linalg.norm(edges, axis=1)
        if not 0.8 <= sides.max() / sides.min() <= 1.25:
            continue
        corners = _refine_quad(contour, vertices)
        if corners is None:
            continue
        corners = _order_clockwise(corners + np.array([x0, y0]))
        regions.append(MarkerRegion(corners, "stamp", score=float(min(solidity, 1 / solidity))))
    return regions


# -- small-marker pose -------------------------------------------------------


def _geometry(kind: str, periods_across: int, border_thickness: int = 1) -> MarkerGeometry:
    if kind == "hpcode":
        return hpcode_geometry(periods_across)
    if kind == "stamp":
        return stamp_geometry(periods_across, border_thickness)
    raise ValueError(f"unknown marker kind {kind!r}")


def _outline_scale(kind: str, periods_across: int) -> float:
    """Ratio of the marker outline half-diagonal to the region half-diagonal."""
    if kind == "hpcode":
        return periods_across / (periods_across - 3.0)
    return 1.0


def _region_period(region: MarkerRegion, periods_across: int) -> float:
    span = periods_across - 3.0 if region.kind == "hpcode" else float(periods_across)
    return region.side_px / span


def _cell_to_lattice(q: int, di, dj):
    """Lattice offsets ``(dm, dn)`` of a layout offset (rows ``di``, cols ``dj``)."""
    if q == 0:
        return dj, di
    if q == 1:
        return -di, dj
    if q == 2:
        return -dj, -di
    return di, -dj


def _lattice_to_cell(q: int, dm, dn):
    """Inverse of :func:`_cell_to_lattice`: layout offsets ``(di, dj)``."""
    if q == 0:
        return dn, dm
    if q == 1:
        return -dm, dn
    if q == 2:
        return -dn, -dm
    return dm, -dn


class _LatticeFitWeight:
    """Fit weight keeping only pixels surrounded by ordinary lattice cells.

    Finder squares, the glyph, the id zone and everything outside the dot
    zone perturb the band-passed phase within about a period; pixels whose
    nearest cell lies within ``exclusion`` cells of such a feature get zero
    weight.
    """

    def __init__(self, geometry: MarkerGeometry, phase: PhaseResult, q: int, m_c: float, n_c: float, exclusion: int):
        size = geometry.periods_across
        ordinary = geometry.dot_zone.copy()
        for r, c in tuple(geometry.glyph_cells) + tuple(geometry.id_cells):
            ordinary[r, c] = False
        if exclusion > 0:
            box = np.ones((2 * exclusion + 1,) * 2, dtype=bool)
            ordinary = ndimage.binary_erosion(ordinary, box, border_value=0)
        self.usable = ordinary
        self.phase, self.q, self.m_c, self.n_c = phase, q, m_c, n_c
        self.half = (size - 1) / 2.0

    def __call__(self, x0: int, y0: int, shape) -> np.ndarray:
        h, w = shape
        ys, xs = np.mgrid[y0 : y0 + h, x0 : x0 + w].astype(np.float64)
        m, n = self.phase.pixel_to_lattice(xs, ys)
        di, dj = _lattice_to_cell(self.q, m - self.m_c, n - self.n_c)
        i = np.rint(self.half + di).astype(int)
        j = np.rint(self.half + dj).astype(int)
        size = self.usable.shape[0]
        inside = (i >= 0) & (i < size) & (j >= 0) & (j < size)
        out = np.zeros(shape, dtype=np.float64)
        out[inside] = self.usable[i[inside], j[inside]]
        return out


def analyze_region(
    img,
    region: MarkerRegion,
    periods_across: int,
    settings=None,
    timings=None,
    center=None,
    fit_weight=None,
) -> PhaseResult:
    """Phase analysis of the apodized crop around one marker, in image pixels.

    The Hann window covers the marker outline plus one period and is
    centered on ``center`` (default: the region center) at sub-pixel
    precision, so that it moves with the marker. ``fit_weight`` is a
    callable ``(x0, y0, shape) -> weights`` evaluated on the crop.
    """
    settings = settings or AnalysisSettings(apodize=True)
    period = _region_period(region, periods_across)
    center = region.center if center is None else np.asarray(center, dtype=float)
    scale = _outline_scale(region.kind, periods_across)
    outline = region.center + (region.corners - region.center) * scale
    half = np.abs(outline - center).max(axis=0) + period
    lo = np.floor(center - half).astype(int)
    hi = np.ceil(center + half).astype(int)
    h, w = img.shape
    x0, y0 = max(lo[0], 0), max(lo[1], 0)
    x1, y1 = min(hi[0], w - 1), min(hi[1], h - 1)
    crop = img[y0 : y1 + 1, x0 : x1 + 1]
    if min(crop.shape) < 32:
        raise NoLatticeFound(f"marker crop of {crop.shape[1]}x{crop.shape[0]} px is too small")
    if settings.period_range is None:
        settings = replace(settings, period_range=(0.75 * period, 1.33 * period))
    window = None
    if settings.apodize:
        window = centered_hann(crop.shape, (center[0] - x0, center[1] - y0), half)
    weight = None if fit_weight is None else fit_weight(x0, y0, crop.shape)
    phase = analyze(crop, settings, timings, window=window, fit_weight=weight)
    return phase.shifted(x0, y0, shape=img.shape)


def _snap_center(phase: PhaseResult, region: MarkerRegion, periods_across: int):
    """Lattice coordinates of the marker center nearest to the region center."""
    half = (periods_across - 1) / 2.0
    frac = half - math.floor(half)
    mc, nc = phase.pixel_to_lattice(region.center[0], region.center[1])
    return round(float(mc) - frac) + frac, round(float(nc) - frac) + frac


def _sample_cells(img, phase, q, m_c, n_c, cells, half):
    cells = np.asarray(cells, dtype=np.float64).reshape(-1, 2)
    dm, dn = _cell_to_lattice(q, cells[:, 0] - half, cells[:, 1] - half)
    x, y = phase.lattice_to_pixel(m_c + dm, n_c + dn)
    return _sample(img, x, y)


def _resolve_glyph(img, phase, geometry: MarkerGeometry, m_c, n_c):
    """Quarter turn matching the orientation glyph, plus the dot threshold."""
    size = geometry.periods_across
    half = (size - 1) / 2.0
    id_set = set(geometry.id_cells)
    cells = [tuple(map(int, c)) for c in np.argwhere(geometry.dot_zone) if tuple(map(int, c)) not in id_set]
    index = {c: k for k, c in enumerate(cells)}
    values = [_sample_cells(img, phase, q, m_c, n_c, cells, half) for q in range(4)]
    # the sampled cell set is the same for every q; threshold it once
    lo, hi = two_means_1d(np.sort(values[0])[None, :])
    threshold = 0.5 * float(lo[0] + hi[0])
    separation = float(hi[0] - lo[0])
    if not separation > 0.05:
        raise GlyphAmbiguous("no dot contrast inside the marker region: 0 quarter turns match the orientation glyph")
    glyph = [tuple(g) for g in geometry.glyph_cells]
    matches = []
    for q in range(4):
        present = values[q] > threshold
        ok = all(not present[index[g]] for g in glyph)
        for turn in (1, 2, 3):
            ok = ok and all(present[index[rotate_cell(g, turn, size)]] for g in glyph)
        if ok:
            matches.append(q)
    if len(matches) != 1:
        raise GlyphAmbiguous(f"{len(matches)} quarter turns match the orientation glyph")
    q = matches[0]
    expected = np.ones(len(cells), dtype=bool)
    for g in glyph:
        expected[index[g]] = False
    margins = np.abs(values[q] - threshold) / separation
    confidence = float(np.mean(((values[q] > threshold) == expected) & (margins >= MARGIN_CONFIDENT)))
    return q, threshold, confidence


def estimate_small_marker(
    img,
    region: MarkerRegion,
    periods_across: int,
    border_thickness: int = 1,
    settings: Optional[AnalysisSettings] = None,
    timings: Optional[dict] = None,
    exclusion: int = 2,
) -> SmallMarkerPose:
    """Fine pose, orientation and id of one detected marker.

    A first phase analysis snaps the region center onto the lattice and
    tests each quarter turn against the orientation glyph; exactly one must
    fit. A second analysis, with the window re-centered on the marker and
    the fit restricted to plain lattice cells (at least ``exclusion`` cells
    away from finders, glyph, id zone and marker edge), gives the pose.
    Markers too small to leave enough plain cells fall back to a narrower
    exclusion.

    Raises
    ------
    GlyphAmbiguous
        When zero or several quarter turns match the glyph.
    """
    img = check_image(img, min_size=32)
    size = periods_across
    geometry = _geometry(region.kind, size, border_thickness)
    half = (size - 1) / 2.0

    coarse = analyze_region(img, region, size, settings, timings)
    with _timed(timings, "decode"):
        m_c, n_c = _snap_center(coarse, region, size)
        q, threshold, confidence = _resolve_glyph(img, coarse, geometry, m_c, n_c)
        center = np.array(coarse.lattice_to_pixel(m_c, n_c), dtype=float)
    for margin in range(max(int(exclusion), 0), -1, -1):
        weight = _LatticeFitWeight(geometry, coarse, q, m_c, n_c, margin)
        try:
            phase = analyze_region(img, region, size, settings, timings, center=center, fit_weight=weight)
            break
        except FitDegenerate:
            if margin == 0:
                raise

    with _timed(timings, "decode"):
        m_c, n_c = _snap_center(phase, region, size)
        id_values = _sample_cells(img, phase, q, m_c, n_c, geometry.id_cells, half)
        marker_id = decode_id(int(v <= threshold) for v in id_values)
        cx, cy = phase.lattice_to_pixel(m_c, n_c)
        dm0, dn0 = _cell_to_lattice(q, -half, -half)
        ox, oy = phase.lattice_to_pixel(m_c + dm0, n_c + dn0)
        h, w = img.shape
        period = phase.period_px
        theta = (phase.orientation + q * math.pi / 2) % TWO_PI
    return SmallMarkerPose(
        kind=region.kind,
        center_px=(float(cx), float(cy)),
        tx=(float(cx) - (w - 1) / 2) / period,
        ty=(float(cy) - (h - 1) / 2) / period,
        theta=float(theta),
        period_px=float(period),
        marker_id=int(marker_id),
        quadrant=q,
        confidence=confidence,
        origin_px=(float(ox), float(oy)),
        rms_residual=max(phase.u_plane.rms_residual, phase.v_plane.rms_residual),
        phase=phase,
        region=region,
    )


def _sample(img, x, y):
    ox, oy = np.meshgrid([-0.5, 0.0, 0.5], [-0.5, 0.0, 0.5])
    px = np.asarray(x, dtype=float).ravel()[:, None] + ox.ravel()[None, :]
    py = np.asarray(y, dtype=float).ravel()[:, None] + oy.ravel()[None, :]
    vals = ndimage.map_coordinates(img, [py.ravel(), px.ravel()], order=1, mode="constant", cval=0.0)
    return vals.reshape(px.shape).mean(axis=1)


def detect_markers(img, kind: str = "hpcode", periods_across: Optional[int] = None) -> list:
    """Regions of all markers of one kind found in ``img``."""
    if kind == "hpcode":
        return group_markers(detect_finder_patterns(img), periods_across)
    if kind == "stamp":
        return detect_quadrilateral(img)
    raise ValueError(f"unknown marker kind {kind!r}")
