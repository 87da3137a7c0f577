"""Absolute decoding of Megarena views.

The phase planes give every lattice node to sub-pixel precision but only up
to a whole number of periods. This module samples the dots on those nodes,
classifies them as present or absent with a local threshold, reads the two
binary codes carried by whole lines of missing dots, and turns the decoded
code positions into the absolute pattern coordinates of the image center.

Frames
------
Lattice indices ``(m, n)`` are the node labels of the phase planes: ``m``
grows along the ``u`` direction ``(cos o, sin o)`` and ``n`` along ``v``,
with ``o`` the folded orientation. Grids are stored with rows indexed by
``n`` and columns by ``m``. Pattern coordinates ``(x, y)`` are in periods,
with the dot of cell ``(row 0, col 0)`` at ``(0, 0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from ._validation import check_image
from .exceptions import (
    AmbiguousCodingPhase,
    AmbiguousDecode,
    DecodeFailed,
    DegenerateClustering,
    FewerThanMinimumCells,
)
from .patterngen import MegarenaSpec
from .phaseengine import TWO_PI, AnalysisSettings, PhaseResult, _timed, analyze
from .sequencer import WindowIndex, build_window_index, decode_span

# stencil offsets (px) averaged around each predicted dot center
_STENCIL = np.array([-0.5, 0.0, 0.5])
VOTE_MAJORITY = 0.7
MARGIN_CONFIDENT = 0.25
OFFSET_GATE = 0.3

# lattice axis ("col" = m, "row" = n) and reading direction feeding the
# pattern x and y codes, for each quarter-turn hypothesis
QUADRANTS = {
    0: (("col", 1), ("row", 1)),
    1: (("row", 1), ("col", -1)),
    2: (("col", -1), ("row", -1)),
    3: (("row", -1), ("col", 1)),
}


@dataclass
class DotSampleGrid:
    """Intensities sampled on the lattice nodes of one view.

    ``intensity[r, c]`` belongs to node ``(m0 + c, n0 + r)``; invalid entries
    (nodes too close to or outside the frame) are NaN.
    """

    m0: int
    n0: int
    intensity: np.ndarray
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    valid: np.ndarray = field(repr=False)
    period_px: float = 0.0

    @property
    def shape(self):
        return self.intensity.shape

    @property
    def visible_periods(self) -> tuple:
        """Number of lattice columns and rows holding at least one sample."""
        return int(self.valid.any(axis=0).sum()), int(self.valid.any(axis=1).sum())


@dataclass
class Classification:
    present: np.ndarray
    margin: np.ndarray
    threshold: np.ndarray
    valid: np.ndarray
    degenerate_windows: int = 0

    @property
    def confidence(self) -> float:
        """Fraction of sampled cells classified with margin >= 0.25."""
        total = int(self.valid.sum())
        if total == 0:
            return 0.0
        return float((self.margin[self.valid] >= MARGIN_CONFIDENT).sum() / total)


@dataclass
class CodeWindows:
    """Bits read from the coding lines of a classified grid.

    ``col_bits`` follow increasing ``m`` over the coding columns listed in
    ``col_lines`` (lattice indices); likewise for rows. Unknown bits are
    ``None``. Which lattice axis carries the pattern ``x`` code depends on the
    quarter-turn hypothesis; ``x_bits``/``y_bits`` give the unrotated reading.
    """

    col_bits: list
    col_lines: list
    row_bits: list
    row_lines: list
    col_residue: int
    row_residue: int
    intersections_absent: float = 1.0

    @property
    def x_bits(self) -> list:
        return self.col_bits

    @property
    def y_bits(self) -> list:
        return self.row_bits

    @property
    def x_anchor_cell(self) -> Optional[int]:
        return self.col_lines[0] if self.col_lines else None

    @property
    def y_anchor_cell(self) -> Optional[int]:
        return self.row_lines[0] if self.row_lines else None


@dataclass(frozen=True)
class AbsolutePose2D:
    """Pattern coordinates (periods) of the image center and orientation.

    ``theta`` in [0, 2*pi) rotates pattern axes onto image axes (y down).
    ``code_x``/``code_y`` are the indices of the 3x3 code blocks containing
    the image center.
    """

    x: float
    y: float
    theta: float
    confidence: float
    quadrant: int = 0
    code_x: int = 0
    code_y: int = 0
    period: float = 1.0

    @property
    def x_physical(self) -> float:
        return self.x * self.period

    @property
    def y_physical(self) -> float:
        return self.y * self.period


# -- sampling ----------------------------------------------------------------


def sample_dots(img, phase: PhaseResult, min_cells: int = 0, margin_periods: float = 1.0) -> DotSampleGrid:
    """Sample the image on every lattice node lying inside the frame.

    A node is kept when its predicted center is at least ``margin_periods``
    periods from every frame edge. The value is the mean of a 3x3 stencil
    (0.5 px spacing) of bilinear samples around the center.

    Raises
    ------
    FewerThanMinimumCells
        When fewer than ``min_cells`` lattice columns or rows are sampled.
    """
    img = check_image(img)
    h, w = img.shape
    corners_x = np.array([0, w - 1, 0, w - 1], dtype=float)
    corners_y = np.array([0, 0, h - 1, h - 1], dtype=float)
    mc, nc = phase.pixel_to_lattice(corners_x, corners_y)
    m0, m1 = int(math.floor(mc.min())), int(math.ceil(mc.max()))
    n0, n1 = int(math.floor(nc.min())), int(math.ceil(nc.max()))
    mm, nn = np.meshgrid(np.arange(m0, m1 + 1), np.arange(n0, n1 + 1))
    x, y = phase.lattice_to_pixel(mm, nn)
    margin = margin_periods * phase.period_px
    valid = (x >= margin) & (x <= w - 1 - margin) & (y >= margin) & (y <= h - 1 - margin)
    if not valid.any():
        raise FewerThanMinimumCells("no lattice node lies inside the frame")
    rows = np.flatnonzero(valid.any(axis=1))
    cols = np.flatnonzero(valid.any(axis=0))
    sl = (slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1))
    x, y, valid = x[sl], y[sl], valid[sl]
    grid_m0, grid_n0 = m0 + int(cols[0]), n0 + int(rows[0])

    xs = x[valid]
    ys = y[valid]
    ox, oy = np.meshgrid(_STENCIL, _STENCIL)
    px = (xs[:, None] + ox.ravel()[None, :]).ravel()
    py = (ys[:, None] + oy.ravel()[None, :]).ravel()
    samples = ndimage.map_coordinates(img, [py, px], order=1, mode="nearest")
    intensity = np.full(valid.shape, np.nan)
    intensity[valid] = samples.reshape(-1, _STENCIL.size**2).mean(axis=1)

    grid = DotSampleGrid(grid_m0, grid_n0, intensity, x, y, valid, phase.period_px)
    n_cols, n_rows = grid.visible_periods
    if min(n_cols, n_rows) < min_cells:
        raise FewerThanMinimumCells(
            f"{n_cols}x{n_rows} visible periods, at least {min_cells} per axis are required"
        )
    return grid


# -- classification ----------------------------------------------------------


def two_means_1d(values: np.ndarray, counts: Optional[np.ndarray] = None):
    """Exact 1D 2-means along the last axis of pre-sorted, NaN-padded rows.

    Returns ``(low_center, high_center)``; rows with fewer than two values
    get NaN centers.
    """
    v = np.nan_to_num(values, nan=0.0)
    k = v.shape[-1]
    if counts is None:
        counts = np.full(v.shape[:-1], k)
    csum = np.cumsum(v, axis=-1)
    total = np.take_along_axis(csum, np.maximum(counts - 1, 0)[..., None], axis=-1)[..., 0]
    split = np.arange(1, k)  # size of the low cluster
    n_lo = split
    n_hi = counts[..., None] - split
    s_lo = csum[..., :-1]
    s_hi = total[..., None] - s_lo
    with np.errstate(divide="ignore", invalid="ignore"):
        # between-class scatter; maximizing it minimizes within-cluster scatter
        score = s_lo**2 / n_lo + s_hi**2 / n_hi
    score = np.where(n_hi >= 1, score, -np.inf)
    best = np.argmax(score, axis=-1)
    n_lo_b = best + 1
    s_lo_b = np.take_along_axis(s_lo, best[..., None], axis=-1)[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = s_lo_b / n_lo_b
        hi = (total - s_lo_b) / (counts - n_lo_b)
    bad = counts < 2
    lo = np.where(bad, np.nan, lo)
    hi = np.where(bad, np.nan, hi)
    return lo, hi


def classify_dots(grid: DotSampleGrid, window: int = 9, min_spread: float = 0.05) -> Classification:
    """Present/absent decision with a local 2-means threshold.

    The threshold of each cell is the midpoint of the two cluster centers of
    the intensities in the surrounding ``window x window`` cells. Windows
    whose cluster separation is below ``min_spread`` (or a quarter of the
    global separation) carry no contrast and inherit the threshold of the
    nearest informative window.

    Raises
    ------
    DegenerateClustering
        When no window of the grid has enough contrast.
    """
    values = grid.intensity
    valid = grid.valid
    half = window // 2
    padded = np.pad(values, half, constant_values=np.nan)
    win = np.lib.stride_tricks.sliding_window_view(padded, (window, window))
    win = win.reshape(values.shape + (window * window,))
    win = np.sort(win, axis=-1)  # NaN sorts last
    counts = np.isfinite(win).sum(axis=-1)
    lo, hi = two_means_1d(win, counts)
    sep = hi - lo

    glo, ghi = two_means_1d(np.sort(values[valid])[None, :])
    global_sep = float(ghi[0] - glo[0]) if np.isfinite(ghi[0]) else 0.0
    if not global_sep >= min_spread:
        raise DegenerateClustering(f"intensity spread {global_sep:.3f} is below {min_spread}")
    informative = valid & np.isfinite(sep) & (sep >= max(min_spread, 0.25 * global_sep))
    if not informative.any():
        raise DegenerateClustering("no window has enough contrast")
    threshold = 0.5 * (lo + hi)
    degenerate = int((valid & ~informative).sum())
    if degenerate:
        _, (ri, ci) = ndimage.distance_transform_edt(~informative, return_indices=True)
        threshold = threshold[ri, ci]
        sep = sep[ri, ci]
    with np.errstate(invalid="ignore"):
        present = valid & (values > threshold)
        margin = np.where(valid, np.abs(values - threshold) / sep, 0.0)
    return Classification(present, margin, threshold, valid, degenerate)


# -- code extraction ---------------------------------------------------------


def _residue_scores(absent: np.ndarray, valid: np.ndarray, index0: int) -> list:
    """Variance across lines of the absent fraction, per residue mod 3.

    ``absent``/``valid`` have the lines along axis 0.
    """
    counts = valid.sum(axis=1)
    frac = np.where(counts > 0, (absent & valid).sum(axis=1) / np.maximum(counts, 1), np.nan)
    lines = index0 + np.arange(len(frac))
    scores = []
    for r in range(3):
        f = frac[(lines % 3 == r) & (counts > 0)]
        scores.append(float(np.var(f)) if f.size >= 2 else 0.0)
    return scores


def _pick_residue(scores, axis_name) -> int:
    order = np.argsort(scores)[::-1]
    best, second = scores[order[0]], scores[order[1]]
    if not best > 0 or second >= 0.95 * best:
        raise AmbiguousCodingPhase(
            f"coding {axis_name} phase is ambiguous (scores {', '.join(f'{s:.4f}' for s in scores)})"
        )
    return int(order[0])


def _read_lines(present, valid, line0, other0, residue, other_residue, majority):
    """Majority-vote bits of coding lines along axis 0 of ``present``.

    A data cell votes only when its sampled neighbors across the line (one
    on each side, or a single one on the grid border) are all present, so
    cells in occluded or blank areas become erasures.
    """
    n_lines, n_other = present.shape
    lines = line0 + np.arange(n_lines)
    others = other0 + np.arange(n_other)
    data_cells = (others % 3) != other_residue
    bits, coding = [], []
    for k in np.flatnonzero(lines % 3 == residue):
        sides = [j for j in (k - 1, k + 1) if 0 <= j < n_lines]
        support = np.zeros(n_other, dtype=bool)
        any_side = np.zeros(n_other, dtype=bool)
        ok = np.ones(n_other, dtype=bool)
        for j in sides:
            any_side |= valid[j]
            ok &= ~valid[j] | present[j]
        support = any_side & ok
        voters = valid[k] & support & data_cells
        total = int(voters.sum())
        coding.append(int(lines[k]))
        if total == 0:
            bits.append(None)
            continue
        ones = int((present[k] & voters).sum()) / total
        if ones >= majority:
            bits.append(1)
        elif ones <= 1 - majority:
            bits.append(0)
        else:
            bits.append(None)
    return bits, coding


def extract_code(
    classified: Classification,
    grid: Optional[DotSampleGrid] = None,
    majority: float = VOTE_MAJORITY,
) -> CodeWindows:
    """Find the coding rows and columns and read one bit per line.

    Raises
    ------
    AmbiguousCodingPhase
        When the two best residues mod 3 score within 5% of each other.
    """
    m0 = grid.m0 if grid is not None else 0
    n0 = grid.n0 if grid is not None else 0
    present, valid = classified.present, classified.valid
    support = pattern_support(present, valid)
    absent = support & ~present
    valid = support
    col_res = _pick_residue(_residue_scores(absent.T, valid.T, m0), "column")
    row_res = _pick_residue(_residue_scores(absent, valid, n0), "row")
    col_bits, col_lines = _read_lines(present.T, valid.T, m0, n0, col_res, row_res, majority)
    row_bits, row_lines = _read_lines(present, valid, n0, m0, row_res, col_res, majority)

    cols = (m0 + np.arange(present.shape[1])) % 3 == col_res
    rows = (n0 + np.arange(present.shape[0])) % 3 == row_res
    crossing = valid & rows[:, None] & cols[None, :]
    n_cross = int(crossing.sum())
    frac = float((absent & crossing).sum() / n_cross) if n_cross else 0.0
    return CodeWindows(col_bits, col_lines, row_bits, row_lines, col_res, row_res, frac)


def pattern_support(present: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Cells inside the printed pattern: the 3x3 closing of the present dots.

    Every 3x3 neighborhood of a Megarena pattern holds present dots, so blank
    areas (off the pattern or under an occluder) drop out while missing-dot
    lines and crossings are kept.
    """
    box = np.ones((3, 3), dtype=bool)
    grown = ndimage.binary_dilation(present, box)
    closed = ndimage.binary_erosion(grown | ~valid, box, border_value=1)
    return valid & closed


# -- absolute resolution -----------------------------------------------------


def _trim_unknown(bits, lines):
    known = [k for k, b in enumerate(bits) if b is not None]
    if not known:
        return [], []
    return bits[known[0] : known[-1] + 1], lines[known[0] : known[-1] + 1]


def _axis_candidates(windows: CodeWindows, source: str, direction: int, index: WindowIndex, limit):
    bits, lines = (windows.col_bits, windows.col_lines) if source == "col" else (windows.row_bits, windows.row_lines)
    bits, lines = _trim_unknown(list(bits), list(lines))
    if sum(b is not None for b in bits) < index.n:
        return []
    if direction < 0:
        bits, lines = bits[::-1], lines[::-1]
    starts = decode_span(index, bits, limit=limit)
    # lattice line index that maps to pattern line 0: j = direction * (line - l0)
    return [lines[0] - direction * (3 * p + 2) for p in starts]


def resolve_absolute(
    windows: CodeWindows,
    index_x: WindowIndex,
    index_y: WindowIndex,
    phase: PhaseResult,
    spec: MegarenaSpec,
    center: Optional[tuple] = None,
    cyclic: bool = False,
    confidence: float = 1.0,
) -> AbsolutePose2D:
    """Combine the code windows with the phase planes into an absolute pose.

    Each quarter-turn hypothesis assigns the lattice columns or rows, read
    forward or backward, to the pattern ``x`` and ``y`` codes. A hypothesis
    is valid when both codes decode to a single position; exactly one must
    be valid.

    Parameters
    ----------
    center : (x, y), optional
        Pixel whose pattern coordinates are reported; defaults to the center
        of ``phase.shape``.
    cyclic : bool
        Treat the pattern as tiling the plane. Otherwise decoded windows must
        fit inside ``spec.extent_codes`` code positions.

    Raises
    ------
    DecodeFailed
        No hypothesis decodes, or the intersection cells are not absent.
    AmbiguousDecode
        More than one hypothesis decodes.
    """
    if windows.intersections_absent < 0.9:
        raise DecodeFailed(
            f"only {windows.intersections_absent:.0%} of code-line crossings are absent"
        )
    limit = None if cyclic else spec.extent_codes
    valid = []
    for q, ((xs, xd), (ys, yd)) in QUADRANTS.items():
        cx = _axis_candidates(windows, xs, xd, index_x, limit)
        if len(cx) != 1:
            continue
        cy = _axis_candidates(windows, ys, yd, index_y, limit)
        if len(cy) != 1:
            continue
        valid.append((q, cx[0], cy[0]))
    if not valid:
        raise DecodeFailed("no orientation hypothesis decodes on both axes")
    if len(valid) > 1:
        raise AmbiguousDecode(f"{len(valid)} orientation hypotheses decode: quadrants {[v[0] for v in valid]}")
    q, l0x, l0y = valid[0]
    (xs, xd), (ys, yd) = QUADRANTS[q]

    if center is None:
        h, w = phase.shape
        center = ((w - 1) / 2, (h - 1) / 2)
    mc, nc = phase.pixel_to_lattice(center[0], center[1])
    src = {"col": float(mc), "row": float(nc)}
    x = xd * (src[xs] - l0x)
    y = yd * (src[ys] - l0y)
    if cyclic:
        span = 3 * ((1 << spec.n) - 1)
        x %= span
        y %= span
    theta = (phase.orientation + q * math.pi / 2) % TWO_PI
    return AbsolutePose2D(
        x=float(x),
        y=float(y),
        theta=float(theta),
        confidence=confidence,
        quadrant=q,
        code_x=int(math.floor((x + 0.5) / 3)),
        code_y=int(math.floor((y + 0.5) / 3)),
        period=spec.period,
    )


def centroid_offset(img, grid: DotSampleGrid, classified: Classification, max_cells: int = 256) -> np.ndarray:
    """Mean offset (periods) of present-dot intensity centroids from their nodes.

    An independent coarse check of the phase-derived node positions.
    """
    img = check_image(img)
    idx = np.flatnonzero(classified.present)
    if idx.size == 0:
        return np.zeros(2)
    if idx.size > max_cells:
        idx = idx[np.linspace(0, idx.size - 1, max_cells).astype(int)]
    cx = grid.x.ravel()[idx]
    cy = grid.y.ravel()[idx]
    p = grid.period_px
    offs = np.linspace(-0.45, 0.45, 7) * p
    ox, oy = np.meshgrid(offs, offs)
    px = cx[:, None] + ox.ravel()[None, :]
    py = cy[:, None] + oy.ravel()[None, :]
    vals = ndimage.map_coordinates(img, [py.ravel(), px.ravel()], order=1, mode="nearest").reshape(px.shape)
    vals = vals - vals.min(axis=1, keepdims=True)
    wsum = vals.sum(axis=1)
    ok = wsum > 0
    if not ok.any():
        return np.zeros(2)
    dx = (vals[ok] * ox.ravel()).sum(axis=1) / wsum[ok]
    dy = (vals[ok] * oy.ravel()).sum(axis=1) / wsum[ok]
    return np.array([np.median(dx), np.median(dy)]) / p


# -- full pipeline -----------------------------------------------------------


class MegarenaDecoder:
    """Reusable Megarena pipeline holding the two window indexes.

    Parameters
    ----------
    spec : MegarenaSpec
    settings : AnalysisSettings, optional
    cyclic : bool
        Decode positions modulo the code length (for tiled patterns).
    enforce_minimum : bool
        Require ``3(n+1)`` sampled periods per axis.
    """

    def __init__(
        self,
        spec: Optional[MegarenaSpec] = None,
        settings: Optional[AnalysisSettings] = None,
        cyclic: bool = False,
        enforce_minimum: bool = True,
    ):
        self.spec = spec or MegarenaSpec()
        self.settings = settings or AnalysisSettings(apodize=False)
        self.cyclic = cyclic
        self.enforce_minimum = enforce_minimum
        seq_x, seq_y = self.spec.sequences()
        self.index_x = build_window_index(seq_x, self.spec.n)
        self.index_y = build_window_index(seq_y, self.spec.n)

    def estimate(self, img, timings: Optional[dict] = None):
        """Return ``(AbsolutePose2D, PhaseResult)`` for one image."""
        img = check_image(img, min_size=32)
        phase = analyze(img, self.settings, timings)
        with _timed(timings, "decode"):
            min_cells = self.spec.min_visible_periods if self.enforce_minimum else 0
            grid = sample_dots(img, phase, min_cells=min_cells)
            classified = classify_dots(grid)
            windows = extract_code(classified, grid)
            offset = centroid_offset(img, grid, classified)
            if float(np.hypot(*offset)) > OFFSET_GATE:
                raise DecodeFailed(
                    f"dot centroids sit {np.hypot(*offset):.2f} period away from the phase nodes"
                )
            pose = resolve_absolute(
                windows,
                self.index_x,
                self.index_y,
                phase,
                self.spec,
                cyclic=self.cyclic,
                confidence=classified.confidence,
            )
        return pose, phase


def decode_megarena(img, spec: Optional[MegarenaSpec] = None, **kwargs) -> AbsolutePose2D:
    """One-shot convenience wrapper around :class:`MegarenaDecoder`."""
    return MegarenaDecoder(spec, **kwargs).estimate(img)[0]
