"""Dot layouts for the three marker families, rendering and SVG export.

Layout frame: the dot of cell ``(row i, column j)`` sits at layout
coordinates ``(x=j, y=i)`` measured in periods. A :class:`RenderPose` places
the layout in an image as::

    pixel = image_center + pixels_per_period * (R(theta) @ (P - origin) + t)

with ``R(theta) = [[cos, -sin], [sin, cos]]`` in the y-down pixel frame and
``origin`` the layout point that the pose refers to (cell ``(0, 0)`` for
Megarena patterns, the marker center for HP codes and stamps).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import ConfigError, ImageIOError
from .sequencer import LfsrSpec, alternate_taps, generate_msequence

FINDER_CELLS = 3
FINDER_MODULE = FINDER_CELLS / 7.0
ID_CAPACITY_MAX = 12


class GuidelineWarning(UserWarning):
    """Emitted when a pose or design falls outside the recommended window."""


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle in layout coordinates painted with ``fill``."""

    x0: float
    y0: float
    x1: float
    y1: float
    fill: float = 1.0


@dataclass
class DotLayout:
    present: np.ndarray
    period: float = 1.0
    dot_diameter_ratio: float = 0.5
    origin: tuple = (0.0, 0.0)
    features: tuple = ()
    kind: str = "lattice"
    geometry: Optional["MarkerGeometry"] = field(default=None, repr=False)

    def __post_init__(self):
        self.present = np.asarray(self.present, dtype=bool)
        if self.present.ndim != 2:
            raise ConfigError("present must be a 2D boolean grid")
        if not 0 < self.dot_diameter_ratio < 1:
            raise ConfigError(f"dot_diameter_ratio must be in (0, 1), got {self.dot_diameter_ratio}")
        if not self.period > 0:
            raise ConfigError(f"period must be > 0, got {self.period}")

    @property
    def rows(self) -> int:
        return self.present.shape[0]

    @property
    def cols(self) -> int:
        return self.present.shape[1]

    @property
    def dot_count(self) -> int:
        return int(self.present.sum())


def lattice_layout(rows, cols=None, **kwargs) -> DotLayout:
    """A fully populated rectangular lattice."""
    cols = rows if cols is None else cols
    return DotLayout(np.ones((rows, cols), dtype=bool), **kwargs)


# -- Megarena ---------------------------------------------------------------


@dataclass(frozen=True)
class MegarenaSpec:
    """Two-axis absolute code.

    ``y_spec`` defaults to a different primitive polynomial than ``x_spec`` so
    the two axes cannot be confused with one another.
    """

    n: int = 8
    x_spec: Optional[LfsrSpec] = None
    y_spec: Optional[LfsrSpec] = None
    extent_codes: Optional[int] = None
    period: float = 1.0
    dot_diameter_ratio: float = 0.5

    def __post_init__(self):
        if self.x_spec is None:
            object.__setattr__(self, "x_spec", LfsrSpec.default(self.n))
        if self.y_spec is None:
            object.__setattr__(self, "y_spec", LfsrSpec(self.n, alternate_taps(self.n), 1))
        if self.x_spec.n != self.n or self.y_spec.n != self.n:
            raise ConfigError("x_spec and y_spec must use the code depth n")
        length = (1 << self.n) - 1
        if self.extent_codes is None:
            object.__setattr__(self, "extent_codes", length)
        if not 1 <= self.extent_codes <= length:
            raise ConfigError(f"extent_codes must be in [1, {length}], got {self.extent_codes}")

    @property
    def cells(self) -> int:
        return 3 * self.extent_codes

    @property
    def min_visible_periods(self) -> int:
        return 3 * (self.n + 1)

    def sequences(self):
        return generate_msequence(self.x_spec), generate_msequence(self.y_spec)


def layout_megarena(spec: MegarenaSpec) -> DotLayout:
    """Lattice with whole coding lines removed for 0 bits.

    Columns ``j % 3 == 2`` carry the x code (bit ``x[j // 3]``), rows
    ``i % 3 == 2`` the y code, and the cell where a coding row crosses a
    coding column is always empty.
    """
    xseq, yseq = spec.sequences()
    size = spec.cells
    idx = np.arange(size)
    col_on = np.ones(size, dtype=bool)
    row_on = np.ones(size, dtype=bool)
    coding = idx % 3 == 2
    col_on[coding] = xseq[idx[coding] // 3].astype(bool)
    row_on[coding] = yseq[idx[coding] // 3].astype(bool)
    present = row_on[:, None] & col_on[None, :]
    present[np.ix_(coding, coding)] = False
    return DotLayout(
        present,
        period=spec.period,
        dot_diameter_ratio=spec.dot_diameter_ratio,
        origin=(0.0, 0.0),
        kind="megarena",
    )


# -- small markers ----------------------------------------------------------


@dataclass(frozen=True)
class HpCodeSpec:
    periods_across: int = 20
    marker_id: int = 0
    period: float = 1.0
    dot_diameter_ratio: float = 0.5

    def __post_init__(self):
        if self.periods_across < 9:
            raise ConfigError(f"HP code needs periods_across >= 9, got {self.periods_across}")
        if self.marker_id < 0:
            raise ConfigError("marker_id must be >= 0")


@dataclass(frozen=True)
class StampSpec:
    periods_across: int = 20
    border_thickness: int = 1
    marker_id: int = 0
    period: float = 1.0
    dot_diameter_ratio: float = 0.5

    def __post_init__(self):
        if self.periods_across < 9:
            raise ConfigError(f"stamp needs periods_across >= 9, got {self.periods_across}")
        if self.border_thickness < 1:
            raise ConfigError("border_thickness must be >= 1")
        if self.marker_id < 0:
            raise ConfigError("marker_id must be >= 0")


@dataclass(frozen=True)
class MarkerGeometry:
    """Cell bookkeeping shared by the small-marker renderer and reader.

    Cells are ``(row, col)`` pairs. ``dot_zone`` marks cells that carry
    lattice dots (before the glyph and id bits are removed).
    """

    kind: str
    periods_across: int
    border_thickness: int
    dot_zone: np.ndarray = field(repr=False)
    glyph_cells: tuple
    id_cells: tuple
    finder_blocks: tuple = ()

    @property
    def id_capacity(self) -> int:
        return len(self.id_cells)

    @property
    def finder_centers(self) -> tuple:
        """Finder centers in layout coordinates (x, y): TL, TR, BL."""
        half = (FINDER_CELLS - 1) / 2
        return tuple((c0 + half, r0 + half) for r0, c0 in self.finder_blocks)


def rotate_cell(cell, quarter_turns: int, size: int) -> tuple:
    """Rotate a ``(row, col)`` cell by quarter turns about the marker center.

    One quarter turn is the layout rotation by +pi/2 in the y-down frame.
    """
    r, c = cell
    for _ in range(quarter_turns % 4):
        r, c = c, size - 1 - r
    return (r, c)


def _glyph(size: int) -> tuple:
    h = size // 2
    return ((h - 2, h + 1), (h - 1, h + 1), (h - 2, h))


def _check_geometry(geometry: MarkerGeometry) -> None:
    size = geometry.periods_across
    usable = geometry.dot_zone.copy()
    id_set = set(geometry.id_cells)
    glyph = set(geometry.glyph_cells)
    for q in range(4):
        rotated = {rotate_cell(c, q, size) for c in glyph}
        for r, c in rotated:
            if not (0 <= r < size and 0 <= c < size) or not usable[r, c] or (r, c) in id_set:
                raise ConfigError(
                    f"{geometry.kind} with periods_across={size} leaves no room for the orientation glyph"
                )
        if q and rotated & glyph:
            raise ConfigError("orientation glyph overlaps its own rotation")


def hpcode_geometry(periods_across: int) -> MarkerGeometry:
    size = periods_across
    zone = np.ones((size, size), dtype=bool)
    blocks = ((0, 0), (0, size - FINDER_CELLS), (size - FINDER_CELLS, 0))
    for r0, c0 in blocks:
        zone[r0 : r0 + FINDER_CELLS, c0 : c0 + FINDER_CELLS] = False
    row = size - 2
    cols = range(FINDER_CELLS, min(size - 1, FINDER_CELLS + ID_CAPACITY_MAX))
    geometry = MarkerGeometry(
        kind="hpcode",
        periods_across=size,
        border_thickness=0,
        dot_zone=zone,
        glyph_cells=_glyph(size),
        id_cells=tuple((row, c) for c in cols),
        finder_blocks=blocks,
    )
    _check_geometry(geometry)
    return geometry


def stamp_geometry(periods_across: int, border_thickness: int = 1) -> MarkerGeometry:
    size, b = periods_across, border_thickness
    zone = np.zeros((size, size), dtype=bool)
    zone[b : size - b, b : size - b] = True
    row = size - b - 1
    cols = range(b + 1, min(size - b - 1, b + 1 + ID_CAPACITY_MAX))
    geometry = MarkerGeometry(
        kind="stamp",
        periods_across=size,
        border_thickness=b,
        dot_zone=zone,
        glyph_cells=_glyph(size),
        id_cells=tuple((row, c) for c in cols),
    )
    if size - 2 * b < 7:
        raise ConfigError(f"stamp interior of {size - 2 * b} cells is too small")
    _check_geometry(geometry)
    return geometry


def encode_id(marker_id: int, capacity: int) -> list:
    """Marker id as ``capacity`` bits, most significant first (1 = absent dot)."""
    if marker_id >= (1 << capacity):
        raise ConfigError(f"marker_id {marker_id} exceeds the {capacity}-bit reserved zone")
    return [(marker_id >> (capacity - 1 - k)) & 1 for k in range(capacity)]


def decode_id(bits) -> int:
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


def _small_marker_present(geometry: MarkerGeometry, marker_id: int) -> np.ndarray:
    present = geometry.dot_zone.copy()
    for r, c in geometry.glyph_cells:
        present[r, c] = False
    for (r, c), bit in zip(geometry.id_cells, encode_id(marker_id, geometry.id_capacity)):
        if bit:
            present[r, c] = False
    return present


def _finder_rects(r0: int, c0: int) -> tuple:
    x0, y0 = c0 - 0.5, r0 - 0.5
    rects = []
    for k, fill in ((0, 1.0), (1, 0.0), (2, 1.0)):
        inset = k * FINDER_MODULE
        rects.append(Rect(x0 + inset, y0 + inset, x0 + FINDER_CELLS - inset, y0 + FINDER_CELLS - inset, fill))
    return tuple(rects)


def layout_hpcode(spec: HpCodeSpec) -> DotLayout:
    """HP code: three QR-style finder squares around a dot lattice.

    Each finder spans 3x3 cells and is drawn as nested squares whose
    cross-section has 1:1:3:1:1 proportions.
    """
    geometry = hpcode_geometry(spec.periods_across)
    present = _small_marker_present(geometry, spec.marker_id)
    features = tuple(rect for r0, c0 in geometry.finder_blocks for rect in _finder_rects(r0, c0))
    center = (spec.periods_across - 1) / 2
    return DotLayout(
        present,
        period=spec.period,
        dot_diameter_ratio=spec.dot_diameter_ratio,
        origin=(center, center),
        features=features,
        kind="hpcode",
        geometry=geometry,
    )


def layout_stamp(spec: StampSpec) -> DotLayout:
    """Stamp: a solid square border around the dot lattice."""
    geometry = stamp_geometry(spec.periods_across, spec.border_thickness)
    present = _small_marker_present(geometry, spec.marker_id)
    size, b = spec.periods_across, spec.border_thickness
    features = (
        Rect(-0.5, -0.5, size - 0.5, size - 0.5, 1.0),
        Rect(b - 0.5, b - 0.5, size - b - 0.5, size - b - 0.5, 0.0),
    )
    center = (size - 1) / 2
    return DotLayout(
        present,
        period=spec.period,
        dot_diameter_ratio=spec.dot_diameter_ratio,
        origin=(center, center),
        features=features,
        kind="stamp",
        geometry=geometry,
    )


# -- rendering --------------------------------------------------------------


@dataclass(frozen=True)
class RenderPose:
    tx: float = 0.0
    ty: float = 0.0
    theta: float = 0.0
    pixels_per_period: float = 10.0

    def __post_init__(self):
        if not self.pixels_per_period > 0:
            raise ConfigError(f"pixels_per_period must be > 0, got {self.pixels_per_period}")
        if not 7 <= self.pixels_per_period <= 15:
            warnings.warn(
                f"{self.pixels_per_period} px/period is outside the recommended 7-15 px window",
                GuidelineWarning,
                stacklevel=3,
            )


def view_pose(x: float, y: float, theta: float, pixels_per_period: float, origin=(0.0, 0.0)) -> RenderPose:
    """Pose that puts layout point ``(x, y)`` at the image center."""
    c, s = math.cos(theta), math.sin(theta)
    dx, dy = x - origin[0], y - origin[1]
    return RenderPose(-(c * dx - s * dy), -(s * dx + c * dy), theta, pixels_per_period)


def view_center(pose: RenderPose, origin=(0.0, 0.0)) -> tuple:
    """Layout point seen at the image center (inverse of :func:`view_pose`)."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return (origin[0] - (c * pose.tx + s * pose.ty), origin[1] - (-s * pose.tx + c * pose.ty))


def _out_shape(out_size) -> tuple:
    if np.isscalar(out_size):
        return int(out_size), int(out_size)
    width, height = out_size
    return int(width), int(height)


def render(
    layout: DotLayout,
    pose: RenderPose,
    out_size=512,
    supersample: int = 4,
    periodic: bool = False,
) -> np.ndarray:
    """Render white anti-aliased dots on black.

    Parameters
    ----------
    layout : DotLayout
    pose : RenderPose
    out_size : int or (width, height)
    supersample : int
        Sub-samples per pixel side; coverage is the mean over the
        ``supersample x supersample`` grid.
    periodic : bool
        Tile the layout over the whole plane (used for cyclic code sweeps).

    Returns
    -------
    ndarray of shape (height, width)
    """
    width, height = _out_shape(out_size)
    ss = int(supersample)
    offsets = (np.arange(ss) + 0.5) / ss - 0.5
    cx, cy = (width - 1) / 2, (height - 1) / 2
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    ppp = pose.pixels_per_period
    ox, oy = layout.origin
    radius2 = (0.5 * layout.dot_diameter_ratio) ** 2
    rows, cols = layout.present.shape

    xs = (np.arange(width)[:, None] + offsets[None, :]).ravel()
    dx = (xs - cx) / ppp - pose.tx
    ux = ox + c * dx  # u = ox + c*dx + s*dy
    vx = oy - s * dx  # v = oy - s*dx + c*dy

    out = np.empty((height, width), dtype=np.float64)
    chunk = max(1, 2_000_000 // (width * ss * ss))
    for r0 in range(0, height, chunk):
        r1 = min(height, r0 + chunk)
        ys = (np.arange(r0, r1)[:, None] + offsets[None, :]).ravel()
        dy = (ys - cy) / ppp - pose.ty
        u = ux[None, :] + (s * dy)[:, None]
        v = vx[None, :] + (c * dy)[:, None]
        value = np.zeros(u.shape, dtype=np.float64)
        for rect in layout.features:
            inside = (u >= rect.x0) & (u < rect.x1) & (v >= rect.y0) & (v < rect.y1)
            value[inside] = rect.fill
        j = np.rint(u)
        i = np.rint(v)
        near = (u - j) ** 2 + (v - i) ** 2 < radius2
        j = j.astype(np.int64)
        i = i.astype(np.int64)
        if periodic:
            j %= cols
            i %= rows
            hit = near
        else:
            hit = near & (j >= 0) & (j < cols) & (i >= 0) & (i < rows)
            j = np.clip(j, 0, cols - 1)
            i = np.clip(i, 0, rows - 1)
        hit &= layout.present[i, j]
        value[hit] = 1.0
        out[r0:r1] = value.reshape(r1 - r0, ss, width, ss).mean(axis=(1, 3))
    return out


def layout_to_image(layout: DotLayout, pixels_per_period: float = 10.0, margin: float = 1.0) -> np.ndarray:
    """Axis-aligned raster of the whole layout, e.g. for PNG layout export."""
    w = int(math.ceil((layout.cols + 2 * margin) * pixels_per_period))
    h = int(math.ceil((layout.rows + 2 * margin) * pixels_per_period))
    # place layout center at image center
    cx_layout = (layout.cols - 1) / 2
    cy_layout = (layout.rows - 1) / 2
    pose = view_pose(cx_layout, cy_layout, 0.0, pixels_per_period, layout.origin)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GuidelineWarning)
        return render(layout, pose, (w, h))


# -- SVG export -------------------------------------------------------------


def _fmt(value: float) -> str:
    text = f"{value:.9g}"
    return "0" if text == "-0" else text


def export_svg(layout: DotLayout, path) -> None:
    """Write the layout as SVG 1.1 in millimeters (one ``circle`` per dot)."""
    p = layout.period
    width, height = layout.cols * p, layout.rows * p
    r = 0.5 * layout.dot_diameter_ratio * p
    lines = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_fmt(width)}mm" height="{_fmt(height)}mm" '
        f'viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
        f'<rect x="0" y="0" width="{_fmt(width)}" height="{_fmt(height)}" fill="black"/>',
    ]
    for rect in layout.features:
        color = "white" if rect.fill >= 0.5 else "black"
        lines.append(
            f'<rect x="{_fmt((rect.x0 + 0.5) * p)}" y="{_fmt((rect.y0 + 0.5) * p)}" '
            f'width="{_fmt((rect.x1 - rect.x0) * p)}" height="{_fmt((rect.y1 - rect.y0) * p)}" fill="{color}"/>'
        )
    rows, cols = np.nonzero(layout.present)
    for i, j in zip(rows.tolist(), cols.tolist()):
        lines.append(f'<circle cx="{_fmt((j + 0.5) * p)}" cy="{_fmt((i + 0.5) * p)}" r="{_fmt(r)}" fill="white"/>')
    lines.append("</svg>")
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ImageIOError(f"{path}: cannot write ({exc.strerror or exc})") from exc
