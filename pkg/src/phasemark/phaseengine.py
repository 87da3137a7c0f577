"""Fine relative measurement from the phase of a dot lattice.

The image spectrum of a periodic dot frame has two orthogonal fundamental
lobes. Each lobe is isolated with a Gaussian band-pass filter, brought back
to the image domain as a complex field, and its phase is fitted by a plane
``phi(x, y) = a*x + b*y + c``. Node ``(m, n)`` of the lattice is the pixel
where the first plane equals ``2*pi*m`` and the second ``2*pi*n``; dot
centers sit on nodes.
"""

from __future__ import annotations

import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.fft as sfft

from ._validation import check_image
from .exceptions import FitDegenerate, NoLatticeFound, NonOrthogonalLattice

TWO_PI = 2.0 * math.pi


def wrap_angle(phase):
    """Wrap to (-pi, pi]."""
    return math.pi - np.mod(math.pi - phase, TWO_PI)


def fold_quarter(angle: float) -> float:
    """Fold an angle into (-pi/4, pi/4]."""
    return math.pi / 4 - (math.pi / 4 - angle) % (math.pi / 2)


@contextmanager
def _timed(timings, key):
    if timings is None:
        yield
        return
    start = time.perf_counter()
    try:
        yield
    finally:
        timings[key] = timings.get(key, 0.0) + time.perf_counter() - start


@dataclass
class Spectrum:
    """Unshifted 2D DFT: ``data[ky, kx]`` with DC at ``(0, 0)``."""

    data: np.ndarray
    fx: np.ndarray
    fy: np.ndarray

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class SpectralPeak:
    fx: float
    fy: float
    magnitude: float = 0.0

    @property
    def frequency(self) -> float:
        return math.hypot(self.fx, self.fy)

    @property
    def angle(self) -> float:
        return math.atan2(self.fy, self.fx)


@dataclass
class WrappedPhaseMap:
    phase: np.ndarray
    amplitude: np.ndarray


@dataclass(frozen=True)
class PhasePlane:
    a: float
    b: float
    c: float
    rms_residual: float = 0.0
    support_px: float = 0.0  # image area (px^2) the fit was drawn from

    def __call__(self, x, y):
        return self.a * x + self.b * y + self.c

    @property
    def gradient_norm(self) -> float:
        return math.hypot(self.a, self.b)

    def negated(self) -> "PhasePlane":
        return PhasePlane(-self.a, -self.b, float(wrap_angle(-self.c)), self.rms_residual, self.support_px)

    def shifted(self, x0: float, y0: float) -> "PhasePlane":
        """Same plane expressed in a frame whose origin is at ``(-x0, -y0)``.

        A plane fitted on a crop starting at pixel ``(x0, y0)`` becomes a plane
        in full-image coordinates.
        """
        return PhasePlane(self.a, self.b, self.c - self.a * x0 - self.b * y0, self.rms_residual, self.support_px)


@dataclass
class PhaseResult:
    """Outcome of :func:`analyze`.

    ``plane1``/``plane2`` follow the peak order of :func:`find_lattice_peaks`.
    ``u_plane``/``v_plane`` are the same planes re-signed so that their
    gradients point along ``(cos o, sin o)`` and ``(-sin o, cos o)`` with
    ``o = orientation``.
    """

    plane1: PhasePlane
    plane2: PhasePlane
    period_px: float
    orientation: float
    peaks: tuple = ()
    shape: tuple = ()
    u_plane: Optional[PhasePlane] = None
    v_plane: Optional[PhasePlane] = None
    amplitude: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.u_plane is None or self.v_plane is None:
            self.u_plane, self.v_plane = canonical_planes(self.plane1, self.plane2, self.orientation)

    def shifted(self, x0: float, y0: float, shape=None) -> "PhaseResult":
        return replace(
            self,
            plane1=self.plane1.shifted(x0, y0),
            plane2=self.plane2.shifted(x0, y0),
            u_plane=self.u_plane.shifted(x0, y0),
            v_plane=self.v_plane.shifted(x0, y0),
            shape=self.shape if shape is None else shape,
            amplitude=None,
        )

    def pixel_to_lattice(self, x, y):
        """Continuous lattice coordinates ``(m, n)`` of pixel ``(x, y)``."""
        return self.u_plane(x, y) / TWO_PI, self.v_plane(x, y) / TWO_PI

    def lattice_to_pixel(self, m, n):
        """Pixel position of continuous lattice coordinates ``(m, n)``."""
        u, v = self.u_plane, self.v_plane
        det = u.a * v.b - u.b * v.a
        ru = TWO_PI * np.asarray(m, dtype=float) - u.c
        rv = TWO_PI * np.asarray(n, dtype=float) - v.c
        x = (ru * v.b - u.b * rv) / det
        y = (u.a * rv - ru * v.a) / det
        return x, y


def canonical_planes(p1: PhasePlane, p2: PhasePlane, orientation: float):
    ux, uy = math.cos(orientation), math.sin(orientation)
    planes = {}
    for plane in (p1, p2):
        along_u = plane.a * ux + plane.b * uy
        along_v = -plane.a * uy + plane.b * ux
        if abs(along_u) >= abs(along_v):
            key, sign = "u", along_u
        else:
            key, sign = "v", along_v
        planes[key] = plane if sign > 0 else plane.negated()
    if len(planes) != 2:
        raise NonOrthogonalLattice("both lattice planes point along the same axis")
    return planes["u"], planes["v"]


@dataclass(frozen=True)
class AnalysisSettings:
    """Knobs of :func:`analyze`.

    sigma_ratio
        Gaussian filter width as a fraction of the peak frequency; ignored when
        ``sigma_f`` is given.
    period_range
        ``(min, max)`` admissible lattice period in pixels for the peak search.
    fit_margin
        Border, in periods, excluded from the plane fit when the image is not
        apodized (the circular FFT corrupts the phase near the frame edges).
    full_resolution
        Fit the phase on every pixel instead of the demodulated coarse grid
        of :func:`baseband_field`. Slower, same estimate up to rounding.
    """

    apodize: bool = False
    sigma_ratio: float = 1.0 / 6.0
    sigma_f: Optional[float] = None
    period_range: Optional[tuple] = None
    fit_margin: float = 2.5
    refine_iterations: int = 2
    full_resolution: bool = False


def hann_window(height: int, width: int) -> np.ndarray:
    wy = np.hanning(height) if height > 1 else np.ones(1)
    wx = np.hanning(width) if width > 1 else np.ones(1)
    return wy[:, None] * wx[None, :]


def centered_hann(shape, center, half_size) -> np.ndarray:
    """Separable Hann window of half-width ``half_size`` (x, y) px at a sub-pixel ``center``."""
    h, w = shape
    hx, hy = (half_size, half_size) if np.isscalar(half_size) else half_size
    ux = np.clip((np.arange(w) - center[0]) / hx, -1.0, 1.0)
    uy = np.clip((np.arange(h) - center[1]) / hy, -1.0, 1.0)
    return (0.5 + 0.5 * np.cos(np.pi * uy))[:, None] * (0.5 + 0.5 * np.cos(np.pi * ux))[None, :]


def forward_spectrum(img, apodize: bool = False, window: Optional[np.ndarray] = None) -> Spectrum:
    """DFT of the zero-mean (optionally windowed) image.

    ``apodize`` applies a Hann window over the whole frame; an explicit
    ``window`` of the image shape takes precedence, the image then being
    centered on its window-weighted mean. The transform is unnormalized, so
    Parseval reads ``sum|F|^2 == H*W * sum|img - mean|^2`` without a window.
    """
    img = check_image(img, min_size=32)
    h, w = img.shape
    if window is not None:
        if window.shape != img.shape:
            raise ValueError(f"window shape {window.shape} != image shape {img.shape}")
        mean = float((img * window).sum() / window.sum())
        centered = (img - mean) * window
    else:
        centered = img - img.mean()
        if apodize:
            centered = centered * hann_window(h, w)
            centered -= centered.mean()
    data = sfft.fft2(centered, workers=1)
    return Spectrum(data, sfft.fftfreq(w), sfft.fftfreq(h))


def _refine(logmag: np.ndarray, ky: int, kx: int) -> tuple:
    h, w = logmag.shape
    c = logmag[ky, kx]

    def offset(lm, lp):
        denom = lm - 2 * c + lp
        if denom >= 0:
            return 0.0
        return float(np.clip(0.5 * (lm - lp) / denom, -0.5, 0.5))

    dx = offset(logmag[ky, (kx - 1) % w], logmag[ky, (kx + 1) % w])
    dy = offset(logmag[(ky - 1) % h, kx], logmag[(ky + 1) % h, kx])
    return dx, dy


def _signed_bin(k, size):
    return k if k <= size // 2 else k - size


def _to_half_plane(ky, kx, h, w):
    sy, sx = _signed_bin(ky, h), _signed_bin(kx, w)
    if sy < 0 or (sy == 0 and sx < 0):
        sy, sx = -sy, -sx
    return sy % h, sx % w


def _neighborhood_energy(power, ky, kx):
    """Energy in the 3x3 bins around each ``(ky, kx)``; insensitive to scalloping."""
    h, w = power.shape
    total = 0.0
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            total = total + power[(ky + dy) % h, (kx + dx) % w]
    return total


def find_lattice_peaks(spec: Spectrum, period_hint_px=None) -> tuple:
    """The two orthogonal fundamental lobes of a dot lattice.

    Candidate bins are ranked by the energy of their 3x3 neighborhood. Peaks
    are reported with polar angle in ``[0, pi)``, ``peak1`` having the smaller
    angle, and refined to sub-bin precision by a parabola through the
    log-magnitude of the neighboring bins.

    Raises
    ------
    NoLatticeFound
        Strongest admissible bin below 5x the median non-DC magnitude.
    NonOrthogonalLattice
        No partner lobe within ``pi/2 +- 0.35`` rad of the strongest one.
    """
    h, w = spec.shape
    mag = np.abs(spec.data)
    power = mag * mag
    fxx = spec.fx[None, :]
    fyy = spec.fy[:, None]
    radius = np.hypot(fxx, fyy)
    if period_hint_px is None:
        lo_period, hi_period = 2.5, max(4.0, min(h, w) / 4.0)
    else:
        lo_period, hi_period = period_hint_px
    candidates = (radius >= 1.0 / hi_period) & (radius <= 1.0 / lo_period)
    candidates &= (fyy > 0) | ((fyy == 0) & (fxx > 0))
    if not candidates.any():
        raise NoLatticeFound("no admissible frequency for the requested period range")
    flat_mag = mag.ravel()[1:]
    median = float(np.partition(flat_mag, flat_mag.size // 2)[flat_mag.size // 2])
    flat = np.flatnonzero(candidates)
    cand_mag = mag.ravel()[flat]
    if not cand_mag.max() > 5.0 * median:
        raise NoLatticeFound(
            f"strongest lobe {cand_mag.max():.3g} is below 5x the median magnitude {median:.3g}"
        )
    keep = min(64, len(flat))
    top = flat[np.argpartition(cand_mag, len(flat) - keep)[-keep:]]
    ky, kx = np.unravel_index(top, mag.shape)
    energy = _neighborhood_energy(power, ky, kx)
    order = np.argsort(energy)[::-1]
    k1 = (int(ky[order[0]]), int(kx[order[0]]))
    e1 = float(energy[order[0]])

    def pick_partner(k_ref):
        a_ref = math.atan2(spec.fy[k_ref[0]], spec.fx[k_ref[1]]) % math.pi
        f_ref = float(radius[k_ref])
        band = candidates & (np.abs(radius - f_ref) < 0.35 * f_ref)
        by, bx = np.nonzero(band)
        sep = np.abs(np.mod(np.arctan2(spec.fy[by], spec.fx[bx]), math.pi) - a_ref)
        sep = np.minimum(sep, math.pi - sep)
        ok = np.abs(sep - math.pi / 2) < 0.35
        band = np.zeros_like(band)
        band[by[ok], bx[ok]] = True
        if not band.any():
            raise NonOrthogonalLattice("no lobe orthogonal to the strongest one")
        idx = np.flatnonzero(band)
        keep = min(16, len(idx))
        sub = idx[np.argpartition(mag.ravel()[idx], len(idx) - keep)[-keep:]]
        sy, sx = np.unravel_index(sub, mag.shape)
        en = _neighborhood_energy(power, sy, sx)
        best = int(np.argmax(en))
        return (int(sy[best]), int(sx[best])), float(en[best])

    k2, e2 = pick_partner(k1)
    if e2 < 0.04 * e1 or mag[k2] < 5.0 * median:
        raise NonOrthogonalLattice("orthogonal partner lobe is too weak")

    # a pair of diagonal harmonics has the true fundamentals at half their sum
    # and difference
    s1, s2 = (_signed_bin(k1[0], h), _signed_bin(k1[1], w)), (_signed_bin(k2[0], h), _signed_bin(k2[1], w))
    halves = []
    for sign in (1, -1):
        hy, hx = (s1[0] + sign * s2[0]) / 2, (s1[1] + sign * s2[1]) / 2
        halves.append(_to_half_plane(int(round(hy)) % h, int(round(hx)) % w, h, w))
    half_energy = [float(_neighborhood_energy(power, np.array([k[0]]), np.array([k[1]]))[0]) for k in halves]
    if min(half_energy) > 0.3 * e1:
        k1, k2 = halves

    logmag = np.log(mag + 1e-300)
    peaks = []
    for ky_, kx_ in (k1, k2):
        dx, dy = _refine(logmag, ky_, kx_)
        fx = (_signed_bin(kx_, w) + dx) / w
        fy = (_signed_bin(ky_, h) + dy) / h
        if fy < 0 or (fy == 0 and fx < 0):
            fx, fy = -fx, -fy
        peaks.append(SpectralPeak(fx, fy, float(mag[ky_, kx_])))
    peaks.sort(key=lambda p: math.atan2(p.fy, p.fx) % math.pi)
    return peaks[0], peaks[1]


def gaussian_bandpass(spec: Spectrum, peak: SpectralPeak, sigma_f: float) -> Spectrum:
    """Keep one lobe: multiply by a unit-gain Gaussian centered on ``peak``."""
    gy = np.exp(-((spec.fy - peak.fy) ** 2) / (2 * sigma_f**2))
    gx = np.exp(-((spec.fx - peak.fx) ** 2) / (2 * sigma_f**2))
    return Spectrum(spec.data * (gy[:, None] * gx[None, :]), spec.fx, spec.fy)


def wrapped_phase(filtered: Spectrum) -> WrappedPhaseMap:
    field_ = sfft.ifft2(filtered.data, workers=1)
    return WrappedPhaseMap(np.angle(field_), np.abs(field_))


def _weighted_plane(x, y, values, weights):
    sw = weights.sum()
    if not sw > 0:
        raise FitDegenerate("no weight in the fit region")
    mx = (weights * x).sum() / sw
    my = (weights * y).sum() / sw
    xc = x - mx
    yc = y - my
    wx, wy = weights * xc, weights * yc
    sxx = (wx * xc).sum()
    sxy = (wx * yc).sum()
    syy = (wy * yc).sum()
    mv = (weights * values).sum() / sw
    vc = values - mv
    sxv = (wx * vc).sum()
    syv = (wy * vc).sum()
    det = sxx * syy - sxy * sxy
    if not abs(det) > 0:
        raise FitDegenerate("fit region is degenerate")
    a = (syy * sxv - sxy * syv) / det
    b = (sxx * syv - sxy * sxv) / det
    c = mv - a * mx - b * my
    return a, b, c


def _slope_guess(field_, weights, dx: float, dy: float) -> tuple:
    """Phase slope of a gridded complex field from its lag-one products.

    Immune to wrapping: a frequency error of a whole DFT bin (one turn of
    phase across the frame) is recovered before any unwrapping.
    """
    z = field_ * weights
    gx = (np.conj(z[:, :-1]) * z[:, 1:]).sum()
    gy = (np.conj(z[:-1, :]) * z[1:, :]).sum()
    a = float(np.angle(gx)) / dx if abs(gx) > 0 else 0.0
    b = float(np.angle(gy)) / dy if abs(gy) > 0 else 0.0
    return a, b


def _fit_residual(x, y, residual, weights, amplitude, iterations, slope=(0.0, 0.0)):
    """Unwrap-and-fit loop on a slowly varying wrapped residual.

    ``x``, ``y``, ``residual``, ``weights`` and ``amplitude`` are flat arrays
    of samples with nonzero weight; ``slope`` is an initial guess of the
    residual gradient in rad/px.
    """
    sw = weights.sum()
    if not sw > 0:
        raise FitDegenerate("no weight in the fit region")
    ramp = slope[0] * x + slope[1] * y
    ref = float(np.angle((weights * np.exp(1j * (residual - ramp))).sum()))
    unwrapped = ramp + ref + wrap_angle(residual - ramp - ref)
    a, b, c = _weighted_plane(x, y, unwrapped, weights)
    for _ in range(max(0, iterations - 1)):
        model = a * x + b * y + c
        unwrapped = model + wrap_angle(residual - model)
        a, b, c = _weighted_plane(x, y, unwrapped, weights)
    err = wrap_angle(residual - (a * x + b * y + c))
    weighted_rms = math.sqrt(float((weights * err**2).sum() / sw))
    if weighted_rms > 1.0:
        raise FitDegenerate(f"phase residual {weighted_rms:.2f} rad exceeds 1 rad")
    strong = amplitude > np.median(amplitude)
    rms = math.sqrt(float(np.mean(err[strong] ** 2))) if strong.any() else weighted_rms
    return a, b, c, rms


def fit_phase_plane(
    phase_map: WrappedPhaseMap,
    peak: SpectralPeak,
    mask: Optional[np.ndarray] = None,
    iterations: int = 2,
) -> PhasePlane:
    """Amplitude-weighted least-squares plane through the unwrapped phase.

    The carrier ``2*pi*(fx*x + fy*y)`` of ``peak`` is removed first; the
    remaining slowly varying residual is unwrapped around its weighted
    circular mean, fitted, then unwrapped again around the fitted plane.
    ``rms_residual`` is measured over the samples whose amplitude exceeds
    the median.

    Raises
    ------
    FitDegenerate
        When the weighted RMS residual exceeds 1 rad.
    """
    phase = phase_map.phase
    h, w = phase.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sel = np.ones(phase.shape, dtype=bool) if mask is None else mask > 0
    carrier_a, carrier_b = TWO_PI * peak.fx, TWO_PI * peak.fy
    x, y = xs[sel], ys[sel]
    residual = wrap_angle(phase[sel] - (carrier_a * x + carrier_b * y))
    amp = phase_map.amplitude[sel]
    weights = amp if mask is None else amp * mask[sel]
    demod = phase_map.amplitude * np.exp(1j * (phase - (carrier_a * xs + carrier_b * ys)))
    slope = _slope_guess(demod, sel if mask is None else np.where(sel, mask, 0.0), 1.0, 1.0)
    a, b, c, rms = _fit_residual(x, y, residual, weights, amp, iterations, slope)
    return PhasePlane(a + carrier_a, b + carrier_b, float(wrap_angle(c)), rms, float(x.size))


def baseband_field(spec: Spectrum, peak: SpectralPeak, sigma_f: float, support: float = 5.0):
    """Band-passed lobe of ``peak`` demodulated to baseband on a coarse grid.

    Only the spectral block within ``support * sigma_f`` of the peak bin is
    transformed back. The band-limited filtered field is exactly resampled on
    the grid ``x = j * W / M``, ``y = l * H / N`` (``M x N`` the block size),
    with the carrier of the integer peak bin removed.

    Returns
    -------
    x, y : ndarray
        Sample coordinates (1D, along columns and rows).
    field : ndarray (N, M) complex
        ``filtered(x, y) * exp(-2j*pi*(kx*x/W + ky*y/H))``.
    carrier : tuple
        ``(kx / W, ky / H)`` removed from the field, in cycles per pixel.
    """
    h, w = spec.shape
    kx0 = int(round(peak.fx * w))
    ky0 = int(round(peak.fy * h))
    half_x = int(math.ceil(support * sigma_f * w)) + 1
    half_y = int(math.ceil(support * sigma_f * h)) + 1
    mx = min(w, sfft.next_fast_len(2 * half_x + 1))
    my = min(h, sfft.next_fast_len(2 * half_y + 1))
    if mx == w and my == h:
        mx, my = w, h
    dx = np.fft.fftfreq(mx, 1.0 / mx).astype(int)
    dy = np.fft.fftfreq(my, 1.0 / my).astype(int)
    cols = (kx0 + dx) % w
    rows = (ky0 + dy) % h
    fx = (kx0 + dx) / w
    fy = (ky0 + dy) / h
    gx = np.exp(-((fx - peak.fx) ** 2) / (2 * sigma_f**2))
    gy = np.exp(-((fy - peak.fy) ** 2) / (2 * sigma_f**2))
    block = spec.data[np.ix_(rows, cols)] * (gy[:, None] * gx[None, :])
    field_ = sfft.ifft2(block, workers=1) * ((mx * my) / (w * h))
    x = np.arange(mx) * (w / mx)
    y = np.arange(my) * (h / my)
    return x, y, field_, (kx0 / w, ky0 / h)


def _fit_baseband(spec, peak, sigma_f, margin_px, iterations, fit_weight=None):
    h, w = spec.shape
    x1, y1, field_, (cx, cy) = baseband_field(spec, peak, sigma_f)
    xs, ys = np.meshgrid(x1, y1)
    m = max(0.0, margin_px)
    sel = (xs >= m) & (xs <= w - 1 - m) & (ys >= m) & (ys <= h - 1 - m)
    extra = None
    if fit_weight is not None:
        extra = fit_weight[np.clip(np.rint(ys).astype(int), 0, h - 1), np.clip(np.rint(xs).astype(int), 0, w - 1)]
        sel &= extra > 0
    if sel.sum() < 16:
        raise FitDegenerate("fewer than 16 samples in the fit region")
    x, y = xs[sel], ys[sel]
    da, db = TWO_PI * (peak.fx - cx), TWO_PI * (peak.fy - cy)
    amp = np.abs(field_[sel])
    weights = amp if extra is None else amp * extra[sel]
    residual = wrap_angle(np.angle(field_[sel]) - (da * x + db * y))
    step_x = x1[1] - x1[0] if x1.size > 1 else 1.0
    step_y = y1[1] - y1[0] if y1.size > 1 else 1.0
    grid_w = sel.astype(np.float64) if extra is None else np.where(sel, extra, 0.0)
    demod = field_ * np.exp(-1j * (da * xs + db * ys))
    slope = _slope_guess(demod, grid_w, step_x, step_y)
    a, b, c, rms = _fit_residual(x, y, residual, weights, amp, iterations, slope)
    a += TWO_PI * peak.fx
    b += TWO_PI * peak.fy
    cell = step_x * step_y
    return PhasePlane(a, b, float(wrap_angle(c)), rms, float(x.size * cell))


def _fit_mask(shape, margin_px: float) -> Optional[np.ndarray]:
    h, w = shape
    m = int(math.ceil(margin_px))
    if m <= 0 or 2 * m >= min(h, w) - 8:
        return None
    mask = np.zeros(shape, dtype=np.float64)
    mask[m : h - m, m : w - m] = 1.0
    return mask


def analyze(
    img,
    settings: Optional[AnalysisSettings] = None,
    timings: Optional[dict] = None,
    window: Optional[np.ndarray] = None,
    fit_weight: Optional[np.ndarray] = None,
) -> PhaseResult:
    """Spectrum, lobe detection, band-pass and plane fit for both lattice axes.

    Parameters
    ----------
    img : ndarray (height, width)
    settings : AnalysisSettings, optional
    timings : dict, optional
        Accumulates seconds spent in the ``spectrum``, ``filter`` and ``fit``
        stages (the default coarse-grid path folds filtering into ``fit``).
    window : ndarray, optional
        Explicit apodization window (see :func:`forward_spectrum`); implies
        no border exclusion in the fit.
    fit_weight : ndarray, optional
        Per-pixel factor in [0, 1] multiplying the amplitude weights of the
        plane fit, e.g. to leave non-lattice features out.
    """
    settings = settings or AnalysisSettings()
    img = check_image(img, min_size=32)
    with _timed(timings, "spectrum"):
        spec = forward_spectrum(img, apodize=settings.apodize, window=window)
        peaks = find_lattice_peaks(spec, settings.period_range)

    planes = []
    amplitude = None
    for peak in peaks:
        sigma_f = settings.sigma_f or settings.sigma_ratio * peak.frequency
        apodized = settings.apodize or window is not None
        margin = 0.0 if apodized else settings.fit_margin / peak.frequency
        if settings.full_resolution:
            with _timed(timings, "filter"):
                phase_map = wrapped_phase(gaussian_bandpass(spec, peak, sigma_f))
            with _timed(timings, "fit"):
                mask = _fit_mask(img.shape, margin) if margin > 0 else None
                if fit_weight is not None:
                    mask = fit_weight if mask is None else mask * fit_weight
                planes.append(fit_phase_plane(phase_map, peak, mask, settings.refine_iterations))
            amplitude = phase_map.amplitude if amplitude is None else amplitude + phase_map.amplitude
        else:
            with _timed(timings, "fit"):
                planes.append(_fit_baseband(spec, peak, sigma_f, margin, settings.refine_iterations, fit_weight))

    p1, p2 = planes
    g1, g2 = p1.gradient_norm, p2.gradient_norm
    if abs(abs(math.atan2(p1.b, p1.a) - math.atan2(p2.b, p2.a)) % math.pi - math.pi / 2) > 0.35:
        raise NonOrthogonalLattice("fitted phase gradients are not orthogonal")
    period_px = 0.5 * (TWO_PI / g1 + TWO_PI / g2)
    orientation = fold_quarter(math.atan2(p1.b, p1.a))
    return PhaseResult(
        p1,
        p2,
        period_px,
        orientation,
        peaks=peaks,
        shape=img.shape,
        amplitude=amplitude,
    )
