"""Estimator-style wrappers around the analysis pipelines.

Each estimator follows the familiar ``fit`` / ``predict`` / ``get_params``
protocol: constructor arguments are stored verbatim, ``fit`` builds the
lookup tables or geometry that do not depend on any image, and ``predict``
maps a batch of images to an ``(n_images, 3)`` array of poses.
"""

from __future__ import annotations

import time
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_images, check_positive
from .decoder import MegarenaDecoder
from .exceptions import ConfigError, DetectionError, PhasemarkError
from .markerdetect import detect_markers, estimate_small_marker
from .patterngen import MegarenaSpec
from .phaseengine import AnalysisSettings, analyze
from .pose import Pose2D, periods_to_physical, phase_uncertainty

MARKER_KINDS = ("hpcode", "stamp")


def _settings(est) -> AnalysisSettings:
    return AnalysisSettings(
        apodize=bool(est.apodize),
        sigma_f=est.sigma_f,
        full_resolution=bool(getattr(est, "full_resolution", False)),
    )


class LatticePhaseEstimator(TransformerMixin, BaseEstimator):
    """Lattice period, orientation and phase offsets of each image.

    ``transform`` returns rows ``(period_px, orientation, c_u, c_v)`` where
    ``c_u`` and ``c_v`` are the phase-plane offsets at pixel ``(0, 0)``.
    """

    def __init__(self, apodize: bool = False, sigma_f: Optional[float] = None, full_resolution: bool = False):
        self.apodize = apodize
        self.sigma_f = sigma_f
        self.full_resolution = full_resolution

    def fit(self, X=None, y=None):
        if self.sigma_f is not None:
            check_positive(self.sigma_f, "sigma_f")
        self.settings_ = _settings(self)
        return self

    def transform(self, X):
        check_is_fitted(self, "settings_")
        rows = []
        for img in check_images(X, min_size=32):
            r = analyze(img, self.settings_)
            rows.append((r.period_px, r.orientation, r.u_plane.c, r.v_plane.c))
        return np.array(rows, dtype=np.float64).reshape(-1, 4)


class MegarenaPoseEstimator(BaseEstimator):
    """Absolute pose of the image center on a Megarena pattern.

    Parameters
    ----------
    n : int
        Code depth; the pattern spans ``3 * (2**n - 1)`` periods per axis.
    period : float
        Physical dot pitch; predicted translations are in this unit.
    cyclic : bool
        Decode positions modulo the code length (tiled patterns).
    enforce_minimum : bool
        Require ``3 * (n + 1)`` visible periods per axis.
    apodize, sigma_f
        Phase analysis settings.
    """

    def __init__(
        self,
        n: int = 8,
        period: float = 1.0,
        cyclic: bool = False,
        enforce_minimum: bool = True,
        apodize: bool = False,
        sigma_f: Optional[float] = None,
    ):
        self.n = n
        self.period = period
        self.cyclic = cyclic
        self.enforce_minimum = enforce_minimum
        self.apodize = apodize
        self.sigma_f = sigma_f

    def fit(self, X=None, y=None):
        """Build the window lookup tables; images, if given, are ignored."""
        check_positive(self.period, "period")
        try:
            self.spec_ = MegarenaSpec(n=int(self.n), period=float(self.period))
        except (KeyError, PhasemarkError) as exc:
            raise ConfigError(f"invalid Megarena code depth n={self.n}: {exc}") from exc
        self.decoder_ = MegarenaDecoder(
            self.spec_, _settings(self), cyclic=bool(self.cyclic), enforce_minimum=bool(self.enforce_minimum)
        )
        return self

    def estimate(self, img, timings: Optional[dict] = None):
        """Return ``(Pose2D in physical units, AbsolutePose2D, PhaseResult)``."""
        check_is_fitted(self, "decoder_")
        absolute, phase = self.decoder_.estimate(img, timings)
        sigma_xy, sigma_theta = phase_uncertainty(phase)
        pose = periods_to_physical(Pose2D(absolute.x, absolute.y, absolute.theta, sigma_xy, sigma_theta), self.period)
        return pose, absolute, phase

    def predict(self, X) -> np.ndarray:
        """``(n_images, 3)`` array of ``(x, y, theta)``; failed images give NaN rows."""
        check_is_fitted(self, "decoder_")
        rows = []
        for img in check_images(X, min_size=32):
            try:
                pose = self.estimate(img)[0]
                rows.append((pose.x, pose.y, pose.theta))
            except PhasemarkError:
                rows.append((np.nan, np.nan, np.nan))
        return np.array(rows, dtype=np.float64).reshape(-1, 3)


class SmallMarkerPoseEstimator(BaseEstimator):
    """Pose of HP codes or stamps fully visible in the frame.

    Translations are those of the marker center relative to the image
    center, in physical units (``period`` per lattice period).
    """

    def __init__(
        self,
        kind: str = "hpcode",
        periods_across: int = 20,
        border_thickness: int = 1,
        period: float = 1.0,
        exclusion: int = 2,
        apodize: bool = True,
        sigma_f: Optional[float] = None,
    ):
        self.kind = kind
        self.periods_across = periods_across
        self.border_thickness = border_thickness
        self.period = period
        self.exclusion = exclusion
        self.apodize = apodize
        self.sigma_f = sigma_f

    def fit(self, X=None, y=None):
        if self.kind not in MARKER_KINDS:
            raise ConfigError(f"kind must be one of {MARKER_KINDS}, got {self.kind!r}")
        if int(self.periods_across) < 9:
            raise ConfigError(f"periods_across must be >= 9, got {self.periods_across}")
        check_positive(self.period, "period")
        self.settings_ = _settings(self)
        return self

    def estimate(self, img, timings: Optional[dict] = None) -> list:
        """All markers in the frame as ``(Pose2D, SmallMarkerPose)`` pairs.

        Markers whose pose cannot be resolved are skipped; the ones found are
        ordered by marker id, then by position.

        Raises
        ------
        DetectionError
            When no marker region is found.
        PhasemarkError
            The first per-marker error when no marker could be resolved.
        """
        check_is_fitted(self, "settings_")
        img = check_images(img, min_size=32)[0]
        t0 = time.perf_counter()
        regions = detect_markers(img, self.kind, int(self.periods_across))
        if timings is not None:
            timings["detect"] = timings.get("detect", 0.0) + time.perf_counter() - t0
        if not regions:
            raise DetectionError(f"no {self.kind} marker found")
        found = []
        errors = []
        for region in regions:
            try:
                est = estimate_small_marker(
                    img,
                    region,
                    int(self.periods_across),
                    border_thickness=int(self.border_thickness),
                    settings=self.settings_,
                    timings=timings,
                    exclusion=int(self.exclusion),
                )
            except PhasemarkError as exc:
                errors.append(exc)
                continue
            sigma_xy, sigma_theta = phase_uncertainty(est.phase)
            pose = periods_to_physical(Pose2D(est.tx, est.ty, est.theta, sigma_xy, sigma_theta), self.period)
            found.append((pose, est))
        if not found and errors:
            raise errors[0]
        found.sort(key=lambda item: (item[1].marker_id, item[1].center_px[1], item[1].center_px[0]))
        return found

    def predict(self, X) -> np.ndarray:
        """Pose of the first marker of each image; NaN rows where none is found."""
        rows = []
        for img in check_images(X, min_size=32):
            try:
                found = self.estimate(img)
            except PhasemarkError:
                found = []
            rows.append((found[0][0].x, found[0][0].y, found[0][0].theta) if found else (np.nan,) * 3)
        return np.array(rows, dtype=np.float64).reshape(-1, 3)
