"""Design-rule diagnostics for marker and imaging parameters.

Three independent checks, each of which can be switched off:

``pixel_size``
    7 to 15 pixels per period keeps the spectral lobes sharp and the dot
    edges well sampled.
``small_marker_periods``
    HP codes and stamps need at least 17 periods across; 20 to 30 is a good
    choice.
``megarena_periods``
    A Megarena view needs ``3 * (n + 1)`` visible periods per axis to read a
    full code window.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

PASS, WARN, FAIL = "pass", "warn", "fail"
CHECKS = ("pixel_size", "small_marker_periods", "megarena_periods")

PIXEL_SIZE_RANGE = (7.0, 15.0)
SMALL_MARKER_MIN = 17
SMALL_MARKER_GOOD = (20, 30)


@dataclass(frozen=True)
class GuidelineCheck:
    name: str
    status: str
    message: str

    def as_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "message": self.message}


@dataclass
class GuidelineReport:
    checks: list = field(default_factory=list)

    def __post_init__(self):
        names = [c.name for c in self.checks]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate guideline checks: {names}")

    @property
    def status(self) -> str:
        statuses = {c.status for c in self.checks}
        return FAIL if FAIL in statuses else WARN if WARN in statuses else PASS

    def __getitem__(self, name: str) -> GuidelineCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(c.name == name for c in self.checks)

    def as_list(self) -> list:
        return [c.as_dict() for c in self.checks]


def check_pixel_size(pixels_per_period: float) -> GuidelineCheck:
    lo, hi = PIXEL_SIZE_RANGE
    if pixels_per_period < lo:
        return GuidelineCheck("pixel_size", WARN, f"{pixels_per_period:g} px/period is below 7 px/period")
    if pixels_per_period > hi:
        return GuidelineCheck("pixel_size", WARN, f"{pixels_per_period:g} px/period is above 15 px/period")
    return GuidelineCheck("pixel_size", PASS, f"{pixels_per_period:g} px/period is within 7-15")


def check_small_marker_periods(kind: str, periods_across: Optional[int]) -> GuidelineCheck:
    if kind not in ("hpcode", "stamp") or periods_across is None:
        return GuidelineCheck("small_marker_periods", PASS, f"not applicable to {kind}")
    lo, hi = SMALL_MARKER_GOOD
    if periods_across < SMALL_MARKER_MIN:
        return GuidelineCheck(
            "small_marker_periods", WARN, f"{periods_across} periods is below the minimum of {SMALL_MARKER_MIN}"
        )
    if lo <= periods_across <= hi:
        return GuidelineCheck(
            "small_marker_periods", PASS, f"{periods_across} periods: {lo} to {hi} periods is a good choice"
        )
    return GuidelineCheck("small_marker_periods", PASS, f"{periods_across} periods meets the minimum of {SMALL_MARKER_MIN}")


def check_megarena_periods(kind: str, n: Optional[int], visible_periods: Optional[float]) -> GuidelineCheck:
    if kind != "megarena" or n is None or visible_periods is None:
        return GuidelineCheck("megarena_periods", PASS, f"not applicable to {kind}")
    need = 3 * (n + 1)
    if visible_periods < need:
        return GuidelineCheck(
            "megarena_periods", FAIL, f"{visible_periods:g} visible periods, n={n} needs at least {need}"
        )
    return GuidelineCheck("megarena_periods", PASS, f"{visible_periods:g} visible periods >= {need} for n={n}")


def evaluate(
    kind: str,
    pixels_per_period: Optional[float] = None,
    periods_across: Optional[int] = None,
    n: Optional[int] = None,
    visible_periods: Optional[float] = None,
    enabled=CHECKS,
) -> GuidelineReport:
    """Run every enabled check once, in the fixed order of ``CHECKS``.

    Checks that do not apply to ``kind``, or whose input is unknown, pass
    with a "not applicable" message so every enabled check is reported.
    """
    unknown = set(enabled) - set(CHECKS)
    if unknown:
        raise ValueError(f"unknown guideline checks: {sorted(unknown)}")
    checks = []
    for name in CHECKS:
        if name not in enabled:
            continue
        if name == "pixel_size":
            if pixels_per_period is None:
                checks.append(GuidelineCheck(name, PASS, "pixel size unknown"))
            else:
                checks.append(check_pixel_size(pixels_per_period))
        elif name == "small_marker_periods":
            checks.append(check_small_marker_periods(kind, periods_across))
        else:
            checks.append(check_megarena_periods(kind, n, visible_periods))
    return GuidelineReport(checks)
