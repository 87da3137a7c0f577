import doctest

import pytest

import phasemark.pose
from phasemark.guidelines import (
    CHECKS,
    FAIL,
    PASS,
    WARN,
    GuidelineCheck,
    GuidelineReport,
    check_megarena_periods,
    check_pixel_size,
    check_small_marker_periods,
    evaluate,
)


@pytest.mark.parametrize(
    "ppp, status",
    [(6.9, WARN), (7.0, PASS), (10.0, PASS), (15.0, PASS), (15.1, WARN), (4, WARN)],
)
def test_pixel_size_window(ppp, status):
    assert check_pixel_size(ppp).status == status


@pytest.mark.parametrize(
    "periods, status, phrase",
    [(9, WARN, "below the minimum of 17"), (17, PASS, "meets"), (20, PASS, "good choice"), (30, PASS, "good choice"), (40, PASS, "meets")],
)
def test_small_marker_periods(periods, status, phrase):
    check = check_small_marker_periods("hpcode", periods)
    assert check.status == status
    assert phrase in check.message


@pytest.mark.parametrize("n, visible, status", [(8, 26, FAIL), (8, 27, PASS), (4, 15, PASS), (4, 14.9, FAIL)])
def test_megarena_periods(n, visible, status):
    assert check_megarena_periods("megarena", n, visible).status == status


def test_not_applicable_checks_pass():
    assert check_small_marker_periods("megarena", 5).status == PASS
    assert "not applicable" in check_megarena_periods("stamp", 8, 3).message


def test_evaluate_order_and_status():
    report = evaluate("megarena", pixels_per_period=5, n=8, visible_periods=20)
    assert [c.name for c in report.checks] == list(CHECKS)
    assert report["pixel_size"].status == WARN
    assert report["megarena_periods"].status == FAIL
    assert report.status == FAIL
    assert evaluate("stamp", 10, 25).status == PASS


def test_disabled_checks_are_skipped():
    report = evaluate("hpcode", 5, 9, enabled=("megarena_periods",))
    assert "pixel_size" not in report
    assert report.status == PASS
    assert evaluate("hpcode", 5, 9, enabled=()).checks == []
    with pytest.raises(ValueError):
        evaluate("hpcode", enabled=("focus",))


def test_report_serialization_and_lookup():
    report = evaluate("hpcode", 10, 20)
    rows = report.as_list()
    assert {r["name"] for r in rows} == set(CHECKS)
    assert all(set(r) == {"name", "status", "message"} for r in rows)
    with pytest.raises(KeyError):
        report["focus"]


def test_duplicate_checks_rejected():
    check = GuidelineCheck("pixel_size", PASS, "ok")
    with pytest.raises(ValueError):
        GuidelineReport([check, check])


def test_pose_docstring_examples():
    result = doctest.testmod(phasemark.pose)
    assert result.attempted > 0 and result.failed == 0
