import math

import numpy as np
import pytest

from phasemark.patterngen import (
    HpCodeSpec,
    MegarenaSpec,
    RenderPose,
    StampSpec,
    layout_hpcode,
    layout_megarena,
    layout_stamp,
    render,
    view_pose,
)


@pytest.fixture(scope="session")
def megarena8():
    spec = MegarenaSpec(n=8)
    return spec, layout_megarena(spec)


@pytest.fixture(scope="session")
def hp17():
    return layout_hpcode(HpCodeSpec(17, marker_id=5))


@pytest.fixture(scope="session")
def stamp17():
    return layout_stamp(StampSpec(17, marker_id=5))


def render_megarena(layout, x, y, theta, size=512, ppp=10.0, **kwargs):
    return render(layout, view_pose(x, y, theta, ppp, origin=layout.origin), size, **kwargs)


def small_frame(periods_across, ppp=10.0):
    return int(math.ceil((1.25 * periods_across + 4) * ppp))


def angle_diff(a, b):
    return (a - b + math.pi) % (2 * math.pi) - math.pi


ACCEPTANCE_LINES = []


def report_criterion(number, title, passed, detail):
    """Record and print one acceptance line; returns ``passed``."""
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
