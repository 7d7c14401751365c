import numpy as np
import pytest

from gmrlm.grid import GridSpec, PmlProfile, ScattererField, build_receivers


@pytest.fixture
def profile():
    return PmlProfile()


@pytest.fixture
def grid33(profile):
    return GridSpec.around_omega(33, profile)


@pytest.fixture
def receivers40():
    return build_receivers(40, 1.0)


def bump(amp=0.3, width=5.0):
    return lambda X, Y: amp * np.exp(-width * (X**2 + Y**2))


@pytest.fixture
def bump_q(grid33):
    return ScattererField.from_function(grid33, bump())


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.getreports(outcome):
            if rep.when != "call" or "test_acceptance.py::test_criterion_" not in rep.nodeid:
                continue
            name = rep.nodeid.split("::")[-1]
            detail = dict(rep.user_properties).get("detail", "")
            lines.append((name, f"{name}: {'PASS' if rep.passed else 'FAIL'}  {detail}".rstrip()))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, text in sorted(lines):
            terminalreporter.write_line(text)
