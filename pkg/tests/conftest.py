from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_F(rng, n=None, d=2, spread=0.3):
    """Random deformation gradients with positive determinant."""
    shape = () if n is None else (n,)
    F = np.eye(d) + spread * rng.standard_normal(shape + (d, d))
    bad = np.linalg.det(F) <= 0.2
    while np.any(bad):
        F[bad] = np.eye(d) + spread * rng.standard_normal((int(np.sum(bad)), d, d)) if shape else np.eye(d)
        bad = np.linalg.det(F) <= 0.2
    return F


def observed_order(errors, hs):
    errors, hs = np.asarray(errors), np.asarray(hs)
    return np.polyfit(np.log(hs), np.log(errors), 1)[0]


ACCEPTANCE: dict = {}


def record_criterion(number: int, title: str, passed: bool, detail: str) -> str:
    """Store and print one acceptance line; the terminal summary repeats them in order."""
    line = f"CRITERION {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
