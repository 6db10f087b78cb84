"""Shared pytest configuration.

Acceptance tests get one visible status line each so a full run ends
with a scannable pass/fail summary of the headline guarantees.
"""

from __future__ import annotations

import pytest


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    if report.passed:
        status = "PASS"
    elif report.failed:
        status = "FAIL"
    elif report.skipped:
        status = "SKIP"
    else:
        return
    name = report.nodeid.split("::")[-1]
    print(f"\n[acceptance] {status} {name}", flush=True)


@pytest.fixture
def rng_seed():
    return 20240814
