"""Shared pytest configuration.

The interop tests against the alignment pipeline get one visible
status line each, matching the pipeline's own acceptance summary.
"""

from __future__ import annotations


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_interop" not in report.nodeid:
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
