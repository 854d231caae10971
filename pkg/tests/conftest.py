import sys

import pytest

from odcmri.image_model import default_brain_phantom, synthesize_phantom


@pytest.fixture(scope="session")
def phantom():
    """Noiseless default brain phantom: (spec, volume, truth maps)."""
    spec = default_brain_phantom()
    volume, truth = synthesize_phantom(spec)
    return spec, volume, truth


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        passed, line = results[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:2d}. {line}")
