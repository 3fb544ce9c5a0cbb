import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from shapes import stamped_sphere  # noqa: E402


@pytest.fixture(scope="session")
def small_stamped():
    """Four discs and four rectangles on a 5120-face sphere."""
    return stamped_sphere(subdivisions=4, specs=[("disc", 0.2, 1.0)] * 4
                          + [("rectangle", 0.3, 2.0)] * 4)


@pytest.fixture(scope="session")
def bench_sphere():
    """The 20480-face benchmark sphere (layout 0)."""
    return stamped_sphere(subdivisions=5, layout=0)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
