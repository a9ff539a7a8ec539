import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from maxcon_rl.model import Dataset  # noqa: E402


def line_dataset(points, epsilon=0.1):
    """Line data from (a_raw, b) pairs."""
    pts = np.asarray(points, dtype=float)
    A = np.column_stack([pts[:, 0], np.ones(len(pts))])
    return Dataset(A, pts[:, 1], epsilon, "line2d")


@pytest.fixture
def three_point():
    # residuals at the minimax fit theta = (0, 0.5) are all 0.5
    return line_dataset([(0, 0), (1, 0), (0.5, 1)])


@pytest.fixture
def four_plus_one():
    # four collinear points on b = 0.5 a + 0.2 and one gross outlier
    return line_dataset([(-1, -0.3), (-0.2, 0.1), (0.4, 0.4), (1, 0.7), (0.1, 3.0)])


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for key in sorted(REPORT):
            terminalreporter.write_line(REPORT[key])
