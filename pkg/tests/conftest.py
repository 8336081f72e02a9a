import os
import sys

import pytest
import torch

sys.path.insert(0, os.path.dirname(__file__))

# Numerical checks run in double precision; float32 paths set their dtype explicitly.
torch.set_default_dtype(torch.float64)
torch.set_num_threads(1)


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run even when output is captured
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
