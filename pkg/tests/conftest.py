import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mcecontrol import fixture_path, load_csv  # noqa: E402


@pytest.fixture(scope="session")
def quesenberry():
    return load_csv(fixture_path("quesenberry.csv"))


@pytest.fixture(scope="session")
def madawaska():
    return load_csv(fixture_path("madawaska.csv"))


@pytest.fixture(scope="session")
def madawaska_bold():
    text = fixture_path("madawaska_bold.txt").read_text()
    return {int(t) for line in text.splitlines() if not line.startswith("#") for t in line.split()}


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
