import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dlsolve.cfr import solve_exact  # noqa: E402
from dlsolve.games import build_game, mini_nlfh  # noqa: E402


@pytest.fixture(scope="session")
def rps():
    return build_game("rps_plus")


@pytest.fixture(scope="session")
def kuhn():
    return build_game("kuhn")


@pytest.fixture(scope="session")
def leduc():
    return build_game("leduc")


@pytest.fixture(scope="session")
def nlfh():
    return build_game(mini_nlfh())


@pytest.fixture(scope="session")
def kuhn_exact(kuhn):
    return solve_exact(kuhn)


@pytest.fixture(scope="session")
def rps_exact(rps):
    return solve_exact(rps)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
