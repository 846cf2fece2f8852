"""The full verification battery, one test per criterion.

Each test prints a single pass/fail line (visible with ``pytest -s`` or in
the captured output of a failure).
"""

import pytest

from centilab.battery import CRITERIA, Workspace, run_criterion


@pytest.fixture(scope="module")
def workspace():
    return Workspace("small")


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, workspace, capsys):
    res = run_criterion(number, workspace)
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.line()
