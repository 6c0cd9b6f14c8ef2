"""Acceptance criteria at their stated tolerances; one PASS/FAIL line each."""
import pytest

from nsflab.acceptance import CHECKS

HEAVY = {1, 4, 5, 6, 8}


@pytest.mark.parametrize("number", [
    pytest.param(k, marks=pytest.mark.slow) if k in HEAVY else k for k in sorted(CHECKS)])
def test_criterion(number, capsys):
    result = CHECKS[number]()
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.summary
