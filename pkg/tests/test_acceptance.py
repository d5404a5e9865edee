"""The ten acceptance criteria at their stated tolerances, one pass/fail line each."""
import numpy as np
import pytest

from cvnoncl import acceptance

UNATTAINABLE = {
    1: "p = 0.9 keeps 2e-3 of its mass above 60 levels, so F(x, x) is off by 6e-3 at that cutoff; "
    "about 264 levels are needed for 1e-6",
}


def _case(n):
    if n in UNATTAINABLE:
        return pytest.param(n, marks=pytest.mark.xfail(strict=True, reason=UNATTAINABLE[n]), id=f"criterion-{n:02d}")
    return pytest.param(n, id=f"criterion-{n:02d}")


@pytest.mark.parametrize("number", [_case(n) for n in sorted(acceptance.CRITERIA)])
def test_criterion(number, acceptance_log):
    result = acceptance.run_criterion(number)
    line = result.line()
    acceptance_log.append(line)
    print(line)
    assert result.passed, line


def test_closed_form_holds_once_the_cutoff_covers_the_tail():
    passed, summary, _ = acceptance.criterion_1(np.random.default_rng(0), cutoff=300)
    assert passed, summary


def test_selectors():
    assert acceptance.select("gaussian") == [3, 5, 6, 10]
    assert acceptance.select("1, 7") == [1, 7]
    with pytest.raises(ValueError):
        acceptance.select("11")


def test_results_serialise():
    result = acceptance.run_criterion(2)
    doc = result.to_dict()
    assert doc["number"] == 2 and doc["passed"] is True
    assert result.line().startswith("[PASS] criterion  2")
