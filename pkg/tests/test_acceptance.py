"""Acceptance criteria 1-11, one test each.

Run with ``pytest tests/test_acceptance.py -s`` to see one PASS/FAIL line per
criterion. Runtime budgets are printed next to the measured time but only
the numerical tolerances decide the outcome.
"""

import pytest

from muller_ratchet.acceptance import CRITERIA

RESULTS = {}


@pytest.fixture(scope="module", autouse=True)
def summary():
    yield
    if RESULTS:
        print("\nacceptance summary")
        for n in sorted(RESULTS):
            print(RESULTS[n].line())
        print(f"{sum(r.passed for r in RESULTS.values())}/{len(RESULTS)} criteria passed")


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA), ids=lambda n: f"criterion{n:02d}")
def test_criterion(number):
    res = CRITERIA[number]()
    RESULTS[number] = res
    print(res.line())
    assert res.passed, res.line()
