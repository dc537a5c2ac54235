import json
import math

import numpy as np
import pytest

from verification import (
    GOLDEN_PATH,
    INVARIANT_SUITES,
    SUITES,
    jsonable,
    manufactured_cases,
    manufactured_errors,
    observed_orders,
    run_suite,
    suite_conjugation,
    suite_golden_decisions,
    suite_group_laws,
    suite_isometry,
    suite_pipeline,
)


def test_invariant_suites_pass_on_small_draws(rng):
    for result in (
        suite_conjugation(rng, n_params=20, n_functions=2, n_points=5),
        suite_group_laws(rng, n_params=10),
        suite_pipeline(rng, n_params=10),
        suite_isometry(rng, n_cases=3, J=8000),
    ):
        assert result.passed, result.failures


def test_golden_suite_reads_every_entry():
    result = suite_golden_decisions(np.random.default_rng(0))
    assert result.passed, result.failures
    assert result.metrics["entries"] == len(json.loads(GOLDEN_PATH.read_text())["entries"])


def test_golden_suite_reports_a_wrong_expectation(tmp_path):
    document = json.loads(GOLDEN_PATH.read_text())
    entry = next(e for e in document["entries"] if "generates" in e["expected"])
    entry["expected"]["generates"] = not entry["expected"]["generates"]
    broken = tmp_path / "decisions.json"
    broken.write_text(json.dumps({"entries": [entry]}))
    result = suite_golden_decisions(np.random.default_rng(0), path=broken)
    assert not result.passed
    assert entry["name"] in result.failures[0]


def test_manufactured_bessel_case_is_second_order():
    case = next(c for c in manufactured_cases() if c.name == "bessel")
    errors = manufactured_errors(case, [64, 128, 256])
    assert errors[-1] < errors[0]
    assert observed_orders(errors)[-1] > 1.5


def test_observed_orders():
    assert observed_orders([4.0, 1.0, 0.25]) == [2.0, 2.0]
    assert observed_orders([1.0, 0.0]) == [math.inf]


def test_run_suite_is_reproducible():
    first = run_suite("golden_decisions", seed=7)
    second = run_suite("golden_decisions", seed=7)
    assert first.to_dict() == second.to_dict()
    assert first.elapsed >= 0.0


def test_run_suite_unknown_name():
    with pytest.raises(KeyError):
        run_suite("nonexistent", seed=1)


def test_jsonable_converts_numpy_values():
    document = jsonable({"a": np.float64(1.5), "b": np.arange(3), 2: (np.int64(4), float("nan")),
                         "z": 1 + 2j})
    assert document == {"a": 1.5, "b": [0, 1, 2], "2": [4, None], "z": [1.0, 2.0]}
    json.dumps(document)


def test_invariant_suites_are_registered():
    assert set(INVARIANT_SUITES) <= set(SUITES)


@pytest.mark.slow
@pytest.mark.parametrize("name", sorted(set(SUITES) - set(INVARIANT_SUITES)))
def test_numerical_suites_pass(name):
    result = run_suite(name, seed=20240601, threads=2)
    assert result.passed, result.failures
