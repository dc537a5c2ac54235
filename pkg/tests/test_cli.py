import csv
import json

import pytest

from cli import EXIT_CONFIG, EXIT_NOT_GENERATING, EXIT_OK, RunConfig, main
from errors import ConfigError
from verification import GOLDEN_PATH

ANALYZE_GOLDEN = GOLDEN_PATH.parent / "analyze_potential.json"


@pytest.fixture(autouse=True)
def isolated_env(monkeypatch, tmp_path):
    monkeypatch.setenv("DEGENOP_DATABASE_URL", f"sqlite:///{tmp_path / 'ledger.db'}")
    monkeypatch.delenv("DEGENOP_SEED", raising=False)
    monkeypatch.delenv("DEGENOP_THREADS", raising=False)


@pytest.fixture
def write_config(tmp_path):
    def write(document, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document))
        return str(path)
    return write


@pytest.fixture
def potential_document(potential_params):
    return {"operator": potential_params.to_dict(), "space": {"p": 2.0, "m": 0.0}}


@pytest.fixture
def bessel_document(params_factory):
    return {"operator": params_factory(c=2.0).to_dict(), "space": {"p": 2.0, "m": 0.0},
            "bc": "oblique", "mesh": {"Y": 8.0, "J": 32}}


def _report(out, command):
    return json.loads((out / f"{command}.json").read_text())


def test_analyze_potential_operator(tmp_path, write_config, potential_document):
    out = tmp_path / "out"
    assert main(["analyze", "--config", write_config(potential_document), "--out", str(out)]) == EXIT_OK
    report = _report(out, "analyze")
    assert report["command"] == "analyze"
    assert report["schema_version"] == "1.0"
    result = report["result"]
    assert result["indicial"]["s1"] == pytest.approx(-1.5)
    assert result["indicial"]["s2"] == pytest.approx(0.5)
    assert result["generation"]["dirichlet"]["window"] == pytest.approx([-1.5, 2.5])
    assert result["generation"]["dirichlet"]["generates"]
    assert result["generation"]["oblique"]["error"] == "ParameterError"


def _assert_matches(expected, actual, path="result"):
    if isinstance(expected, dict):
        assert isinstance(actual, dict), path
        for key, value in expected.items():
            assert key in actual, f"{path}.{key} missing"
            _assert_matches(value, actual[key], f"{path}.{key}")
    elif isinstance(expected, list):
        assert isinstance(actual, list) and len(actual) == len(expected), path
        for index, (a, b) in enumerate(zip(expected, actual)):
            _assert_matches(a, b, f"{path}[{index}]")
    elif isinstance(expected, float):
        assert actual == pytest.approx(expected, abs=1e-12), path
    else:
        assert actual == expected, path


def test_analyze_document_matches_golden(tmp_path, write_config, potential_document):
    out = tmp_path / "out"
    assert main(["analyze", "--config", write_config(potential_document), "--out", str(out)]) == EXIT_OK
    result = _report(out, "analyze")["result"]
    _assert_matches(json.loads(ANALYZE_GOLDEN.read_text()), result)
    assert "alternative_domain" not in result


def test_analyze_without_generating_domain(tmp_path, write_config, potential_document):
    document = {**potential_document, "space": {"p": 2.0, "m": 4.0}}
    out = tmp_path / "out"
    assert main(["analyze", "--config", write_config(document), "--out", str(out)]) == EXIT_OK
    result = _report(out, "analyze")["result"]
    assert result["domain_spec"] is None
    assert result["pipeline"]["mode"] == "dirichlet"


def test_reduce_reports_single_kelvin_step(tmp_path, write_config, params_factory):
    params = params_factory(dim_x=1, alpha1=1.0, alpha2=0.0, Q=[[1.0]], c=1.0)
    document = {"operator": params.to_dict(), "space": {"p": 2.0, "m": 0.0}}
    out = tmp_path / "out"
    assert main(["reduce", "--config", write_config(document), "--out", str(out)]) == EXIT_OK
    result = _report(out, "reduce")["result"]
    assert result["mode"] == "oblique"
    assert [step["kind"] for step in result["steps"]] == ["kelvin"]
    assert result["steps"][0]["beta"] == pytest.approx(0.5)
    assert result["target"]["params"]["alpha1"] == pytest.approx(2.0 / 3.0)


def test_unknown_key_is_a_config_error(tmp_path, write_config, potential_document):
    out = tmp_path / "out"
    status = main(["analyze", "--config", write_config({**potential_document, "colour": "blue"}),
                   "--out", str(out)])
    assert status == EXIT_CONFIG
    assert not (out / "analyze.json").exists()


def test_missing_config_file(tmp_path):
    assert main(["analyze", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_non_generating_solve(tmp_path, write_config, potential_document):
    document = {**potential_document, "space": {"p": 2.0, "m": 4.0}, "bc": "dirichlet"}
    out = tmp_path / "out"
    assert main(["solve", "--config", write_config(document), "--out", str(out)]) == EXIT_NOT_GENERATING
    assert not (out / "solution.csv").exists()


def test_oblique_potential_solve_is_not_generating(tmp_path, write_config, potential_document):
    document = {**potential_document, "bc": "oblique"}
    status = main(["solve", "--config", write_config(document), "--out", str(tmp_path / "out")])
    assert status == EXIT_NOT_GENERATING


def test_solve_writes_csv(tmp_path, write_config, bessel_document):
    out = tmp_path / "out"
    assert main(["solve", "--config", write_config(bessel_document), "--out", str(out)]) == EXIT_OK
    with open(out / "solution.csv", newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["x", "y", "value"]
    assert len(rows) == 33
    assert float(rows[-1][1]) == pytest.approx(8.0)
    assert float(rows[-1][2]) == 0.0
    result = _report(out, "solve")["result"]
    assert result["method"] == "direct-1d"
    assert result["residual"] <= 1e-8
    assert result["solution_file"] == "solution.csv"
    assert result["trace"]["quantity"] == "D_y u"


def test_solve_json_format_with_complex_lambda(tmp_path, write_config, bessel_document):
    out = tmp_path / "out"
    document = {**bessel_document, "lambda": [1.0, 1.0]}
    assert main(["solve", "--config", write_config(document), "--out", str(out), "--format", "json"]) == EXIT_OK
    solution = json.loads((out / "solution.json").read_text())
    assert len(solution["value"]) == len(solution["value_imag"]) == 32


def test_solve_with_parabolic_block(tmp_path, write_config, bessel_document):
    out = tmp_path / "out"
    document = {**bessel_document, "time": {"tau": 0.1, "n_steps": 5}}
    assert main(["solve", "--config", write_config(document), "--out", str(out)]) == EXIT_OK
    report = _report(out, "solve")
    assert report["result"]["parabolic"]["n_steps"] == 5
    assert "parabolic_seconds" in report["timings"]


def test_reports_are_deterministic_apart_from_timings(tmp_path, write_config, bessel_document):
    config = write_config(bessel_document)
    documents = []
    for name in ("a", "b"):
        assert main(["solve", "--config", config, "--out", str(tmp_path / name), "--seed", "3"]) == EXIT_OK
        document = _report(tmp_path / name, "solve")
        document.pop("timings")
        documents.append(document)
    assert documents[0] == documents[1]
    assert (tmp_path / "a" / "solution.csv").read_text() == (tmp_path / "b" / "solution.csv").read_text()


def test_seed_precedence(tmp_path, write_config, potential_document, monkeypatch):
    config = write_config({**potential_document, "seed": 3})
    main(["analyze", "--config", config, "--out", str(tmp_path / "flag"), "--seed", "5"])
    assert _report(tmp_path / "flag", "analyze")["seed"] == 5
    main(["analyze", "--config", config, "--out", str(tmp_path / "config")])
    assert _report(tmp_path / "config", "analyze")["seed"] == 3
    monkeypatch.setenv("DEGENOP_SEED", "11")
    main(["analyze", "--config", write_config(potential_document, "plain.json"), "--out", str(tmp_path / "env")])
    assert _report(tmp_path / "env", "analyze")["seed"] == 11
    monkeypatch.delenv("DEGENOP_SEED")
    main(["analyze", "--config", write_config(potential_document, "plain.json"), "--out", str(tmp_path / "dflt")])
    assert _report(tmp_path / "dflt", "analyze")["seed"] == 20240601


def test_bad_thread_count(tmp_path, write_config, potential_document):
    status = main(["analyze", "--config", write_config(potential_document), "--out", str(tmp_path),
                   "--threads", "0"])
    assert status == EXIT_CONFIG


def test_verify_single_suite(tmp_path):
    out = tmp_path / "out"
    assert main(["verify", "--suite", "golden_decisions", "--out", str(out)]) == EXIT_OK
    suite_report = json.loads((out / "verify-golden_decisions.json").read_text())
    assert suite_report["result"]["passed"]
    assert _report(out, "verify")["result"]["suites"] == {"golden_decisions": True}


def test_history_counts_runs(tmp_path, write_config, potential_document, capsys):
    config = write_config(potential_document)
    out = str(tmp_path / "out")
    main(["analyze", "--config", config, "--out", out])
    main(["reduce", "--config", config, "--out", out])
    main(["analyze", "--config", write_config({"operator": {}}, "bad.json"), "--out", out])
    capsys.readouterr()
    assert main(["history", "--out", out, "--limit", "2"]) == EXIT_OK
    history = json.loads(capsys.readouterr().out)
    assert history["total_runs"] == 3
    assert history["per_command"] == {"analyze": 2, "reduce": 1}
    assert history["failures"] == 1
    assert len(history["recent"]) == 2


def test_run_config_validation(potential_params):
    with pytest.raises(ConfigError):
        RunConfig.from_document("analyze", {"operator": potential_params.to_dict()})
    with pytest.raises(ConfigError):
        RunConfig.from_document("verify", {"suites": ["bogus"]})
    with pytest.raises(ConfigError):
        RunConfig.from_document("solve", {"operator": potential_params.to_dict(), "space": {"p": 2, "m": 0},
                                          "bc": "dirichlet", "mesh": {"Y": 8.0, "n_x": 16}})
    config = RunConfig.from_document("analyze", {"operator": potential_params.to_dict(),
                                                 "space": {"p": 2, "m": 0}})
    assert config.bc.mode == "dirichlet"
    assert len(config.config_hash) == 64


@pytest.mark.slow
def test_selftest_passes(tmp_path):
    out = tmp_path / "out"
    assert main(["selftest", "--out", str(out)]) == EXIT_OK
    assert _report(out, "selftest")["result"]["passed"]
