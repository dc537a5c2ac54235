"""
degenop command line: analyze, reduce, solve, verify, selftest and history.

Every run validates its configuration document, writes JSON reports under
--out and appends one row to the run ledger.
"""
import argparse
import csv
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sqlalchemy import func

from app import SCHEMA_VERSION, TOOL_VERSION, Settings, make_session_factory
from errors import ConfigError, DegenopError, NotGeneratingError, ParameterError
from generation_analyzer import (
    BCKind,
    BoundaryCondition,
    RegimeFlag,
    alternative_domain,
    check_generation,
    domain_description,
    regime_flags,
)
from operator_core import (
    GaussianPolynomial,
    OperatorParams,
    SeparableTestFunction,
    SpaceParams,
    TestFunction,
    indicial_roots,
    validate,
)
from solver import ResolventProblem, parabolic_march, solve_problem, truncation_scan
from transform_calculus import reduce_to_canonical
from verification import INVARIANT_SUITES, SUITES, jsonable, run_suite
from weighted_spaces import GradedMesh, GridFunction, boundary_trace, sobolev_term_norms, y_derivatives

logger = logging.getLogger(__name__)

COMMANDS = ("analyze", "reduce", "solve", "verify", "selftest")
CONFIG_KEYS = {"command", "operator", "space", "bc", "mesh", "lambda", "rhs", "time",
               "method", "truncation", "suites", "seed"}
REQUIRED_KEYS = {
    "analyze": ("operator", "space"),
    "reduce": ("operator", "space"),
    "solve": ("operator", "space", "bc"),
    "verify": (),
    "selftest": (),
}
MESH_KEYS = {"Y", "J", "r", "X", "n_x"}
TIME_KEYS = {"tau", "n_steps", "q"}
RHS_KEYS = {"gaussian": {"type", "terms", "a"}, "separable": {"type", "xi", "profile", "a", "phase"}}
EXIT_OK, EXIT_CONFIG, EXIT_NOT_GENERATING, EXIT_NUMERICAL = 0, 1, 2, 3


def _reject_unknown(block: Dict, allowed, where: str) -> None:
    if not isinstance(block, dict):
        raise ConfigError(f"{where} block must be a mapping")
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(unknown)}")


def _parse_lambda(value) -> complex:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise ConfigError(f"lambda must be a number or [re, im], got {value!r}")


def _parse_mesh(block: Optional[Dict], dim_x: int) -> GradedMesh:
    if block is None:
        block = {}
    _reject_unknown(block, MESH_KEYS, "mesh")
    defaults = {"Y": 8.0, "J": 128, "r": 2.0}
    if dim_x == 1:
        defaults.update({"X": float(np.pi), "n_x": 64})
    merged = {**defaults, **block}
    if dim_x == 0 and merged.get("n_x"):
        raise ConfigError("mesh has an x-grid but the operator has N = 0")
    if dim_x == 1 and not merged.get("n_x"):
        raise ConfigError("N = 1 operators need an x-grid (X and n_x)")
    return GradedMesh(merged["Y"], merged["J"], merged["r"], merged.get("X"), merged.get("n_x", 0))


def _default_rhs(dim_x: int) -> TestFunction:
    if dim_x == 0:
        return GaussianPolynomial(0, [(1.0, (), 0.0)], a=1.0)
    return SeparableTestFunction([1.0], [(1.0, 0.0)], a=1.0)


def _parse_rhs(block: Optional[Dict], dim_x: int) -> TestFunction:
    if block is None:
        return _default_rhs(dim_x)
    if not isinstance(block, dict):
        raise ConfigError("rhs block must be a mapping")
    kind = block.get("type", "gaussian")
    if kind not in RHS_KEYS:
        raise ConfigError(f"unknown rhs type {kind!r}")
    _reject_unknown(block, RHS_KEYS[kind], "rhs")
    if kind == "gaussian":
        terms = [(float(c), tuple(mu), float(s)) for c, mu, s in block.get("terms", [[1.0, [0] * dim_x, 0.0]])]
        return GaussianPolynomial(dim_x, terms, a=float(block.get("a", 1.0)))
    xi = block.get("xi", [1.0])
    if len(xi) != dim_x:
        raise ConfigError(f"separable rhs needs {dim_x} frequencies, got {len(xi)}")
    profile = [(float(c), float(s)) for c, s in block.get("profile", [[1.0, 0.0]])]
    return SeparableTestFunction(xi, profile, a=float(block.get("a", 1.0)),
                                 phase=float(block.get("phase", 0.0)))


def _default_bc(params: OperatorParams) -> BoundaryCondition:
    return BoundaryCondition.dirichlet() if params.b != 0 else BoundaryCondition.oblique()


@dataclass
class RunConfig:
    """A validated configuration document for one subcommand."""

    command: str
    document: Dict = field(default_factory=dict)
    params: Optional[OperatorParams] = None
    space: Optional[SpaceParams] = None
    bc: Optional[BoundaryCondition] = None
    mesh: Optional[GradedMesh] = None
    lam: complex = 1.0
    rhs: Optional[TestFunction] = None
    time: Optional[Dict] = None
    method: str = "direct"
    truncation: bool = False
    suites: List[str] = field(default_factory=list)
    seed: Optional[int] = None

    @classmethod
    def from_document(cls, command: str, document: Optional[Dict]) -> "RunConfig":
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}")
        document = {} if document is None else document
        _reject_unknown(document, CONFIG_KEYS, "config")
        if document.get("command", command) != command:
            raise ConfigError(f"config is for {document['command']!r}, not {command!r}")
        missing = [key for key in REQUIRED_KEYS[command] if key not in document]
        if missing:
            raise ConfigError(f"{command} config is missing: {', '.join(missing)}")
        try:
            return cls._build(command, document)
        except ParameterError as exc:
            raise ConfigError(str(exc)) from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config value: {exc}") from exc

    @classmethod
    def _build(cls, command: str, document: Dict) -> "RunConfig":
        config = cls(command, document)
        if "operator" in document:
            config.params = OperatorParams.from_dict(document["operator"])
        if "space" in document:
            config.space = SpaceParams.from_dict(document["space"])
        if "bc" in document:
            config.bc = BoundaryCondition.from_dict(document["bc"])
        elif config.params is not None:
            config.bc = _default_bc(config.params)
        if "seed" in document:
            config.seed = int(document["seed"])
        if command == "solve":
            dim_x = config.params.dim_x
            config.mesh = _parse_mesh(document.get("mesh"), dim_x)
            config.lam = _parse_lambda(document.get("lambda", 1.0))
            config.rhs = _parse_rhs(document.get("rhs"), dim_x)
            config.method = document.get("method", "direct")
            if config.method not in ("direct", "pipeline"):
                raise ConfigError(f"unknown solve method {config.method!r}")
            config.truncation = bool(document.get("truncation", False))
            if "time" in document:
                _reject_unknown(document["time"], TIME_KEYS, "time")
                config.time = {"tau": float(document["time"].get("tau", 0.05)),
                               "n_steps": int(document["time"].get("n_steps", 20)),
                               "q": float(document["time"].get("q", 2.0))}
        if command == "verify":
            suites = document.get("suites", list(SUITES))
            unknown = sorted(set(suites) - set(SUITES))
            if unknown:
                raise ConfigError(f"unknown suites: {', '.join(unknown)}")
            config.suites = list(suites)
        elif command == "selftest":
            config.suites = list(INVARIANT_SUITES)
        return config

    @property
    def config_hash(self) -> str:
        canonical = json.dumps({"command": self.command, "document": self.document},
                               sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_document(path: Optional[str]) -> Optional[Dict]:
    if path is None:
        return None
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# commands


def run_analyze(config: RunConfig) -> Dict:
    params, space = config.params, config.space
    validation = validate(params)
    result = {"operator": params.to_dict(), "space": space.to_dict(),
              "validation": validation.to_dict()}
    if not validation.admissible:
        logger.warning(f"inadmissible operator: {'; '.join(validation.violations)}")
        return result
    roots = indicial_roots(params)
    flags = regime_flags(params, space)
    result.update({
        "indicial": roots.to_dict(),
        "beta_alpha": params.beta_alpha,
        "value_mp": space.value_mp,
        "flags": sorted(flag.value for flag in flags),
    })
    generation = {}
    for kind in BCKind:
        bc = BoundaryCondition(kind)
        try:
            report = check_generation(params, space, bc)
            entry = report.to_dict()
            if report.generates:
                entry["domain"] = domain_description(params, space, bc).to_dict()
        except DegenopError as exc:
            entry = {"error": type(exc).__name__, "message": str(exc)}
        generation[kind.value] = entry
    result["generation"] = generation
    result["bc"] = config.bc.to_dict()
    try:
        result["domain_spec"] = domain_description(params, space, config.bc).to_dict()
    except DegenopError as exc:
        logger.info(f"no domain for the {config.bc.kind.value} condition: {exc}")
        result["domain_spec"] = None
    try:
        result["pipeline"] = _pipeline_document(params, space, config.bc.mode)
    except DegenopError as exc:
        result["pipeline"] = {"error": type(exc).__name__, "message": str(exc)}
    if RegimeFlag.ALTERNATIVE_REALIZATION_EXISTS in flags:
        result["alternative_domain"] = alternative_domain(params, space).to_dict()
    return result


def _pipeline_document(params: OperatorParams, space: SpaceParams, mode: str) -> Dict:
    _, _, pipeline = reduce_to_canonical(params, space, mode)
    document = pipeline.to_dict()
    document["boundary_vector"] = pipeline.boundary_vector().tolist()
    logger.info(f"reduced in {len(pipeline.stages)} step(s) ({pipeline.mode} mode)")
    return document


def run_reduce(config: RunConfig) -> Dict:
    return _pipeline_document(config.params, config.space, config.bc.mode)


def _trace_report(solution: GridFunction, params: OperatorParams, bc: BoundaryCondition) -> Optional[Dict]:
    if solution.mesh.J < 12:
        return None
    if bc.mode == "dirichlet":
        sigma = indicial_roots(params).s2
        report = boundary_trace(solution, sigma).to_dict()
        report.update({"quantity": "u", "exponent": sigma})
        return report
    sigma = params.c / params.gamma
    dy, _ = y_derivatives(solution.mesh, solution.values)
    report = boundary_trace(solution.with_values(dy), sigma).to_dict()
    report.update({"quantity": "D_y u", "exponent": sigma})
    return report


def _check_solvable(params: OperatorParams, space: SpaceParams, bc: BoundaryCondition) -> None:
    try:
        report = check_generation(params, space, bc)
    except ParameterError as exc:
        raise NotGeneratingError([str(exc)]) from exc
    if not report.generates:
        raise NotGeneratingError(report.reasons)


def write_solution(solution: GridFunction, out_dir: Path, fmt: str) -> Path:
    rows = solution.to_csv_rows()
    complex_values = np.iscomplexobj(solution.values)
    if fmt == "json":
        path = out_dir / "solution.json"
        document = {"x": [r[0] for r in rows], "y": [r[1] for r in rows],
                    "value": [float(np.real(r[2])) for r in rows]}
        if complex_values:
            document["value_imag"] = [float(np.imag(r[2])) for r in rows]
        path.write_text(json.dumps(document, sort_keys=True) + "\n", encoding="utf-8")
        return path
    path = out_dir / "solution.csv"
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x", "y", "value", "value_imag"] if complex_values else ["x", "y", "value"])
        for x, y, value in rows:
            row = [repr(x), repr(y), repr(float(np.real(value)))]
            if complex_values:
                row.append(repr(float(np.imag(value))))
            writer.writerow(row)
    return path


def run_solve(config: RunConfig, out_dir: Path, fmt: str, threads: int) -> Tuple[Dict, Dict]:
    params, space, bc = config.params, config.space, config.bc
    _check_solvable(params, space, bc)
    problem = ResolventProblem(params, space, config.lam, config.rhs, bc, config.mesh)
    result: Dict = {"lambda": [config.lam.real, config.lam.imag], "bc": bc.to_dict()}
    if config.truncation:
        scan = truncation_scan(problem, method=config.method, threads=threads)
        solution = scan.solution
        result["truncation"] = scan.to_dict()
    else:
        solution = solve_problem(problem, config.method, threads)
    result.update(solution.metrics())
    result["mesh"] = solution.mesh.to_dict()
    result["norms"] = sobolev_term_norms(solution, params, space).to_dict()
    result["trace"] = _trace_report(solution, params, bc)
    timings = {"solve_seconds": solution.elapsed}
    if config.time is not None:
        start = time.perf_counter()
        _, report = parabolic_march(params, space, bc, config.rhs, config.time["tau"],
                                    config.time["n_steps"], config.mesh, q=config.time["q"])
        result["parabolic"] = report.to_dict()
        timings["parabolic_seconds"] = time.perf_counter() - start
    path = write_solution(solution, out_dir, fmt)
    result["solution_file"] = path.name
    logger.info(f"solution written to {path} (residual {solution.residual:.2e})")
    return result, timings


def run_suites(config: RunConfig, seed: int, threads: int, out_dir: Path) -> Tuple[Dict, Dict, bool]:
    summary, timings = {}, {}
    passed = True
    for name in config.suites:
        outcome = run_suite(name, seed, threads)
        passed = passed and outcome.passed
        summary[name] = outcome.passed
        timings[name] = outcome.elapsed
        if config.command == "verify":
            write_report(out_dir / f"verify-{name}.json",
                         _envelope(config, seed, outcome.to_dict(), {"elapsed": outcome.elapsed}))
        else:
            summary[name] = outcome.to_dict()
    return {"suites": summary, "passed": passed}, timings, passed


# ---------------------------------------------------------------------------
# reports and ledger


def _envelope(config: RunConfig, seed: int, result: Dict, timings: Dict) -> Dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": TOOL_VERSION,
        "command": config.command,
        "config_hash": config.config_hash,
        "seed": seed,
        "result": result,
        "timings": timings,
    }


def write_report(path: Path, document: Dict) -> None:
    path.write_text(json.dumps(jsonable(document), sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def record_run(session_factory, command: str, config_hash: Optional[str], exit_status: int,
               runtime: float, summary: Dict) -> None:
    from models import RunRecord

    if session_factory is None:
        return
    try:
        with session_factory() as session:
            session.add(RunRecord(
                command=command,
                config_hash=config_hash,
                tool_version=TOOL_VERSION,
                exit_status=exit_status,
                runtime=runtime,
                summary=json.dumps(jsonable(summary), sort_keys=True),
            ))
            session.commit()
    except Exception as e:
        logger.error(f"Error saving run to ledger: {e}")


def run_history(session_factory, limit: int = 10) -> Dict:
    """Aggregate statistics over the run ledger plus the most recent runs."""
    from models import RunRecord

    with session_factory() as session:
        total = session.query(func.count(RunRecord.id)).scalar() or 0
        avg_runtime = session.query(func.avg(RunRecord.runtime)).scalar()
        failures = session.query(func.count(RunRecord.id)).filter(RunRecord.exit_status != 0).scalar() or 0
        per_command = dict(session.query(RunRecord.command, func.count(RunRecord.id))
                           .group_by(RunRecord.command).all())
        recent = (session.query(RunRecord)
                  .order_by(RunRecord.created_at.desc(), RunRecord.id.desc())
                  .limit(limit).all())
        return {
            "total_runs": total,
            "per_command": per_command,
            "avg_runtime": round(avg_runtime, 2) if avg_runtime is not None else None,
            "failures": failures,
            "recent": [{
                "id": r.id,
                "command": r.command,
                "exit_status": r.exit_status,
                "runtime": r.runtime,
                "config_hash": r.config_hash,
                "created_at": r.created_at.isoformat() if r.created_at else None,
            } for r in recent],
        }


def exit_status_for(exc: Exception) -> int:
    if isinstance(exc, NotGeneratingError):
        return EXIT_NOT_GENERATING
    if isinstance(exc, (ConfigError, ParameterError)):
        return EXIT_CONFIG
    return EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Path to the JSON run configuration')
    common.add_argument('--out', default='degenop-out', help='Output directory for reports')
    common.add_argument('--seed', type=int, help='Seed for random test functions')
    common.add_argument('--threads', type=int, help='Worker threads for solver scans')
    common.add_argument('--format', choices=['json', 'csv'], default='csv',
                        help='Solution export format for solve')
    common.add_argument('--verbose', '-v', action='store_true', help='Enable verbose logging')

    parser = argparse.ArgumentParser(prog='degenop',
                                     description='Degenerate elliptic operators on the half-space')
    commands = parser.add_subparsers(dest='command', required=True)
    commands.add_parser('analyze', parents=[common], help='Indicial roots, generation windows and domains')
    commands.add_parser('reduce', parents=[common], help='Reduce an operator to canonical form')
    commands.add_parser('solve', parents=[common], help='Solve a resolvent problem on a graded mesh')
    verify = commands.add_parser('verify', parents=[common], help='Run verification suites')
    verify.add_argument('--suite', action='append', choices=sorted(SUITES),
                        help='Suite to run (repeatable, default all)')
    commands.add_parser('selftest', parents=[common], help='Run the invariant suites')
    history = commands.add_parser('history', parents=[common], help='Show run ledger statistics')
    history.add_argument('--limit', type=int, default=10, help='Number of recent runs to list')
    return parser


def _execute(config: RunConfig, args, seed: int, threads: int, out_dir: Path) -> Tuple[int, Dict]:
    if config.command == "analyze":
        result, timings, status = run_analyze(config), {}, EXIT_OK
    elif config.command == "reduce":
        result, timings, status = run_reduce(config), {}, EXIT_OK
    elif config.command == "solve":
        result, timings = run_solve(config, out_dir, args.format, threads)
        status = EXIT_OK
    else:
        result, timings, passed = run_suites(config, seed, threads, out_dir)
        status = EXIT_OK if passed else EXIT_NUMERICAL
    write_report(out_dir / f"{config.command}.json", _envelope(config, seed, result, timings))
    return status, result


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    start = time.perf_counter()
    out_dir = Path(args.out)
    try:
        settings = Settings.from_env()
        threads = args.threads if args.threads is not None else settings.threads
        if threads < 1:
            raise ConfigError(f"--threads must be positive, got {threads}")
        out_dir.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        logger.error(str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        logger.error(f"cannot create output directory {out_dir}: {exc}")
        return EXIT_CONFIG
    try:
        session_factory = make_session_factory(settings.database_uri(out_dir))
    except Exception as e:
        logger.error(f"Error opening run ledger: {e}")
        session_factory = None

    if args.command == "history":
        if session_factory is None:
            return EXIT_NUMERICAL
        print(json.dumps(run_history(session_factory, args.limit), indent=2, sort_keys=True))
        return EXIT_OK

    config_hash = None
    summary: Dict = {}
    try:
        document = load_document(args.config)
        if args.command == "verify" and args.suite:
            document = {**(document or {}), "suites": args.suite}
        config = RunConfig.from_document(args.command, document)
        config_hash = config.config_hash
        seed = args.seed if args.seed is not None else (
            config.seed if config.seed is not None else settings.seed)
        logger.info(f"{args.command}: config {config_hash[:12]}, seed {seed}, threads {threads}")
        status, result = _execute(config, args, seed, threads, out_dir)
        summary = {"out": str(out_dir), "passed": result.get("passed")} \
            if "passed" in result else {"out": str(out_dir)}
    except DegenopError as exc:
        status = exit_status_for(exc)
        logger.error(f"{args.command} failed: {type(exc).__name__}: {exc}")
        summary = {"error": type(exc).__name__, "message": str(exc)}
    except Exception as exc:
        status = EXIT_NUMERICAL
        logger.exception(f"{args.command} failed unexpectedly")
        summary = {"error": type(exc).__name__, "message": str(exc)}

    runtime = time.perf_counter() - start
    record_run(session_factory, args.command, config_hash, status, runtime, summary)
    logger.info(f"{args.command} finished with exit status {status} in {runtime:.2f}s")
    return status
