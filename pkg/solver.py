"""
Resolvent and parabolic solves on truncated half-spaces.

The y-part of every operator is discretized in flux form,

    gamma y^a2 Dyy + c y^(a2-1) Dy = gamma y^(a2-mu) (y^mu u')',   mu = c/gamma,

with exact power-law integrals for edge resistances and cell weights. The
flux through y = 0 is zero, which is the trace condition lim y^mu Dy u = 0 of
the Neumann-type domains; u vanishes at the cutoff y = Y. Dirichlet problems
are solved after the substitution u = y^(-s1) w, so only Neumann-type
discretizations are ever assembled.
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, onenormest, splu

from errors import NotGeneratingError, ParameterError, SingularSystemError, TransformError
from generation_analyzer import BoundaryCondition, RegimeFlag, check_generation, regime_flags
from operator_core import OperatorParams, SpaceParams, TestFunction, indicial_roots
from transform_calculus import SNAP_TOLERANCE, conjugate_by_kelvin, reduce_to_canonical
from weighted_spaces import (
    GradedMesh,
    GridFunction,
    sobolev_term_norms,
    stencil_weights,
    weighted_lp_norm,
)

logger = logging.getLogger(__name__)

# componentwise backward error accepted for a direct solve
RESIDUAL_TOLERANCE = 1e-8

RightHandSide = Union[GridFunction, TestFunction, Callable]


# ---------------------------------------------------------------------------
# problems and solutions


@dataclass
class ResolventProblem:
    """(lam - L) u = f on a truncated half-space, Re lam > 0."""

    params: OperatorParams
    space: SpaceParams
    lam: complex
    rhs: RightHandSide
    bc: BoundaryCondition
    mesh: GradedMesh
    check: bool = True

    def __post_init__(self):
        self.lam = complex(self.lam)
        if not self.lam.real > 0:
            raise ParameterError(f"lambda must lie in the right half-plane, got {self.lam}")
        _check_mesh(self.params, self.mesh)
        if self.check:
            report = check_generation(self.params, self.space, self.bc)
            if not report.generates:
                raise NotGeneratingError(report.reasons)

    def rhs_grid(self, mesh: Optional[GradedMesh] = None) -> GridFunction:
        mesh = self.mesh if mesh is None else mesh
        if isinstance(self.rhs, GridFunction):
            if self.rhs.mesh.to_dict() != mesh.to_dict():
                raise ParameterError("grid right-hand side lives on another mesh")
            return GridFunction(mesh, self.rhs.values, m=self.space.m, p=self.space.p)
        return GridFunction.from_function(mesh, self.rhs, m=self.space.m, p=self.space.p)

    def with_lambda(self, lam: complex) -> "ResolventProblem":
        return ResolventProblem(self.params, self.space, lam, self.rhs, self.bc, self.mesh, check=False)

    def with_mesh(self, mesh: GradedMesh) -> "ResolventProblem":
        return ResolventProblem(self.params, self.space, self.lam, self.rhs, self.bc, mesh, check=False)

    @property
    def is_real(self) -> bool:
        if self.lam.imag != 0:
            return False
        if isinstance(self.rhs, GridFunction):
            return bool(np.isrealobj(self.rhs.values))
        return True


class Solution(GridFunction):
    """A solved grid function with the diagnostics of the solve that produced it."""

    def __init__(self, mesh: GradedMesh, values, m: float, p: float,
                 residual: float = 0.0, method: str = "direct", elapsed: float = 0.0):
        super().__init__(mesh, values, m=m, p=p)
        self.residual = float(residual)
        self.method = method
        self.elapsed = float(elapsed)

    def metrics(self) -> Dict:
        return {"method": self.method, "residual": self.residual, "norm": self.norm()}


def _check_mesh(params: OperatorParams, mesh: GradedMesh) -> None:
    if params.dim_x > 1:
        raise ParameterError("grids are available for N = 0 and N = 1 only")
    if params.dim_x != mesh.dim_x:
        raise ParameterError(f"operator has N={params.dim_x}, mesh has N={mesh.dim_x}")
    if mesh.n_x and mesh.n_x < 4:
        raise ParameterError(f"periodic x-grid needs at least 4 nodes, got {mesh.n_x}")


def _real_if(values: np.ndarray, real: bool) -> np.ndarray:
    return values.real.copy() if real else values


# ---------------------------------------------------------------------------
# assembly


def _power_integral(a: np.ndarray, b: np.ndarray, s: float) -> np.ndarray:
    """Integral of y^s over [a_i, b_i], 0 <= a_i < b_i."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    s1 = s + 1.0
    out = np.empty(b.shape)
    at_zero = a == 0.0
    if np.any(at_zero):
        if s1 <= 0.0:
            raise ParameterError(f"y^{s:g} is not integrable at y = 0")
        out[at_zero] = b[at_zero] ** s1 / s1
    inner = ~at_zero
    log_ratio = np.log(b[inner] / a[inner])
    if s1 == 0.0:
        out[inner] = log_ratio
    else:
        out[inner] = a[inner] ** s1 * np.expm1(s1 * log_ratio) / s1
    return out


def radial_matrix(y: np.ndarray, alpha: float, gamma: float, c: float) -> sparse.csr_matrix:
    """
    gamma y^(alpha - mu) (y^mu u')' on the nodes y_1..y_(J-1), mu = c/gamma.
    Cell j spans the midpoints around y_j, the first one starts at 0.
    """
    mu = c / gamma
    if mu - alpha <= -1.0:
        raise ParameterError(f"cell weight y^{mu - alpha:g} is not integrable at y = 0")
    resistance = _power_integral(y[:-1], y[1:], -mu)
    mid = 0.5 * (y[:-1] + y[1:])
    left = np.concatenate([[0.0], mid[:-1]])
    weight = _power_integral(left, mid, mu - alpha)
    up = gamma / (weight * resistance)
    down = np.zeros_like(weight)
    down[1:] = gamma / (weight[1:] * resistance[:-1])
    n = y.size - 1
    return sparse.diags([down[1:], -(up + down), up[:-1]], [-1, 0, 1], shape=(n, n), format="csr")


def first_derivative_matrix(y: np.ndarray) -> sparse.csr_matrix:
    """Three-point D_y on y_1..y_(J-1) with u_J = 0 folded in."""
    idx, w1, _ = stencil_weights(y)
    J = y.size
    rows = np.repeat(np.arange(J), 3)
    full = sparse.csr_matrix((w1.ravel(), (rows, idx.ravel())), shape=(J, J))
    return full[:J - 1, :J - 1]


def periodic_x_matrices(n: int, h: float) -> Tuple[sparse.csr_matrix, sparse.csr_matrix]:
    nodes = np.arange(n)
    forward = sparse.csr_matrix((np.ones(n), (nodes, (nodes + 1) % n)), shape=(n, n))
    backward = forward.T.tocsr()
    eye = sparse.identity(n, format="csr")
    return (forward - backward) / (2.0 * h), (forward - 2.0 * eye + backward) / (h * h)


@dataclass
class DiscreteOperator:
    """
    Sparse L_h on the unknown nodes (every node below the cutoff), row-major in
    (y, x). Shared by resolvent, parabolic, sector and elliptic-ratio routines.
    """

    mesh: GradedMesh
    matrix: sparse.csc_matrix
    label: str = "direct"

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def unknown_shape(self) -> Tuple[int, ...]:
        J = self.mesh.J - 1
        return (J, self.mesh.n_x) if self.mesh.n_x else (J,)

    def restrict(self, values) -> np.ndarray:
        return np.asarray(values)[:-1].reshape(-1)

    def embed(self, vector) -> np.ndarray:
        vector = np.asarray(vector)
        full = np.zeros(self.mesh.shape, dtype=vector.dtype)
        full[:-1] = vector.reshape(self.unknown_shape)
        return full

    def apply(self, values) -> np.ndarray:
        """L_h u on the full mesh; the cutoff row is zero."""
        return self.embed(self.matrix @ self.restrict(values))

    def shifted(self, lam: complex) -> sparse.csc_matrix:
        eye = sparse.identity(self.size, dtype=complex, format="csc")
        return (complex(lam) * eye - self.matrix.astype(complex)).tocsc()

    def factor(self, system: sparse.csc_matrix):
        try:
            return splu(system)
        except RuntimeError as exc:
            raise SingularSystemError(f"{self.label} factorization failed: {exc}") from exc

    def solve(self, lam: complex, rhs_values) -> Tuple[np.ndarray, float]:
        system = self.shifted(lam)
        b = self.restrict(rhs_values).astype(complex)
        lu = self.factor(system)
        x = lu.solve(b)
        residual = backward_error(system, x, b)
        if not residual <= RESIDUAL_TOLERANCE:
            raise SingularSystemError(
                f"{self.label} solve left residual {residual:.2e}",
                condition_estimate(system, lu),
            )
        return self.embed(x), residual


def backward_error(system: sparse.spmatrix, x: np.ndarray, b: np.ndarray) -> float:
    """max_i |Ax - b|_i / (|A||x| + |b|)_i."""
    r = np.abs(system @ x - b)
    scale = abs(system) @ np.abs(x) + np.abs(b)
    nonzero = scale > 0
    if np.any(r[~nonzero] > 0):
        return math.inf
    return float(np.max(r[nonzero] / scale[nonzero])) if np.any(nonzero) else 0.0


def condition_estimate(system: sparse.spmatrix, lu) -> float:
    n = system.shape[0]
    inverse = LinearOperator((n, n), matvec=lu.solve,
                             rmatvec=lambda v: lu.solve(v, trans="H"), dtype=complex)
    try:
        return float(onenormest(system) * onenormest(inverse))
    except Exception as exc:
        logger.debug(f"condition estimate unavailable: {exc}")
        return math.inf


def discretize(params: OperatorParams, mesh: GradedMesh, label: str = "direct") -> DiscreteOperator:
    """Assemble L_h for an N = 0 or N = 1 operator on a graded (times periodic) mesh."""
    _check_mesh(params, mesh)
    y = mesh.y[:-1]
    radial = radial_matrix(mesh.y, params.alpha2, params.gamma, params.c)
    if params.b:
        radial = radial - sparse.diags(params.b * y ** (params.alpha2 - 2.0))
    if not mesh.n_x:
        return DiscreteOperator(mesh, radial.tocsc(), label)

    n = mesh.n_x
    dx, dxx = periodic_x_matrices(n, mesh.hx)
    a1, am = params.alpha1, params.mixed_exponent
    Q, q, d = params.Q[0, 0], params.q[0], params.d[0]
    matrix = sparse.kron(radial, sparse.identity(n)) + sparse.kron(sparse.diags(Q * y ** a1), dxx)
    if q:
        dy = first_derivative_matrix(mesh.y)
        matrix = matrix + sparse.kron(sparse.diags(2.0 * q * y ** am) @ dy, dx)
    if d:
        matrix = matrix + sparse.kron(sparse.diags(d * y ** (am - 1.0)), dx)
    return DiscreteOperator(mesh, matrix.tocsc(), label)


def oblique_drift_unresolved(params: OperatorParams, space: SpaceParams, bc: BoundaryCondition) -> bool:
    """
    True when the zero-flux row at y = 0 differs from the oblique condition:
    an x-drift d is present and W_N and W_V are different spaces.
    """
    if bc.mode != "oblique" or params.dim_x == 0 or not np.any(params.d != 0):
        return False
    return RegimeFlag.WN_EQUALS_WV not in regime_flags(params, space)


def discretize_problem(params: OperatorParams, space: SpaceParams, bc: BoundaryCondition,
                       mesh: GradedMesh) -> DiscreteOperator:
    """
    L_h acting on the original unknown. In dirichlet mode this is
    M L'_h M^{-1} with M = y^(-s1) and L' the potential-free conjugate.
    """
    if bc.mode == "oblique":
        if params.b != 0:
            raise ParameterError(f"oblique problems need b = 0, got b = {params.b:g}")
        if oblique_drift_unresolved(params, space, bc):
            raise ParameterError(
                f"no direct oblique discretization for drift d={params.d.tolist()} with "
                f"(m+1)/p = {space.value_mp:g} <= 1 - alpha_m; solve through the reduction pipeline"
            )
        return discretize(params, mesh)
    s1 = indicial_roots(params).s1
    if s1 == 0.0:
        return discretize(params, mesh, label="dirichlet")
    inner, _ = conjugate_by_kelvin(params, space, -s1, 0.0)
    scale = max(1.0, abs(params.b), abs(params.c), params.gamma)
    if abs(inner.b) > SNAP_TOLERANCE * scale:
        raise TransformError(f"potential survived the substitution: b = {inner.b:g}")
    op = discretize(inner.replace(b=0.0), mesh, label="dirichlet")
    weight = mesh.y[:-1] ** (-s1)
    if mesh.n_x:
        weight = np.repeat(weight, mesh.n_x)
    matrix = sparse.diags(weight) @ op.matrix @ sparse.diags(1.0 / weight)
    logger.debug(f"dirichlet substitution u = y^{-s1:g} w on {mesh!r}")
    return DiscreteOperator(mesh, matrix.tocsc(), "dirichlet")


@dataclass(frozen=True, eq=False)
class ModeOperator:
    """
    Fourier symbol of a canonical operator at frequency xi:
    -(Q xi, xi) y^a + 2i (q.xi) y^a Dy + gamma y^a Dyy + c y^(a-1) Dy.
    """

    params: OperatorParams
    xi: np.ndarray

    def __post_init__(self):
        xi = np.array(self.xi, dtype=float).reshape(-1)
        p = self.params
        if xi.size != p.dim_x:
            raise ParameterError(f"frequency has {xi.size} entries, expected {p.dim_x}")
        if not p.equal_exponents or p.b != 0 or np.any(p.d != 0):
            raise ParameterError("mode operators need the canonical form (alpha1 = alpha2, b = 0, d = 0)")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)

    def matrix(self, mesh: GradedMesh) -> sparse.csc_matrix:
        p = self.params
        y = mesh.y[:-1]
        out = radial_matrix(mesh.y, p.alpha2, p.gamma, p.c).astype(complex)
        quadratic = float(self.xi @ p.Q @ self.xi) if p.dim_x else 0.0
        coupling = float(p.q @ self.xi) if p.dim_x else 0.0
        if quadratic:
            out = out - sparse.diags(quadratic * y ** p.alpha1)
        if coupling:
            out = out + sparse.diags(2j * coupling * y ** p.alpha1) @ first_derivative_matrix(mesh.y)
        return out.tocsc()


def solve_mode(mode: ModeOperator, lam: complex, rhs_values: np.ndarray,
               mesh: GradedMesh) -> Tuple[np.ndarray, float]:
    radial = GradedMesh(mesh.Y, mesh.J, mesh.r)
    op = DiscreteOperator(radial, mode.matrix(radial), label=f"mode xi={mode.xi.tolist()}")
    return op.solve(lam, rhs_values)


def _solve_canonical(params: OperatorParams, lam: complex, g: GridFunction,
                     threads: int = 1) -> Tuple[np.ndarray, float]:
    mesh = g.mesh
    if not mesh.n_x:
        return discretize(params, mesh, label="canonical").solve(lam, g.values)
    n = mesh.n_x
    spectrum = np.fft.fft(g.values, axis=1)
    frequencies = 2.0 * np.pi * np.fft.fftfreq(n, d=mesh.hx)

    def one(k: int):
        return solve_mode(ModeOperator(params, [frequencies[k]]), lam, spectrum[:, k], mesh)

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        results = list(pool.map(one, range(n)))
    solved = np.empty(spectrum.shape, dtype=complex)
    for k, (values, _) in enumerate(results):
        solved[:, k] = values
    residual = max(res for _, res in results)
    return np.fft.ifft(solved, axis=1), residual


# ---------------------------------------------------------------------------
# resolvent solves


def _direct_solve(problem: ResolventProblem, method: str) -> Solution:
    start = time.perf_counter()
    op = discretize_problem(problem.params, problem.space, problem.bc, problem.mesh)
    f = problem.rhs_grid()
    values, residual = op.solve(problem.lam, f.values)
    elapsed = time.perf_counter() - start
    logger.info(f"{method} solve on {problem.mesh!r} finished in {elapsed:.3f}s "
                f"(residual {residual:.1e})")
    return Solution(problem.mesh, _real_if(values, problem.is_real), problem.space.m,
                    problem.space.p, residual=residual, method=method, elapsed=elapsed)


def solve_resolvent_1d(problem: ResolventProblem) -> Solution:
    if problem.params.dim_x != 0:
        raise ParameterError("solve_resolvent_1d handles N = 0; use solve_resolvent_2d")
    return _direct_solve(problem, "direct-1d")


def solve_resolvent_2d(problem: ResolventProblem, threads: int = 1) -> Solution:
    if problem.params.dim_x != 1:
        raise ParameterError("solve_resolvent_2d handles N = 1")
    if oblique_drift_unresolved(problem.params, problem.space, problem.bc):
        logger.info("oblique drift with W_N != W_V: solving through the reduction pipeline")
        return solve_via_pipeline(problem, threads=threads)
    return _direct_solve(problem, "direct-2d")


def solve_via_pipeline(problem: ResolventProblem, threads: int = 1) -> Solution:
    """
    Pull f back through the canonical reduction, solve the canonical problem
    (Fourier modes in x) and push the solution forward.
    """
    params, space = problem.params, problem.space
    canonical, _, pipeline = reduce_to_canonical(params, space, problem.bc.mode)
    if not pipeline.stages:
        method = "direct-1d" if params.dim_x == 0 else "direct-2d"
        return _direct_solve(problem, method)

    start = time.perf_counter()
    f = problem.rhs_grid()
    g = pipeline.pullback(f)
    values, residual = _solve_canonical(canonical, problem.lam, g, threads)
    w = GridFunction(g.mesh, values, m=g.m, p=g.p)
    u = pipeline.forward(w)
    elapsed = time.perf_counter() - start
    logger.info(f"pipeline solve ({len(pipeline.stages)} step(s)) finished in {elapsed:.3f}s")
    return Solution(problem.mesh, _real_if(u.values, problem.is_real), space.m, space.p,
                    residual=residual, method="pipeline", elapsed=elapsed)


def solve_problem(problem: ResolventProblem, method: str = "direct", threads: int = 1) -> Solution:
    if method == "pipeline":
        return solve_via_pipeline(problem, threads=threads)
    if method != "direct":
        raise ParameterError(f"unknown solve method {method!r}")
    if problem.params.dim_x == 0:
        return solve_resolvent_1d(problem)
    return solve_resolvent_2d(problem, threads=threads)


@dataclass
class TruncationReport:
    cutoffs: List[float]
    norms: List[float]
    converged: bool
    solution: Solution

    def to_dict(self) -> Dict:
        return {"cutoffs": self.cutoffs, "norms": self.norms, "converged": self.converged}


def truncation_scan(problem: ResolventProblem, tol: float = 1e-4, max_doublings: int = 4,
                    method: str = "direct", threads: int = 1) -> TruncationReport:
    """
    Double the cutoff Y (and the node count) until the weighted norm of the
    solution moves by less than tol.
    """
    if isinstance(problem.rhs, GridFunction):
        raise ParameterError("truncation scans need a closed-form right-hand side")
    mesh = problem.mesh
    solution = solve_problem(problem, method, threads)
    cutoffs, norms = [mesh.Y], [solution.norm()]
    converged = False
    for _ in range(max_doublings):
        mesh = mesh.with_cutoff(2.0 * mesh.Y, 2 * mesh.J)
        solution = solve_problem(problem.with_mesh(mesh), method, threads)
        cutoffs.append(mesh.Y)
        norms.append(solution.norm())
        change = abs(norms[-1] - norms[-2]) / max(norms[-1], 1e-300)
        logger.debug(f"cutoff Y={mesh.Y:g}: norm {norms[-1]:.6e} (change {change:.1e})")
        if change < tol:
            converged = True
            break
    if not converged:
        logger.warning(f"truncation scan did not settle below {tol:g} after {max_doublings} doublings")
    return TruncationReport(cutoffs, norms, converged, solution)


# ---------------------------------------------------------------------------
# scans


@dataclass
class SectorScanReport:
    samples: List[Tuple[complex, float]] = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.samples])

    @property
    def sup(self) -> float:
        return float(self.values.max())

    @property
    def spread(self) -> float:
        values = self.values
        return float(values.max() / values.min()) if values.min() > 0 else math.inf

    def to_dict(self) -> Dict:
        return {
            "samples": [{"lambda": [lam.real, lam.imag], "value": v} for lam, v in self.samples],
            "sup": self.sup,
            "max_over_min": self.spread,
        }


def sector_scan(problem: ResolventProblem, n_radii: int = 10, radii: Tuple[float, float] = (1e-2, 1e2),
                angles: Sequence[float] = (0.0, math.pi / 3, -math.pi / 3),
                threads: int = 1) -> SectorScanReport:
    """|lam| ||R(lam) f|| / ||f|| over log-spaced radii on the given rays."""
    piped = oblique_drift_unresolved(problem.params, problem.space, problem.bc)
    op = None if piped else discretize_problem(problem.params, problem.space, problem.bc, problem.mesh)
    f = problem.rhs_grid()
    f_norm = f.norm()
    if f_norm == 0:
        raise ParameterError("sector scans need a nonzero right-hand side")
    lambdas = [r * complex(math.cos(a), math.sin(a))
               for a in angles for r in np.geomspace(radii[0], radii[1], n_radii)]

    def one(lam: complex) -> float:
        if piped:
            return abs(lam) * solve_via_pipeline(problem.with_lambda(lam)).norm() / f_norm
        values, _ = op.solve(lam, f.values)
        return abs(lam) * f.with_values(values).norm() / f_norm

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        values = list(pool.map(one, lambdas))
    report = SectorScanReport(list(zip(lambdas, values)))
    logger.info(f"sector scan: sup {report.sup:.3g}, max/min {report.spread:.3g}")
    return report


@dataclass
class EllipticRatioReport:
    mode: str
    ratios: Dict[str, float]
    operator_norm: float
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {"mode": self.mode, "ratios": dict(self.ratios),
                "operator_norm": self.operator_norm, "notes": list(self.notes)}


def elliptic_ratio(problem: ResolventProblem) -> EllipticRatioReport:
    """
    Solve, then compare second-order and boundary terms of u with ||L_h u||.
    Dirichlet problems report only the x-second-derivative ratio.
    """
    op = discretize_problem(problem.params, problem.space, problem.bc, problem.mesh)
    values, _ = op.solve(problem.lam, problem.rhs_grid().values)
    u = GridFunction(problem.mesh, _real_if(values, problem.is_real), problem.space.m, problem.space.p)
    lu_norm = weighted_lp_norm(u.with_values(op.apply(u.values)))
    terms = sobolev_term_norms(u, problem.params, problem.space, extras=("oblique",))
    report = EllipticRatioReport(problem.bc.mode, {}, lu_norm)
    if lu_norm == 0:
        report.notes.append("L u vanishes; ratios undefined")
        return report
    has_x = problem.params.dim_x > 0
    if problem.bc.mode == "oblique":
        report.ratios["second_order"] = (terms.d2x + terms.dxdy + terms.dyy) / lu_norm
        report.ratios["oblique"] = terms.oblique / lu_norm
    elif has_x:
        report.ratios["d2x"] = terms.d2x / lu_norm
    else:
        report.notes.append("N = 0 dirichlet: no x-derivative ratio to check")
    return report


# ---------------------------------------------------------------------------
# parabolic problems


@dataclass
class DiscreteMaxRegReport:
    ratio: Optional[float]
    derivative_norm: float
    operator_norm: float
    forcing_norm: float
    degenerate: bool
    tau: float
    n_steps: int
    q: float

    def to_dict(self) -> Dict:
        return {
            "ratio": self.ratio,
            "derivative_norm": self.derivative_norm,
            "operator_norm": self.operator_norm,
            "forcing_norm": self.forcing_norm,
            "degenerate": self.degenerate,
            "tau": self.tau,
            "n_steps": self.n_steps,
            "q": self.q,
        }


Forcing = Union[RightHandSide, np.ndarray, Callable[[float], object]]


def _forcing_values(g, t: float, mesh: GradedMesh, time_dependent: bool) -> np.ndarray:
    source = g(t) if time_dependent else g
    if isinstance(source, GridFunction):
        return source.values
    if isinstance(source, TestFunction):
        return GridFunction.from_function(mesh, source).values
    values = np.asarray(source)
    if values.shape != mesh.shape:
        raise ParameterError(f"forcing has shape {values.shape}, mesh expects {mesh.shape}")
    return values


def parabolic_march(params: OperatorParams, space: SpaceParams, bc: BoundaryCondition,
                    g: Forcing, tau: float, n_steps: int, mesh: GradedMesh,
                    q: float = 2.0) -> Tuple[np.ndarray, DiscreteMaxRegReport]:
    """
    Implicit Euler u^(n+1) = (I - tau L_h)^(-1) (u^n + tau g^(n+1)) from u^0 = 0.
    A callable g is read as a function of time; anything else is constant in time.
    """
    if not tau > 0 or n_steps < 1:
        raise ParameterError(f"need tau > 0 and at least one step, got tau={tau}, n_steps={n_steps}")
    if not q >= 1:
        raise ParameterError(f"time exponent q must be at least 1, got {q}")
    report = check_generation(params, space, bc)
    if not report.generates:
        raise NotGeneratingError(report.reasons)
    time_dependent = callable(g) and not isinstance(g, TestFunction)

    op = discretize_problem(params, space, bc, mesh)
    system = (sparse.identity(op.size, dtype=complex, format="csc")
              - tau * op.matrix.astype(complex)).tocsc()
    lu = op.factor(system)

    trajectory = np.zeros((n_steps + 1,) + mesh.shape, dtype=complex)
    forcing = np.zeros((n_steps + 1,) + mesh.shape, dtype=complex)
    u = np.zeros(op.size, dtype=complex)
    for step in range(1, n_steps + 1):
        forcing[step] = _forcing_values(g, step * tau, mesh, time_dependent)
        u = lu.solve(u + tau * op.restrict(forcing[step]))
        trajectory[step] = op.embed(u)

    def norm(values):
        return weighted_lp_norm(GridFunction(mesh, values, m=space.m, p=space.p))

    def time_norm(series):
        return (tau * sum(norm(v) ** q for v in series)) ** (1.0 / q)

    derivative = time_norm((trajectory[n] - trajectory[n - 1]) / tau for n in range(1, n_steps + 1))
    operator = time_norm(op.apply(trajectory[n]) for n in range(1, n_steps + 1))
    forcing_norm = time_norm(forcing[n] for n in range(1, n_steps + 1))
    degenerate = forcing_norm == 0
    ratio = None if degenerate else (derivative + operator) / forcing_norm
    if degenerate:
        logger.debug("parabolic march with zero forcing: ratio 0/0")
    if not np.any(forcing.imag):
        trajectory = trajectory.real.copy()
    return trajectory, DiscreteMaxRegReport(ratio, derivative, operator, forcing_norm,
                                            degenerate, float(tau), int(n_steps), float(q))
