"""
Change-of-variable calculus for the degenerate operator.

Two families of invertible maps act on functions of (x, y):

    T_{k,beta} u(x, y) = |beta+1|^(1/p) y^k u(x, y^(beta+1))
    S_{beta,omega} u(x, y) = u(x + omega y^(beta+1), y)

Conjugating an operator always means L~ = X^{-1} L X, so that
(lambda - L)^{-1} = X (lambda - L~)^{-1} X^{-1} with no extra constants.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import NegativeDiscriminantError, ParameterError, TransformError
from operator_core import (
    IndicialData,
    Jet,
    OperatorParams,
    SpaceParams,
    TestFunction,
    as_points,
    operator_terms,
    discriminant,
    indicial_roots,
    require_admissible,
)
from weighted_spaces import GridFunction, GradedMesh

logger = logging.getLogger(__name__)

SNAP_TOLERANCE = 1e-10
TERM_DROP_TOLERANCE = 1e-14


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if beta == -1.0:
        raise ParameterError("beta = -1 does not define a transform")
    return beta


@dataclass(frozen=True)
class KelvinStep:
    k: float
    beta: float
    p: float = 2.0

    kind = "kelvin"

    def __post_init__(self):
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "beta", _check_beta(self.beta))
        object.__setattr__(self, "p", float(self.p))

    @property
    def prefactor(self) -> float:
        return abs(self.beta + 1.0) ** (1.0 / self.p)

    def inverse(self) -> "KelvinStep":
        e = self.beta + 1.0
        return KelvinStep(k=-self.k / e, beta=-self.beta / e, p=self.p)

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "k": self.k, "beta": self.beta, "omega": None, "p": self.p}


@dataclass(frozen=True, eq=False)
class ShiftStep:
    beta: float
    omega: np.ndarray

    kind = "shift"

    def __post_init__(self):
        object.__setattr__(self, "beta", _check_beta(self.beta))
        omega = np.array(self.omega, dtype=float).reshape(-1)
        omega.setflags(write=False)
        object.__setattr__(self, "omega", omega)

    def inverse(self) -> "ShiftStep":
        return ShiftStep(beta=self.beta, omega=-self.omega)

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "k": None, "beta": self.beta,
                "omega": [float(w) for w in self.omega], "p": None}


TransformStep = Union[KelvinStep, ShiftStep]


# ---------------------------------------------------------------------------
# coefficient maps


def conjugate_by_kelvin(params: OperatorParams, space: SpaceParams, k: float,
                        beta: float) -> Tuple[OperatorParams, SpaceParams]:
    """
    Coefficients of T^{-1} L T acting on L^p_{m~}, T = T_{k,beta}.
    """
    beta = _check_beta(beta)
    k = float(k)
    e = beta + 1.0
    g, c = params.gamma, params.c
    new_params = params.replace(
        alpha1=params.alpha1 / e,
        alpha2=(params.alpha2 + 2.0 * beta) / e,
        q=e * params.q,
        gamma=e * e * g,
        d=2.0 * k * params.q + params.d,
        c=e * (c + (2.0 * k + beta) * g),
        b=params.b - k * (c + (k - 1.0) * g),
    )
    new_space = SpaceParams(p=space.p, m=(space.m + k * space.p - beta) / e)
    return new_params, new_space


def conjugate_by_shift_matched(params: OperatorParams, omega) -> OperatorParams:
    """
    S^{-1} L S for the shear whose exponent matches the operator,
    beta = (alpha1 - alpha2)/2. Exponents, gamma, c, b and the space are unchanged.
    """
    omega = np.asarray(omega, dtype=float).reshape(-1)
    if omega.size != params.dim_x:
        raise ParameterError(f"omega has {omega.size} entries, expected {params.dim_x}")
    beta = params.beta_alpha
    e = beta + 1.0
    g = params.gamma
    Q = (params.Q + e * (np.outer(params.q, omega) + np.outer(omega, params.q))
         + g * e * e * np.outer(omega, omega))
    return params.replace(
        Q=Q,
        q=params.q + g * e * omega,
        d=params.d + (params.c + g * beta) * e * omega,
    )


def conjugate_step(params: OperatorParams, space: SpaceParams,
                   step: TransformStep) -> Tuple[OperatorParams, SpaceParams]:
    if isinstance(step, KelvinStep):
        return conjugate_by_kelvin(params, space, step.k, step.beta)
    if abs(step.beta - params.beta_alpha) > 1e-12:
        raise TransformError(
            f"shift with beta={step.beta:g} leaves the standard form "
            f"(matched beta is {params.beta_alpha:g}); use conjugate_by_shift_general"
        )
    return conjugate_by_shift_matched(params, step.omega), space


class DerivativeIndex(str, Enum):
    HESS_X = "D2x"
    GRAD_X_DY = "DxDy"
    D_YY = "Dyy"
    GRAD_X = "Dx"
    D_Y = "Dy"
    IDENTITY = "id"


_DERIVATIVE_RANK = {index: rank for rank, index in enumerate(DerivativeIndex)}


@dataclass(frozen=True, eq=False)
class Term:
    derivative: DerivativeIndex
    y_power: float
    coefficient: np.ndarray

    def to_dict(self) -> Dict:
        return {"derivative": self.derivative.value, "y_power": self.y_power,
                "coefficient": np.asarray(self.coefficient).tolist()}


class TermSum:
    """
    Sum of monomial terms coef * y^power * D, D among the six derivative slots.
    Terms sharing (derivative, power) are merged; negligible ones are dropped.
    """

    def __init__(self, dim_x: int, terms: Sequence[Tuple[DerivativeIndex, float, object]] = ()):
        self.dim_x = int(dim_x)
        self._terms: Dict[Tuple[DerivativeIndex, float], Tuple[float, np.ndarray]] = {}
        for derivative, power, coef in terms:
            self.add(derivative, power, coef)

    def _shape(self, derivative: DerivativeIndex) -> Tuple[int, ...]:
        n = self.dim_x
        if derivative is DerivativeIndex.HESS_X:
            return (n, n)
        if derivative in (DerivativeIndex.GRAD_X_DY, DerivativeIndex.GRAD_X):
            return (n,)
        return ()

    def add(self, derivative: DerivativeIndex, y_power: float, coefficient) -> None:
        derivative = DerivativeIndex(derivative)
        coef = np.asarray(coefficient, dtype=float).reshape(self._shape(derivative))
        key = (derivative, round(float(y_power), 10))
        if key in self._terms:
            power, existing = self._terms[key]
            self._terms[key] = (power, existing + coef)
        else:
            self._terms[key] = (float(y_power), coef.copy())

    @property
    def terms(self) -> List[Term]:
        kept = []
        for (derivative, _), (power, coef) in self._terms.items():
            if coef.size == 0 or np.max(np.abs(coef)) < TERM_DROP_TOLERANCE:
                continue
            kept.append(Term(derivative, power, coef))
        kept.sort(key=lambda t: (_DERIVATIVE_RANK[t.derivative], t.y_power))
        return kept

    @classmethod
    def from_operator(cls, params: OperatorParams) -> "TermSum":
        am = params.mixed_exponent
        return cls(params.dim_x, [
            (DerivativeIndex.HESS_X, params.alpha1, params.Q),
            (DerivativeIndex.GRAD_X_DY, am, 2.0 * params.q),
            (DerivativeIndex.D_YY, params.alpha2, params.gamma),
            (DerivativeIndex.GRAD_X, am - 1.0, params.d),
            (DerivativeIndex.D_Y, params.alpha2 - 1.0, params.c),
            (DerivativeIndex.IDENTITY, params.alpha2 - 2.0, -params.b),
        ])

    def contributions(self, u: TestFunction, x, y) -> np.ndarray:
        xs, ys = as_points(x, y, self.dim_x)
        jet = u.jet(xs, ys)
        columns = []
        for term in self.terms:
            weight = ys ** term.y_power
            if term.derivative is DerivativeIndex.HESS_X:
                part = np.einsum("ij,pij->p", term.coefficient, jet.hess_x)
            elif term.derivative is DerivativeIndex.GRAD_X_DY:
                part = jet.grad_x_dy @ term.coefficient
            elif term.derivative is DerivativeIndex.D_YY:
                part = term.coefficient * jet.d_yy
            elif term.derivative is DerivativeIndex.GRAD_X:
                part = jet.grad_x @ term.coefficient
            elif term.derivative is DerivativeIndex.D_Y:
                part = term.coefficient * jet.d_y
            else:
                part = term.coefficient * jet.value
            columns.append(weight * part)
        if not columns:
            return np.zeros((ys.size, 0))
        return np.stack(columns, axis=1)

    def apply(self, u: TestFunction, x, y):
        single = np.ndim(y) == 0
        values = self.contributions(u, x, y).sum(axis=1)
        return values[0] if single else values

    def isclose(self, other: "TermSum", tol: float = 1e-12) -> bool:
        mine, theirs = self.terms, other.terms
        if len(mine) != len(theirs):
            return False
        for a, b in zip(mine, theirs):
            if a.derivative is not b.derivative or abs(a.y_power - b.y_power) > tol:
                return False
            if not np.allclose(a.coefficient, b.coefficient, rtol=tol, atol=tol):
                return False
        return True

    def to_operator_params(self, alpha1_hint: Optional[float] = None) -> OperatorParams:
        """
        Read the sum back as a standard-form operator; raises TransformError when
        some term has no slot in the standard form.
        """
        grouped: Dict[DerivativeIndex, List[Term]] = {}
        for term in self.terms:
            grouped.setdefault(term.derivative, []).append(term)
        for derivative, entries in grouped.items():
            if len(entries) > 1:
                powers = ", ".join(f"{t.y_power:g}" for t in entries)
                raise TransformError(f"{derivative.value} appears with several y-powers ({powers})")

        def single(derivative):
            entries = grouped.get(derivative)
            return entries[0] if entries else None

        dyy = single(DerivativeIndex.D_YY)
        if dyy is None:
            raise TransformError("no Dyy term, cannot read gamma and alpha2")
        alpha2 = dyy.y_power
        hess = single(DerivativeIndex.HESS_X)
        if hess is not None:
            alpha1 = hess.y_power
        elif alpha1_hint is not None:
            alpha1 = float(alpha1_hint)
        else:
            alpha1 = alpha2
        am = (alpha1 + alpha2) / 2.0
        n = self.dim_x
        expected = {
            DerivativeIndex.GRAD_X_DY: am,
            DerivativeIndex.GRAD_X: am - 1.0,
            DerivativeIndex.D_Y: alpha2 - 1.0,
            DerivativeIndex.IDENTITY: alpha2 - 2.0,
        }
        for derivative, power in expected.items():
            term = single(derivative)
            if term is not None and abs(term.y_power - power) > 1e-10:
                raise TransformError(
                    f"{derivative.value} carries y^{term.y_power:g}, standard form needs y^{power:g}"
                )

        def coef(derivative, default):
            term = single(derivative)
            return default if term is None else term.coefficient

        return OperatorParams(
            dim_x=n, alpha1=alpha1, alpha2=alpha2,
            Q=coef(DerivativeIndex.HESS_X, np.zeros((n, n))),
            q=np.asarray(coef(DerivativeIndex.GRAD_X_DY, np.zeros(n))) / 2.0,
            gamma=float(dyy.coefficient),
            d=coef(DerivativeIndex.GRAD_X, np.zeros(n)),
            c=float(coef(DerivativeIndex.D_Y, 0.0)),
            b=-float(coef(DerivativeIndex.IDENTITY, 0.0)),
        )

    def to_dict(self) -> Dict:
        return {"dim_x": self.dim_x, "terms": [t.to_dict() for t in self.terms]}

    def __repr__(self):
        body = " + ".join(f"({t.coefficient.tolist()}, y^{t.y_power:g}, {t.derivative.value})"
                          for t in self.terms)
        return f"<TermSum {body or '0'}>"


def conjugate_by_shift_general(params: OperatorParams, beta: float, omega) -> TermSum:
    """
    Full expansion of S^{-1} L S for an arbitrary shear exponent. The result
    generally leaves the standard form, hence a TermSum.
    """
    beta = _check_beta(beta)
    omega = np.asarray(omega, dtype=float).reshape(-1)
    if omega.size != params.dim_x:
        raise ParameterError(f"omega has {omega.size} entries, expected {params.dim_x}")
    e = beta + 1.0
    g, a1, a2 = params.gamma, params.alpha1, params.alpha2
    am = params.mixed_exponent
    q = params.q
    out = TermSum.from_operator(params)
    out.add(DerivativeIndex.HESS_X, am + beta, e * (np.outer(q, omega) + np.outer(omega, q)))
    out.add(DerivativeIndex.HESS_X, a2 + 2.0 * beta, g * e * e * np.outer(omega, omega))
    out.add(DerivativeIndex.GRAD_X_DY, a2 + beta, 2.0 * g * e * omega)
    out.add(DerivativeIndex.GRAD_X, a2 + beta - 1.0, (params.c + g * beta) * e * omega)
    return out


# ---------------------------------------------------------------------------
# transformed functions


class KelvinTransformed(TestFunction):
    def __init__(self, base: TestFunction, step: KelvinStep):
        self.base = base
        self.step = step
        self.dim_x = base.dim_x

    def jet(self, x, y) -> Jet:
        x, y = as_points(x, y, self.dim_x)
        k, beta = self.step.k, self.step.beta
        e = beta + 1.0
        C = self.step.prefactor
        inner = self.base.jet(x, y ** e)
        t1 = e * y ** beta
        t2 = e * beta * y ** (beta - 1.0)
        w0 = y ** k
        w1 = k * y ** (k - 1.0)
        w2 = k * (k - 1.0) * y ** (k - 2.0)
        return Jet(
            value=C * w0 * inner.value,
            grad_x=C * w0[:, None] * inner.grad_x,
            d_y=C * (w1 * inner.value + w0 * t1 * inner.d_y),
            hess_x=C * w0[:, None, None] * inner.hess_x,
            grad_x_dy=C * (w1[:, None] * inner.grad_x + (w0 * t1)[:, None] * inner.grad_x_dy),
            d_yy=C * (w2 * inner.value + 2.0 * w1 * t1 * inner.d_y
                      + w0 * (t1 * t1 * inner.d_yy + t2 * inner.d_y)),
        )


class ShiftTransformed(TestFunction):
    def __init__(self, base: TestFunction, step: ShiftStep):
        if step.omega.size != base.dim_x:
            raise ParameterError(f"omega has {step.omega.size} entries, expected {base.dim_x}")
        self.base = base
        self.step = step
        self.dim_x = base.dim_x

    def jet(self, x, y) -> Jet:
        x, y = as_points(x, y, self.dim_x)
        beta, omega = self.step.beta, self.step.omega
        e = beta + 1.0
        s1 = e * y ** beta
        s2 = e * beta * y ** (beta - 1.0)
        inner = self.base.jet(x + (y ** e)[:, None] * omega, y)
        h_omega = inner.hess_x @ omega
        return Jet(
            value=inner.value,
            grad_x=inner.grad_x,
            d_y=(inner.grad_x @ omega) * s1 + inner.d_y,
            hess_x=inner.hess_x,
            grad_x_dy=h_omega * s1[:, None] + inner.grad_x_dy,
            d_yy=((h_omega @ omega) * s1 * s1 + 2.0 * (inner.grad_x_dy @ omega) * s1
                  + (inner.grad_x @ omega) * s2 + inner.d_yy),
        )


def _kelvin_grid(step: KelvinStep, u: GridFunction, mesh: Optional[GradedMesh]) -> GridFunction:
    e = step.beta + 1.0
    if mesh is None:
        if e <= 0:
            raise TransformError("Kelvin steps with beta+1 < 0 on grids need an explicit target mesh")
        mesh = u.mesh.kelvin_preimage(step.beta)
        inner = u.values
    else:
        inner = u.interpolate_y(mesh.y ** e)
    y = mesh.y
    factor = step.prefactor * y ** step.k
    values = factor[:, None] * inner if inner.ndim == 2 else factor * inner
    m = u.m * e - step.k * u.p + step.beta
    return GridFunction(mesh, values, m=m, p=u.p)


def _shift_grid(step: ShiftStep, u: GridFunction, mesh: Optional[GradedMesh]) -> GridFunction:
    if mesh is not None and mesh is not u.mesh:
        u = GridFunction(mesh, u.interpolate_y(mesh.y), m=u.m, p=u.p)
    if u.mesh.dim_x == 0:
        return GridFunction(u.mesh, u.values.copy(), m=u.m, p=u.p)
    if step.omega.size != 1:
        raise ParameterError("grid shifts need N = 1")
    offsets = step.omega[0] * u.mesh.y ** (step.beta + 1.0)
    return GridFunction(u.mesh, u.shift_x(offsets), m=u.m, p=u.p)


def apply_transform(step: TransformStep, u, mesh: Optional[GradedMesh] = None):
    """
    Apply a Kelvin or shift step to a TestFunction (closed form kept) or to a
    GridFunction. Grid transport evaluates on the Kelvin pre-image mesh when
    no target mesh is given, so node values move without interpolation.
    """
    if isinstance(u, TestFunction):
        if isinstance(step, KelvinStep):
            if step.k == 0 and step.beta == 0:
                return u
            return KelvinTransformed(u, step)
        if not np.any(step.omega):
            return u
        return ShiftTransformed(u, step)
    if isinstance(u, GridFunction):
        if isinstance(step, KelvinStep):
            return _kelvin_grid(step, u, mesh)
        return _shift_grid(step, u, mesh)
    raise TransformError(f"cannot transform object of type {type(u).__name__}")


def conjugated_contributions(params: OperatorParams, step: TransformStep, u: TestFunction,
                             x, y) -> Tuple[np.ndarray, np.ndarray]:
    """
    (X^{-1} L X u)(x, y) together with the magnitude of the individual operator
    terms that produced it, for relative comparisons.
    """
    xs, ys = as_points(x, y, params.dim_x)
    v = apply_transform(step, u)
    if isinstance(step, KelvinStep):
        inv = step.inverse()
        # X^{-1} F (x, t) = C' t^k' F(x, t^(1/(beta+1)))
        y_src = ys ** (1.0 / (step.beta + 1.0))
        x_src = xs
        factor = inv.prefactor * ys ** inv.k
    else:
        y_src = ys
        x_src = xs - (ys ** (step.beta + 1.0))[:, None] * step.omega
        factor = np.ones_like(ys)
    terms = operator_terms(params, v.jet(x_src, y_src), y_src)
    return factor * terms.sum(axis=1), np.abs(factor) * np.abs(terms).sum(axis=1)


# ---------------------------------------------------------------------------
# pipelines


@dataclass(frozen=True)
class PipelineStage:
    step: TransformStep
    params_before: OperatorParams
    params_after: OperatorParams
    space_before: SpaceParams
    space_after: SpaceParams
    indicial_before: IndicialData
    indicial_after: IndicialData

    def to_dict(self) -> Dict:
        out = self.step.to_dict()
        out.update({
            "indicial_before": self.indicial_before.to_dict(),
            "indicial_after": self.indicial_after.to_dict(),
            "space_before": self.space_before.to_dict(),
            "space_after": self.space_after.to_dict(),
        })
        return out


@dataclass(frozen=True)
class TransformPipeline:
    mode: str
    source_params: OperatorParams
    source_space: SpaceParams
    target_params: OperatorParams
    target_space: SpaceParams
    stages: Tuple[PipelineStage, ...] = field(default_factory=tuple)

    @property
    def steps(self) -> List[TransformStep]:
        return [stage.step for stage in self.stages]

    @property
    def prefactor_trail(self) -> float:
        return math.prod(s.step.prefactor for s in self.stages if isinstance(s.step, KelvinStep))

    @property
    def scaling_trail(self) -> float:
        """Product of beta+1 over the Kelvin steps."""
        return math.prod(s.step.beta + 1.0 for s in self.stages if isinstance(s.step, KelvinStep))

    def boundary_vector(self) -> np.ndarray:
        """
        (d, c) of the operator just before the drift-killing shear, with c divided
        by the scaling trail; in dirichlet mode this is (d, c + beta_a gamma) - 2 s1 (q, gamma).
        """
        params = self.target_params
        for stage in self.stages:
            if isinstance(stage.step, ShiftStep):
                params = stage.params_before
                break
        return np.concatenate([params.d, [params.c / self.scaling_trail]])

    def forward(self, u):
        """X u: the last step acts first."""
        for stage in reversed(self.stages):
            u = apply_transform(stage.step, u)
        return u

    def pullback(self, f):
        """X^{-1} f."""
        for stage in self.stages:
            f = apply_transform(stage.step.inverse(), f)
        return f

    def inverse(self) -> "TransformPipeline":
        params, space = self.target_params, self.target_space
        stages = []
        for stage in reversed(self.stages):
            step = stage.step.inverse()
            new_params, new_space = conjugate_step(params, space, step)
            stages.append(PipelineStage(step, params, new_params, space, new_space,
                                        indicial_roots(params), indicial_roots(new_params)))
            params, space = new_params, new_space
        return TransformPipeline(self.mode, self.target_params, self.target_space,
                                 params, space, tuple(stages))

    def to_dict(self) -> Dict:
        return {
            "mode": self.mode,
            "steps": [stage.to_dict() for stage in self.stages],
            "source": {"params": self.source_params.to_dict(), "space": self.source_space.to_dict()},
            "target": {"params": self.target_params.to_dict(), "space": self.target_space.to_dict()},
            "prefactor_trail": self.prefactor_trail,
            "scaling_trail": self.scaling_trail,
            "operator_scale": 1.0,
        }


def normalize_mode(mode: str) -> str:
    mode = str(mode).lower()
    if mode in ("oblique", "neumann"):
        return "oblique"
    if mode == "dirichlet":
        return "dirichlet"
    raise ParameterError(f"unknown reduction mode {mode!r}")


def reduce_to_canonical(params: OperatorParams, space: SpaceParams,
                        mode: str) -> Tuple[OperatorParams, SpaceParams, TransformPipeline]:
    """
    Reduce L to equal exponents, zero potential and zero tangential drift.

    Steps: Kelvin(0, beta_a) when alpha1 != alpha2; Kelvin(-s1~, 0) in dirichlet
    mode; Shift(0, -d~/c~) when drift remains.
    """
    mode = normalize_mode(mode)
    D = discriminant(params) if params.gamma > 0 else float("nan")
    if D < 0:
        raise NegativeDiscriminantError(D)
    require_admissible(params)
    if mode == "oblique" and params.b != 0:
        raise ParameterError(f"oblique reduction needs b = 0, got b = {params.b:g}")

    stages: List[PipelineStage] = []
    current, current_space = params, space
    scale = max(1.0, abs(params.b), abs(params.c), params.gamma)

    def push(step: TransformStep, cleanup=None):
        nonlocal current, current_space
        new_params, new_space = conjugate_step(current, current_space, step)
        if cleanup is not None:
            new_params = cleanup(new_params)
        stages.append(PipelineStage(step, current, new_params, current_space, new_space,
                                    indicial_roots(current), indicial_roots(new_params)))
        logger.debug(f"{step.kind} step {step.to_dict()} -> {new_params!r}")
        current, current_space = new_params, new_space

    if params.alpha1 != params.alpha2:
        def equalize(p: OperatorParams) -> OperatorParams:
            if abs(p.alpha1 - p.alpha2) <= 1e-12 * max(1.0, abs(p.alpha1)):
                return p.replace(alpha2=p.alpha1)
            return p
        push(KelvinStep(0.0, params.beta_alpha, space.p), equalize)

    if mode == "dirichlet":
        s1 = indicial_roots(current).s1
        if s1 != 0.0:
            def kill_potential(p: OperatorParams) -> OperatorParams:
                if abs(p.b) > SNAP_TOLERANCE * scale:
                    raise TransformError(f"potential survived the Kelvin step: b = {p.b:g}")
                return p.replace(b=0.0)
            push(KelvinStep(-s1, 0.0, space.p), kill_potential)

    if current.dim_x and np.any(current.d != 0):
        if current.c == 0:
            raise TransformError("drift d != 0 cannot be removed when c~ = 0")
        omega = -current.d / current.c

        def kill_drift(p: OperatorParams) -> OperatorParams:
            if np.max(np.abs(p.d)) > SNAP_TOLERANCE * max(scale, float(np.max(np.abs(current.d)))):
                raise TransformError(f"drift survived the shift: d = {p.d.tolist()}")
            return p.replace(d=np.zeros(p.dim_x))
        push(ShiftStep(0.0, omega), kill_drift)

    pipeline = TransformPipeline(mode, params, space, current, current_space, tuple(stages))
    logger.info(f"canonical reduction ({mode}): {len(stages)} step(s), target {current!r}")
    return current, current_space, pipeline
