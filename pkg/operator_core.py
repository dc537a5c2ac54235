import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import NegativeDiscriminantError, ParameterError

logger = logging.getLogger(__name__)

OPERATOR_KEYS = ("dim_x", "alpha1", "alpha2", "Q", "q", "gamma", "d", "c", "b")

# smallest eigenvalue of A must exceed this multiple of its 2-norm
PD_TOLERANCE = 1e-10

ONE_DIM_NOTE = "N=0: alpha1^- replaced by 0 in every window (1D convention)"


def _frozen_array(values, shape: Tuple[int, ...], name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    expected = int(np.prod(shape))
    if arr.size != expected:
        raise ParameterError(f"{name} must have {expected} entries, got {arr.size}")
    arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class OperatorParams:
    """
    Coefficients of
    L = y^a1 Tr(Q D2x) + 2 y^((a1+a2)/2) q.Dx Dy + gamma y^a2 Dyy
        + y^((a1+a2)/2 - 1) d.Dx + c y^(a2-1) Dy - b y^(a2-2).
    """

    dim_x: int
    alpha1: float
    alpha2: float
    Q: np.ndarray
    q: np.ndarray
    gamma: float
    d: np.ndarray
    c: float
    b: float

    def __post_init__(self):
        n = int(self.dim_x)
        if n < 0:
            raise ParameterError(f"dim_x must be nonnegative, got {self.dim_x}")
        object.__setattr__(self, "dim_x", n)
        object.__setattr__(self, "Q", _frozen_array(self.Q, (n, n), "Q"))
        object.__setattr__(self, "q", _frozen_array(self.q, (n,), "q"))
        object.__setattr__(self, "d", _frozen_array(self.d, (n,), "d"))
        for name in ("alpha1", "alpha2", "gamma", "c", "b"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def from_dict(cls, data: Dict) -> "OperatorParams":
        if not isinstance(data, dict):
            raise ParameterError("operator block must be a mapping")
        unknown = sorted(set(data) - set(OPERATOR_KEYS))
        if unknown:
            raise ParameterError(f"unknown operator keys: {', '.join(unknown)}")
        missing = [key for key in OPERATOR_KEYS if key not in data]
        if missing:
            raise ParameterError(f"missing operator keys: {', '.join(missing)}")
        return cls(**{key: data[key] for key in OPERATOR_KEYS})

    def to_dict(self) -> Dict:
        return {
            "dim_x": self.dim_x,
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "Q": [float(v) for v in self.Q.reshape(-1)],
            "q": [float(v) for v in self.q],
            "gamma": self.gamma,
            "d": [float(v) for v in self.d],
            "c": self.c,
            "b": self.b,
        }

    def replace(self, **changes) -> "OperatorParams":
        return replace(self, **changes)

    @property
    def beta_alpha(self) -> float:
        return (self.alpha1 - self.alpha2) / 2.0

    @property
    def mixed_exponent(self) -> float:
        return (self.alpha1 + self.alpha2) / 2.0

    @property
    def equal_exponents(self) -> bool:
        return self.alpha1 == self.alpha2

    @property
    def block_matrix(self) -> np.ndarray:
        n = self.dim_x
        A = np.empty((n + 1, n + 1))
        A[:n, :n] = self.Q
        A[:n, n] = self.q
        A[n, :n] = self.q
        A[n, n] = self.gamma
        return A

    @property
    def alpha1_minus(self) -> float:
        """Negative part of alpha1, replaced by 0 when N = 0."""
        if self.dim_x == 0:
            return 0.0
        return max(0.0, -self.alpha1)

    def allclose(self, other: "OperatorParams", tol: float = 1e-12) -> bool:
        if self.dim_x != other.dim_x:
            return False
        mine = np.concatenate([[self.alpha1, self.alpha2, self.gamma, self.c, self.b],
                               self.Q.reshape(-1), self.q, self.d])
        theirs = np.concatenate([[other.alpha1, other.alpha2, other.gamma, other.c, other.b],
                                 other.Q.reshape(-1), other.q, other.d])
        scale = max(1.0, float(np.max(np.abs(mine))))
        return bool(np.max(np.abs(mine - theirs)) <= tol * scale)

    def __repr__(self):
        return (f"<OperatorParams N={self.dim_x} alpha=({self.alpha1:g},{self.alpha2:g}) "
                f"gamma={self.gamma:g} c={self.c:g} b={self.b:g}>")


@dataclass(frozen=True)
class SpaceParams:
    """L^p_m on the half-space, measure y^m dx dy."""

    p: float
    m: float

    def __post_init__(self):
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "m", float(self.m))
        if not self.p > 1.0 or not math.isfinite(self.p):
            raise ParameterError(f"p must lie in (1, inf), got {self.p}")
        if not math.isfinite(self.m):
            raise ParameterError(f"m must be finite, got {self.m}")

    @property
    def value_mp(self) -> float:
        return (self.m + 1.0) / self.p

    @classmethod
    def from_dict(cls, data: Dict) -> "SpaceParams":
        if not isinstance(data, dict):
            raise ParameterError("space block must be a mapping")
        unknown = sorted(set(data) - {"p", "m"})
        if unknown:
            raise ParameterError(f"unknown space keys: {', '.join(unknown)}")
        if "p" not in data or "m" not in data:
            raise ParameterError("space block needs both p and m")
        return cls(p=data["p"], m=data["m"])

    def to_dict(self) -> Dict:
        return {"p": self.p, "m": self.m}


@dataclass
class ValidationReport:
    violations: List[str] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    @property
    def admissible(self) -> bool:
        return not self.violations

    def to_dict(self) -> Dict:
        return {"admissible": self.admissible, "violations": list(self.violations),
                "notes": list(self.notes)}


def discriminant(params: OperatorParams) -> float:
    half = (params.c / params.gamma - 1.0) / 2.0
    return params.b / params.gamma + half * half


def validate(params: OperatorParams) -> ValidationReport:
    """
    List every violated admissibility constraint. Never raises.
    """
    report = ValidationReport()
    if params.dim_x == 0:
        report.notes.append(ONE_DIM_NOTE)

    if params.dim_x and not np.allclose(params.Q, params.Q.T, rtol=0.0, atol=1e-12):
        report.violations.append("Q symmetric")
    if not params.gamma > 0:
        report.violations.append("gamma > 0")

    A = params.block_matrix
    sym = 0.5 * (A + A.T)
    smallest = float(np.linalg.eigvalsh(sym).min())
    if smallest <= PD_TOLERANCE * float(np.linalg.norm(sym, 2)):
        report.violations.append("A positive definite")

    if not params.alpha2 < 2.0:
        report.violations.append("alpha2 < 2")
    if not params.alpha2 - params.alpha1 < 2.0:
        report.violations.append("alpha2 - alpha1 < 2")

    if params.gamma > 0 and discriminant(params) < 0:
        report.violations.append("D >= 0")

    if report.violations:
        logger.debug(f"{params!r} violates: {report.violations}")
    return report


def require_admissible(params: OperatorParams) -> None:
    report = validate(params)
    if not report.admissible:
        raise ParameterError("inadmissible operator: " + ", ".join(report.violations))


@dataclass(frozen=True)
class IndicialData:
    D: float
    s1: float
    s2: float

    def residual(self, params: OperatorParams) -> float:
        ratio = params.c / params.gamma
        return max(abs(-s * s + (ratio - 1.0) * s + params.b / params.gamma)
                   for s in (self.s1, self.s2))

    def to_dict(self) -> Dict:
        return {"D": self.D, "s1": self.s1, "s2": self.s2}


def indicial_roots(params: OperatorParams) -> IndicialData:
    """
    Roots of -s^2 + (c/gamma - 1) s + b/gamma = 0, ordered s1 <= s2.
    """
    if not params.gamma > 0:
        raise ParameterError(f"gamma must be positive, got {params.gamma}")
    ratio = params.c / params.gamma
    half = (ratio - 1.0) / 2.0

    if params.b == 0:
        s1, s2 = sorted((0.0, ratio - 1.0))
        return IndicialData(D=half * half, s1=s1, s2=s2)

    D = params.b / params.gamma + half * half
    if D < 0:
        raise NegativeDiscriminantError(D)
    root = math.sqrt(D)
    if half == 0.0:
        return IndicialData(D=D, s1=-root, s2=root)
    # larger-magnitude root first, the other one from the product s1*s2 = -b/gamma
    big = half + math.copysign(root, half)
    small = (-params.b / params.gamma) / big
    s1, s2 = sorted((big, small))
    return IndicialData(D=D, s1=s1, s2=s2)


# ---------------------------------------------------------------------------
# closed-form test functions


@dataclass
class Jet:
    """Value and derivatives up to second order at P points."""

    value: np.ndarray      # (P,)
    grad_x: np.ndarray     # (P, N)
    d_y: np.ndarray        # (P,)
    hess_x: np.ndarray     # (P, N, N)
    grad_x_dy: np.ndarray  # (P, N)
    d_yy: np.ndarray       # (P,)

    def scaled(self, factor) -> "Jet":
        return Jet(factor * self.value, factor * self.grad_x, factor * self.d_y,
                   factor * self.hess_x, factor * self.grad_x_dy, factor * self.d_yy)

    def __add__(self, other: "Jet") -> "Jet":
        return Jet(self.value + other.value, self.grad_x + other.grad_x, self.d_y + other.d_y,
                   self.hess_x + other.hess_x, self.grad_x_dy + other.grad_x_dy,
                   self.d_yy + other.d_yy)

    def times(self, other: "Jet") -> "Jet":
        a, b = self, other
        av, bv = a.value[:, None], b.value[:, None]
        hess = (a.hess_x * b.value[:, None, None] + a.value[:, None, None] * b.hess_x
                + a.grad_x[:, :, None] * b.grad_x[:, None, :]
                + b.grad_x[:, :, None] * a.grad_x[:, None, :])
        return Jet(
            value=a.value * b.value,
            grad_x=a.grad_x * bv + av * b.grad_x,
            d_y=a.d_y * b.value + a.value * b.d_y,
            hess_x=hess,
            grad_x_dy=(a.grad_x_dy * bv + a.grad_x * b.d_y[:, None]
                       + a.d_y[:, None] * b.grad_x + av * b.grad_x_dy),
            d_yy=a.d_yy * b.value + 2.0 * a.d_y * b.d_y + a.value * b.d_yy,
        )


def as_points(x, y, dim_x: int) -> Tuple[np.ndarray, np.ndarray]:
    """Broadcast (x, y) to shapes (P, N) and (P,)."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x = np.asarray(x, dtype=float)
    if dim_x == 0:
        x = np.zeros((y.size, 0))
    elif x.ndim <= 1:
        x = x.reshape(-1, dim_x)
    if x.shape[0] == 1 and y.size > 1:
        x = np.repeat(x, y.size, axis=0)
    if y.size == 1 and x.shape[0] > 1:
        y = np.repeat(y, x.shape[0])
    if x.shape != (y.size, dim_x):
        raise ParameterError(f"points have shape {x.shape}, expected ({y.size}, {dim_x})")
    return x, y


def _power_triplet(base: np.ndarray, exponent: float):
    """base**e with its first two derivatives; integer exponents are safe at 0."""
    e = exponent
    if e == 0:
        one = np.ones_like(base)
        return one, np.zeros_like(base), np.zeros_like(base)
    f = base ** e
    f1 = e * base ** (e - 1) if e != 1 else np.ones_like(base)
    if e == 1:
        f2 = np.zeros_like(base)
    elif e == 2:
        f2 = 2.0 * np.ones_like(base)
    else:
        f2 = e * (e - 1) * base ** (e - 2)
    return f, f1, f2


class TestFunction:
    """
    Closed-form function of (x, y) whose derivatives are exact by construction.
    Subclasses implement jet(); arithmetic builds linear combinations.
    """

    __test__ = False  # keep pytest from collecting the class
    dim_x: int = 0

    def jet(self, x, y) -> Jet:
        raise NotImplementedError

    def __call__(self, x, y) -> np.ndarray:
        return self.jet(x, y).value

    def __add__(self, other: "TestFunction") -> "TestFunction":
        return LinearCombination(((1.0, self), (1.0, other)))

    def __mul__(self, factor) -> "TestFunction":
        return LinearCombination(((factor, self),))

    __rmul__ = __mul__


class GaussianPolynomial(TestFunction):
    """
    exp(-a(|x|^2 + y^2)) * sum_k coef_k x^mu_k y^s_k.

    Terms are (coef, mu, s) with mu a tuple of nonnegative integer exponents
    (one per x coordinate) and s a real y-power.
    """

    def __init__(self, dim_x: int, terms: Sequence[Tuple[float, Sequence[int], float]], a: float = 0.0):
        self.dim_x = int(dim_x)
        self.a = float(a)
        cleaned = []
        for coef, mu, power in terms:
            mu = tuple(int(e) for e in mu)
            if len(mu) != self.dim_x or any(e < 0 for e in mu):
                raise ParameterError(f"bad x-exponent tuple {mu} for N={self.dim_x}")
            cleaned.append((float(coef), mu, float(power)))
        self.terms = tuple(cleaned)

    def _polynomial_jet(self, x: np.ndarray, y: np.ndarray) -> Jet:
        P, n = x.shape
        out = Jet(np.zeros(P), np.zeros((P, n)), np.zeros(P), np.zeros((P, n, n)),
                  np.zeros((P, n)), np.zeros(P))
        for coef, mu, power in self.terms:
            g, g1, g2 = _power_triplet(y, power)
            xs = [_power_triplet(x[:, i], mu[i]) for i in range(n)]
            base = np.full(P, coef)
            for f, _, _ in xs:
                base = base * f

            def prod_except(*skip):
                acc = np.full(P, coef)
                for idx, (f, _, _) in enumerate(xs):
                    if idx not in skip:
                        acc = acc * f
                return acc

            out.value += base * g
            out.d_y += base * g1
            out.d_yy += base * g2
            for i in range(n):
                rest_i = prod_except(i)
                out.grad_x[:, i] += xs[i][1] * rest_i * g
                out.grad_x_dy[:, i] += xs[i][1] * rest_i * g1
                out.hess_x[:, i, i] += xs[i][2] * rest_i * g
                for j in range(i + 1, n):
                    cross = xs[i][1] * xs[j][1] * prod_except(i, j) * g
                    out.hess_x[:, i, j] += cross
                    out.hess_x[:, j, i] += cross
        return out

    def _gaussian_jet(self, x: np.ndarray, y: np.ndarray) -> Jet:
        a = self.a
        P, n = x.shape
        G = np.exp(-a * (np.sum(x * x, axis=1) + y * y))
        eye = np.eye(n)
        return Jet(
            value=G,
            grad_x=-2.0 * a * x * G[:, None],
            d_y=-2.0 * a * y * G,
            hess_x=(4.0 * a * a * x[:, :, None] * x[:, None, :] - 2.0 * a * eye) * G[:, None, None],
            grad_x_dy=4.0 * a * a * x * (y * G)[:, None],
            d_yy=(4.0 * a * a * y * y - 2.0 * a) * G,
        )

    def jet(self, x, y) -> Jet:
        x, y = as_points(x, y, self.dim_x)
        poly = self._polynomial_jet(x, y)
        if self.a == 0.0:
            return poly
        return poly.times(self._gaussian_jet(x, y))

    def __repr__(self):
        return f"<GaussianPolynomial N={self.dim_x} a={self.a:g} terms={len(self.terms)}>"


class SeparableTestFunction(TestFunction):
    """cos(xi.x + phase) * sum_k coef_k y^s_k * exp(-a y^2)."""

    def __init__(self, xi: Sequence[float], profile: Sequence[Tuple[float, float]],
                 a: float = 1.0, phase: float = 0.0):
        self.xi = np.asarray(xi, dtype=float).reshape(-1)
        self.dim_x = self.xi.size
        self.profile = tuple((float(c), float(s)) for c, s in profile)
        self.a = float(a)
        self.phase = float(phase)
        self._profile_fn = GaussianPolynomial(0, [(c, (), s) for c, s in self.profile], self.a)

    def jet(self, x, y) -> Jet:
        x, y = as_points(x, y, self.dim_x)
        P, n = x.shape
        theta = x @ self.xi + self.phase
        cos, sin = np.cos(theta), np.sin(theta)
        wave = Jet(cos, -sin[:, None] * self.xi, np.zeros(P),
                   -cos[:, None, None] * np.outer(self.xi, self.xi), np.zeros((P, n)),
                   np.zeros(P))
        radial = self._profile_fn.jet(np.zeros((P, 0)), y)
        lifted = Jet(radial.value, np.zeros((P, n)), radial.d_y, np.zeros((P, n, n)),
                     np.zeros((P, n)), radial.d_yy)
        return wave.times(lifted)

    def __repr__(self):
        return f"<SeparableTestFunction xi={self.xi.tolist()} a={self.a:g}>"


class LinearCombination(TestFunction):
    def __init__(self, parts: Sequence[Tuple[float, TestFunction]]):
        flat = []
        for coef, fn in parts:
            if isinstance(fn, LinearCombination):
                flat.extend((coef * c, f) for c, f in fn.parts)
            else:
                flat.append((coef, fn))
        dims = {fn.dim_x for _, fn in flat}
        if len(dims) != 1:
            raise ParameterError(f"cannot combine test functions of dimensions {sorted(dims)}")
        self.parts = tuple(flat)
        self.dim_x = dims.pop()

    def jet(self, x, y) -> Jet:
        total = None
        for coef, fn in self.parts:
            piece = fn.jet(x, y).scaled(coef)
            total = piece if total is None else total + piece
        return total


def random_test_function(rng: np.random.Generator, dim_x: int, n_terms: int = 3) -> GaussianPolynomial:
    terms = []
    for _ in range(n_terms):
        budget = int(rng.integers(0, 5))
        mu = [0] * dim_x
        for _ in range(budget if dim_x else 0):
            mu[int(rng.integers(0, dim_x))] += 1
        power = float(rng.choice([0.0, 1.0, 2.0, 3.0, 0.5]))
        terms.append((float(rng.normal()), tuple(mu), power))
    return GaussianPolynomial(dim_x, terms, a=float(rng.uniform(0.2, 0.8)))


def random_admissible_params(rng: np.random.Generator, dim_x: Optional[int] = None,
                             b_zero: bool = False) -> OperatorParams:
    """Draw a random operator satisfying every admissibility constraint with margin."""
    n = int(rng.integers(0, 3)) if dim_x is None else int(dim_x)
    M = rng.normal(size=(n + 1, n + 1))
    A = M @ M.T + 0.5 * np.eye(n + 1)
    gamma = float(A[n, n])
    alpha2 = float(rng.uniform(-1.5, 1.8))
    alpha1 = float(rng.uniform(alpha2 - 1.8, alpha2 + 1.5))
    c = float(rng.uniform(-0.5, 3.0)) * gamma
    half = (c / gamma - 1.0) / 2.0
    b = 0.0 if b_zero else gamma * (float(rng.uniform(0.0, 2.0)) - half * half)
    return OperatorParams(dim_x=n, alpha1=alpha1, alpha2=alpha2, Q=A[:n, :n], q=A[n, :n],
                          gamma=gamma, d=rng.normal(size=n), c=c, b=b)


# ---------------------------------------------------------------------------
# pointwise application


def operator_terms(params: OperatorParams, jet: Jet, y: np.ndarray) -> np.ndarray:
    """The six contributions of L, stacked as columns of a (P, 6) array."""
    a1, a2, am = params.alpha1, params.alpha2, params.mixed_exponent
    second_x = np.einsum("ij,pij->p", params.Q, jet.hess_x) if params.dim_x else np.zeros_like(jet.value)
    mixed = jet.grad_x_dy @ params.q if params.dim_x else np.zeros_like(jet.value)
    drift_x = jet.grad_x @ params.d if params.dim_x else np.zeros_like(jet.value)
    return np.stack([
        y ** a1 * second_x,
        2.0 * y ** am * mixed,
        params.gamma * y ** a2 * jet.d_yy,
        y ** (am - 1.0) * drift_x,
        params.c * y ** (a2 - 1.0) * jet.d_y,
        -params.b * y ** (a2 - 2.0) * jet.value,
    ], axis=1)


def apply_operator(params: OperatorParams, u: TestFunction, x, y):
    """
    Exact value of Lu at the given point(s), from the analytic derivatives of u.
    Returns a scalar for a single point, otherwise an array of shape (P,).
    """
    single = np.ndim(y) == 0
    xs, ys = as_points(x, y, params.dim_x)
    if np.any(ys <= 0):
        raise ParameterError("the operator is evaluated only at y > 0")
    if u.dim_x != params.dim_x:
        raise ParameterError(f"test function has N={u.dim_x}, operator has N={params.dim_x}")
    values = operator_terms(params, u.jet(xs, ys), ys).sum(axis=1)
    return values[0] if single else values
