import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline

from errors import OutOfBoxError, ParameterError
from operator_core import OperatorParams, SpaceParams, TestFunction

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GradedMesh:
    """
    y_j = Y (j/J)^r for j = 1..J, optionally times a periodic x-grid of n_x
    nodes on [-X, X).
    """

    Y: float
    J: int
    r: float = 2.0
    X: Optional[float] = None
    n_x: int = 0

    def __post_init__(self):
        object.__setattr__(self, "Y", float(self.Y))
        object.__setattr__(self, "J", int(self.J))
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "n_x", int(self.n_x))
        if not self.Y > 0:
            raise ParameterError(f"cutoff Y must be positive, got {self.Y}")
        if self.J < 3:
            raise ParameterError(f"need at least 3 y-nodes, got J={self.J}")
        if not self.r > 0:
            raise ParameterError(f"grading exponent must be positive, got r={self.r}")
        if self.n_x < 0 or (self.n_x and not (self.X and self.X > 0)):
            raise ParameterError("an x-grid needs n_x > 0 and X > 0")
        t = np.arange(1, self.J + 1) / self.J
        y = self.Y * t ** self.r
        t.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)
        if self.n_x:
            x = -self.X + (2.0 * self.X / self.n_x) * np.arange(self.n_x)
            x.setflags(write=False)
            object.__setattr__(self, "x", x)
        else:
            object.__setattr__(self, "x", np.zeros(0))

    @property
    def dim_x(self) -> int:
        return 1 if self.n_x else 0

    @property
    def hx(self) -> float:
        return 2.0 * self.X / self.n_x if self.n_x else 0.0

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.J, self.n_x) if self.n_x else (self.J,)

    def points(self) -> Tuple[np.ndarray, np.ndarray]:
        """All nodes flattened in row-major (y, x) order, as (x (P, N), y (P,))."""
        if not self.n_x:
            return np.zeros((self.J, 0)), self.y.copy()
        yy, xx = np.meshgrid(self.y, self.x, indexing="ij")
        return xx.reshape(-1, 1), yy.reshape(-1)

    def power_image(self, exponent: float) -> "GradedMesh":
        """Mesh whose nodes are y_j ** exponent."""
        return GradedMesh(self.Y ** exponent, self.J, self.r * exponent, self.X, self.n_x)

    def kelvin_preimage(self, beta: float) -> "GradedMesh":
        return self.power_image(1.0 / (beta + 1.0))

    def refined(self, j_factor: int = 2, x_factor: int = 1) -> "GradedMesh":
        return GradedMesh(self.Y, self.J * j_factor, self.r, self.X, self.n_x * x_factor)

    def with_cutoff(self, Y: float, J: Optional[int] = None) -> "GradedMesh":
        return GradedMesh(Y, self.J if J is None else J, self.r, self.X, self.n_x)

    def to_dict(self) -> Dict:
        return {"Y": self.Y, "J": self.J, "r": self.r, "X": self.X, "n_x": self.n_x}

    def __repr__(self):
        return f"<GradedMesh Y={self.Y:g} J={self.J} r={self.r:g} n_x={self.n_x}>"


def integrate_y(mesh: GradedMesh, g: np.ndarray) -> float:
    """
    Integral over (0, Y) of a nonnegative nodal integrand g(y_j), by the
    trapezoidal rule in t after y = Y t^r. The cell (0, t_1) uses a power-law
    fit through the first two nodes.
    """
    g = np.asarray(g, dtype=float)
    t = mesh.t
    h = g * mesh.Y * mesh.r * t ** (mesh.r - 1.0)
    inner = trapezoid(h, t)
    h1, h2 = h[0], h[1]
    if h1 <= 0.0 or h2 <= 0.0:
        first = 0.5 * h1 * t[0]
    else:
        theta = math.log(h2 / h1) / math.log(t[1] / t[0])
        if theta <= -1.0 + 1e-9:
            first = h1 * t[0]
        else:
            first = h1 * t[0] / (theta + 1.0)
    return float(inner + first)


def _lp_norm_values(mesh: GradedMesh, values: np.ndarray, m: float, p: float) -> float:
    density = np.abs(values) ** p
    if density.ndim == 2:
        density = density.sum(axis=1) * mesh.hx
    return integrate_y(mesh, density * mesh.y ** m) ** (1.0 / p)


class GridFunction:
    """Real or complex samples on a GradedMesh, tagged with the (m, p) of its space."""

    def __init__(self, mesh: GradedMesh, values, m: float = 0.0, p: float = 2.0):
        values = np.asarray(values)
        if values.shape != mesh.shape:
            raise ParameterError(f"values have shape {values.shape}, mesh expects {mesh.shape}")
        self.mesh = mesh
        self.values = values
        self.m = float(m)
        self.p = float(p)

    @classmethod
    def from_function(cls, mesh: GradedMesh, fn: Union[TestFunction, Callable],
                      m: float = 0.0, p: float = 2.0) -> "GridFunction":
        x, y = mesh.points()
        if isinstance(fn, TestFunction):
            values = fn(x, y)
        else:
            values = fn(x[:, 0] if mesh.n_x else None, y)
        return cls(mesh, np.asarray(values).reshape(mesh.shape), m=m, p=p)

    @property
    def dim_x(self) -> int:
        return self.mesh.dim_x

    def norm(self) -> float:
        return weighted_lp_norm(self, self.m, self.p)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.mesh, values, m=self.m, p=self.p)

    def interpolate_y(self, y_points) -> np.ndarray:
        """Cubic interpolation in y at arbitrary points, all x columns at once."""
        y_points = np.asarray(y_points, dtype=float)
        lo, hi = self.mesh.y[0], self.mesh.y[-1]
        slack = 1e-12 * hi
        outside = int(np.count_nonzero((y_points < lo - slack) | (y_points > hi + slack)))
        if outside:
            raise OutOfBoxError(outside, (lo, hi))
        y_points = np.clip(y_points, lo, hi)
        if np.iscomplexobj(self.values):
            re = CubicSpline(self.mesh.y, self.values.real, axis=0)(y_points)
            im = CubicSpline(self.mesh.y, self.values.imag, axis=0)(y_points)
            return re + 1j * im
        return CubicSpline(self.mesh.y, self.values, axis=0)(y_points)

    def shift_x(self, offsets) -> np.ndarray:
        """Row j evaluated at x + offsets[j], by periodic cubic interpolation."""
        mesh = self.mesh
        period = 2.0 * mesh.X
        nodes = np.append(mesh.x, mesh.x[0] + period)
        out = np.empty_like(self.values)
        for j, offset in enumerate(np.asarray(offsets, dtype=float)):
            row = np.append(self.values[j], self.values[j, 0])
            target = np.mod(mesh.x + offset - mesh.x[0], period) + mesh.x[0]
            if np.iscomplexobj(row):
                re = CubicSpline(nodes, row.real, bc_type="periodic")(target)
                im = CubicSpline(nodes, row.imag, bc_type="periodic")(target)
                out[j] = re + 1j * im
            else:
                out[j] = CubicSpline(nodes, row, bc_type="periodic")(target)
        return out

    def to_csv_rows(self) -> List[Tuple[float, float, complex]]:
        rows = []
        if self.mesh.n_x:
            for j, y in enumerate(self.mesh.y):
                for i, x in enumerate(self.mesh.x):
                    rows.append((float(x), float(y), self.values[j, i]))
        else:
            for j, y in enumerate(self.mesh.y):
                rows.append((0.0, float(y), self.values[j]))
        return rows

    def __repr__(self):
        return f"<GridFunction {self.mesh!r} m={self.m:g} p={self.p:g}>"


def weighted_lp_norm(u: GridFunction, m: Optional[float] = None, p: Optional[float] = None) -> float:
    """(integral of |u|^p y^m dx dy)^(1/p) over the mesh."""
    m = u.m if m is None else float(m)
    p = u.p if p is None else float(p)
    if p < 1:
        raise ParameterError(f"p must be at least 1, got {p}")
    return _lp_norm_values(u.mesh, u.values, m, p)


# ---------------------------------------------------------------------------
# derivatives on the graded mesh


def stencil_weights(y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Three-point Lagrange weights for first and second derivatives at every node:
    centered in the interior, one-sided at both ends.
    """
    J = y.size
    idx = np.empty((J, 3), dtype=int)
    idx[:, 1] = np.arange(J)
    idx[:, 0] = idx[:, 1] - 1
    idx[:, 2] = idx[:, 1] + 1
    idx[0] = (0, 1, 2)
    idx[-1] = (J - 3, J - 2, J - 1)
    nodes = y[idx]
    x0 = y[:, None]
    w1 = np.empty((J, 3))
    w2 = np.empty((J, 3))
    for k in range(3):
        a, b = [l for l in range(3) if l != k]
        denom = (nodes[:, k] - nodes[:, a]) * (nodes[:, k] - nodes[:, b])
        w1[:, k] = ((x0[:, 0] - nodes[:, a]) + (x0[:, 0] - nodes[:, b])) / denom
        w2[:, k] = 2.0 / denom
    return idx, w1, w2


def y_derivatives(mesh: GradedMesh, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    idx, w1, w2 = stencil_weights(mesh.y)
    gathered = values[idx]  # (J, 3, ...)
    extra = (slice(None), slice(None)) + (None,) * (values.ndim - 1)
    d1 = (w1[extra] * gathered).sum(axis=1)
    d2 = (w2[extra] * gathered).sum(axis=1)
    return d1, d2


def x_derivatives(mesh: GradedMesh, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Centered periodic differences along the x axis (axis 1)."""
    h = mesh.hx
    forward = np.roll(values, -1, axis=1)
    backward = np.roll(values, 1, axis=1)
    return (forward - backward) / (2.0 * h), (forward - 2.0 * values + backward) / (h * h)


@dataclass
class SobolevTermNorms:
    lp: float
    d2x: float
    dx: float
    dyy: float
    dy: float
    dxdy: float
    neumann: Optional[float] = None
    oblique: Optional[float] = None
    rellich: Optional[float] = None
    dyy_corrected: Optional[float] = None

    def total(self) -> float:
        return self.lp + self.d2x + self.dx + self.dyy + self.dy + self.dxdy

    def to_dict(self) -> Dict[str, float]:
        return {name: value for name, value in self.__dict__.items() if value is not None}


@dataclass
class _Derivatives:
    value: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    dxx: np.ndarray
    dxy: np.ndarray
    dyy: np.ndarray


def _derivatives_on_mesh(u, mesh: Optional[GradedMesh]) -> Tuple[_Derivatives, GradedMesh]:
    if isinstance(u, GridFunction):
        mesh = u.mesh
        v = u.values
        dy, dyy = y_derivatives(mesh, v)
        if mesh.n_x:
            dx, dxx = x_derivatives(mesh, v)
            dxy, _ = x_derivatives(mesh, dy)
        else:
            dx = dxx = dxy = np.zeros_like(v)
        return _Derivatives(v, dx, dy, dxx, dxy, dyy), mesh
    if mesh is None:
        raise ParameterError("a mesh is needed to quadrature a closed-form function")
    if u.dim_x != mesh.dim_x:
        raise ParameterError(f"test function has N={u.dim_x}, mesh has N={mesh.dim_x}")
    x, y = mesh.points()
    jet = u.jet(x, y)
    shape = mesh.shape
    if mesh.n_x:
        return _Derivatives(jet.value.reshape(shape), jet.grad_x[:, 0].reshape(shape),
                            jet.d_y.reshape(shape), jet.hess_x[:, 0, 0].reshape(shape),
                            jet.grad_x_dy[:, 0].reshape(shape), jet.d_yy.reshape(shape)), mesh
    zero = np.zeros(shape)
    return _Derivatives(jet.value, zero, jet.d_y, zero, zero, jet.d_yy), mesh


def sobolev_term_norms(u: Union[GridFunction, TestFunction], params: OperatorParams,
                       space: SpaceParams, mesh: Optional[GradedMesh] = None,
                       extras: Sequence[str] = ("neumann", "oblique", "rellich")) -> SobolevTermNorms:
    """
    One weighted L^p_m norm per term of the W^{2,p}(alpha1, alpha2, m) norm,
    plus the requested boundary-type extras.
    """
    der, mesh = _derivatives_on_mesh(u, mesh)
    y = mesh.y[:, None] if mesh.n_x else mesh.y
    a1, a2, am = params.alpha1, params.alpha2, params.mixed_exponent
    m, p = space.m, space.p

    def norm(values):
        return _lp_norm_values(mesh, values, m, p)

    has_x = bool(mesh.n_x)
    terms = SobolevTermNorms(
        lp=norm(der.value),
        d2x=norm(y ** a1 * der.dxx) if has_x else 0.0,
        dx=norm(y ** (a1 / 2.0) * der.dx) if has_x else 0.0,
        dyy=norm(y ** a2 * der.dyy),
        dy=norm(y ** (a2 / 2.0) * der.dy),
        dxdy=norm(y ** am * der.dxy) if has_x else 0.0,
    )
    if "neumann" in extras:
        terms.neumann = norm(y ** (a2 - 1.0) * der.dy)
    if "oblique" in extras:
        drift = params.d[0] * der.dx if (has_x and params.dim_x) else 0.0
        terms.oblique = norm(y ** (am - 1.0) * drift + params.c * y ** (a2 - 1.0) * der.dy)
    if "rellich" in extras:
        terms.rellich = norm(y ** (a2 - 2.0) * der.value)
    if params.alpha1 != params.alpha2:
        terms.dyy_corrected = norm(y ** a2 * (der.dyy + params.beta_alpha * der.dy / y))
    return terms


@dataclass
class TermTrend:
    values: List[float]
    converged: bool
    growth_factor: float

    def to_dict(self) -> Dict:
        return {"values": self.values, "converged": self.converged,
                "growth_factor": self.growth_factor}


@dataclass
class MembershipReport:
    terms: Dict[str, TermTrend] = field(default_factory=dict)

    @property
    def belongs(self) -> bool:
        return all(trend.converged for trend in self.terms.values())

    def to_dict(self) -> Dict:
        return {"belongs": self.belongs,
                "terms": {name: trend.to_dict() for name, trend in self.terms.items()}}


def sobolev_membership(u: Union[TestFunction, Callable[[GradedMesh], GridFunction]],
                       params: OperatorParams, space: SpaceParams, mesh: GradedMesh,
                       levels: int = 3, tol: float = 1e-3,
                       extras: Sequence[str] = ("neumann", "oblique", "rellich")) -> MembershipReport:
    """
    Refinement proxy for membership: term norms on J, 2J, 4J, ... nodes.
    A term converges when its last relative change is below tol.
    """
    history: Dict[str, List[float]] = {}
    current = mesh
    for level in range(levels):
        sample = u if isinstance(u, TestFunction) else u(current)
        norms = sobolev_term_norms(sample, params, space, mesh=current, extras=extras)
        for name, value in norms.to_dict().items():
            history.setdefault(name, []).append(float(value))
        current = current.refined()
    report = MembershipReport()
    for name, values in history.items():
        last, prev = values[-1], values[-2]
        growth = last / prev if prev > 0 else (math.inf if last > 0 else 1.0)
        converged = abs(last - prev) <= tol * max(abs(last), 1e-300) or (last == 0.0 and prev == 0.0)
        report.terms[name] = TermTrend(values, bool(converged), float(growth))
    return report


# ---------------------------------------------------------------------------
# boundary traces


@dataclass
class TraceEstimate:
    limit: Union[float, complex, np.ndarray]
    spread: float
    low_confidence: bool
    band_estimates: List = field(default_factory=list)

    @property
    def magnitude(self) -> float:
        return float(np.max(np.abs(self.limit)))

    def to_dict(self) -> Dict:
        limit = np.asarray(self.limit)
        if limit.ndim == 0:
            value = complex(limit)
            shown = value.real if value.imag == 0 else [value.real, value.imag]
        else:
            shown = {"max_abs": self.magnitude}
        return {"limit": shown, "spread": self.spread, "low_confidence": self.low_confidence}


def _aitken(g1, g2, g3):
    den = g3 - 2.0 * g2 + g1
    scale = np.abs(g1) + np.abs(g2) + np.abs(g3)
    flat = np.abs(den) <= 1e-13 * np.maximum(scale, 1e-300)
    safe = np.where(flat, 1.0, den)
    return np.where(flat, g1, g1 - (g2 - g1) ** 2 / safe)


def boundary_trace(u: GridFunction, sigma: float, bands: Sequence[int] = (1, 2, 3)) -> TraceEstimate:
    """
    Estimate lim_{y->0} y^sigma u by Aitken extrapolation over node triples
    (j, 2j, 4j); the triples starting at the smallest nodes are the bands.
    """
    mesh = u.mesh
    if mesh.J < 4 * max(bands):
        raise ParameterError(f"mesh too coarse for trace bands: J={mesh.J}")
    weight = mesh.y ** sigma
    g = (weight[:, None] * u.values) if u.values.ndim == 2 else weight * u.values
    estimates = [_aitken(g[j - 1], g[2 * j - 1], g[4 * j - 1]) for j in bands]
    limit = estimates[0]
    if np.ndim(limit) == 0:
        limit = limit.item()
    stacked = np.stack([np.atleast_1d(e) for e in estimates])
    spread = float(np.max(np.abs(stacked.max(axis=0) - stacked.min(axis=0)))) if np.isrealobj(stacked) \
        else float(np.max(np.abs(stacked[:, None] - stacked[None, :])))
    steps = np.diff(stacked, axis=0)
    if np.iscomplexobj(steps):
        steps = np.abs(steps)
        monotone = bool(np.all(steps[1:] <= steps[:-1] * (1 + 1e-12) + 1e-15))
    else:
        signs = np.sign(steps)
        monotone = bool(np.all((signs[1:] == signs[:-1]) | (signs[1:] == 0) | (signs[:-1] == 0)))
    tolerance = 1e-8 * (1.0 + float(np.max(np.abs(limit))))
    low_confidence = (not monotone) and spread > tolerance
    if low_confidence:
        logger.warning(f"trace estimate for sigma={sigma:g} is not monotone across bands "
                       f"(spread {spread:.2e})")
    return TraceEstimate(limit=limit, spread=spread, low_confidence=low_confidence,
                         band_estimates=[np.asarray(e).tolist() for e in estimates])
