"""
Decision procedure: generation windows, domain descriptions and regime flags
for the degenerate operator under Neumann, oblique and Dirichlet conditions.
All windows are open intervals for (m+1)/p; edges are never covered.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from errors import NegativeDiscriminantError, NotGeneratingError, ParameterError
from operator_core import (
    ONE_DIM_NOTE,
    OperatorParams,
    SpaceParams,
    discriminant,
    indicial_roots,
    validate,
)

logger = logging.getLogger(__name__)

WINDOW_EDGE_NOTE = ("enlarged dirichlet window read as (c/gamma - 1 + alpha^-, 2 - alpha); "
                    "its printed lower bound is typographically ambiguous")


class BCKind(str, Enum):
    NEUMANN = "neumann"
    OBLIQUE = "oblique"
    DIRICHLET = "dirichlet"


class RegimeFlag(str, Enum):
    NEUMANN_AUTOMATIC = "NEUMANN_AUTOMATIC"
    NEUMANN_TRACE_REQUIRED = "NEUMANN_TRACE_REQUIRED"
    WN_EQUALS_WV = "WN_EQUALS_WV"
    ALL_SPACES_COINCIDE = "ALL_SPACES_COINCIDE"
    RELLICH_DOMAIN = "RELLICH_DOMAIN"
    MIXED_DERIV_ESTIMATE = "MIXED_DERIV_ESTIMATE"
    DIRICHLET_OBLIQUE_COINCIDE = "DIRICHLET_OBLIQUE_COINCIDE"
    ALTERNATIVE_REALIZATION_EXISTS = "ALTERNATIVE_REALIZATION_EXISTS"
    DIRICHLET_ENLARGED_WINDOW = "DIRICHLET_ENLARGED_WINDOW"


class SpaceFamily(str, Enum):
    NEUMANN = "W_N"
    OBLIQUE = "W_v(w)"
    DIRICHLET = "y^(-s1) W_w"
    RELLICH = "W_R"
    ALTERNATIVE = "y^(-s2) W_w"


@dataclass(frozen=True, eq=False)
class BoundaryCondition:
    kind: BCKind
    v: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", BCKind(self.kind))
        if self.v is not None:
            v = np.array(self.v, dtype=float).reshape(-1)
            if self.kind is not BCKind.OBLIQUE:
                raise ParameterError(f"{self.kind.value} condition takes no boundary vector")
            if v.size == 0:
                raise ParameterError("oblique boundary vector needs at least the c component")
            if v[-1] == 0 and np.any(v[:-1] != 0):
                raise ParameterError("oblique condition with c_bc = 0 requires d_bc = 0")
            v.setflags(write=False)
            object.__setattr__(self, "v", v)

    @classmethod
    def neumann(cls) -> "BoundaryCondition":
        return cls(BCKind.NEUMANN)

    @classmethod
    def dirichlet(cls) -> "BoundaryCondition":
        return cls(BCKind.DIRICHLET)

    @classmethod
    def oblique(cls, d_bc=None, c_bc: Optional[float] = None) -> "BoundaryCondition":
        if c_bc is None:
            return cls(BCKind.OBLIQUE)
        d_bc = [] if d_bc is None else list(np.atleast_1d(d_bc))
        return cls(BCKind.OBLIQUE, np.array(d_bc + [c_bc], dtype=float))

    @classmethod
    def from_dict(cls, data) -> "BoundaryCondition":
        if isinstance(data, str):
            return cls(BCKind(data))
        if not isinstance(data, dict):
            raise ParameterError("bc block must be a string or a mapping")
        unknown = sorted(set(data) - {"kind", "v"})
        if unknown:
            raise ParameterError(f"unknown bc keys: {', '.join(unknown)}")
        try:
            kind = BCKind(data.get("kind", "dirichlet"))
        except ValueError:
            raise ParameterError(f"unknown boundary condition {data.get('kind')!r}")
        return cls(kind, data.get("v"))

    @property
    def mode(self) -> str:
        return "dirichlet" if self.kind is BCKind.DIRICHLET else "oblique"

    def to_dict(self) -> Dict:
        out = {"kind": self.kind.value}
        if self.v is not None:
            out["v"] = [float(x) for x in self.v]
        return out


@dataclass
class GenerationReport:
    generates: bool
    window: Tuple[float, float]
    value_mp: float
    theorem_tag: str
    reasons: List[str] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        lo, hi = self.window
        return not lo < hi

    def to_dict(self) -> Dict:
        lo, hi = self.window
        return {
            "generates": self.generates,
            "window": [lo + 0.0, hi + 0.0],
            "window_empty": self.empty,
            "value_mp": self.value_mp,
            "theorem_tag": self.theorem_tag,
            "reasons": list(self.reasons),
            "notes": list(self.notes),
        }


@dataclass
class TraceCondition:
    exponent: float
    quantity: str
    limit: str  # "zero" or "finite"

    @property
    def expression(self) -> str:
        return f"lim_(y->0) y^{self.exponent:g} ({self.quantity}) " + \
            ("= 0" if self.limit == "zero" else "is finite")

    def to_dict(self) -> Dict:
        return {"exponent": self.exponent, "quantity": self.quantity, "limit": self.limit,
                "expression": self.expression}


@dataclass
class DomainSpec:
    mode: str
    space_family: SpaceFamily
    w: List[float]
    weight_shift: float
    trace_condition: TraceCondition
    equivalence_flags: Set[RegimeFlag] = field(default_factory=set)
    core_description: str = ""
    reduced_drift: Optional[List[float]] = None
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "mode": self.mode,
            "space_family": self.space_family.value,
            "w": list(self.w),
            "weight_shift": self.weight_shift,
            "trace_condition": self.trace_condition.to_dict(),
            "equivalence_flags": sorted(flag.value for flag in self.equivalence_flags),
            "core_description": self.core_description,
            "reduced_drift": self.reduced_drift,
            "notes": list(self.notes),
        }


def _exponent_tag(params: OperatorParams) -> str:
    return "equal_exponents" if params.equal_exponents else "distinct_exponents"


def _window_verdict(report: GenerationReport) -> None:
    lo, hi = report.window
    value = report.value_mp
    if not lo < hi:
        report.reasons.append(f"window ({lo:g}, {hi:g}) is empty")
    elif value == lo or value == hi:
        report.reasons.append(f"(m+1)/p = {value:g} sits on the window edge: not covered")
    elif not lo < value < hi:
        report.reasons.append(f"(m+1)/p = {value:g} lies outside ({lo:g}, {hi:g})")


def check_generation(params: OperatorParams, space: SpaceParams,
                     bc: BoundaryCondition) -> GenerationReport:
    """
    Decide generation of an analytic semigroup with maximal regularity.
    """
    if bc.kind is not BCKind.DIRICHLET and params.b != 0:
        raise ParameterError(f"{bc.kind.value} condition needs b = 0, got b = {params.b:g}")
    if bc.kind is BCKind.DIRICHLET and params.gamma > 0:
        D = discriminant(params)
        if D < 0:
            raise NegativeDiscriminantError(D)

    report = GenerationReport(False, (math.nan, math.nan), space.value_mp, "")
    if params.dim_x == 0:
        report.notes.append(ONE_DIM_NOTE)
    validation = validate(params)
    if not validation.admissible:
        report.reasons.extend(f"inadmissible: {v}" for v in validation.violations)
        return report

    lower = params.alpha1_minus
    if bc.kind is BCKind.DIRICHLET:
        roots = indicial_roots(params)
        report.window = (roots.s1 + lower, roots.s2 + 2.0 - params.alpha2)
        report.theorem_tag = f"dirichlet/{_exponent_tag(params)}"
    else:
        report.window = (lower, params.c / params.gamma + 1.0 - params.alpha2)
        report.theorem_tag = f"{bc.kind.value}/{_exponent_tag(params)}"
        normal = params.c + params.beta_alpha * params.gamma
        drift = bool(params.dim_x and np.any(params.d != 0))
        if bc.kind is BCKind.NEUMANN and drift:
            report.reasons.append("neumann condition needs d = 0; use the oblique condition")
        if normal == 0 and drift:
            report.reasons.append("c + beta_alpha gamma = 0 requires d = 0")
        if bc.v is not None:
            w = np.concatenate([params.d, [normal]])
            if bc.v.size != w.size or np.linalg.matrix_rank(np.vstack([bc.v, w]), tol=1e-12) > 1:
                report.reasons.append("oblique vector must be proportional to (d, c + beta_alpha gamma)")

    _window_verdict(report)
    report.generates = not report.reasons
    logger.debug(f"generation {report.theorem_tag}: window={report.window} "
                 f"value={report.value_mp:g} -> {report.generates}")
    return report


def regime_flags(params: OperatorParams, space: SpaceParams) -> Set[RegimeFlag]:
    """
    Space-equivalence and realization flags. Conditions of the equal-exponent
    corollaries are evaluated through the exponent-equalizing reduction, which
    turns them into the expressions below in the original variables.
    """
    if not validate(params).admissible:
        logger.debug(f"no regime flags for inadmissible {params!r}")
        return set()
    flags: Set[RegimeFlag] = set()
    value = space.value_mp
    a2, am = params.alpha2, params.mixed_exponent
    lower = params.alpha1_minus
    ratio = params.c / params.gamma
    roots = indicial_roots(params)
    s1, s2 = roots.s1, roots.s2

    if value > 1.0 - a2:
        flags.add(RegimeFlag.NEUMANN_AUTOMATIC)
    elif value < 1.0 - a2:
        flags.add(RegimeFlag.NEUMANN_TRACE_REQUIRED)
    if value > 1.0 - am:
        flags.add(RegimeFlag.WN_EQUALS_WV)
    if value > 2.0 - a2:
        flags.add(RegimeFlag.ALL_SPACES_COINCIDE)

    in_dirichlet_window = s1 + lower < value < s2 + 2.0 - a2
    if in_dirichlet_window and value > s1 + 1.0 - am:
        flags.add(RegimeFlag.MIXED_DERIV_ESTIMATE)
    if in_dirichlet_window and s1 + 2.0 - a2 < value < s2 + 2.0 - a2:
        flags.add(RegimeFlag.RELLICH_DOMAIN)

    if params.b == 0 and ratio > 1.0:
        flags.add(RegimeFlag.DIRICHLET_OBLIQUE_COINCIDE)
    if roots.D > 0 and s2 < s1 + 2.0 - a2 and s2 + lower < value < s1 + 2.0 - a2:
        flags.add(RegimeFlag.ALTERNATIVE_REALIZATION_EXISTS)
    if params.b == 0 and ratio < 1.0 and ratio - 1.0 + lower < value < 2.0 - a2:
        flags.add(RegimeFlag.DIRICHLET_ENLARGED_WINDOW)
    return flags


def _core_text(mode: str, family: SpaceFamily) -> str:
    if mode == "oblique":
        return ("core: smooth functions with compact support in the closed half-space "
                "satisfying the oblique condition near y = 0 (reported only)")
    if family is SpaceFamily.RELLICH:
        return "core: C_c^infinity of the open half-space (reported only)"
    return ("core: y^(-s1) times smooth compactly supported functions meeting the "
            "transported oblique condition (reported only)")


def domain_description(params: OperatorParams, space: SpaceParams,
                       bc: BoundaryCondition) -> DomainSpec:
    """Domain family, exact boundary vector, measure shift and trace condition."""
    generation = check_generation(params, space, bc)
    if not generation.generates:
        raise NotGeneratingError(generation.reasons)
    flags = regime_flags(params, space)
    normal = params.c + params.beta_alpha * params.gamma
    notes = list(generation.notes)
    roots = indicial_roots(params)

    if bc.mode == "oblique":
        drift = bool(params.dim_x and np.any(params.d != 0))
        w = [float(v) for v in params.d] + [float(normal)]
        family = SpaceFamily.OBLIQUE if drift else SpaceFamily.NEUMANN
        quantity = "y^beta_alpha d.grad_x u + c D_y u" if drift else "D_y u"
        trace = TraceCondition(params.c / params.gamma, quantity, "zero")
        spec = DomainSpec("oblique", family, w, 0.0, trace, flags, _core_text("oblique", family),
                          notes=notes)
        return spec

    s1 = roots.s1
    w_x = params.d - 2.0 * s1 * params.q
    w = [float(v) for v in w_x] + [float(normal - 2.0 * s1 * params.gamma)]
    if RegimeFlag.RELLICH_DOMAIN in flags:
        family = SpaceFamily.RELLICH
    elif s1 == 0.0:
        family = SpaceFamily.OBLIQUE if np.any(w_x != 0) else SpaceFamily.NEUMANN
    else:
        family = SpaceFamily.DIRICHLET
    if RegimeFlag.MIXED_DERIV_ESTIMATE in flags and family is SpaceFamily.DIRICHLET:
        notes.append(f"domain equals y^({-s1:g}) W_N(alpha1, alpha2, m - s1 p)")
    trace = TraceCondition(roots.s2, "u", "zero" if roots.D > 0 else "finite")
    return DomainSpec("dirichlet", family, w, -s1 * space.p, trace, flags,
                      _core_text("dirichlet", family),
                      reduced_drift=[float(v) for v in w_x], notes=notes)


def alternative_domain(params: OperatorParams, space: SpaceParams) -> DomainSpec:
    """
    Second realization obtained by removing the potential with the larger root:
    domain y^(-s2) W_w2 with w2 = (d, c + beta_alpha gamma) - 2 s2 (q, gamma).
    """
    flags = regime_flags(params, space)
    if RegimeFlag.ALTERNATIVE_REALIZATION_EXISTS not in flags:
        raise NotGeneratingError(["no alternative realization for these parameters"])
    roots = indicial_roots(params)
    s2 = roots.s2
    normal = params.c + params.beta_alpha * params.gamma
    w_x = params.d - 2.0 * s2 * params.q
    w = [float(v) for v in w_x] + [float(normal - 2.0 * s2 * params.gamma)]
    trace = TraceCondition(roots.s1, "u", "zero")
    return DomainSpec("dirichlet", SpaceFamily.ALTERNATIVE, w, -s2 * space.p, trace, flags,
                      "core: y^(-s2) times smooth compactly supported functions (reported only)",
                      reduced_drift=[float(v) for v in w_x])
