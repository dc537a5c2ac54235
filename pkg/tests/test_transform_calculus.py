import numpy as np
import pytest
import sympy as sp

from errors import NegativeDiscriminantError, ParameterError, TransformError
from operator_core import (
    GaussianPolynomial,
    SeparableTestFunction,
    SpaceParams,
    apply_operator,
    indicial_roots,
    random_admissible_params,
    random_test_function,
)
from transform_calculus import (
    DerivativeIndex,
    KelvinStep,
    ShiftStep,
    TermSum,
    apply_transform,
    conjugate_by_kelvin,
    conjugate_by_shift_general,
    conjugate_by_shift_matched,
    conjugated_contributions,
    normalize_mode,
    reduce_to_canonical,
)
from weighted_spaces import GradedMesh, GridFunction

POINTS_X = np.array([[-0.7], [0.2], [1.1]])
POINTS_Y = np.array([0.35, 0.8, 1.6])


def _relative_gap(params, step, u, x, y):
    transformed, _ = conjugate_by_kelvin(params, SpaceParams(2.0, 0.0), step.k, step.beta) \
        if isinstance(step, KelvinStep) else (conjugate_by_shift_matched(params, step.omega), None)
    value, scale = conjugated_contributions(params, step, u, x, y)
    direct = apply_operator(transformed, u, x, y)
    return np.max(np.abs(value - direct) / np.maximum(scale, 1.0))


def test_kelvin_coefficients_against_symbolic_oracle():
    alpha, c, b = sp.Rational(1, 2), sp.Rational(3, 2), sp.Rational(1, 4)
    k, beta = sp.Rational(1, 3), sp.Rational(1, 2)
    e = beta + 1
    y, t = sp.symbols("y t", positive=True)
    w = y ** 2 * sp.exp(-y)
    U = y ** k * w.subs(y, y ** e)
    LU = y ** alpha * sp.diff(U, y, 2) + c * y ** (alpha - 1) * sp.diff(U, y) - b * y ** (alpha - 2) * U
    conjugated = t ** (-k / e) * LU.subs(y, t ** (1 / e))

    params, space = conjugate_by_kelvin(
        _one_dim(float(alpha), 1.0, float(c), float(b)), SpaceParams(2.0, 0.0), float(k), float(beta))
    W = w.subs(y, t)
    predicted = (params.gamma * t ** params.alpha2 * sp.diff(W, t, 2)
                 + params.c * t ** (params.alpha2 - 1) * sp.diff(W, t)
                 - params.b * t ** (params.alpha2 - 2) * W)
    for point in (0.3, 0.9, 2.2):
        assert float(predicted.subs(t, point)) == pytest.approx(float(conjugated.subs(t, point)), rel=1e-10)
    assert space.m == pytest.approx((0.0 + float(k) * 2.0 - float(beta)) / float(e))


def _one_dim(alpha, gamma, c, b):
    from operator_core import OperatorParams
    return OperatorParams(0, alpha, alpha, [], [], gamma, [], c, b)


def test_kelvin_conjugation_pointwise(rng):
    for _ in range(20):
        params = random_admissible_params(rng, dim_x=1)
        step = KelvinStep(float(rng.uniform(-1.0, 1.0)), float(rng.uniform(-0.5, 1.0)))
        u = random_test_function(rng, 1)
        assert _relative_gap(params, step, u, POINTS_X, POINTS_Y) < 1e-9


def test_matched_shift_conjugation_pointwise(rng):
    for _ in range(20):
        params = random_admissible_params(rng, dim_x=1)
        step = ShiftStep(params.beta_alpha, rng.normal(size=1))
        u = random_test_function(rng, 1)
        assert _relative_gap(params, step, u, POINTS_X, POINTS_Y) < 1e-9


def test_kelvin_inverse_restores_coefficients(rng):
    space = SpaceParams(3.0, 0.4)
    for _ in range(10):
        params = random_admissible_params(rng)
        step = KelvinStep(float(rng.normal()), float(rng.uniform(-0.5, 1.5)), space.p)
        inv = step.inverse()
        once, mid = conjugate_by_kelvin(params, space, step.k, step.beta)
        back, back_space = conjugate_by_kelvin(once, mid, inv.k, inv.beta)
        assert back.allclose(params, tol=1e-10)
        assert back_space.m == pytest.approx(space.m)


def test_kelvin_shift_commutation_on_functions():
    u = GaussianPolynomial(1, [(1.0, (1,), 2.0), (0.5, (0,), 0.0)], a=0.4)
    kelvin = KelvinStep(0.3, 0.5)
    shift = ShiftStep(0.2, [0.7])
    moved = ShiftStep((kelvin.beta + 1.0) * (shift.beta + 1.0) - 1.0, [0.7])
    left = apply_transform(kelvin, apply_transform(shift, u))
    right = apply_transform(moved, apply_transform(kelvin, u))
    np.testing.assert_allclose(left(POINTS_X, POINTS_Y), right(POINTS_X, POINTS_Y), rtol=1e-12)


def test_general_shift_matches_matched_shift():
    params = random_admissible_params(np.random.default_rng(3), dim_x=1)
    omega = [0.4]
    general = conjugate_by_shift_general(params, params.beta_alpha, omega)
    assert general.to_operator_params().allclose(conjugate_by_shift_matched(params, omega), tol=1e-12)


def test_general_shift_leaves_standard_form():
    params = _one_dim_x(alpha1=0.5, alpha2=0.5, q=0.3)
    general = conjugate_by_shift_general(params, 0.5, [1.0])
    with pytest.raises(TransformError):
        general.to_operator_params()
    assert any(term.derivative is DerivativeIndex.HESS_X and term.y_power == pytest.approx(1.5)
               for term in general.terms)


def _one_dim_x(alpha1, alpha2, q=0.0, d=0.0, c=1.0, b=0.0):
    from operator_core import OperatorParams
    return OperatorParams(1, alpha1, alpha2, [[1.0]], [q], 1.0, [d], c, b)


def test_general_shift_pointwise():
    params = _one_dim_x(alpha1=0.5, alpha2=0.0, q=0.2, d=0.3, c=1.5)
    step = ShiftStep(0.8, [0.6])
    u = SeparableTestFunction([1.3], [(1.0, 2.0)], a=0.7)
    expansion = conjugate_by_shift_general(params, step.beta, step.omega)
    value, scale = conjugated_contributions(params, step, u, POINTS_X, POINTS_Y)
    np.testing.assert_allclose(expansion.apply(u, POINTS_X, POINTS_Y), value, atol=1e-10 * scale.max())


def test_term_sum_round_trip(rng):
    params = random_admissible_params(rng, dim_x=2)
    terms = TermSum.from_operator(params)
    assert terms.to_operator_params().allclose(params)
    assert terms.isclose(TermSum.from_operator(params))


def test_reduce_equalizes_exponents_with_single_kelvin():
    params = _one_dim_x(alpha1=1.0, alpha2=0.0)
    target, space, pipeline = reduce_to_canonical(params, SpaceParams(2.0, 0.0), "oblique")
    assert len(pipeline.steps) == 1
    step = pipeline.steps[0]
    assert isinstance(step, KelvinStep)
    assert (step.k, step.beta) == (0.0, 0.5)
    assert target.alpha1 == pytest.approx(2.0 / 3.0)
    assert target.alpha2 == target.alpha1


def test_dirichlet_reduction_kills_potential(potential_params, l2):
    target, space, pipeline = reduce_to_canonical(potential_params, l2, "dirichlet")
    assert [s.kind for s in pipeline.steps] == ["kelvin"]
    assert target.b == 0.0
    assert target.c == pytest.approx(3.0)
    roots = indicial_roots(target)
    assert target.c / target.gamma == pytest.approx(1.0 + 2.0 * np.sqrt(roots.D), abs=1e-12)
    assert space.m == pytest.approx(3.0)


def test_dirichlet_reduction_boundary_vector():
    from operator_core import OperatorParams
    params = OperatorParams(1, 0.0, 0.0, [[1.0]], [0.3], 1.0, [0.5], 0.0, 0.75)
    target, _, pipeline = reduce_to_canonical(params, SpaceParams(2.0, 0.0), "dirichlet")
    np.testing.assert_allclose(pipeline.boundary_vector(), [1.4, 3.0], atol=1e-12)
    assert [s.kind for s in pipeline.steps] == ["kelvin", "shift"]
    assert np.all(target.d == 0.0)


def test_pipeline_stages_conjugate_exactly(rng):
    for _ in range(10):
        params = random_admissible_params(rng, dim_x=1)
        _, _, pipeline = reduce_to_canonical(params, SpaceParams(2.0, 0.5), "dirichlet")
        u = random_test_function(rng, 1)
        for stage in pipeline.stages:
            value, scale = conjugated_contributions(stage.params_before, stage.step, u, POINTS_X, POINTS_Y)
            direct = apply_operator(stage.params_after, u, POINTS_X, POINTS_Y)
            assert np.max(np.abs(value - direct) / np.maximum(scale, 1.0)) < 1e-8


def test_pipeline_forward_undoes_pullback(rng):
    params = random_admissible_params(rng, dim_x=1)
    _, _, pipeline = reduce_to_canonical(params, SpaceParams(2.0, 0.0), "dirichlet")
    f = random_test_function(rng, 1)
    restored = pipeline.forward(pipeline.pullback(f))
    np.testing.assert_allclose(restored(POINTS_X, POINTS_Y), f(POINTS_X, POINTS_Y), rtol=1e-9, atol=1e-12)


def test_pipeline_inverse_returns_to_source(rng):
    params = random_admissible_params(rng, dim_x=1)
    space = SpaceParams(2.0, 0.3)
    _, _, pipeline = reduce_to_canonical(params, space, "dirichlet")
    inverse = pipeline.inverse()
    assert inverse.target_params.allclose(params, tol=1e-9)
    assert inverse.target_space.m == pytest.approx(space.m)


def test_reduce_rejects_bad_input(params_factory, l2):
    with pytest.raises(ParameterError):
        reduce_to_canonical(params_factory(b=0.5), l2, "oblique")
    with pytest.raises(NegativeDiscriminantError):
        reduce_to_canonical(params_factory(c=1.0, b=-1.0), l2, "dirichlet")
    assert normalize_mode("Neumann") == "oblique"
    with pytest.raises(ParameterError):
        normalize_mode("robin")


def test_kelvin_grid_transport_is_exact_on_nodes():
    mesh = GradedMesh(4.0, 40, r=2.0)
    f = GaussianPolynomial(0, [(1.0, (), 1.0), (2.0, (), 2.0)], a=0.5)
    step = KelvinStep(0.4, 0.5)
    moved = apply_transform(step, GridFunction.from_function(mesh, f))
    exact = apply_transform(step, f)
    x, y = moved.mesh.points()
    np.testing.assert_allclose(moved.values, exact(x, y), rtol=1e-12)
    assert moved.m == pytest.approx(0.0 * 1.5 - 0.4 * 2.0 + 0.5)


def test_kelvin_grid_with_reflection_needs_target_mesh():
    mesh = GradedMesh(2.0, 20)
    u = GridFunction(mesh, np.ones(mesh.shape))
    with pytest.raises(TransformError):
        apply_transform(KelvinStep(0.0, -2.0), u)


def test_shift_grid_transport():
    mesh = GradedMesh(2.0, 24, r=1.0, X=np.pi, n_x=64)
    f = SeparableTestFunction([1.0], [(1.0, 0.0)], a=1.0)
    step = ShiftStep(0.0, [0.3])
    moved = apply_transform(step, GridFunction.from_function(mesh, f))
    exact = apply_transform(step, f)
    x, y = mesh.points()
    np.testing.assert_allclose(moved.values.reshape(-1), exact(x, y), atol=1e-5)
