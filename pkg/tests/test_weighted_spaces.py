import math

import numpy as np
import pytest

from errors import OutOfBoxError, ParameterError
from operator_core import GaussianPolynomial, SeparableTestFunction, SpaceParams
from transform_calculus import KelvinStep, apply_transform
from weighted_spaces import (
    GradedMesh,
    GridFunction,
    boundary_trace,
    integrate_y,
    sobolev_membership,
    sobolev_term_norms,
    weighted_lp_norm,
    x_derivatives,
    y_derivatives,
)


def test_mesh_nodes_and_validation():
    mesh = GradedMesh(8.0, 16, r=2.0)
    assert mesh.y[-1] == pytest.approx(8.0)
    assert mesh.y[0] == pytest.approx(8.0 / 256)
    assert mesh.shape == (16,)
    assert mesh.with_cutoff(16.0, 32).y[-1] == pytest.approx(16.0)
    with pytest.raises(ParameterError):
        GradedMesh(1.0, 2)
    with pytest.raises(ParameterError):
        GradedMesh(1.0, 8, n_x=4)
    mesh2 = GradedMesh(1.0, 8, X=np.pi, n_x=4)
    assert mesh2.shape == (8, 4)
    assert mesh2.hx == pytest.approx(np.pi / 2)


def test_power_image_maps_nodes():
    mesh = GradedMesh(3.0, 12, r=1.5)
    image = mesh.power_image(0.5)
    np.testing.assert_allclose(image.y, mesh.y ** 0.5, rtol=1e-14)


def test_integrate_y_handles_singular_weights():
    mesh = GradedMesh(1.0, 400, r=3.0)
    # integral of y^-0.5 over (0, 1) is 2
    assert integrate_y(mesh, mesh.y ** -0.5) == pytest.approx(2.0, rel=1e-4)
    assert integrate_y(mesh, mesh.y ** 2) == pytest.approx(1.0 / 3.0, rel=1e-4)


def test_integrate_y_is_exact_for_linear_integrands_in_t():
    # g = 1 with r = 2 and g = y with r = 1 both give h linear in t
    mesh = GradedMesh(3.0, 7, r=2.0)
    assert integrate_y(mesh, np.ones(7)) == pytest.approx(3.0, rel=1e-13)
    mesh = GradedMesh(2.0, 5, r=1.0)
    assert integrate_y(mesh, mesh.y) == pytest.approx(2.0, rel=1e-13)


def test_weighted_norm_of_gaussian():
    mesh = GradedMesh(10.0, 800, r=2.0)
    u = GridFunction.from_function(mesh, GaussianPolynomial(0, [(1.0, (), 0.0)], a=1.0), m=1.0, p=2.0)
    # integral of y exp(-2 y^2) = 1/4
    assert weighted_lp_norm(u) == pytest.approx(0.5, rel=1e-5)
    assert u.norm() == weighted_lp_norm(u)


def test_weighted_norm_two_dimensional():
    mesh = GradedMesh(10.0, 400, r=2.0, X=np.pi, n_x=64)
    u = GridFunction.from_function(mesh, SeparableTestFunction([1.0], [(1.0, 0.0)], a=1.0), m=0.0, p=2.0)
    # pi * integral of exp(-2 y^2) = pi * sqrt(pi/8)
    expected = math.sqrt(math.pi * math.sqrt(math.pi / 8.0))
    assert weighted_lp_norm(u) == pytest.approx(expected, rel=1e-4)


def test_kelvin_transform_is_an_isometry_on_grids():
    mesh = GradedMesh(6.0, 4000, r=3.0)
    u = GridFunction.from_function(mesh, GaussianPolynomial(0, [(1.0, (), 1.0)], a=1.0), m=0.5, p=3.0)
    v = apply_transform(KelvinStep(0.0, 0.5, p=3.0), u)
    assert weighted_lp_norm(v) == pytest.approx(weighted_lp_norm(u), rel=1e-6)


def test_y_derivatives_second_order():
    errors = []
    for J in (64, 128):
        mesh = GradedMesh(2.0, J, r=2.0)
        values = np.sin(mesh.y)
        d1, d2 = y_derivatives(mesh, values)
        errors.append(np.max(np.abs(d2[1:-1] + np.sin(mesh.y[1:-1]))))
        np.testing.assert_allclose(d1[1:-1], np.cos(mesh.y[1:-1]), atol=1e-2)
    assert errors[0] / errors[1] > 3.0


def test_x_derivatives_periodic():
    mesh = GradedMesh(1.0, 4, X=np.pi, n_x=128)
    values = np.tile(np.sin(mesh.x), (4, 1))
    d1, d2 = x_derivatives(mesh, values)
    np.testing.assert_allclose(d1, np.tile(np.cos(mesh.x), (4, 1)), atol=1e-3)
    np.testing.assert_allclose(d2, -values, atol=1e-3)


def test_interpolation_outside_box_raises():
    mesh = GradedMesh(2.0, 20)
    u = GridFunction(mesh, mesh.y ** 2)
    np.testing.assert_allclose(u.interpolate_y([0.5, 1.5]), [0.25, 2.25], rtol=1e-6)
    with pytest.raises(OutOfBoxError) as excinfo:
        u.interpolate_y([3.0, 4.0])
    assert excinfo.value.n_outside == 2


def test_sobolev_term_norms_extras(params_factory):
    params = params_factory(c=2.0)
    mesh = GradedMesh(8.0, 400)
    u = GaussianPolynomial(0, [(1.0, (), 0.0)], a=1.0)
    norms = sobolev_term_norms(u, params, SpaceParams(2.0, 1.0), mesh=mesh)
    assert norms.d2x == 0.0 and norms.dx == 0.0 and norms.dxdy == 0.0
    assert norms.neumann is not None and norms.rellich is not None
    # oblique quantity c y^-1 D_y u = -4 exp(-y^2)
    assert norms.oblique == pytest.approx(4.0 * math.sqrt(0.25), rel=1e-4)
    assert norms.total() > norms.lp


def test_sobolev_terms_match_between_grid_and_closed_form(params_factory):
    params = params_factory(dim_x=1, alpha1=1.0, alpha2=1.0, Q=[[1.0]], c=2.0)
    mesh = GradedMesh(6.0, 256, X=np.pi, n_x=64)
    f = SeparableTestFunction([1.0], [(1.0, 2.0)], a=1.0)
    exact = sobolev_term_norms(f, params, SpaceParams(2.0, 0.0), mesh=mesh)
    sampled = sobolev_term_norms(GridFunction.from_function(mesh, f), params, SpaceParams(2.0, 0.0))
    assert sampled.dyy == pytest.approx(exact.dyy, rel=1e-2)
    assert sampled.d2x == pytest.approx(exact.d2x, rel=1e-2)


def test_membership_flags_divergent_rellich_term(params_factory):
    params = params_factory(c=2.0)
    bump = GaussianPolynomial(0, [(1.0, (), 0.0)], a=1.0)
    report = sobolev_membership(bump, params, SpaceParams(2.0, 0.0), GradedMesh(6.0, 64), levels=4)
    assert report.terms["lp"].converged
    assert not report.terms["rellich"].converged
    assert not report.belongs


def test_boundary_trace_limits():
    mesh = GradedMesh(4.0, 256, r=2.0)
    u = GridFunction(mesh, mesh.y ** -0.5 * (2.0 + mesh.y))
    estimate = boundary_trace(u, 0.5)
    assert estimate.limit == pytest.approx(2.0, abs=1e-6)
    assert not estimate.low_confidence
    vanishing = boundary_trace(GridFunction(mesh, mesh.y ** 0.5), 0.5)
    assert vanishing.magnitude < 1e-6
    with pytest.raises(ParameterError):
        boundary_trace(GridFunction(GradedMesh(1.0, 8), np.ones(8)), 0.0)


def test_csv_rows_layout():
    mesh = GradedMesh(1.0, 4, X=1.0, n_x=4)
    u = GridFunction(mesh, np.arange(16.0).reshape(4, 4))
    rows = u.to_csv_rows()
    assert len(rows) == 16
    assert rows[1][0] == pytest.approx(mesh.x[1])
    assert rows[1][1] == pytest.approx(mesh.y[0])
    assert rows[1][2] == 1.0


def test_corrected_dyy_term_for_distinct_exponents(params_factory):
    params = params_factory(alpha1=1.0, alpha2=0.0)
    u = GaussianPolynomial(0, [(1.0, (), 0.0)], a=1.0)
    norms = sobolev_term_norms(u, params, SpaceParams(2.0, 0.0), mesh=GradedMesh(8.0, 800))
    # u'' + u'/(2y) = (4y^2 - 3) exp(-y^2), squared integral 3 sqrt(pi/2)
    assert norms.dyy_corrected == pytest.approx(math.sqrt(3.0 * math.sqrt(math.pi / 2.0)), rel=1e-4)
    assert sobolev_term_norms(u, params_factory(), SpaceParams(2.0, 0.0),
                              mesh=GradedMesh(8.0, 64)).dyy_corrected is None
