import numpy as np
import pytest

from rlo.geometry import (
    SPHERE,
    DegenerateRetractionError,
    GeometryError,
    Metric,
    Point,
    Tangent,
    inner,
    retract,
    riemannian_gradient,
    transport,
)
from rlo.testbed import counter_rng


def euclid(coords):
    return Point(np.asarray(coords, dtype=float))


def sphere_point(coords):
    c = np.asarray(coords, dtype=float)
    return Point(c / np.linalg.norm(c), SPHERE)


def test_retract_euclidean_is_addition():
    theta = euclid([1.0, 1.0])
    out = retract(theta, Tangent([-0.2, -0.2], theta))
    assert np.allclose(out.coords, [0.8, 0.8], atol=0, rtol=0)


def test_retract_sphere_zero_is_identity():
    theta = sphere_point([1.0, 0.0])
    out = retract(theta, Tangent([0.0, 0.0], theta))
    assert np.array_equal(out.coords, theta.coords)


def test_retract_sphere_normalizes():
    theta = sphere_point([1.0, 0.0])
    out = retract(theta, Tangent([0.0, 1.0], theta))
    assert np.allclose(out.coords, [1 / np.sqrt(2), 1 / np.sqrt(2)], atol=1e-15)


def test_retract_sphere_degenerate_step_raises():
    theta = sphere_point([1.0, 0.0])
    with pytest.raises(DegenerateRetractionError):
        retract(theta, Tangent([-1.0, 0.0], theta))


def test_transport_euclidean_is_identity():
    theta = euclid([0.0, 0.0])
    phi = euclid([5.0, -1.0])
    xi = Tangent([1.5, 2.5], theta)
    out = transport(theta, phi, xi)
    assert np.array_equal(out.coords, xi.coords)
    assert out.base is phi


def test_transport_sphere_projects():
    theta = sphere_point([1.0, 0.0])
    phi = sphere_point([0.0, 1.0])
    parallel = transport(theta, phi, Tangent([0.0, 0.5], theta))
    assert np.allclose(parallel.coords, [0.0, 0.0], atol=1e-15)
    ortho = transport(theta, phi, Tangent([0.5, 0.0], theta))
    assert np.allclose(ortho.coords, [0.5, 0.0], atol=1e-15)


def test_transport_linearity():
    rng = counter_rng(2, 0)
    theta = sphere_point(rng.standard_normal(5))
    phi = sphere_point(rng.standard_normal(5))
    xi = rng.standard_normal(5)
    zeta = rng.standard_normal(5)
    a, b = 0.7, -1.3
    lhs = transport(theta, phi, Tangent(a * xi + b * zeta, theta)).coords
    rhs = (
        a * transport(theta, phi, Tangent(xi, theta)).coords
        + b * transport(theta, phi, Tangent(zeta, theta)).coords
    )
    assert np.allclose(lhs, rhs, atol=1e-12, rtol=0)


def test_inner_identity_is_dot_product():
    theta = euclid([0.0, 0.0])
    xi = Tangent([3.0, 4.0], theta)
    assert inner(Metric(), xi, xi) == 25.0


def test_inner_diagonal_weights():
    theta = euclid([0.0, 0.0])
    xi = Tangent([1.0, 1.0], theta)
    assert inner(Metric("diagonal", [2.0, 1.0]), xi, xi) == 3.0


def test_inner_zero_argument():
    theta = euclid([0.0, 0.0, 0.0])
    xi = Tangent([1.0, -2.0, 0.5], theta)
    zero = Tangent([0.0, 0.0, 0.0], theta)
    assert inner(Metric(), xi, zero) == 0.0


def test_inner_dimension_mismatch_raises():
    xi = Tangent([1.0, 2.0], euclid([0.0, 0.0]))
    zeta = Tangent([1.0, 2.0, 3.0], euclid([0.0, 0.0, 0.0]))
    with pytest.raises(GeometryError):
        inner(Metric(), xi, zeta)


def test_riemannian_gradient_identity():
    theta = euclid([0.0, 0.0])
    out = riemannian_gradient(Metric(), Tangent([1.0, 2.0], theta))
    assert np.array_equal(out.coords, [1.0, 2.0])


def test_riemannian_gradient_diagonal_scales():
    theta = euclid([0.0, 0.0])
    out = riemannian_gradient(Metric("diagonal", [0.5, 1.0]), Tangent([1.0, 1.0], theta))
    assert np.allclose(out.coords, [2.0, 1.0], atol=0, rtol=0)


def test_riemannian_gradient_sphere_projects():
    theta = sphere_point([1.0, 0.0])
    out = riemannian_gradient(Metric(), Tangent([3.0, 4.0], theta))
    assert np.allclose(out.coords, [0.0, 4.0], atol=1e-15)


def test_sphere_point_norm_validated():
    with pytest.raises(GeometryError):
        Point([1.0, 1.0], SPHERE)


def test_metric_weights_must_be_positive():
    with pytest.raises(GeometryError):
        Metric("diagonal", [1.0, 0.0])


def test_retraction_first_order_rigidity_on_sphere():
    # Small tangent steps must agree with plain addition to second order.
    rng = counter_rng(3, 0)
    for _ in range(50):
        theta = sphere_point(rng.standard_normal(4))
        raw = rng.standard_normal(4)
        xi = raw - np.dot(raw, theta.coords) * theta.coords
        xi = xi / np.linalg.norm(xi) * 1e-6
        out = retract(theta, Tangent(xi, theta))
        drift = np.linalg.norm(out.coords - (theta.coords + xi))
        assert drift <= 10.0 * np.dot(xi, xi)


def test_preconditioned_step_equals_metric_descent_step():
    # theta - h * A * grad must coincide with the retraction of the
    # metric steepest-descent direction when weights are 1/diag(A).
    rng = counter_rng(4, 0)
    for _ in range(100):
        dim = int(rng.integers(2, 8))
        diag_a = np.exp(rng.standard_normal(dim))
        grad = rng.standard_normal(dim)
        h = float(np.exp(rng.standard_normal()))
        theta = euclid(rng.standard_normal(dim))
        metric = Metric("diagonal", 1.0 / diag_a)
        step = riemannian_gradient(metric, Tangent(grad, theta))
        via_metric = retract(theta, Tangent(-h * step.coords, theta))
        direct = theta.coords - h * diag_a * grad
        assert np.allclose(via_metric.coords, direct, atol=1e-12, rtol=0)


def test_sphere_invariants_along_random_walk():
    rng = counter_rng(5, 0)
    theta = sphere_point(rng.standard_normal(6))
    v = Tangent(rng.standard_normal(6), theta)
    for _ in range(200):
        step = rng.standard_normal(6) * 0.3
        new_theta = retract(theta, Tangent(step, theta))
        assert abs(np.linalg.norm(new_theta.coords) - 1.0) <= 1e-12
        moved = transport(theta, new_theta, v)
        # projection transport never expands
        assert np.linalg.norm(moved.coords) <= np.linalg.norm(v.coords) + 1e-12
        assert abs(np.dot(moved.coords, new_theta.coords)) <= 1e-10
        v = moved
        theta = new_theta
