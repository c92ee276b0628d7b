import numpy as np
import pytest

from feslkit.esl import compute_equivalent_loads
from feslkit.models import DampingSpec, ModelDefinition, roof_truss_model
from feslkit.problems import roof_truss_problem, shear_frame_problem, two_bar_problem
from feslkit.responses import (LABEL_DTYPE, ConstraintBundle, axial_stress, buckling_constraints,
                               buckling_stress, compliance, drift_constraints, make_labels,
                               stress_constraints)

P3_OPT = np.array([0.0541, 0.1292, 0.0764, 0.0597, 0.1253, 0.0895, 0.0010])


def single_bar():
    return ModelDefinition(kind="planar_truss", youngs=200e9, density=7850.0,
                           nodes=np.array([[0.0, 0.0], [1.0, 0.0]]), elements=np.array([[0, 1]]),
                           supports=[0, 1, 2], damping=DampingSpec("none"))


def test_compliance_examples():
    value, _ = compliance(2.0, [3.0], 0.2)
    assert value == pytest.approx(3.6)
    value, grad = compliance(2.0, np.zeros(5), 0.2, dk=[1.0, 0.5], du=np.ones((2, 5)))
    assert value == 0.0
    np.testing.assert_array_equal(grad, [0.0, 0.0])
    with pytest.raises(ValueError):
        compliance(1.0, [], 0.1)


def test_compliance_gradient_chain():
    u = np.array([0.1, -0.3, 0.2])
    du = np.array([[1.0, 2.0, 0.5], [0.0, -1.0, 1.0]])
    _, grad = compliance(2.0, u, 0.5, dk=[1.0, 0.25], du=du)
    expected = 0.5 * (np.array([1.0, 0.25]) * (u @ u) + 4.0 * du @ u)
    np.testing.assert_allclose(grad, expected)


def test_drift_example():
    b = drift_constraints(np.array([[0.05], [0.12]]), 0.1)
    np.testing.assert_allclose(b.values, [-0.5, -0.3])
    assert b.labels["kind"][0] == "drift"


def test_drift_sign_zero_gradient():
    du = np.ones((2, 2, 1))
    b = drift_constraints(np.zeros((2, 1)), 0.1, du)
    np.testing.assert_array_equal(b.jacobian, 0.0)
    np.testing.assert_array_equal(b.values, -1.0)


def test_axial_stress_single_bar():
    model = single_bar()
    sigma, _ = axial_stress(model, np.zeros((3, 4)))
    assert not sigma.any()
    sigma, _ = axial_stress(model, np.array([[1e-3], [0.0], [0.0]]))
    assert sigma[0, 0] == pytest.approx(2e8)
    assert stress_constraints(sigma, 200e6).values[0] == pytest.approx(0.0, abs=1e-12)


def test_buckling_example():
    model = roof_truss_model()
    sb, _ = buckling_stress(model, P3_OPT)
    expected = np.pi**2 * 200e9 * 0.1292**2 / (16 * 2)
    assert sb[1] == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(1.0297e9, rel=1e-4)


def test_buckling_sign_convention():
    model = roof_truss_model()
    x = np.full(7, 0.1)
    zero = buckling_constraints(model, x, np.zeros((13, 1)))
    np.testing.assert_array_equal(zero.values, -1.0)
    tension = buckling_constraints(model, x, np.full((13, 1), 1e7))
    assert np.all(tension.values < -1.0)
    sb, _ = buckling_stress(model, x)
    at_limit = buckling_constraints(model, x, -sb[:, None])
    np.testing.assert_allclose(at_limit.values, 0.0, atol=1e-14)


def test_stress_constraints_even_in_sigma():
    rng = np.random.default_rng(4)
    sigma = rng.normal(scale=1e8, size=(13, 6))
    a = stress_constraints(sigma, 200e6)
    b = stress_constraints(-sigma, 200e6)
    np.testing.assert_array_equal(a.values, b.values)


@pytest.mark.parametrize("factory", [shear_frame_problem, roof_truss_problem])
def test_constraints_even_in_response(factory):
    prob = factory()
    a = prob.analyze(prob.x0 * 0.5, sensitivities=False)
    disp = a.window_displacements(prob.grid)
    fn = prob.functions
    pos = fn(prob.model, a.x, prob.grid, a.matrices.stiffness, a.dstiffness, disp)
    neg = fn(prob.model, a.x, prob.grid, a.matrices.stiffness, a.dstiffness, [-u for u in disp])
    kinds = pos.constraints.labels["kind"]
    absval = (kinds == "drift") | (kinds == "stress")
    if factory is shear_frame_problem:
        np.testing.assert_array_equal(pos.constraints.values[absval], neg.constraints.values[absval])
    else:
        # the exact bar length adds an O(|u|^2 / L) term that is even in u, so
        # the difference is bounded by E |u|^2 / (L^2 sigma_max)
        umax = max(np.abs(u).max() for u in disp)
        bound = 4.0 * 200e9 * umax**2 / (np.sqrt(2.0) ** 2 * 200e6)
        np.testing.assert_allclose(pos.constraints.values[absval], neg.constraints.values[absval],
                                   atol=bound)


def test_constraint_counts():
    assert shear_frame_problem().dynamic_values([0.3, 0.3], False).constraints.values.size == 2002
    assert roof_truss_problem().dynamic_values(np.full(7, 0.3), False).constraints.values.size == 52052


def test_labels_and_concatenate():
    labels = make_labels("stress", [0, 1], [5, 6, 7], 1)
    assert labels.dtype == LABEL_DTYPE
    assert list(labels["member"]) == [0, 0, 0, 1, 1, 1]
    assert list(labels["step"]) == [5, 6, 7, 5, 6, 7]
    empty = ConstraintBundle.concatenate([])
    assert empty.values.size == 0 and empty.max_value == -np.inf


def _check_rows(values_fn, jac, x, rows, h_rel=1e-6):
    for i in range(x.size):
        h = h_rel * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        fd = (values_fn(x + e)[rows] - values_fn(x - e)[rows]) / (2 * h)
        err = np.abs(jac[rows, i] - fd)
        assert np.all(err <= np.maximum(1e-4 * np.abs(fd), 1e-8)), (i, err.max())


def _smooth_rows(values, count=None):
    # skip rows sitting on the |.| kink at zero response
    rows = np.flatnonzero(values > -0.999)
    if count is not None:
        rows = rows[np.argsort(values[rows])[::-1][:count]]
    return rows


@pytest.mark.parametrize("factory,x", [
    (two_bar_problem, [0.2, 0.2]),
    (shear_frame_problem, [0.3, 0.3]),
    (roof_truss_problem, [0.3] * 7),
])
def test_dynamic_jacobian_fd(factory, x):
    prob = factory()
    x = np.asarray(x, float)
    v = prob.dynamic_values(x, True)
    c = v.constraints
    rows = _smooth_rows(c.values, 100) if c.values.size > 1 else np.arange(c.values.size)
    _check_rows(lambda z: prob.dynamic_values(z, False).constraints.values, c.jacobian, x, rows)
    fd = [(prob.dynamic_values(x + h, False).objective - prob.dynamic_values(x - h, False).objective)
          / (2e-6 * max(1.0, x[i])) for i, h in enumerate(np.eye(x.size) * 1e-6 * np.maximum(1.0, x))]
    np.testing.assert_allclose(v.objective_gradient, fd, rtol=1e-4)


@pytest.mark.parametrize("variant", ["esl", "fesl"])
@pytest.mark.parametrize("factory,anchor,x", [
    (two_bar_problem, [0.2, 0.2], [0.35, 0.5]),
    (shear_frame_problem, [0.3, 0.3], [0.27, 0.33]),
    (roof_truss_problem, [0.3] * 7, np.linspace(0.2, 0.4, 7)),
])
def test_static_jacobian_fd(factory, anchor, x, variant):
    prob = factory()
    anchor, x = np.asarray(anchor, float), np.asarray(x, float)
    gradients = variant == "fesl"
    a = prob.analyze(anchor, sensitivities=gradients)
    dus = a.window_sensitivities(prob.grid) if gradients else [None] * prob.n_cases
    sets = [compute_equivalent_loads(a.matrices.stiffness, u, anchor,
                                     a.dstiffness if gradients else None, du)
            for u, du in zip(a.window_displacements(prob.grid), dus)]
    v = prob.static_values(x, sets, True)
    c = v.constraints
    rows = _smooth_rows(c.values, 100) if c.values.size > 1 else np.arange(c.values.size)
    _check_rows(lambda z: prob.static_values(z, sets, False).constraints.values, c.jacobian, x, rows)


@pytest.mark.xfail(strict=True, reason="reference diameters are rounded to 4 decimals; the "
                   "rounding alone moves the governing constraint by ~4e-4")
def test_reference_truss_optimum_feasible_to_1e6():
    prob = roof_truss_problem()
    assert prob.dynamic_values(P3_OPT, False).constraints.max_value <= 1e-6


def test_reference_truss_optimum_feasible_within_rounding():
    prob = roof_truss_problem()
    v = prob.dynamic_values(P3_OPT, True)
    c = v.constraints
    k = int(np.argmax(c.values))
    rounding_bound = 5e-5 * np.abs(c.jacobian[k]).sum()
    assert c.values[k] <= rounding_bound
