import numpy as np
import pytest

from feslkit.models import MatrixSensitivity, SystemMatrices, assemble, assemble_all_sensitivities, roof_truss_model
from feslkit.problems import roof_truss_problem, shear_frame_problem, two_bar_problem
from feslkit.sensitivity import (direct_sensitivities, direct_sensitivity, fd_response_gradient,
                                 relative_l2_error)
from feslkit.transient import NewmarkIntegrator, TimeGrid, newmark_solve


def short_truss():
    return roof_truss_problem(t_end=10.0, window=(5.0, 10.0))


@pytest.mark.parametrize("factory,x", [
    (two_bar_problem, [0.2, 0.2]),
    (two_bar_problem, [0.45, 0.8]),
    (shear_frame_problem, [0.3, 0.3]),
    (shear_frame_problem, [0.25, 0.2]),
    (short_truss, [0.3] * 7),
])
def test_direct_matches_fd_every_variable(factory, x):
    prob = factory()
    x = np.asarray(x, float)
    a = prob.analyze(x)
    for case in range(prob.n_cases):
        for i in range(prob.n):
            fd = fd_response_gradient(lambda z: prob.simulate(z, case), x, i)
            assert not fd.one_sided
            assert relative_l2_error(a.sensitivities[case].du[:, i], fd.du) < 1e-5


def test_zero_derivatives_give_zero_sensitivity():
    mats = SystemMatrices(np.eye(2), 0.1 * np.eye(2), np.array([[2.0, -1.0], [-1.0, 1.0]]))
    grid = TimeGrid(0.1, 100)
    resp = newmark_solve(mats, np.vstack([np.sin(grid.times), np.zeros(101)]), grid)
    z = np.zeros((2, 2))
    s = direct_sensitivity(mats, MatrixSensitivity(z, z, z, 0), resp, grid=grid)
    assert not s.du.any() and not s.dv.any() and not s.da.any()


def test_design_dependent_load_term():
    # u = p / k for a massless-like stiff SDOF; dp/dx enters the pseudo load
    mats = SystemMatrices(np.array([[1.0]]), np.array([[0.0]]), np.array([[1.0]]))
    grid = TimeGrid(0.1, 50)
    p = np.sin(grid.times)[None]
    resp = newmark_solve(mats, p, grid)
    z = np.zeros((1, 1))
    s = direct_sensitivity(mats, MatrixSensitivity(z, z, z, 0), resp, dload=2.0 * p, grid=grid)
    np.testing.assert_allclose(s.du, 2.0 * resp.u, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("factory", [two_bar_problem, short_truss])
def test_fd_step_sweep_has_interior_minimum(factory):
    prob = factory()
    x = prob.x0 * 0.6 + prob.lower * 0.4
    exact = prob.analyze(x).sensitivities[0].du[:, 0]
    errors = [relative_l2_error(
        fd_response_gradient(lambda z: prob.simulate(z), x, 0, h * max(1.0, x[0])).du, exact)
        for h in (1e-4, 1e-6, 1e-8)]
    assert errors[1] < errors[0] and errors[1] < errors[2]


def test_one_sided_fallback_flagged():
    prob = two_bar_problem()
    x = np.array([1.0, 0.5])
    fd = fd_response_gradient(prob.simulate, x, 0, lower=prob.lower, upper=prob.upper)
    assert fd.one_sided
    exact = prob.analyze(x).sensitivities[0].du[:, 0]
    assert relative_l2_error(fd.du, exact) < 1e-4
    with pytest.raises(ValueError):
        fd_response_gradient(prob.simulate, x, 0, h=2.0, lower=prob.lower, upper=prob.upper)


def test_superposition_over_loads():
    prob = shear_frame_problem()
    x = np.array([0.3, 0.25])
    mats = assemble(prob.model, x)
    dm, dc, dk = assemble_all_sensitivities(prob.model, x, mats)
    integ = NewmarkIntegrator(mats, prob.grid.dt)
    rng = np.random.default_rng(2)
    p1, p2 = rng.normal(size=(2, 2, prob.grid.n_steps + 1))
    s = [direct_sensitivities(mats, dm, dc, dk, integ.integrate(p), integrator=integ).du
         for p in (p1, p2, 3.0 * p1 - p2)]
    np.testing.assert_allclose(s[2], 3.0 * s[0] - s[1], atol=1e-12 * np.abs(s[2]).max())


def test_mirrored_truss_sensitivities():
    model = roof_truss_model()
    free = model.free_dofs
    mirror_node = {1: 5, 2: 4, 3: 3, 4: 2, 5: 1, 6: 7, 7: 6, 8: 9, 9: 8, 10: 10}
    full = np.zeros((30, 30))
    for a, b in mirror_node.items():
        for j, sign in enumerate((-1.0, 1.0, -1.0)):
            full[3 * (b - 1) + j, 3 * (a - 1) + j] = sign
    T = full[np.ix_(free, free)]
    # symmetric vertical load at the ridge and the two upper chord nodes
    load = np.zeros(30)
    load[[3 * 5 + 1, 3 * 6 + 1, 3 * 9 + 1]] = -1e5
    grid = TimeGrid(0.02, 300)
    p = np.outer(load[free], np.minimum(grid.times, 1.0))
    x = np.linspace(0.05, 0.15, 7)
    mats = assemble(model, x)
    dm, dc, dk = assemble_all_sensitivities(model, x, mats)
    resp = newmark_solve(mats, p, grid)
    du = direct_sensitivities(mats, dm, dc, dk, resp, grid=grid).du
    scale = np.abs(du).max()
    np.testing.assert_allclose(T @ resp.u, resp.u, atol=1e-10 * np.abs(resp.u).max())
    np.testing.assert_allclose(np.einsum("jk,kit->jit", T, du), du, atol=1e-9 * scale)
