"""Velocity-space oracles: projection, Burnett pairings, moment identities."""
import numpy as np
import pytest

from kinchannel.velocity import (GridResolutionError, KineticFunction,
                                 MacroState, VelocityGrid, burnett,
                                 chi_payloads, micro_quadratic, moments,
                                 project_P)


def random_kinetic(grid, rng, degree=6):
    """Random polynomial payload of bounded degree times sqrt(mu)."""
    v = grid.nodes
    vals = np.zeros(grid.size)
    for _ in range(8):
        p = rng.integers(0, degree + 1, size=3)
        while p.sum() > degree:
            p = rng.integers(0, degree + 1, size=3)
        vals += rng.normal() * v[:, 0] ** p[0] * v[:, 1] ** p[1] * v[:, 2] ** p[2]
    return KineticFunction(grid, vals)


def test_grid_low_moments(grid):
    # int mu = 1, int v mu = 0, int v_i v_j mu = delta_ij
    one = np.ones(grid.size)
    assert abs(grid.quad(one) - 1.0) < 1e-13
    for i in range(3):
        assert abs(grid.quad(grid.nodes[:, i])) < 1e-13
        for j in range(3):
            val = grid.quad(grid.nodes[:, i] * grid.nodes[:, j])
            assert abs(val - (1.0 if i == j else 0.0)) < 1e-13


def test_grid_reflection_closure(grid):
    refl = grid.nodes.copy()
    refl[:, 2] *= -1
    g = KineticFunction(grid, grid.nodes[:, 2] ** 3 + grid.nodes[:, 0])
    gr = g.reflect()
    assert np.allclose(gr.values, -grid.nodes[:, 2] ** 3 + grid.nodes[:, 0])


def test_project_maxwellian(grid):
    state, micro = project_P(KineticFunction.maxwellian(grid))
    assert abs(state.rho - 1.0) < 1e-13
    assert np.all(np.abs(state.u) < 1e-13)
    assert abs(state.theta) < 1e-13
    assert micro.norm() < 1e-13


def test_project_macro_roundtrip(grid):
    st = MacroState(0.3, np.array([0.1, -0.2, 0.0]), 0.05)
    g = KineticFunction.from_macro(grid, st)
    back, micro = project_P(g)
    assert abs(back.rho - 0.3) < 1e-12
    assert np.allclose(back.u, st.u, atol=1e-12)
    assert abs(back.theta - 0.05) < 1e-12
    assert micro.norm() < 1e-12


def test_burnett_is_microscopic(grid):
    # <A_12, chi_i> = 0 for all five invariants (quadrature oracle)
    A12 = burnett(grid, "A", 1, 2)
    chi = chi_payloads(grid)
    for i in range(5):
        assert abs(grid.quad(chi[i] * A12.values)) < 1e-13
    state, micro = project_P(A12)
    assert abs(state.rho) + np.abs(state.u).sum() + abs(state.theta) < 1e-13
    assert np.allclose(micro.values, A12.values)


def test_projection_idempotence_orthogonality(grid, rng):
    chi = chi_payloads(grid)
    for _ in range(100):
        g = random_kinetic(grid, rng)
        state, micro = project_P(g)
        # orthogonality of the microscopic part
        for i in range(5):
            assert abs(grid.quad(chi[i] * micro.values)) < 1e-10 * max(g.norm(), 1.0)
        # idempotence: projecting the macro part returns it unchanged
        macro = KineticFunction(grid, g.values - micro.values)
        state2, micro2 = project_P(macro)
        assert micro2.norm() < 1e-10 * max(g.norm(), 1.0)


def test_projection_reflection_equivariance(grid, rng):
    for _ in range(10):
        g = random_kinetic(grid, rng)
        sr, mr = project_P(g.reflect())
        s, m = project_P(g)
        assert abs(sr.rho - s.rho) < 1e-12
        assert np.allclose(sr.u[:2], s.u[:2], atol=1e-12)
        assert abs(sr.u[2] + s.u[2]) < 1e-12
        assert abs(sr.theta - s.theta) < 1e-12
        assert np.allclose(mr.values, m.reflect().values, atol=1e-12)


def test_burnett_inner_products(grid):
    # exact pairing table, tolerance 1e-8
    A12 = burnett(grid, "A", 1, 2)
    A11 = burnett(grid, "A", 1, 1)
    A22 = burnett(grid, "A", 2, 2)
    B1 = burnett(grid, "B", 1)
    assert abs(A12.inner(A12) - 1.0) < 1e-8
    assert abs(A11.inner(A11) - 4.0 / 3.0) < 1e-8
    assert abs(B1.inner(B1) - 5.0 / 2.0) < 1e-8
    assert abs(A11.inner(A22) + 2.0 / 3.0) < 1e-8
    for i in range(1, 4):
        for j in range(1, 4):
            Aij = burnett(grid, "A", i, j)
            for k in range(1, 4):
                Bk = burnett(grid, "B", k)
                assert abs(Aij.inner(Bk)) < 1e-8


def test_moments_maxwellian(grid):
    m = moments(KineticFunction.maxwellian(grid))
    assert abs(m["mass"] - 1.0) < 1e-12
    assert np.all(np.abs(m["momentum"]) < 1e-12)
    assert abs(m["energy"] - 3.0) < 1e-12
    assert np.allclose(m["stress"], np.eye(3), atol=1e-12)
    assert np.all(np.abs(m["heat"]) < 1e-12)


def test_moments_heat_of_B1(grid):
    # int v_1 |v|^2 sqrt(mu) B_1 dv = 2 <B_1, B_1> = 5
    m = moments(burnett(grid, "B", 1))
    assert abs(m["heat"][0] - 5.0) < 1e-10


def test_moment_identities_random(grid, rng):
    # stress / heat identities against the macro-micro split
    for _ in range(5):
        f = random_kinetic(grid, rng)
        state, micro = project_P(f)
        m = moments(f)
        assert abs(m["mass"] - state.rho) < 1e-10
        assert np.allclose(m["momentum"], state.u, atol=1e-10)
        assert abs(m["energy"] - 3.0 * (state.rho + state.theta)) < 1e-9
        for i in range(3):
            for j in range(3):
                Aij = burnett(grid, "A", i + 1, j + 1)
                expect = ((state.rho + state.theta) * (i == j)
                          + Aij.inner(micro))
                assert abs(m["stress"][i, j] - expect) < 1e-9
            Bi = burnett(grid, "B", i + 1)
            assert abs(m["heat"][i]
                       - (5.0 * state.u[i] + 2.0 * Bi.inner(micro))) < 1e-9


def test_micro_quadratic_zero_and_purity(grid):
    zero = MacroState(0.0, np.zeros(3), 0.0)
    out = micro_quadratic(grid, zero, zero)
    assert out.norm() < 1e-14
    a = MacroState(0.2, np.array([0.3, -0.1, 0.4]), 0.15)
    b = MacroState(-0.1, np.array([0.0, 0.2, -0.3]), 0.05)
    q = micro_quadratic(grid, a, b)
    st, micro = project_P(q)
    assert abs(st.rho) + np.abs(st.u).sum() + abs(st.theta) < 1e-10
    assert np.allclose(micro.values, q.values, atol=1e-10)


def test_micro_quadratic_single_velocity(grid):
    # a = b with u = e_1, theta = 0 reduces to A_11 (twice the half-product form)
    a = MacroState(0.0, np.array([1.0, 0.0, 0.0]), 0.0)
    out = micro_quadratic(grid, a, a)
    A11 = burnett(grid, "A", 1, 1)
    assert np.allclose(out.values, A11.values, atol=1e-12)


def test_micro_quadratic_B3_pairing_vanishes(grid):
    # <B_3, micro_quadratic(a, b)> = (5/2)(theta_a u_b3 + theta_b u_a3) = 0
    # when both wall-normal velocities vanish
    a = MacroState(0.1, np.array([0.5, -0.2, 0.0]), 0.3)
    b = MacroState(0.0, np.array([0.1, 0.8, 0.0]), -0.2)
    B3 = burnett(grid, "B", 3)
    assert abs(B3.inner(micro_quadratic(grid, a, b))) < 1e-10
    # and is exactly (5/2)(theta_a u_b3 + theta_b u_a3) otherwise
    b2 = MacroState(0.0, np.array([0.1, 0.8, 0.7]), -0.2)
    want = 2.5 * (a.theta * b2.u[2] + b2.theta * a.u[2])
    assert abs(B3.inner(micro_quadratic(grid, a, b2)) - want) < 1e-9


def test_resolution_check_raises():
    coarse = VelocityGrid(order=6)
    v = coarse.nodes
    rough = KineticFunction(coarse, np.cos(4.0 * (v ** 2).sum(axis=1)))
    with pytest.raises(GridResolutionError):
        project_P(rough, check=True, tol=1e-6)
