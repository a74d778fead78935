"""Interior solvers: spectral infrastructure, Euler march, linearized system
with manufactured solutions."""
import numpy as np
import pytest

from kinchannel.euler import (CompatibilityError, LinearSources,
                              MacroFieldSeries, solve_euler0,
                              solve_linearized_euler)
from kinchannel.spectral import (SpatialGrid, chebyshev_lobatto,
                                 clenshaw_curtis, fd4_time, project_div)


# -- spectral infrastructure --------------------------------------------------

def test_chebyshev_differentiation():
    x, D = chebyshev_lobatto(17)
    f = x ** 5 - 2.0 * x ** 2 + x
    df = 5.0 * x ** 4 - 4.0 * x + 1.0
    assert np.max(np.abs(D @ f - df)) < 1e-10


def test_clenshaw_curtis_weights():
    w = clenshaw_curtis(17)
    x, _ = chebyshev_lobatto(17)
    for p in range(10):
        assert abs(w @ x ** p - 1.0 / (p + 1)) < 1e-12


def test_fd4_time_order():
    t = np.linspace(0.0, 1.0, 41)
    f = np.sin(3.0 * t)
    df = fd4_time(f, t[1] - t[0])
    assert np.max(np.abs(df - 3.0 * np.cos(3.0 * t))) < 2e-5


def test_poisson_neumann_manufactured():
    grid = SpatialGrid(modes=(8, 8), cheb=25)
    X1 = grid.x1[:, None, None]
    X3 = grid.x3[None, None, :]
    q_exact = np.cos(2 * np.pi * X1) * np.exp(np.sin(np.pi * X3)) \
        + 0 * grid.x2[None, :, None]
    q_exact = q_exact - grid.integrate(q_exact)
    rhs = grid.dx1(grid.dx1(q_exact)) + grid.dx3(grid.dx3(q_exact))
    lo, up = grid.dx3_wall(q_exact)
    q, defect = grid.poisson_neumann(rhs, lo, up)
    assert np.max(np.abs(q - q_exact)) < 1e-9
    assert defect < 1e-9


def test_projection_enforces_divfree():
    grid = SpatialGrid(modes=(8, 8), cheb=17)
    rng = np.random.default_rng(0)
    X1 = grid.x1[:, None, None]
    X2 = grid.x2[None, :, None]
    X3 = grid.x3[None, None, :]
    w = np.stack([np.sin(2 * np.pi * X1) * X3 ** 2 + 0 * X2,
                  np.cos(2 * np.pi * X2) * X3 + 0 * X1,
                  np.sin(2 * np.pi * X1) * X3 * (1 - X3) + 0 * X2])
    u, q, _ = project_div(grid, w)
    assert np.max(np.abs(grid.div(u))) < 1e-8
    assert np.max(np.abs(u[2][..., 0])) < 1e-9
    assert np.max(np.abs(u[2][..., -1])) < 1e-9


# -- shear-flow preset ---------------------------------------------------------

def shear_data(grid, amp=0.5):
    X2 = grid.x2[None, :, None]
    X3 = grid.x3[None, None, :]
    U = (amp * np.cos(np.pi * X3) * (1.0 + 0.3 * np.cos(2 * np.pi * X2))
         * np.ones(grid.shape))
    u = np.stack([U, np.zeros(grid.shape), np.zeros(grid.shape)])
    theta = 0.1 * amp * np.cos(np.pi * X3) * np.ones(grid.shape)
    rho = 0.0 - theta
    return rho, u, theta


def test_euler_zero_data_stationary():
    grid = SpatialGrid(modes=(4, 4), cheb=9)
    z = np.zeros(grid.shape)
    series, record, diags = solve_euler0(grid, z, np.stack([z, z, z]), z,
                                         horizon=0.05)
    assert np.max(np.abs(series.u)) < 1e-14
    assert np.max(np.abs(record.pressure)) < 1e-12


def test_euler_steady_shear_exact():
    # u = (U(x3), 0, 0) is an exact steady state: the nonlinear term vanishes
    grid = SpatialGrid(modes=(4, 4), cheb=17)
    X3 = grid.x3[None, None, :]
    U = 0.5 * np.cos(np.pi * X3) * np.ones(grid.shape)
    u = np.stack([U, np.zeros(grid.shape), np.zeros(grid.shape)])
    th = 0.2 * np.cos(np.pi * X3) * np.ones(grid.shape)
    series, record, _ = solve_euler0(grid, 0.1 - th, u, th, horizon=0.1)
    assert np.max(np.abs(series.u[-1] - series.u[0])) < 1e-12
    assert np.max(np.abs(series.theta[-1] - series.theta[0])) < 1e-12
    assert np.max(np.abs(record.grad)) < 1e-10
    # rho + theta stays the initial constant
    assert np.max(np.abs(series.rho + series.theta - 0.1)) < 1e-12


def test_euler_energy_conservation():
    grid = SpatialGrid(modes=(8, 8), cheb=17)
    rho, u, th = shear_data(grid)
    series, _, diags = solve_euler0(grid, rho, u, th, horizon=0.2)
    e0 = grid.integrate((series.u[0] ** 2).sum(axis=0))
    e1 = grid.integrate((series.u[-1] ** 2).sum(axis=0))
    assert abs(e1 - e0) < 1e-8 * e0
    assert diags["div_max"] < 1e-9


def test_euler_rejects_bad_trace():
    grid = SpatialGrid(modes=(4, 4), cheb=9)
    z = np.zeros(grid.shape)
    u = np.stack([z, z, np.ones(grid.shape)])
    with pytest.raises(CompatibilityError):
        solve_euler0(grid, z, u, z, horizon=0.01)


# -- manufactured solution for the linearized system -------------------------

class MMS:
    """Closed-form fields and matching sources on a steady shear background."""

    def __init__(self, grid):
        self.grid = grid
        self.X1 = grid.x1[:, None, None] * np.ones(grid.shape)
        self.X2 = grid.x2[None, :, None] * np.ones(grid.shape)
        self.X3 = grid.x3[None, None, :] * np.ones(grid.shape)
        # steady background
        self.U = 0.4 * np.cos(np.pi * self.X3)
        self.dU = -0.4 * np.pi * np.sin(np.pi * self.X3)
        self.TH0 = 0.3 * np.sin(np.pi * self.X3)
        self.dTH0 = 0.3 * np.pi * np.cos(np.pi * self.X3)

    def background(self, times):
        grid = self.grid
        nt = len(times)
        u0 = np.broadcast_to(
            np.stack([self.U, np.zeros(grid.shape), np.zeros(grid.shape)]),
            (nt, 3) + grid.shape).copy()
        th0 = np.broadcast_to(self.TH0, (nt,) + grid.shape).copy()
        return MacroFieldSeries(grid, times, rho=-th0, u=u0, theta=th0)

    # time amplitudes
    @staticmethod
    def a(t):
        return 1.0 + 0.5 * np.sin(3.0 * t)

    @staticmethod
    def da(t):
        return 1.5 * np.cos(3.0 * t)

    @staticmethod
    def b(t):
        return 0.3 * np.cos(2.0 * t)

    @staticmethod
    def db(t):
        return -0.6 * np.sin(2.0 * t)

    def fields(self, t):
        X1, X2, X3 = self.X1, self.X2, self.X3
        s1, c1 = np.sin(2 * np.pi * X1), np.cos(2 * np.pi * X1)
        s2, c2 = np.sin(2 * np.pi * X2), np.cos(2 * np.pi * X2)
        g = np.exp(np.sin(np.pi * X3))
        dg = np.pi * np.cos(np.pi * X3) * g
        w = np.cos(np.pi * X3) + 2.0
        dw = -np.pi * np.sin(np.pi * X3)
        a, b = self.a(t), self.b(t)
        u = np.stack([a * s1 * g, a * c2 * g, b * c1 * w])
        theta = 0.7 * a * c2 * (X3 ** 2 - X3 + 0.5)
        rho = 0.4 * b * s1 * np.cos(np.pi * X3)
        p = b * (c1 * np.sin(np.pi * X3) + np.sin(np.pi * X3))
        return u, theta, rho, p

    def du_dt(self, t):
        X1, X2, X3 = self.X1, self.X2, self.X3
        s1, c1 = np.sin(2 * np.pi * X1), np.cos(2 * np.pi * X1)
        c2 = np.cos(2 * np.pi * X2)
        g = np.exp(np.sin(np.pi * X3))
        w = np.cos(np.pi * X3) + 2.0
        return np.stack([self.da(t) * s1 * g, self.da(t) * c2 * g,
                         self.db(t) * c1 * w])

    def sources(self, t):
        grid = self.grid
        X1, X2, X3 = self.X1, self.X2, self.X3
        s1, c1 = np.sin(2 * np.pi * X1), np.cos(2 * np.pi * X1)
        s2, c2 = np.sin(2 * np.pi * X2), np.cos(2 * np.pi * X2)
        g = np.exp(np.sin(np.pi * X3))
        dg = np.pi * np.cos(np.pi * X3) * g
        w = np.cos(np.pi * X3) + 2.0
        dw = -np.pi * np.sin(np.pi * X3)
        a, b, da, db = self.a(t), self.b(t), self.da(t), self.db(t)
        u, theta, rho, p = self.fields(t)
        # divergence and constraint
        r = (a * 2 * np.pi * c1 * g - a * 2 * np.pi * s2 * g + b * c1 * dw)
        p_sum = rho + theta
        # grad p
        gp = np.stack([-b * 2 * np.pi * s1 * np.sin(np.pi * X3),
                       np.zeros(grid.shape),
                       b * (c1 + 1.0) * np.pi * np.cos(np.pi * X3)])
        # (u0 . grad) u = U d/dx1 u ; (u . grad) u0 = u3 U' e1
        adv = np.stack([self.U * a * 2 * np.pi * c1 * g,
                        self.U * np.zeros(grid.shape),
                        self.U * (-b * 2 * np.pi * s1 * w)])
        stretch = np.stack([u[2] * self.dU, np.zeros(grid.shape),
                            np.zeros(grid.shape)])
        h = self.du_dt(t) + adv + stretch + gp
        # theta equation
        dth_dt = 0.7 * da * c2 * (X3 ** 2 - X3 + 0.5)
        q = dth_dt + self.U * np.zeros(grid.shape) + u[2] * self.dTH0
        # U * d/dx1 theta = 0 (theta has no x1 dependence)
        d0 = -u[2][..., 0]
        d1 = u[2][..., -1]
        gauge = b * 2.0 / np.pi  # int p dx = b * int sin(pi x3) = 2b/pi
        return r, p_sum, h, q, d0, d1, gauge


def run_mms(modes, cheb, nt, horizon=0.1, div_tol=1.0):
    grid = SpatialGrid(modes=modes, cheb=cheb)
    mms = MMS(grid)
    times = np.linspace(0.0, horizon, nt)
    bg = mms.background(times)
    r = np.empty((nt,) + grid.shape)
    ps = np.empty_like(r)
    q = np.empty_like(r)
    h = np.empty((nt, 3) + grid.shape)
    d0 = np.empty((nt, grid.m1, grid.m2))
    d1 = np.empty_like(d0)
    gauge = np.empty(nt)
    for i, t in enumerate(times):
        r[i], ps[i], h[i], q[i], d0[i], d1[i], gauge[i] = mms.sources(t)
    u_init, th_init, rho_init, _ = mms.fields(0.0)
    src = LinearSources(r=r, p_sum=ps, h=h, q=q, d0=d0, d1=d1, gauge=gauge)
    series, record, diags = solve_linearized_euler(grid, bg, src, u_init,
                                                   th_init, compat_tol=1e-5,
                                                   div_tol=div_tol)
    uf, thf, rhof, pf = mms.fields(times[-1])
    err = max(np.max(np.abs(series.u[-1] - uf)),
              np.max(np.abs(series.theta[-1] - thf)),
              np.max(np.abs(series.rho[-1] - rhof)))
    perr = np.max(np.abs(record.pressure[-1] - pf))
    return err, perr, record, diags


def test_linearized_zero_solution():
    grid = SpatialGrid(modes=(4, 4), cheb=9)
    nt = 9
    times = np.linspace(0.0, 0.05, nt)
    z = np.zeros((nt,) + grid.shape)
    bg = MacroFieldSeries(grid, times, rho=z.copy(), u=np.zeros((nt, 3) + grid.shape),
                          theta=z.copy())
    src = LinearSources(r=z.copy(), p_sum=z.copy(),
                        h=np.zeros((nt, 3) + grid.shape), q=z.copy(),
                        d0=np.zeros((nt, 4, 4)), d1=np.zeros((nt, 4, 4)),
                        gauge=np.zeros(nt))
    series, record, _ = solve_linearized_euler(
        grid, bg, src, np.zeros((3,) + grid.shape), np.zeros(grid.shape))
    assert np.max(np.abs(series.u)) < 1e-14
    assert np.max(np.abs(record.pressure)) < 1e-12


def test_linearized_mms_spatial_spectral():
    errs = []
    for cheb in (9, 13, 17):
        err, perr, _, _ = run_mms((8, 8), cheb, nt=129)
        errs.append(err)
    # spectral decay: each refinement gains well over one order of magnitude
    assert errs[1] < 3e-2 * errs[0]
    assert errs[2] < 3e-2 * errs[1]
    assert errs[2] < 1e-8


def test_linearized_mms_temporal_order():
    errs = []
    steps = [9, 17, 33]
    for nt in steps:
        err, _, _, _ = run_mms((8, 8), 17, nt=nt, horizon=0.2)
        errs.append(err)
    rate1 = np.log2(errs[0] / errs[1])
    rate2 = np.log2(errs[1] / errs[2])
    assert rate2 > 3.0, (errs, rate1, rate2)


def test_linearized_divergence_and_gauge_identities():
    err, perr, record, diags = run_mms((8, 8), 17, nt=65, div_tol=1e-8)
    assert diags["div_defect"] < 1e-8
    assert record.gauge_defect() < 1e-8
    assert perr < 1e-4


def test_linearized_compatibility_violation_raises():
    grid = SpatialGrid(modes=(4, 4), cheb=9)
    nt = 9
    times = np.linspace(0.0, 0.05, nt)
    z = np.zeros((nt,) + grid.shape)
    bg = MacroFieldSeries(grid, times, rho=z.copy(),
                          u=np.zeros((nt, 3) + grid.shape), theta=z.copy())
    src = LinearSources(r=np.ones((nt,) + grid.shape), p_sum=z.copy(),
                        h=np.zeros((nt, 3) + grid.shape), q=z.copy(),
                        d0=np.zeros((nt, 4, 4)), d1=np.zeros((nt, 4, 4)),
                        gauge=np.zeros(nt))
    with pytest.raises(CompatibilityError):
        solve_linearized_euler(grid, bg, src, np.zeros((3,) + grid.shape),
                               np.zeros(grid.shape))
