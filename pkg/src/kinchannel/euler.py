"""Interior fluid solvers: the incompressible Euler system with slip walls
and the linearized Euler systems with prescribed divergence.

Time convention: the order-0 solver marches at a fixed step dt and stores
every step.  Each linearized solve marches with RK4 at twice the spacing of
its input series, so all stage values land on stored samples; its output is
stored on the stride-2 subgrid.  Order-k fields therefore live on a time
grid of spacing dt * 2^k.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import SpatialGrid, fd4_time, project_div


class CompatibilityError(ValueError):
    """A solvability condition of the linear system is violated."""


class TimeStepError(RuntimeError):
    pass


@dataclass
class MacroFieldSeries:
    """(rho, u, theta) sampled on a uniform time grid; order index k."""

    grid: SpatialGrid
    times: np.ndarray
    rho: np.ndarray          # (nt, m1, m2, m3)
    u: np.ndarray            # (nt, 3, m1, m2, m3)
    theta: np.ndarray        # (nt, m1, m2, m3)
    order: int = 0

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def dt_rho(self) -> np.ndarray:
        return fd4_time(self.rho, self.dt)

    def dt_theta(self) -> np.ndarray:
        return fd4_time(self.theta, self.dt)

    def dt_u(self) -> np.ndarray:
        return fd4_time(self.u, self.dt)

    def restrict(self, stride: int) -> "MacroFieldSeries":
        return MacroFieldSeries(self.grid, self.times[::stride],
                                self.rho[::stride], self.u[::stride],
                                self.theta[::stride], self.order)

    def sample_index(self, t: float) -> int:
        i = int(round((t - self.times[0]) / self.dt))
        if not np.isclose(self.times[i], t, atol=1e-10):
            raise KeyError(f"time {t} not on the stored grid")
        return i


@dataclass
class PressureRecord:
    """Pressure of one expansion order: gradient always determined; the
    gauge fixes the volume mean (constant-in-x function of t for low
    orders)."""

    grid: SpatialGrid
    times: np.ndarray
    grad: np.ndarray | None          # (nt, 3, m1, m2, m3)
    gauge: np.ndarray | None         # c_k(t) samples, None if ungauged
    pressure: np.ndarray | None      # reconstructed p_k where gauge known
    order: int = 0

    def gauge_defect(self) -> float:
        if self.pressure is None or self.gauge is None:
            return 0.0
        vals = np.array([self.grid.integrate(p) for p in self.pressure])
        return float(np.max(np.abs(vals - self.gauge)))


def cfl_timestep(grid: SpatialGrid, u, cfl: float, horizon: float,
                 divide_by: int = 2) -> float:
    """Fixed step from the initial field; horizon/dt a multiple of divide_by."""
    umax1 = np.max(np.abs(u[0])) + 1e-12
    umax2 = np.max(np.abs(u[1])) + 1e-12
    dz = np.minimum(np.diff(grid.x3, prepend=grid.x3[0] - 1.0),
                    np.append(np.diff(grid.x3), 1.0))
    rate3 = np.max(np.abs(u[2]) / dz[None, None, :])
    rate = grid.m1 * umax1 + grid.m2 * umax2 + rate3 + 1e-9
    dt = cfl / rate
    k = max(divide_by, 2)
    nsteps = max(k * int(np.ceil(horizon / dt / k)), 2 * k)
    return horizon / nsteps


def solve_euler0(grid: SpatialGrid, rho0, u0, theta0, horizon: float,
                 cfl: float = 0.5, dt: float | None = None,
                 div_tol: float = 1e-8, nsteps_multiple: int = 2):
    """March the incompressible Euler system with slip walls.

    Initial data must satisfy div u0 = 0, zero wall-normal trace, and
    rho0 + theta0 constant in x.  theta is transported; rho is recovered
    from the conserved constant.  Returns (MacroFieldSeries,
    PressureRecord for the leading pressure gradient, diagnostics).
    """
    u = np.array(u0, dtype=float)
    th = np.array(theta0, dtype=float)
    rho_init = np.asarray(rho0, dtype=float)
    if np.max(np.abs(u[2][..., 0])) + np.max(np.abs(u[2][..., -1])) > 1e-10:
        raise CompatibilityError("initial wall-normal velocity trace nonzero")
    psum = rho_init + th
    p0_const = float(grid.integrate(psum))
    if np.max(np.abs(psum - p0_const)) > 1e-8 * (1.0 + abs(p0_const)):
        raise CompatibilityError("rho0 + theta0 is not spatially constant")
    u, _, _ = project_div(grid, u)
    if dt is None:
        dt = cfl_timestep(grid, u, cfl, horizon, divide_by=nsteps_multiple)
    nt = int(round(horizon / dt)) + 1

    def rhs(u, th):
        adv = np.stack([grid.advect(u, u[i]) for i in range(3)])
        adv = grid.dealias(adv)
        du, q, _ = project_div(grid, -adv)
        dth = -grid.dealias(grid.advect(u, th))
        return du, dth, q

    us = np.empty((nt, 3) + grid.shape)
    ths = np.empty((nt,) + grid.shape)
    ps = np.empty((nt,) + grid.shape)
    div_max = 0.0
    for it in range(nt):
        us[it] = u
        ths[it] = th
        k1u, k1t, q = rhs(u, th)
        ps[it] = q - grid.integrate(q)
        div_max = max(div_max, float(np.max(np.abs(grid.div(u)))))
        if it == nt - 1:
            break
        k2u, k2t, _ = rhs(u + 0.5 * dt * k1u, th + 0.5 * dt * k1t)
        k3u, k3t, _ = rhs(u + 0.5 * dt * k2u, th + 0.5 * dt * k2t)
        k4u, k4t, _ = rhs(u + dt * k3u, th + dt * k3t)
        u = u + dt / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        th = th + dt / 6.0 * (k1t + 2 * k2t + 2 * k3t + k4t)
        u, _, _ = project_div(grid, u)
        if not np.all(np.isfinite(u)):
            raise TimeStepError(f"euler state non-finite at step {it}")
    if div_max > div_tol:
        raise TimeStepError(f"divergence residual {div_max:.2e} above tolerance")
    times = dt * np.arange(nt)
    series = MacroFieldSeries(grid, times, rho=p0_const - ths, u=us, theta=ths,
                              order=0)
    grad = np.stack([np.stack(grid.grad(p)) for p in ps])
    record = PressureRecord(grid, times, grad=grad, gauge=None, pressure=ps,
                            order=1)
    diags = {"dt": dt, "div_max": div_max, "p0_const": p0_const}
    return series, record, diags


@dataclass
class LinearSources:
    """Sources of one linearized solve, sampled on the input time grid.

    r:      divergence target (nt, ...)        [div u = r]
    p_sum:  rho + theta constraint (nt, ...)
    h:      momentum source (nt, 3, ...)
    q:      temperature source (nt, ...)
    d0, d1: wall data (nt, m1, m2): u3(x3=0) = -d0, u3(x3=1) = d1
    gauge:  c(t) samples fixing int p dx
    """

    r: np.ndarray
    p_sum: np.ndarray
    h: np.ndarray
    q: np.ndarray
    d0: np.ndarray
    d1: np.ndarray
    gauge: np.ndarray


def solve_linearized_euler(grid: SpatialGrid, background: MacroFieldSeries,
                           src: LinearSources, u_init, theta_init,
                           order: int = 1, compat_tol: float = 1e-6,
                           div_tol: float = 1e-8):
    """Linearized Euler system with nonvanishing divergence, solved by the
    lift / pressure-projection / transport construction.

    background and sources are sampled at spacing dt; the march uses RK4
    with step 2*dt (stages on stored samples) and the output lives on the
    stride-2 time grid.
    """
    times = background.times
    nt = len(times)
    if nt < 5 or nt % 2 == 0:
        raise ValueError("background series must have an odd length >= 5")
    dt = background.dt

    compat = np.array([grid.integrate_wall(src.d1[i] + src.d0[i])
                       - grid.integrate(src.r[i]) for i in range(nt)])
    compat_defect = float(np.max(np.abs(compat)))
    scale = 1.0 + float(np.max(np.abs(src.r)))
    if compat_defect > compat_tol * scale:
        raise CompatibilityError(
            f"wall-flux/divergence compatibility defect {compat_defect:.2e}")

    lifts = np.empty((nt, 3) + grid.shape)
    for i in range(nt):
        q, _ = grid.poisson_neumann(src.r[i], -src.d0[i], src.d1[i])
        lifts[i] = grid.grad(q)
    dt_lifts = fd4_time(lifts, dt)

    u0s, th0s = background.u, background.theta

    def rhs(i, v, th):
        ub, thb = u0s[i], th0s[i]
        hb = lifts[i]
        w = src.h[i] - dt_lifts[i]
        w = w - np.stack([grid.advect(ub, hb[c] + v[c]) for c in range(3)])
        w = w - np.stack([(hb[0] + v[0]) * grid.dx1(ub[c])
                          + (hb[1] + v[1]) * grid.dx2(ub[c])
                          + (hb[2] + v[2]) * grid.dx3(ub[c])
                          for c in range(3)])
        dv, q, _ = project_div(grid, grid.dealias(w))
        dth = src.q[i] - grid.advect(ub, th) - grid.advect(v + hb, thb)
        return dv, grid.dealias(dth), q

    v = np.array(u_init, dtype=float) - lifts[0]
    v, _, _ = project_div(grid, v)
    th = np.array(theta_init, dtype=float)
    nt_out = (nt + 1) // 2
    us = np.empty((nt_out, 3) + grid.shape)
    ths = np.empty((nt_out,) + grid.shape)
    ps = np.empty((nt_out,) + grid.shape)
    div_defect = 0.0
    h = 2.0 * dt
    for io in range(nt_out):
        it = 2 * io
        us[io] = v + lifts[it]
        ths[io] = th
        k1v, k1t, q = rhs(it, v, th)
        ps[io] = q - grid.integrate(q) + src.gauge[it]
        div_defect = max(div_defect,
                         float(np.max(np.abs(grid.div(us[io]) - src.r[it]))))
        if it + 2 >= nt:
            break
        k2v, k2t, _ = rhs(it + 1, v + 0.5 * h * k1v, th + 0.5 * h * k1t)
        k3v, k3t, _ = rhs(it + 1, v + 0.5 * h * k2v, th + 0.5 * h * k2t)
        k4v, k4t, _ = rhs(it + 2, v + h * k3v, th + h * k3t)
        v = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        th = th + h / 6.0 * (k1t + 2 * k2t + 2 * k3t + k4t)
        v, _, _ = project_div(grid, v)
        if not np.all(np.isfinite(v)):
            raise TimeStepError("linearized euler state non-finite")

    times_out = times[::2]
    rho = src.p_sum[::2] - ths
    series = MacroFieldSeries(grid, times_out, rho=rho, u=us, theta=ths,
                              order=order)
    grad = np.stack([np.stack(grid.grad(p)) for p in ps])
    record = PressureRecord(grid, times_out, grad=grad, gauge=src.gauge[::2],
                            pressure=ps, order=order)
    diags = {"div_defect": div_defect, "compat_defect": compat_defect}
    if div_defect > div_tol:
        raise TimeStepError(
            f"divergence identity defect {div_defect:.2e} above tolerance")
    return series, record, diags
