"""Viscous boundary layers: the half-line grid, the degenerate-drift
parabolic solver, closure integrals, and weighted-norm diagnostics.

One solve handles one wall; the caller runs both walls with that wall's
trace data.  The system for (u_par, theta) is

    dt u_i + (u0_par . grad_par) u_i + (y dx3 u03) dy u_i
           + (u . grad_par) u0_i = lam dyy u_i + f_i,
    dt th  + (u0_par . grad_par) th + (y dx3 u03) dy th
           + (u . grad_par) th0  = (2/5) kap dyy th + g,

with Neumann data at y = 0, decay at y_max, marched IMEX: Crank-Nicolson
for the wall-normal operator (diffusion plus the linear-growth drift),
Adams-Bashforth extrapolation for the tangential terms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import SpatialGrid, fd4_time


class DomainTruncationError(RuntimeError):
    """A far-field integral does not converge on the truncated domain."""


class LayerStepError(RuntimeError):
    pass


class HalfLineGrid:
    """Stretched nodes on [0, y_max], clustering near the wall.

    Uses the algebraic map y = a s / (1 - s (1 - a/y_max)) on uniform s.
    """

    def __init__(self, ymax: float = 40.0, ny: int = 96, stretch: float = 3.0,
                 weight_exponent: float = 6.0):
        self.ymax = float(ymax)
        self.ny = int(ny)
        self.weight_exponent = float(weight_exponent)
        a = ymax / max(stretch, 1.0) ** 2
        s = np.linspace(0.0, 1.0, ny)
        self.y = a * s / (1.0 - s * (1.0 - a / ymax))
        self.y[-1] = ymax
        h = np.diff(self.y)
        # trapezoid weights on the nonuniform grid
        w = np.zeros(ny)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
        self.w = w
        # 3-point nonuniform first/second derivative stencils (interior)
        self.h = h
        self._build_stencils()

    def _build_stencils(self):
        ny = self.ny
        y = self.y
        d1 = np.zeros((3, ny))
        d2 = np.zeros((3, ny))
        for j in range(1, ny - 1):
            hm = y[j] - y[j - 1]
            hp = y[j + 1] - y[j]
            d1[0, j] = -hp / (hm * (hm + hp))
            d1[1, j] = (hp - hm) / (hm * hp)
            d1[2, j] = hm / (hp * (hm + hp))
            d2[0, j] = 2.0 / (hm * (hm + hp))
            d2[1, j] = -2.0 / (hm * hp)
            d2[2, j] = 2.0 / (hp * (hm + hp))
        self.d1 = d1
        self.d2 = d2
        # one-sided second-order first derivative at the wall
        h0, h1 = y[1] - y[0], y[2] - y[1]
        self.wall_d1 = np.array([
            -(2.0 * h0 + h1) / (h0 * (h0 + h1)),
            (h0 + h1) / (h0 * h1),
            -h0 / (h1 * (h0 + h1)),
        ])

    def dy(self, f):
        """First y-derivative (2nd order, one-sided at the ends)."""
        out = np.empty_like(f)
        out[..., 1:-1] = (self.d1[0, 1:-1] * f[..., :-2]
                          + self.d1[1, 1:-1] * f[..., 1:-1]
                          + self.d1[2, 1:-1] * f[..., 2:])
        out[..., 0] = (self.wall_d1[0] * f[..., 0] + self.wall_d1[1] * f[..., 1]
                       + self.wall_d1[2] * f[..., 2])
        h = self.y[-1] - self.y[-2]
        out[..., -1] = (f[..., -1] - f[..., -2]) / h
        return out

    def integrate(self, f):
        """int_0^ymax f dy along the last axis."""
        return f @ self.w

    def tail_integral(self, f, rel_tol: float = 1e-8):
        """int_y^infty f ds: reverse cumulative trapezoid plus an algebraic
        tail estimated from the stored decay; raises DomainTruncationError
        when the field has not decayed at y_max."""
        f = np.asarray(f)
        scale = np.max(np.abs(f)) + 1e-300
        seg = 0.5 * (f[..., 1:] + f[..., :-1]) * self.h
        rev = np.zeros_like(f)
        rev[..., :-1] = np.cumsum(seg[..., ::-1], axis=-1)[..., ::-1]
        tailv = np.abs(f[..., -1])
        if np.max(tailv) > rel_tol * scale:
            # estimate algebraic tail C (1+y)^-p from the last octave
            jmid = np.searchsorted(self.y, 0.5 * self.ymax)
            fa = np.abs(f[..., jmid]) + 1e-300
            fb = tailv + 1e-300
            p = (np.log(fa / fb)
                 / np.log((1.0 + self.ymax) / (1.0 + self.y[jmid])))
            if np.min(p) <= 1.05:
                raise DomainTruncationError(
                    f"far-field decay exponent {float(np.min(p)):.2f} too weak "
                    f"for tail integration (field level {float(np.max(tailv)):.2e})")
            tail = f[..., -1] * (1.0 + self.ymax) / (p - 1.0)
            rev = rev + tail[..., None]
        return rev

    def weighted_norm(self, f, exponent: float | None = None):
        """(1+y)^l - weighted L^2 norm over (x_par, y) for diagnostics."""
        ell = self.weight_exponent if exponent is None else exponent
        wgt = (1.0 + self.y) ** ell * self.w
        return float(np.sqrt(np.mean(np.sum(np.asarray(f) ** 2 * wgt, axis=-1))))


def _tridiag_solve(a, b, c, d):
    """Thomas algorithm vectorized over leading axes.

    a, b, c: sub/main/super diagonals shaped (..., ny) (a[...,0], c[...,-1]
    unused); d: right-hand side (..., ny)."""
    ny = d.shape[-1]
    cp = np.empty_like(d)
    dp = np.empty_like(d)
    cp[..., 0] = c[..., 0] / b[..., 0]
    dp[..., 0] = d[..., 0] / b[..., 0]
    for j in range(1, ny):
        denom = b[..., j] - a[..., j] * cp[..., j - 1]
        cp[..., j] = c[..., j] / denom
        dp[..., j] = (d[..., j] - a[..., j] * dp[..., j - 1]) / denom
    x = np.empty_like(d)
    x[..., -1] = dp[..., -1]
    for j in range(ny - 2, -1, -1):
        x[..., j] = dp[..., j] - cp[..., j] * x[..., j + 1]
    return x


@dataclass
class LayerFieldSeries:
    """One wall's layer fields on (t, x_par, y); order index and wall sign."""

    grid: SpatialGrid
    ygrid: HalfLineGrid
    times: np.ndarray
    u_par: np.ndarray        # (nt, 2, m1, m2, ny)
    theta: np.ndarray        # (nt, m1, m2, ny)
    rho: np.ndarray          # (nt, m1, m2, ny)
    u3: np.ndarray           # (nt, m1, m2, ny), next-order normal velocity
    wall: int = 0            # 0 -> x3 = 0 ("-"), 1 -> x3 = 1 ("+")
    order: int = 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def sign(self) -> int:
        """+1 for the lower wall ("-", y = x3/eps), -1 for the upper."""
        return 1 if self.wall == 0 else -1

    def dt_theta(self):
        return fd4_time(self.theta, self.dt)

    def dt_rho(self):
        return fd4_time(self.rho, self.dt)

    def dt_u_par(self):
        return fd4_time(self.u_par, self.dt)

    def zero_like(self):
        return LayerFieldSeries(self.grid, self.ygrid, self.times,
                                np.zeros_like(self.u_par),
                                np.zeros_like(self.theta),
                                np.zeros_like(self.rho),
                                np.zeros_like(self.u3),
                                wall=self.wall, order=self.order)


@dataclass
class LayerBackground:
    """Wall traces of the order-0 interior solution on the layer time grid:
    u0_par (nt, 2, m1, m2), theta0 (nt, m1, m2), dx3_u03 (nt, m1, m2)."""

    u0_par: np.ndarray
    theta0: np.ndarray
    dx3_u03: np.ndarray


def solve_prandtl(grid: SpatialGrid, ygrid: HalfLineGrid, times: np.ndarray,
                  bg: LayerBackground, lam: float, kap: float,
                  sources, neumann, init_u=None, init_theta=None,
                  wall: int = 0, order: int = 1,
                  norm_bound: float = 1e6) -> LayerFieldSeries:
    """March the layer system for one wall.

    sources: (f_par (nt, 2, m1, m2, ny), g (nt, m1, m2, ny))
    neumann: (b_par (nt, 2, m1, m2), a (nt, m1, m2))

    Scheme: Crank-Nicolson in the y-operator (diffusion + linear-growth
    drift), AB2 extrapolation of tangential advection and sources; first
    step uses a CN predictor-corrector.
    """
    nt = len(times)
    dt = float(times[1] - times[0])
    ny = ygrid.ny
    shape_xy = (grid.m1, grid.m2)
    f_par, g_src = sources
    b_par, a_neu = neumann

    u = np.zeros((2,) + shape_xy + (ny,)) if init_u is None else np.array(init_u)
    th = np.zeros(shape_xy + (ny,)) if init_theta is None else np.array(init_theta)

    us = np.empty((nt, 2) + shape_xy + (ny,))
    ths = np.empty((nt,) + shape_xy + (ny,))

    y = ygrid.y
    d1, d2 = ygrid.d1, ygrid.d2

    def explicit_terms(i, u, th):
        """Tangential advection/coupling plus sources at sample i."""
        u0p = bg.u0_par[i]
        out_u = np.empty_like(u)
        for c in range(2):
            adv = (u0p[0][..., None] * grid.dx1(u[c])
                   + u0p[1][..., None] * grid.dx2(u[c]))
            # (u . grad_par) u0_c: gradients of traces are x_par fields
            g1 = grid_dx_par(grid, bg.u0_par[i][c])
            out_u[c] = (f_par[i][c] - adv
                        - (u[0] * g1[0][..., None] + u[1] * g1[1][..., None]))
        advt = (u0p[0][..., None] * grid.dx1(th)
                + u0p[1][..., None] * grid.dx2(th))
        gt = grid_dx_par(grid, bg.theta0[i])
        out_t = (g_src[i] - advt
                 - (u[0] * gt[0][..., None] + u[1] * gt[1][..., None]))
        return out_u, out_t

    def y_operator_diags(i, diffusivity):
        """CN tridiagonal pieces of  diffusivity * dyy - (y dx3u03) dy."""
        drift = y[None, None, :] * bg.dx3_u03[i][..., None]   # (m1,m2,ny)
        lo = np.zeros(shape_xy + (ny,))
        mid = np.zeros(shape_xy + (ny,))
        hi = np.zeros(shape_xy + (ny,))
        lo[..., 1:-1] = diffusivity * d2[0, 1:-1] - drift[..., 1:-1] * d1[0, 1:-1]
        mid[..., 1:-1] = diffusivity * d2[1, 1:-1] - drift[..., 1:-1] * d1[1, 1:-1]
        hi[..., 1:-1] = diffusivity * d2[2, 1:-1] - drift[..., 1:-1] * d1[2, 1:-1]
        return lo, mid, hi

    def cn_solve(i_new, rhs, diffusivity, bc_wall):
        """(I - dt/2 Y^{n+1}) x = rhs, with the Neumann row at y=0 and
        homogeneous Dirichlet at y_max."""
        lo, mid, hi = y_operator_diags(i_new, diffusivity)
        A_lo = -0.5 * dt * lo
        A_mid = 1.0 - 0.5 * dt * mid
        A_hi = -0.5 * dt * hi
        b = rhs.copy()
        # wall row: one-sided derivative = bc (second order, 3 points);
        # eliminate the 3rd point into the tridiagonal structure using the
        # j=1 interior row
        w0, w1, w2 = ygrid.wall_d1
        alpha = w2 / (A_hi[..., 1] + 1e-300)
        A_mid0 = w0 - alpha * A_lo[..., 1]
        A_hi0 = w1 - alpha * A_mid[..., 1]
        b0 = bc_wall - alpha * b[..., 1]
        A_lo[..., 0] = 0.0
        A_mid = A_mid.copy()
        A_hi = A_hi.copy()
        A_mid[..., 0] = A_mid0
        A_hi[..., 0] = A_hi0
        b[..., 0] = b0
        # far-field Dirichlet
        A_lo[..., -1] = 0.0
        A_mid[..., -1] = 1.0
        A_hi[..., -1] = 0.0
        b[..., -1] = 0.0
        return _tridiag_solve(A_lo, A_mid, A_hi, b)

    def apply_Y(i, field, diffusivity):
        lo, mid, hi = y_operator_diags(i, diffusivity)
        out = np.zeros_like(field)
        out[..., 1:-1] = (lo[..., 1:-1] * field[..., :-2]
                          + mid[..., 1:-1] * field[..., 1:-1]
                          + hi[..., 1:-1] * field[..., 2:])
        return out

    prev_expl = None
    diffus = (lam, lam, 0.4 * kap)
    for i in range(nt):
        us[i] = u
        ths[i] = th
        if i == nt - 1:
            break
        eu, et = explicit_terms(i, u, th)
        if prev_expl is None:
            ex_u, ex_t = eu, et
        else:
            ex_u = 1.5 * eu - 0.5 * prev_expl[0]
            ex_t = 1.5 * et - 0.5 * prev_expl[1]
        prev_expl = (eu, et)
        new_u = np.empty_like(u)
        for c in range(2):
            rhs = u[c] + dt * (0.5 * apply_Y(i, u[c], diffus[c]) + ex_u[c])
            new_u[c] = cn_solve(i + 1, rhs, diffus[c], b_par[i + 1][c])
        rhs = th + dt * (0.5 * apply_Y(i, th, diffus[2]) + ex_t)
        new_th = cn_solve(i + 1, rhs, diffus[2], a_neu[i + 1])
        u, th = new_u, new_th
        if not np.all(np.isfinite(u)) or not np.all(np.isfinite(th)):
            raise LayerStepError(f"layer state non-finite at step {i}")
        level = ygrid.weighted_norm(u) + ygrid.weighted_norm(th)
        if level > norm_bound:
            raise LayerStepError(f"weighted norm blow-up at step {i}: {level:.2e}")

    rho = -ths.copy()  # Boussinesq closure at leading order (s-source added by caller)
    u3 = np.zeros_like(ths)
    return LayerFieldSeries(grid, ygrid, np.asarray(times), us, ths, rho, u3,
                            wall=wall, order=order)


def grid_dx_par(grid: SpatialGrid, f2d):
    """Tangential gradient of an (m1, m2) wall field."""
    f3 = f2d[..., None]
    return (grid.dx1(f3)[..., 0], grid.dx2(f3)[..., 0])


def normal_velocity_closure(ygrid: HalfLineGrid, grid: SpatialGrid,
                            div_par_u: np.ndarray, dt_rho_low: np.ndarray,
                            sign: int) -> np.ndarray:
    """u3 of the next order from the divergence closure:
    dy u3_{k+1} = sign * (dt rho_{k+2-n} + div_par u_k,par), zero far field.
    Integrated from the far field: u3(y) = -sign * int_y^inf (...) ds."""
    integrand = dt_rho_low + div_par_u
    return -sign * ygrid.tail_integral(integrand)
