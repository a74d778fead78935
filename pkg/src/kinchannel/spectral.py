"""Fourier x Chebyshev spectral infrastructure on the channel T^2 x [0,1].

Periodic directions x1, x2 are uniform grids with FFT transforms; the
wall-normal direction x3 uses Chebyshev-Gauss-Lobatto collocation with
x3[0] = 0 (lower wall) and x3[-1] = 1 (upper wall).  Fields are real arrays
of shape (M1, M2, M3).
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import lu_factor, lu_solve


def chebyshev_lobatto(m: int):
    """CGL nodes on [0,1] (ascending) and the first-derivative matrix."""
    if m < 3:
        raise ValueError("need at least 3 Chebyshev nodes")
    j = np.arange(m)
    theta = np.pi * j / (m - 1)
    xi = np.cos(theta)                     # descending on [-1, 1]
    # Weideman-Reddy style differentiation matrix with the trig-identity
    # off-diagonal distances for accuracy
    c = np.ones(m)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** j
    TH = np.tile(theta / 2.0, (m, 1))
    # xi_j - xi_k = -2 sin((th_j+th_k)/2) sin((th_j-th_k)/2), with the
    # reflection trick filling the lower half for accuracy
    dx = -2.0 * np.sin(TH.T + TH) * np.sin(TH.T - TH)
    n1, n2 = m // 2, (m + 1) // 2
    dx = np.vstack([dx[:n1], -np.flipud(np.fliplr(dx[:n2]))])
    np.fill_diagonal(dx, 1.0)
    C = np.outer(c, 1.0 / c)
    D = C / dx
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    # map xi in [1,-1] to x3 = (1 - xi)/2 in [0,1]; d/dx3 = -2 d/dxi
    x3 = (1.0 - xi) / 2.0
    return x3, -2.0 * D


def clenshaw_curtis(m: int) -> np.ndarray:
    """Quadrature weights for int_0^1 f(x3) dx3 on the CGL nodes."""
    n = m - 1
    k = np.arange(1, n, dtype=float)
    w = np.zeros(m)
    theta = np.pi * np.arange(m) / n
    for j in range(m):
        s = 0.0
        for ell in range(1, n // 2 + 1):
            b = 2.0 if 2 * ell < n else 1.0
            s += b / (4.0 * ell ** 2 - 1.0) * np.cos(2.0 * ell * theta[j])
        cj = 1.0 if 0 < j < n else 0.5
        w[j] = (2.0 * cj / n) * (1.0 - s)
    return w / 2.0  # interval length 1/2 of [-1,1]


class SpatialGrid:
    """Channel grid: periodic (M1, M2) x Chebyshev M3."""

    def __init__(self, modes=(16, 16), cheb: int = 33):
        self.m1, self.m2 = int(modes[0]), int(modes[1])
        self.m3 = int(cheb)
        self.x1 = np.arange(self.m1) / self.m1
        self.x2 = np.arange(self.m2) / self.m2
        self.x3, self.D3 = chebyshev_lobatto(self.m3)
        self.w3 = clenshaw_curtis(self.m3)
        self.D3_2 = self.D3 @ self.D3
        k1 = 2.0 * np.pi * np.fft.fftfreq(self.m1, d=1.0 / self.m1)
        k2 = 2.0 * np.pi * np.fft.rfftfreq(self.m2, d=1.0 / self.m2)
        self.k1 = k1[:, None, None]
        self.k2 = k2[None, :, None]
        # 2/3-rule dealias mask in the periodic directions
        m1cut = self.m1 // 3
        m2cut = (self.m2 // 2) * 2 // 3
        mask1 = np.abs(np.fft.fftfreq(self.m1) * self.m1) <= m1cut
        mask2 = np.abs(np.fft.rfftfreq(self.m2) * self.m2) <= m2cut
        self.dealias_mask = (mask1[:, None] & mask2[None, :])[:, :, None]
        self._poisson_cache: dict = {}
        self.shape = (self.m1, self.m2, self.m3)

    # -- transforms (fields are (..., m1, m2, m3)) ----------------------------
    def fft2(self, f):
        return np.fft.rfft2(f, axes=(-3, -2))

    def ifft2(self, fh):
        return np.fft.irfft2(fh, s=(self.m1, self.m2), axes=(-3, -2))

    def dx1(self, f):
        return self.ifft2(1j * self.k1 * self.fft2(f))

    def dx2(self, f):
        return self.ifft2(1j * self.k2 * self.fft2(f))

    def dx3(self, f):
        return f @ self.D3.T

    def dx3_wall(self, f, order: int = 1):
        """Wall traces of d^order/dx3^order f: returns (lower, upper)."""
        g = f
        for _ in range(order):
            g = self.dx3(g)
        return g[..., 0], g[..., -1]

    def dealias(self, f):
        return self.ifft2(self.fft2(f) * self.dealias_mask)

    def grad(self, f):
        return np.stack([self.dx1(f), self.dx2(f), self.dx3(f)])

    def div(self, u):
        return self.dx1(u[0]) + self.dx2(u[1]) + self.dx3(u[2])

    def integrate(self, f) -> float:
        """Volume integral over T^2 x [0,1]."""
        return float(np.sum(f @ self.w3) / (self.m1 * self.m2))

    def integrate_wall(self, f2d) -> float:
        return float(np.sum(f2d) / (self.m1 * self.m2))

    def advect(self, u, f):
        """(u . grad) f for a scalar field."""
        return u[0] * self.dx1(f) + u[1] * self.dx2(f) + u[2] * self.dx3(f)

    def eval_x3(self, f, x3pts):
        """Evaluate a field at arbitrary wall-normal points by barycentric
        interpolation through the CGL nodes (exact for the collocation
        polynomial)."""
        x3pts = np.asarray(x3pts)
        m = self.m3
        wbar = np.ones(m)
        wbar[1::2] = -1.0
        wbar[0] *= 0.5
        wbar[-1] *= 0.5
        diff = x3pts[..., None] - self.x3[None, :]
        exact = np.isclose(diff, 0.0, atol=1e-14)
        diff = np.where(exact, 1.0, diff)
        wts = wbar / diff
        wts = np.where(exact, np.inf, wts)
        finite = ~np.isinf(wts).any(axis=-1)
        denom = wts.sum(axis=-1)
        # f shape (..., m3); result (..., npts)
        vals = np.tensordot(f, wts.T, axes=(-1, 0)) / denom
        if np.any(~finite):
            idx = np.argmax(np.isinf(wts), axis=-1)
            exact_vals = np.take(f, idx, axis=-1)
            vals = np.where(finite, vals, exact_vals)
        return vals

    # -- wall-normal Helmholtz solves ---------------------------------------
    def _poisson_factors(self, kappa_sq: float):
        key = round(float(kappa_sq), 10)
        if key not in self._poisson_cache:
            m = self.m3
            A = self.D3_2 - kappa_sq * np.eye(m)
            A[0] = self.D3[0]      # Neumann row at x3 = 0
            A[-1] = self.D3[-1]    # Neumann row at x3 = 1
            if key == 0.0:
                # singular Neumann mode: pin the mean instead of one
                # interior collocation equation (defect reported by caller)
                A[m // 2] = self.w3
            self._poisson_cache[key] = lu_factor(A)
        return self._poisson_cache[key]

    def poisson_neumann(self, rhs, lower, upper):
        """Solve Laplace(q) = rhs with d_x3 q = lower/upper at the walls.

        The zero mode is gauged to zero mean; the dropped collocation
        equation's residual (the discrete compatibility defect) is returned.
        """
        rh = self.fft2(rhs)
        lo = self.fft2(lower[..., None])[..., 0]
        up = self.fft2(upper[..., None])[..., 0]
        kap2 = (self.k1 ** 2 + self.k2 ** 2)[:, :, 0]
        out = np.empty_like(rh)
        defect = 0.0
        m = self.m3
        for i in range(rh.shape[0]):
            for j in range(rh.shape[1]):
                b = rh[i, j].copy()
                b[0] = lo[i, j]
                b[-1] = up[i, j]
                fac = self._poisson_factors(kap2[i, j])
                if kap2[i, j] == 0.0:
                    dropped = b[m // 2]
                    b[m // 2] = 0.0
                    sol = lu_solve(fac, b)
                    resid = (self.D3_2[m // 2] @ sol) - dropped
                    defect = max(defect, abs(resid))
                    out[i, j] = sol
                else:
                    out[i, j] = lu_solve(fac, b)
        return self.ifft2(out), defect


def project_div(grid: SpatialGrid, w, div_target=None, lower=None, upper=None):
    """Project a vector field onto {div u = div_target, u3 = given traces}.

    Returns (u, q) with u = w - grad q.  Traces default to w's own traces
    (pure divergence correction) when lower/upper are None the projection
    keeps u3 at the walls equal to  -lower / upper convention of the caller.
    """
    rhs = grid.div(w)
    if div_target is not None:
        rhs = rhs - div_target
    lo = w[2][..., 0] - (lower if lower is not None else 0.0)
    up = w[2][..., -1] - (upper if upper is not None else 0.0)
    q, defect = grid.poisson_neumann(rhs, lo, up)
    u = w - grid.grad(q)
    return u, q, defect


def fd4_time(series: np.ndarray, dt: float) -> np.ndarray:
    """Fourth-order time derivative of a sampled series along axis 0."""
    f = np.asarray(series)
    n = f.shape[0]
    out = np.empty_like(f)
    if n < 5:
        return np.gradient(f, dt, axis=0, edge_order=min(2, n - 1))
    out[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * dt)
    # one-sided 4th order at the ends
    c = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
    out[0] = sum(ci * f[i] for i, ci in enumerate(c)) / dt
    out[1] = sum(ci * f[1 + i] for i, ci in enumerate(c)) / dt
    out[-1] = -sum(ci * f[-1 - i] for i, ci in enumerate(c)) / dt
    out[-2] = -sum(ci * f[-2 - i] for i, ci in enumerate(c)) / dt
    return out
