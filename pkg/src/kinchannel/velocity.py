"""Velocity space: Maxwellian-weighted grids, macro-micro projection,
Burnett elements, and the closed-form microscopic algebra.

All kinetic functions g(v) are stored through their payload c = g/sqrt(mu)
so that inner products <g, h> = int g h dv become mu-weighted quadratures
sum_q w_q c_g(v_q) c_h(v_q), which the tensor Gauss-Hermite grid performs
exactly for polynomial payloads.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .hermite import (HermiteBasis, evaluate_basis, gauss_hermite_nodes,
                      hermite_values_1d)


class GridResolutionError(ValueError):
    """The velocity grid cannot integrate the requested payload reliably."""


class VelocityGrid:
    """Tensor-product Gauss-Hermite velocity grid.

    Nodes and weights integrate int f(v) mu(v) dv exactly for polynomials of
    per-axis degree <= 2*order - 1.  The node set is closed under coordinate
    reflections (no node sits on v3 = 0 for even order), which the
    specular-reflection bookkeeping relies on.
    """

    def __init__(self, order: int = 24):
        if order < 2:
            raise ValueError("velocity grid order must be >= 2")
        self.order = order
        t, w = gauss_hermite_nodes(order)
        self.axis_nodes = t
        self.axis_weights = w
        V1, V2, V3 = np.meshgrid(t, t, t, indexing="ij")
        self.nodes = np.stack([V1.ravel(), V2.ravel(), V3.ravel()], axis=1)
        self.weights = (w[:, None, None] * w[None, :, None]
                        * w[None, None, :]).ravel()
        self.size = self.nodes.shape[0]
        # reflection v3 -> -v3 as a node permutation
        self._reflect = (np.arange(self.size).reshape(order, order, order)
                         [:, :, ::-1].ravel())
        self._basis_cache: dict[int, np.ndarray] = {}

    def __eq__(self, other):
        return isinstance(other, VelocityGrid) and other.order == self.order

    def __hash__(self):
        return hash(("VelocityGrid", self.order))

    def spec(self) -> dict:
        return {"per_axis_order": self.order, "node_rule": "gauss-hermite"}

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(repr(self.spec()).encode())
        h.update(np.ascontiguousarray(self.axis_nodes).tobytes())
        return h.hexdigest()[:16]

    def basis_matrix(self, degree: int) -> np.ndarray:
        """(size, N) values of the orthonormal Hermite basis at the nodes."""
        if degree not in self._basis_cache:
            basis = HermiteBasis(degree)
            self._basis_cache[degree] = evaluate_basis(self.nodes, basis.powers)
        return self._basis_cache[degree]

    def reflect_values(self, values: np.ndarray) -> np.ndarray:
        """Payload of g(R_x v) from payload of g(v)."""
        return np.asarray(values)[..., self._reflect]

    def quad(self, values: np.ndarray) -> np.ndarray:
        """mu-weighted integral of a payload (last axis = nodes)."""
        return np.asarray(values) @ self.weights

    def project_coeffs(self, values: np.ndarray, degree: int) -> np.ndarray:
        """L^2(mu) projection of nodal payloads onto Hermite coefficients."""
        Phi = self.basis_matrix(degree)
        return (np.asarray(values) * self.weights) @ Phi

    def eval_coeffs(self, coeffs: np.ndarray, degree: int) -> np.ndarray:
        """Nodal payload of a coefficient vector (exact for polynomials)."""
        return np.asarray(coeffs) @ self.basis_matrix(degree).T

    def resolution_check(self, values: np.ndarray, tol: float) -> float:
        """Fraction of payload energy the grid's polynomial range cannot see.

        The grid resolves payloads up to per-axis degree order-1 as quadrature
        targets; energy beyond total degree (order - 2) signals that moment
        quadratures may alias.  Raises GridResolutionError above `tol`.
        """
        deg = min(self.order - 2, 12)
        c = self.project_coeffs(values, deg)
        total = float(self.quad(np.asarray(values) ** 2))
        resolved = float(np.sum(np.asarray(c) ** 2, axis=-1))
        tail = max(total - resolved, 0.0) / max(total, 1e-300)
        if tail > tol:
            raise GridResolutionError(
                f"unresolved payload energy fraction {tail:.3e} exceeds {tol:.1e}")
        return tail


@dataclass
class MacroState:
    """Hydrodynamic moments (density, velocity, temperature perturbations)."""

    rho: float
    u: np.ndarray
    theta: float

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.rho], np.asarray(self.u, dtype=float),
                               [self.theta]])


class KineticFunction:
    """A velocity distribution g = F/sqrt(mu), stored as payload values at
    grid nodes.  Thin wrapper; algebra happens on .values."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: VelocityGrid, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != grid.size:
            raise ValueError("payload length does not match grid size")
        self.grid = grid
        self.values = values

    # -- constructors -------------------------------------------------------
    @classmethod
    def from_callable(cls, grid, fn):
        return cls(grid, fn(grid.nodes))

    @classmethod
    def maxwellian(cls, grid):
        """g = sqrt(mu), i.e. F = mu; payload is identically 1."""
        return cls(grid, np.ones(grid.size))

    @classmethod
    def from_macro(cls, grid, state: MacroState):
        v = grid.nodes
        vals = (state.rho + v @ np.asarray(state.u, dtype=float)
                + 0.5 * state.theta * ((v ** 2).sum(axis=1) - 3.0))
        return cls(grid, vals)

    # -- algebra ------------------------------------------------------------
    def __add__(self, other):
        return KineticFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        return KineticFunction(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return KineticFunction(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def reflect(self):
        """g(R_x v): flip the wall-normal velocity component."""
        return KineticFunction(self.grid, self.grid.reflect_values(self.values))

    def inner(self, other: "KineticFunction") -> float:
        return float(self.grid.quad(self.values * other.values))

    def norm(self) -> float:
        return float(np.sqrt(max(self.grid.quad(self.values ** 2), 0.0)))


def chi_payloads(grid: VelocityGrid) -> np.ndarray:
    """Payloads of the orthonormal collision invariants chi_0..chi_4."""
    v = grid.nodes
    rows = np.empty((5, grid.size))
    rows[0] = 1.0
    rows[1:4] = v.T
    rows[4] = ((v ** 2).sum(axis=1) - 3.0) / np.sqrt(6.0)
    return rows


def project_P(g: KineticFunction, check: bool = False,
              tol: float = 1e-6):
    """Macro-micro split g = P g + (I-P) g.

    Returns (MacroState, micro KineticFunction).  With check=True, raises
    GridResolutionError if the payload carries significant energy the grid
    cannot integrate reliably.
    """
    grid = g.grid
    if check:
        grid.resolution_check(g.values, tol)
    chi = chi_payloads(grid)
    coeffs = grid.quad(chi * g.values[..., None, :])
    rho = coeffs[..., 0]
    u = coeffs[..., 1:4]
    theta = coeffs[..., 4] * np.sqrt(2.0 / 3.0)
    macro_payload = np.tensordot(coeffs, chi, axes=(-1, 0))
    micro = KineticFunction(grid, g.values - macro_payload)
    if np.ndim(rho) == 0:
        state = MacroState(float(rho), np.asarray(u, dtype=float), float(theta))
    else:
        state = MacroState(rho, u, theta)
    return state, micro


def burnett(grid: VelocityGrid, kind: str, i: int, j: int | None = None) -> KineticFunction:
    """Burnett elements: kind='A' gives {v_i v_j - d_ij |v|^2/3} sqrt(mu),
    kind='B' gives (v_i/2)(|v|^2 - 5) sqrt(mu).  Indices are 1-based."""
    v = grid.nodes
    if kind == "A":
        if j is None:
            raise ValueError("A requires two indices")
        a, b = i - 1, j - 1
        vals = v[:, a] * v[:, b]
        if a == b:
            vals = vals - (v ** 2).sum(axis=1) / 3.0
        return KineticFunction(grid, vals)
    if kind == "B":
        a = i - 1
        return KineticFunction(grid, 0.5 * v[:, a] * ((v ** 2).sum(axis=1) - 5.0))
    raise ValueError(f"unknown Burnett kind {kind!r}")


def moments(F: KineticFunction) -> dict:
    """Moment table of F = sqrt(mu) f: mass, momentum, energy, stress, heat."""
    grid = F.grid
    v = grid.nodes
    c = F.values
    out = {
        "mass": float(grid.quad(c)),
        "momentum": grid.quad(v.T * c),
        "energy": float(grid.quad((v ** 2).sum(axis=1) * c)),
    }
    stress = np.empty((3, 3))
    heat = np.empty(3)
    vsq = (v ** 2).sum(axis=1)
    for a in range(3):
        heat[a] = grid.quad(v[:, a] * vsq * c)
        for b in range(3):
            stress[a, b] = grid.quad(v[:, a] * v[:, b] * c)
    out["stress"] = stress
    out["heat"] = heat
    return out


def quadratic_micro_payload(grid: VelocityGrid, a: MacroState, b: MacroState) -> np.ndarray:
    """Payload of the closed-form microscopic product of two Maxwellian states:

        sum_ls u_al u_bs A_ls + theta_a sum_l u_bl B_l + theta_b sum_l u_al B_l
        + (1/4) theta_a theta_b (I-P){(|v|^2-5)^2 sqrt(mu)}

    with (I-P){(|v|^2-5)^2 sqrt(mu)} having payload (|v|^2-5)^2 - 10.
    """
    v = grid.nodes
    vsq = (v ** 2).sum(axis=1)
    ua = np.asarray(a.u, dtype=float)
    ub = np.asarray(b.u, dtype=float)
    # sum_ls u_al u_bs (v_l v_s - d_ls |v|^2/3)
    out = (v @ ua) * (v @ ub) - (ua @ ub) * vsq / 3.0
    bsum = 0.5 * (v @ (a.theta * ub + b.theta * ua)) * (vsq - 5.0)
    out = out + bsum
    out = out + 0.25 * a.theta * b.theta * ((vsq - 5.0) ** 2 - 10.0)
    return out


def micro_quadratic(grid: VelocityGrid, a: MacroState, b: MacroState) -> KineticFunction:
    """Closed form of L^{-1}{Gamma(g_a, g_b) + Gamma(g_b, g_a)} for purely
    hydrodynamic g_a, g_b; the result is purely microscopic."""
    return KineticFunction(grid, quadratic_micro_payload(grid, a, b))
