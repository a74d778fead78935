"""Tensor Hermite basis utilities for Maxwellian-weighted velocity space.

Functions of velocity are represented by their payload c(v) = g(v)/sqrt(mu),
and payloads live either as values on a tensor Gauss-Hermite grid or as
coefficients in the orthonormal (probabilists') Hermite product basis

    phi_(i,j,k)(v) = He_i(v1) He_j(v2) He_k(v3) / sqrt(i! j! k!),

restricted to total degree <= D.  The basis is orthonormal under the
mu-weighted inner product, so coefficient dot products are L^2 pairings.
"""
from __future__ import annotations

import itertools

import numpy as np
from numpy.polynomial.hermite_e import hermegauss


def total_degree_indices(degree: int) -> np.ndarray:
    """Monomial powers (i, j, k) with i+j+k <= degree, graded order."""
    idx = []
    for d in range(degree + 1):
        for i in range(d, -1, -1):
            for j in range(d - i, -1, -1):
                idx.append((i, j, d - i - j))
    return np.array(idx, dtype=np.int64)


def basis_size(degree: int) -> int:
    return (degree + 1) * (degree + 2) * (degree + 3) // 6


def hermite_values_1d(x: np.ndarray, degree: int) -> np.ndarray:
    """Orthonormal He_k(x)/sqrt(k!) for k = 0..degree; shape (degree+1,) + x.shape."""
    x = np.asarray(x, dtype=float)
    out = np.empty((degree + 1,) + x.shape)
    out[0] = 1.0
    if degree >= 1:
        out[1] = x
    for k in range(2, degree + 1):
        out[k] = (x * out[k - 1] - np.sqrt(k - 1) * out[k - 2]) / np.sqrt(k)
    return out


def evaluate_basis(points: np.ndarray, powers: np.ndarray) -> np.ndarray:
    """Basis values at points (..., 3) -> (..., N)."""
    degree = int(powers.max())
    h = [hermite_values_1d(points[..., ax], degree) for ax in range(3)]
    return np.stack([h[0][i] * h[1][j] * h[2][k] for (i, j, k) in powers], axis=-1)


def gauss_hermite_nodes(order: int):
    """Nodes/weights integrating f against the standard normal on R exactly
    for polynomial f of degree <= 2*order - 1."""
    t, w = hermegauss(order)
    return t, w / np.sqrt(2.0 * np.pi)


class HermiteBasis:
    """Total-degree-truncated tensor Hermite basis with cached index maps."""

    def __init__(self, degree: int):
        self.degree = degree
        self.powers = total_degree_indices(degree)
        self.size = len(self.powers)
        self.loc = {tuple(p): i for i, p in enumerate(self.powers)}
        self.degrees = self.powers.sum(axis=1)
        # payload parity per axis: (-1)^power
        self.parity = (-1) ** (self.powers % 2)

    def index(self, i: int, j: int, k: int) -> int:
        return self.loc[(i, j, k)]

    def degree_mask(self, degree: int) -> np.ndarray:
        return self.degrees <= degree

    # -- distinguished coefficient vectors ---------------------------------
    def unit(self, i, j, k):
        v = np.zeros(self.size)
        v[self.index(i, j, k)] = 1.0
        return v

    def chi(self) -> np.ndarray:
        """Orthonormal collision invariants chi_0..chi_4 as coefficient rows."""
        rows = np.zeros((5, self.size))
        rows[0] = self.unit(0, 0, 0)
        rows[1] = self.unit(1, 0, 0)
        rows[2] = self.unit(0, 1, 0)
        rows[3] = self.unit(0, 0, 1)
        rows[4] = (self.unit(2, 0, 0) + self.unit(0, 2, 0)
                   + self.unit(0, 0, 2)) / np.sqrt(3.0)
        return rows

    def burnett_A(self, i: int, j: int) -> np.ndarray:
        """Coefficients of the traceless quadratic element v_i v_j - d_ij |v|^2/3."""
        if i != j:
            p = [0, 0, 0]
            p[i] += 1
            p[j] += 1
            return self.unit(*p)
        v = np.zeros(self.size)
        for ax in range(3):
            p = [0, 0, 0]
            p[ax] = 2
            v[self.index(*p)] = np.sqrt(2.0) * ((2.0 / 3.0) if ax == i else (-1.0 / 3.0))
        return v

    def burnett_B(self, i: int) -> np.ndarray:
        """Coefficients of (v_i/2)(|v|^2 - 5)."""
        v = np.zeros(self.size)
        p = [0, 0, 0]
        p[i] = 3
        v[self.index(*p)] = np.sqrt(6.0) / 2.0
        for ax in range(3):
            if ax == i:
                continue
            p = [0, 0, 0]
            p[ax] = 2
            p[i] = 1
            v[self.index(*p)] = np.sqrt(2.0) / 2.0
        return v

    def multiply_by_v(self, extended: "HermiteBasis") -> list:
        """Sparse matrices for payload -> v_ax * payload, mapping this basis into
        `extended` (degree + 1).  x He_k = sqrt(k+1) He_{k+1} + sqrt(k) He_{k-1}."""
        mats = []
        for ax in range(3):
            M = np.zeros((extended.size, self.size))
            for n, p in enumerate(self.powers):
                k = p[ax]
                up = list(p)
                up[ax] = k + 1
                M[extended.index(*up), n] += np.sqrt(k + 1.0)
                if k >= 1:
                    dn = list(p)
                    dn[ax] = k - 1
                    M[extended.index(*dn), n] += np.sqrt(float(k))
            mats.append(M)
        return mats

    # -- hyperoctahedral group action --------------------------------------
    def group_actions(self):
        """Signed permutations of basis indices for all 48 axis symmetries.

        Returns list of (perm, sign) with phi_n(g v) = sign[n] * phi_perm[n](v).
        """
        acts = []
        for perm in itertools.permutations(range(3)):
            for signs in itertools.product((1, -1), repeat=3):
                pm = np.empty(self.size, dtype=np.int64)
                sg = np.empty(self.size)
                for n, p in enumerate(self.powers):
                    q = [0, 0, 0]
                    for ax in range(3):
                        q[perm[ax]] = p[ax]
                    pm[n] = self.index(*q)
                    sg[n] = signs[0] ** p[0] * signs[1] ** p[1] * signs[2] ** p[2]
                acts.append((pm, sg))
        return acts
