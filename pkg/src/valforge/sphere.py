"""Sphere quadrature grids, tangent frames, restricted Hessians, mixed discriminants.

Conventions used throughout the package: points on the unit sphere S^{n-1} are
unit row vectors, a batch of points is an (m, n) array.  For a function f on
the sphere, D^2 f denotes the Hessian of its 1-homogeneous extension
F(y) = |y| f(y/|y|), evaluated at a unit vector.  It annihilates the radial
direction and restricts to a symmetric bilinear form on the tangent space;
in terms of the intrinsic spherical Hessian it equals grad^2 f + f * Id.
"""

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma, roots_jacobi, roots_legendre

__all__ = [
    "SphereGrid",
    "SphericalFunction",
    "ConstantFunction",
    "LinearFunction",
    "SumFunction",
    "CallableSpherical",
    "SymForm",
    "build_grid",
    "fd_hessians",
    "mixed_discriminant",
    "mixed_discriminant_stack",
    "monomial_sphere_integral",
    "restricted_hessian",
    "sphere_area",
    "tangent_basis",
    "tangent_bases",
]


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere S^{n-1} in R^n."""
    return float(2.0 * np.pi ** (0.5 * n) / gamma(0.5 * n))


def ball_volume(n: int) -> float:
    """Volume of the unit ball in R^n."""
    return sphere_area(n) / n


def monomial_sphere_integral(exponents) -> float:
    """Exact integral of the monomial prod_i x_i^{a_i} over S^{n-1}.

    Vanishes when any exponent is odd; otherwise equals
    2 * prod Gamma(b_i) / Gamma(sum b_i) with b_i = (a_i + 1) / 2.
    """
    a = np.asarray(exponents, dtype=int)
    if np.any(a % 2 == 1):
        return 0.0
    b = (a + 1) / 2.0
    return float(2.0 * np.prod(gamma(b)) / gamma(b.sum()))


@dataclass(frozen=True)
class SphereGrid:
    """Quadrature nodes and positive weights on S^{n-1}.

    Integrates polynomials (restricted to the sphere) of total degree up to
    ``degree`` exactly; the weights sum to the sphere area.
    """

    n: int
    nodes: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def build_grid(n: int, degree: int) -> SphereGrid:
    """Product quadrature grid on S^{n-1} exact up to polynomial ``degree``.

    Gauss nodes in each polar cosine (the iterated polar factorization picks
    up a (1-u^2)^((d-3)/2) surface-measure factor per level, handled by the
    matching Gauss-Jacobi rule; the innermost level is plain Gauss-Legendre)
    times a uniform rule in the angular coordinate.
    """
    if n < 2:
        raise ValueError(f"sphere grid needs ambient dimension n >= 2, got {n}")
    if degree < 2:
        raise ValueError(f"sphere grid needs exactness degree >= 2, got {degree}")

    m_angle = 2 * (degree + 1)
    angles = 2.0 * np.pi * np.arange(m_angle) / m_angle
    nodes = np.column_stack([np.cos(angles), np.sin(angles)])
    weights = np.full(m_angle, 2.0 * np.pi / m_angle)

    m_polar = degree + 1
    for d in range(3, n + 1):
        alpha = 0.5 * (d - 3)
        if alpha == 0.0:
            u, w = roots_legendre(m_polar)
        else:
            u, w = roots_jacobi(m_polar, alpha, alpha)
        s = np.sqrt(1.0 - u * u)
        m_prev = nodes.shape[0]
        new_nodes = np.empty((m_polar * m_prev, d))
        new_nodes[:, : d - 1] = (s[:, None, None] * nodes[None, :, :]).reshape(-1, d - 1)
        new_nodes[:, d - 1] = np.repeat(u, m_prev)
        nodes = new_nodes
        weights = (w[:, None] * weights[None, :]).ravel()

    norms = np.linalg.norm(nodes, axis=1)
    nodes = nodes / norms[:, None]
    return SphereGrid(n=n, nodes=nodes, weights=weights, degree=degree)


def tangent_bases(X: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal tangent bases at a batch of unit vectors.

    Returns an (m, n, n-1) array whose columns at row g are the first n-1
    columns of the Householder reflection mapping the last coordinate axis
    to X[g].  At the axis itself the reflection degenerates to the identity.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m, n = X.shape
    V = X.copy()
    V[:, -1] -= 1.0
    nv2 = np.einsum("ij,ij->i", V, V)
    safe = np.where(nv2 > 1e-24, nv2, 1.0)
    scale = np.where(nv2 > 1e-24, 2.0 / safe, 0.0)
    B = np.broadcast_to(np.eye(n)[:, : n - 1], (m, n, n - 1)).copy()
    B -= scale[:, None, None] * V[:, :, None] * V[:, None, : n - 1]
    return B


def tangent_basis(x) -> np.ndarray:
    """Orthonormal tangent basis at one unit vector, as an (n, n-1) matrix."""
    return tangent_bases(np.asarray(x, dtype=float)[None])[0]


class SphericalFunction:
    """Scalar field on the sphere with the Hessian of its 1-homogeneous extension.

    Subclasses override ``values`` and, when a closed form exists, ``hessians``;
    the base class falls back to central finite differences with one Richardson
    extrapolation level.  ``smoothness`` tags the evaluation route as one of
    ``analytic-closed-form``, ``spectral``, or ``finite-difference``.
    """

    smoothness = "finite-difference"

    def values(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value(self, x) -> float:
        return float(self.values(np.asarray(x, dtype=float)[None])[0])

    def hessians(self, X: np.ndarray) -> np.ndarray:
        """Ambient (m, n, n) Hessian stack of the extension; annihilates each point."""
        return fd_hessians(self, np.atleast_2d(np.asarray(X, dtype=float)))

    def hessian(self, x) -> np.ndarray:
        return self.hessians(np.asarray(x, dtype=float)[None])[0]


class ConstantFunction(SphericalFunction):
    """f == c; support function of the centered ball of radius c."""

    smoothness = "analytic-closed-form"

    def __init__(self, c: float):
        self.c = float(c)

    def values(self, X):
        X = np.atleast_2d(X)
        return np.full(X.shape[0], self.c)

    def hessians(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[1]
        return self.c * (np.eye(n)[None, :, :] - X[:, :, None] * X[:, None, :])


class LinearFunction(SphericalFunction):
    """f(x) = <x, v>; support function of the point {v}.  Zero Hessian."""

    smoothness = "analytic-closed-form"

    def __init__(self, v):
        self.v = np.asarray(v, dtype=float)

    def values(self, X):
        return np.atleast_2d(X) @ self.v

    def hessians(self, X):
        X = np.atleast_2d(X)
        m, n = X.shape
        return np.zeros((m, n, n))


_SMOOTHNESS_ORDER = {"analytic-closed-form": 0, "spectral": 1, "finite-difference": 2}


class SumFunction(SphericalFunction):
    """Weighted sum of spherical functions; values and Hessians add."""

    def __init__(self, parts):
        self.parts = [(float(w), f) for w, f in parts]
        worst = max((_SMOOTHNESS_ORDER[f.smoothness] for _, f in self.parts), default=0)
        self.smoothness = [k for k, v in _SMOOTHNESS_ORDER.items() if v == worst][0]

    def values(self, X):
        X = np.atleast_2d(X)
        out = np.zeros(X.shape[0])
        for w, f in self.parts:
            out += w * f.values(X)
        return out

    def hessians(self, X):
        X = np.atleast_2d(X)
        m, n = X.shape
        out = np.zeros((m, n, n))
        for w, f in self.parts:
            out += w * f.hessians(X)
        return out


class CallableSpherical(SphericalFunction):
    """Wrap a vectorized evaluator; Hessians come from the finite-difference path."""

    smoothness = "finite-difference"

    def __init__(self, fn):
        self.fn = fn

    def values(self, X):
        return np.asarray(self.fn(np.atleast_2d(X)), dtype=float)


def _extension_values(f: SphericalFunction, Y: np.ndarray) -> np.ndarray:
    r = np.linalg.norm(Y, axis=1)
    return r * f.values(Y / r[:, None])


def fd_hessians(f: SphericalFunction, X: np.ndarray, base_step: float = 1e-3) -> np.ndarray:
    """Finite-difference Hessians of the 1-homogeneous extension of f.

    Central second differences at steps h and h/2 combined by one Richardson
    level, (4 H(h/2) - H(h)) / 3.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m, n = X.shape

    def at_step(h):
        H = np.empty((m, n, n))
        for i in range(n):
            for j in range(i, n):
                ei = np.zeros(n)
                ei[i] = h
                ej = np.zeros(n)
                ej[j] = h
                vpp = _extension_values(f, X + ei + ej)
                vpm = _extension_values(f, X + ei - ej)
                vmp = _extension_values(f, X - ei + ej)
                vmm = _extension_values(f, X - ei - ej)
                H[:, i, j] = (vpp - vpm - vmp + vmm) / (4.0 * h * h)
                H[:, j, i] = H[:, i, j]
        return H

    coarse = at_step(base_step)
    fine = at_step(base_step / 2.0)
    return (4.0 * fine - coarse) / 3.0


@dataclass(frozen=True)
class SymForm:
    """Symmetric bilinear form on a tangent space in a declared orthonormal basis."""

    matrix: np.ndarray
    basis: np.ndarray


def restricted_hessian(f: SphericalFunction, x, basis: np.ndarray | None = None) -> SymForm:
    """Restriction of the extension Hessian of f to the tangent space at x.

    Uses the closed-form Hessian when the function provides one, otherwise the
    finite-difference path.  Asymmetry beyond 1e-6 is reported as a numerical
    diagnostic and the result is symmetrized.
    """
    x = np.asarray(x, dtype=float)
    if basis is None:
        basis = tangent_basis(x)
    H = f.hessians(x[None])[0]
    B = basis.T @ H @ basis
    asym = float(np.max(np.abs(B - B.T)))
    if asym > 1e-6:
        warnings.warn(
            f"restricted Hessian asymmetry {asym:.3e} exceeds 1e-6 (numerical failure)",
            stacklevel=2,
        )
    return SymForm(matrix=0.5 * (B + B.T), basis=basis)


def restricted_hessian_stack(f: SphericalFunction, nodes: np.ndarray, bases: np.ndarray) -> np.ndarray:
    """Tangent-restricted Hessians of f at all nodes, shape (m, n-1, n-1)."""
    H = f.hessians(nodes)
    return np.einsum("gia,gij,gjb->gab", bases, H, bases)


def _as_matrices(forms):
    mats = []
    ref_basis = None
    for form in forms:
        if isinstance(form, SymForm):
            if ref_basis is None:
                ref_basis = form.basis
            elif not np.allclose(form.basis, ref_basis, atol=1e-12):
                raise ValueError("mixed discriminant arguments use different tangent bases")
            mats.append(np.asarray(form.matrix, dtype=float))
        else:
            mats.append(np.asarray(form, dtype=float))
    return mats


def mixed_discriminant(forms) -> float:
    """Polarized determinant of m symmetric m x m forms.

    Computed by inclusion-exclusion over subsets,
    (1/m!) sum_{S subset [m]} (-1)^{m-|S|} det(sum_{i in S} A_i),
    which is fully symmetric and multilinear in the arguments.
    """
    mats = _as_matrices(forms)
    m = len(mats)
    for A in mats:
        if A.shape != (m, m):
            raise ValueError(f"mixed discriminant of {m} forms needs {m}x{m} matrices, got {A.shape}")
    total = 0.0
    for r in range(1, m + 1):
        sign = (-1.0) ** (m - r)
        for combo in itertools.combinations(range(m), r):
            total += sign * float(np.linalg.det(sum(mats[i] for i in combo)))
    return total / math.factorial(m)


def mixed_discriminant_stack(stacks) -> np.ndarray:
    """Vectorized mixed discriminant of m stacks of symmetric matrices.

    Each entry of ``stacks`` has shape (g, m, m); the result has shape (g,).
    """
    stacks = [np.asarray(s, dtype=float) for s in stacks]
    m = len(stacks)
    g = stacks[0].shape[0]
    for s in stacks:
        if s.shape != (g, m, m):
            raise ValueError("stacks must share shape (g, m, m) with m = len(stacks)")
    total = np.zeros(g)
    for r in range(1, m + 1):
        sign = (-1.0) ** (m - r)
        for combo in itertools.combinations(range(m), r):
            acc = stacks[combo[0]].copy()
            for i in combo[1:]:
                acc += stacks[i]
            total += sign * np.linalg.det(acc)
    return total / math.factorial(m)
