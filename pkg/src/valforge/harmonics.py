"""Homogeneous harmonic polynomials and orthonormal band-limited dictionaries.

A degree-l harmonic polynomial p restricted to the sphere has the closed-form
extension Hessian

    H(x) = Hess p(x) + (1-l) [ p(x) (Id - (l+1) x x^T) + x (grad p)^T + (grad p) x^T ],

obtained by differentiating |y|^{1-l} p(y) twice and evaluating at |x| = 1.
Restrictions of harmonics of distinct degrees are L2-orthogonal on the sphere,
so an orthonormal dictionary up to a cutoff degree provides exact expansions
of band-limited fields.  The dictionary construction is fully deterministic:
the harmonic coefficient spaces are rational nullspaces of the (integer)
Laplacian matrix on monomials, orthonormalized against the exact monomial
sphere integrals.
"""

import itertools
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular

from .sphere import SphericalFunction, monomial_sphere_integral

__all__ = [
    "HomogeneousPolynomial",
    "HarmonicCombination",
    "harmonic_dictionary",
    "dictionary_size",
    "combine_dictionary",
    "project_to_dictionary",
    "parity_filter_coeffs",
]


def _monomial_exponents(n: int, degree: int) -> np.ndarray:
    """All exponent tuples of total degree ``degree`` in n variables, sorted."""
    if degree == 0:
        return np.zeros((1, n), dtype=int)
    rows = []
    for combo in itertools.combinations_with_replacement(range(n), degree):
        e = [0] * n
        for i in combo:
            e[i] += 1
        rows.append(e)
    rows = sorted(set(map(tuple, rows)))
    return np.asarray(rows, dtype=int)


class HomogeneousPolynomial:
    """Homogeneous polynomial sum_t c_t * x^{e_t} with integer exponent rows."""

    def __init__(self, exponents: np.ndarray, coeffs: np.ndarray):
        self.exponents = np.asarray(exponents, dtype=int)
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.n = self.exponents.shape[1]
        self.degree = int(self.exponents[0].sum()) if len(self.exponents) else 0
        self._grad = None
        self._hess = None

    def values(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if len(self.coeffs) == 0:
            return np.zeros(X.shape[0])
        powers = np.prod(X[:, None, :] ** self.exponents[None, :, :], axis=2)
        return powers @ self.coeffs

    def partial(self, i: int) -> "HomogeneousPolynomial":
        keep = self.exponents[:, i] > 0
        if not np.any(keep):
            return HomogeneousPolynomial(np.zeros((0, self.n), dtype=int), np.zeros(0))
        exps = self.exponents[keep].copy()
        coefs = self.coeffs[keep] * exps[:, i]
        exps[:, i] -= 1
        return HomogeneousPolynomial(exps, coefs)

    def gradient(self):
        if self._grad is None:
            self._grad = [self.partial(i) for i in range(self.n)]
        return self._grad

    def hessian_polys(self):
        if self._hess is None:
            grad = self.gradient()
            self._hess = [[grad[i].partial(j) for j in range(self.n)] for i in range(self.n)]
        return self._hess

    def gradient_values(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.empty((X.shape[0], self.n))
        for i, p in enumerate(self.gradient()):
            out[:, i] = p.values(X)
        return out

    def hessian_values(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        hp = self.hessian_polys()
        out = np.empty((X.shape[0], self.n, self.n))
        for i in range(self.n):
            for j in range(i, self.n):
                vals = hp[i][j].values(X)
                out[:, i, j] = vals
                out[:, j, i] = vals
        return out


def _rational_nullspace(M: np.ndarray) -> np.ndarray:
    """Basis of the nullspace of an integer matrix, via exact RREF over Q."""
    rows, cols = M.shape
    A = [[Fraction(int(M[r, c])) for c in range(cols)] for r in range(rows)]
    pivots = []
    row = 0
    for col in range(cols):
        piv = next((r for r in range(row, rows) if A[r][col] != 0), None)
        if piv is None:
            continue
        A[row], A[piv] = A[piv], A[row]
        pv = A[row][col]
        A[row] = [a / pv for a in A[row]]
        for r in range(rows):
            if r != row and A[r][col] != 0:
                f = A[r][col]
                A[r] = [a - f * b for a, b in zip(A[r], A[row])]
        pivots.append(col)
        row += 1
        if row == rows:
            break
    free = [c for c in range(cols) if c not in pivots]
    basis = np.zeros((len(free), cols))
    for k, fc in enumerate(free):
        basis[k, fc] = 1.0
        for prow, pcol in enumerate(pivots):
            basis[k, pcol] = float(-A[prow][fc])
    return basis


@lru_cache(maxsize=None)
def _harmonic_coefficients(n: int, degree: int):
    """Orthonormal coefficient rows of the degree-``degree`` harmonics in n variables.

    Returns (exponents, coeff_matrix); rows of coeff_matrix are L2-orthonormal
    on the sphere with respect to the (unnormalized) surface measure.
    """
    exps = _monomial_exponents(n, degree)
    if degree < 2:
        raw = np.eye(len(exps))
    else:
        low = _monomial_exponents(n, degree - 2)
        low_index = {tuple(e): r for r, e in enumerate(low)}
        M = np.zeros((len(low), len(exps)), dtype=np.int64)
        for c, e in enumerate(exps):
            for i in range(n):
                if e[i] >= 2:
                    target = e.copy()
                    target[i] -= 2
                    M[low_index[tuple(target)], c] += e[i] * (e[i] - 1)
        raw = _rational_nullspace(M)

    pair_integrals = np.empty((len(exps), len(exps)))
    for s in range(len(exps)):
        for t in range(s, len(exps)):
            val = monomial_sphere_integral(exps[s] + exps[t])
            pair_integrals[s, t] = val
            pair_integrals[t, s] = val
    gram = raw @ pair_integrals @ raw.T
    L = np.linalg.cholesky(gram)
    ortho = solve_triangular(L, raw, lower=True)
    return exps, ortho


class HarmonicCombination(SphericalFunction):
    """Band-limited spherical function: a sum of restricted harmonic polynomials.

    ``dict_coeffs`` maps dictionary labels (l, j) to coefficients whenever the
    instance was assembled from the orthonormal dictionary, enabling exact
    serialization and parity filtering.
    """

    smoothness = "spectral"

    def __init__(self, pieces, dict_coeffs=None):
        # pieces: list of (degree, HomogeneousPolynomial)
        self.pieces = [(int(l), p) for l, p in pieces]
        self.n = self.pieces[0][1].n if self.pieces else None
        self.dict_coeffs = dict(dict_coeffs) if dict_coeffs is not None else None

    @property
    def max_degree(self) -> int:
        return max((l for l, _ in self.pieces), default=0)

    def values(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(X.shape[0])
        for _, p in self.pieces:
            out += p.values(X)
        return out

    def hessians(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        m, n = X.shape
        out = np.zeros((m, n, n))
        eye = np.eye(n)
        for l, p in self.pieces:
            vals = p.values(X)
            grad = p.gradient_values(X)
            out += p.hessian_values(X)
            c = 1.0 - l
            out += c * vals[:, None, None] * (eye[None, :, :] - (l + 1.0) * X[:, :, None] * X[:, None, :])
            cross = X[:, :, None] * grad[:, None, :]
            out += c * (cross + np.swapaxes(cross, 1, 2))
        return out

    def spherical_gradients(self, X):
        """Intrinsic gradient of the restriction, (I - x x^T) grad p, shape (m, n)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros_like(X)
        for _, p in self.pieces:
            out += p.gradient_values(X)
        radial = np.einsum("ij,ij->i", out, X)
        return out - radial[:, None] * X


@lru_cache(maxsize=None)
def harmonic_dictionary(n: int, max_degree: int):
    """Orthonormal dictionary of harmonic restrictions of degree <= max_degree.

    Returns a tuple of HarmonicCombination entries; entry attributes ``degree``
    and ``index`` give the label (l, j) and ``dict_coeffs`` is {(l, j): 1.0}.
    """
    entries = []
    for l in range(max_degree + 1):
        exps, coeff_rows = _harmonic_coefficients(n, l)
        for j, row in enumerate(coeff_rows):
            poly = HomogeneousPolynomial(exps, row)
            fn = HarmonicCombination([(l, poly)], dict_coeffs={(l, j): 1.0})
            fn.degree = l
            fn.index = j
            entries.append(fn)
    return tuple(entries)


def dictionary_size(n: int, max_degree: int) -> int:
    return len(harmonic_dictionary(n, max_degree))


def combine_dictionary(n: int, coeffs: dict) -> HarmonicCombination:
    """Assemble sum_{(l,j)} c_{lj} * phi_{lj} from dictionary coefficients."""
    by_degree = {}
    for (l, j), c in coeffs.items():
        by_degree.setdefault(int(l), {})[int(j)] = float(c)
    pieces = []
    for l, jc in sorted(by_degree.items()):
        exps, rows = _harmonic_coefficients(n, l)
        total = np.zeros(rows.shape[1])
        for j, c in jc.items():
            total += c * rows[j]
        pieces.append((l, HomogeneousPolynomial(exps, total)))
    return HarmonicCombination(pieces, dict_coeffs={(int(l), int(j)): float(c) for (l, j), c in coeffs.items()})


def project_to_dictionary(values: np.ndarray, grid, max_degree: int) -> dict:
    """L2 projection coefficients of node values onto the dictionary.

    Exact for band-limited inputs when grid.degree >= 2 * max_degree.
    """
    coeffs = {}
    weighted = grid.weights * np.asarray(values, dtype=float)
    for entry in harmonic_dictionary(grid.n, max_degree):
        c = float(entry.values(grid.nodes) @ weighted)
        coeffs[(entry.degree, entry.index)] = c
    return coeffs


def parity_filter_coeffs(coeffs: dict, parity: str) -> dict:
    """Keep the even- or odd-degree part of dictionary coefficients."""
    if parity not in ("even", "odd"):
        raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")
    rem = 0 if parity == "even" else 1
    return {(l, j): c for (l, j), c in coeffs.items() if l % 2 == rem}
