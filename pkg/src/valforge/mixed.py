"""Mixed area-measure densities, mixed volumes, and Steiner coefficients.

Two independent mixed-volume backends serve as mutual oracles:

* a quadrature route for smooth bodies, integrating the mixed discriminant of
  support Hessians against the sphere grid (a polytope is allowed only in the
  plain support-function slot);
* a volume-polynomial route for polytopes, evaluating Minkowski-combination
  volumes on a deterministic integer coefficient grid and extracting the
  symmetric mixed coefficient from the exact degree-n polynomial fit.

Minkowski-sum volumes default to convex hulls of vertex sums; for large vertex
sets in R^3 an exact Gauss-map overlay evaluator (facet and edge-crossing
contributions to the surface decomposition of the sum) avoids materializing
the product vertex set.
"""

import itertools
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.special import comb

from .bodies import ConvexBody, NotSmoothError
from .sphere import (
    SphereGrid,
    ball_volume,
    mixed_discriminant_stack,
    restricted_hessian_stack,
    tangent_bases,
)

__all__ = [
    "MixedAreaDensity",
    "mixed_area_density",
    "mixed_volume_quadrature",
    "mixed_volume_smooth",
    "minkowski_volume",
    "parallel_body_volume",
    "polytope_mixed_volume",
    "polytope_volume",
    "steiner_coefficients",
]

# vertex-product size beyond which the n=3 overlay engine takes over in "auto"
_HULL_POINT_LIMIT = 200_000


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("VALFORGE_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class MixedAreaDensity:
    """Node values of a mixed area-measure density on a sphere grid."""

    grid: SphereGrid
    values: np.ndarray
    k: int
    signature: tuple

    def total_mass(self) -> float:
        return self.grid.integrate(self.values)


def _hessian_stacks(bodies, grid, bases):
    return [restricted_hessian_stack(b.support, grid.nodes, bases) for b in bodies]


def mixed_area_density(K: ConvexBody, k: int, others, grid: SphereGrid) -> MixedAreaDensity:
    """Density of the mixed area measure with K in k slots and ``others`` in the rest.

    Node-wise mixed discriminant of (D^2 h_K taken k times, D^2 h_{L_2}, ...).
    All Hessian-slot bodies must be smooth; polytopes are rejected.
    """
    n = grid.n
    if not 1 <= k <= n - 1:
        raise ValueError(f"multiplicity k must satisfy 1 <= k <= n-1, got k={k}")
    others = list(others)
    if len(others) != n - 1 - k:
        raise ValueError(f"expected {n - 1 - k} companion bodies, got {len(others)}")
    for b in [K, *others]:
        if not b.smooth:
            raise NotSmoothError("mixed area densities need smooth bodies in Hessian slots")
    bases = tangent_bases(grid.nodes)
    k_stack = restricted_hessian_stack(K.support, grid.nodes, bases)
    stacks = [k_stack] * k + _hessian_stacks(others, grid, bases)
    values = mixed_discriminant_stack(stacks)
    signature = (K.kind, k) + tuple(b.kind for b in others)
    return MixedAreaDensity(grid=grid, values=values, k=k, signature=signature)


def mixed_volume_smooth(
    L1: ConvexBody, K: ConvexBody, k: int, others, grid: SphereGrid, density: MixedAreaDensity | None = None
) -> float:
    """V(K[k], L1, L2, ..., L_{n-k}) by quadrature against the mixed area density.

    Only the support values of L1 are integrated, so L1 may be a polytope;
    the density slots follow the mixed_area_density requirements.
    """
    if density is None:
        density = mixed_area_density(K, k, others, grid)
    hvals = L1.support_values(grid.nodes)
    return grid.integrate(hvals * density.values) / grid.n


def mixed_volume_quadrature(bodies, grid: SphereGrid) -> float:
    """V(B_1, ..., B_n) with B_1 in the support slot and B_2..B_n in Hessian slots."""
    bodies = list(bodies)
    n = grid.n
    if len(bodies) != n:
        raise ValueError(f"need exactly n={n} bodies, got {len(bodies)}")
    for b in bodies[1:]:
        if not b.smooth:
            raise NotSmoothError("Hessian slots of the quadrature route need smooth bodies")
    bases = tangent_bases(grid.nodes)
    stacks = _hessian_stacks(bodies[1:], grid, bases)
    density = mixed_discriminant_stack(stacks)
    hvals = bodies[0].support_values(grid.nodes)
    return grid.integrate(hvals * density) / n


# -- polytope volume route ----------------------------------------------------


def polytope_volume(P: ConvexBody) -> float:
    """Exact volume of the convex hull of the vertex set; 0 for flat input."""
    if P.vertices is None:
        raise ValueError("polytope volume needs a vertex-backed body")
    if P.lower_dimensional:
        return 0.0
    try:
        return float(ConvexHull(P.vertices).volume)
    except QhullError:
        warnings.warn("degenerate vertex set treated as lower-dimensional (volume 0)", stacklevel=2)
        return 0.0


def _sum_vertex_points(vertex_sets, lambdas):
    """Candidate vertices of sum_i lambda_i P_i, pruning through pairwise hulls."""
    active = [(lam, V) for lam, V in zip(lambdas, vertex_sets) if lam > 0]
    if not active:
        return None
    points = active[0][0] * active[0][1]
    for lam, V in active[1:]:
        points = (points[:, None, :] + lam * V[None, :, :]).reshape(-1, points.shape[1])
        if len(points) > 64:
            try:
                points = points[ConvexHull(points).vertices]
            except QhullError:
                pass  # degenerate intermediate; keep raw candidates
    return points


def minkowski_volume(vertex_sets, lambdas) -> float:
    """Volume of sum_i lambda_i conv(V_i) via the hull of vertex sums."""
    points = _sum_vertex_points(vertex_sets, lambdas)
    if points is None or len(points) <= points.shape[1]:
        return 0.0
    try:
        return float(ConvexHull(points).volume)
    except QhullError:
        return 0.0


class OverlayDegenerateError(RuntimeError):
    """Gauss-map overlay hit a non-generic configuration; fall back to hulls."""


class _GaussMapOverlay:
    """Exact volume polynomial of Minkowski combinations of 3-polytopes.

    The boundary of sum_i lambda_i P_i decomposes (for bodies in generic
    relative position) into translated facets of the summands and edge-crossing
    parallelograms; vol = (1/3) sum_faces h(u) * area(u) then has an explicit
    polynomial dependence on the coefficients, evaluated here without forming
    any Minkowski-sum hull.
    """

    def __init__(self, vertex_sets):
        self.vertex_sets = [np.asarray(V, dtype=float) for V in vertex_sets]
        self.m = len(self.vertex_sets)
        if any(V.shape[1] != 3 for V in self.vertex_sets):
            raise OverlayDegenerateError("overlay engine is specific to R^3")
        self._facets = []  # per body: (normals, areas)
        self._arcs = []  # per body: dict with endpoints a, b, edge vectors w
        for V in self.vertex_sets:
            self._facets.append(self._facet_data(V))
            self._arcs.append(self._arc_data(V))
        self._crossings = []  # (i, j, directions, parallelogram areas)
        for i in range(self.m):
            for j in range(i + 1, self.m):
                dirs, areas = self._cross_arcs(self._arcs[i], self._arcs[j])
                self._crossings.append((i, j, dirs, areas))
        # support values of every body at every face direction
        self._support_facets = [self._supports(f[0]) for f in self._facets]
        self._support_cross = [self._supports(d) for (_, _, d, _) in self._crossings]
        self._self_check()

    def _supports(self, directions):
        if len(directions) == 0:
            return np.zeros((self.m, 0))
        return np.stack([np.max(directions @ V.T, axis=1) for V in self.vertex_sets])

    @staticmethod
    def _facet_data(V):
        hull = ConvexHull(V)
        normals = hull.equations[:, :3]
        normals = normals / np.linalg.norm(normals, axis=1)[:, None]
        simplices = hull.points[hull.simplices]
        cross = np.cross(simplices[:, 1] - simplices[:, 0], simplices[:, 2] - simplices[:, 0])
        areas = 0.5 * np.linalg.norm(cross, axis=1)
        return normals, areas

    @staticmethod
    def _arc_data(V):
        hull = ConvexHull(V)
        normals = hull.equations[:, :3]
        normals = normals / np.linalg.norm(normals, axis=1)[:, None]
        a_list, b_list, w_list = [], [], []
        for f, simplex in enumerate(hull.simplices):
            for local, g in enumerate(hull.neighbors[f]):
                if g < f:
                    continue  # count each edge once
                cosang = float(np.clip(normals[f] @ normals[g], -1.0, 1.0))
                if 1.0 - cosang < 1e-12:
                    continue  # coplanar triangulation edge, zero-length arc
                shared = [v for li, v in enumerate(simplex) if li != local]
                w = hull.points[shared[1]] - hull.points[shared[0]]
                a_list.append(normals[f])
                b_list.append(normals[g])
                w_list.append(w)
        if not a_list:
            return {"a": np.zeros((0, 3)), "b": np.zeros((0, 3)), "w": np.zeros((0, 3))}
        return {"a": np.asarray(a_list), "b": np.asarray(b_list), "w": np.asarray(w_list)}

    @staticmethod
    def _cross_arcs(arcs_i, arcs_j, tol=1e-10):
        """Directions where normal arcs of edges from two bodies cross transversally."""
        ai, bi, wi = arcs_i["a"], arcs_i["b"], arcs_i["w"]
        aj, bj, wj = arcs_j["a"], arcs_j["b"], arcs_j["w"]
        if len(ai) == 0 or len(aj) == 0:
            return np.zeros((0, 3)), np.zeros(0)
        ci_plane = np.cross(ai, bi)  # normal of each arc's great-circle plane
        cj_plane = np.cross(aj, bj)
        mid_i = ai + bi
        mid_i /= np.linalg.norm(mid_i, axis=1)[:, None]
        mid_j = aj + bj
        mid_j /= np.linalg.norm(mid_j, axis=1)[:, None]
        # angular reach of each arc around its midpoint
        reach_i = np.arccos(np.clip(np.einsum("ij,ij->i", ai, mid_i), -1.0, 1.0))
        reach_j = np.arccos(np.clip(np.einsum("ij,ij->i", aj, mid_j), -1.0, 1.0))

        cand_i, cand_j = [], []
        chunk = 1024
        for start in range(0, len(ai), chunk):
            stop = min(start + chunk, len(ai))
            cosd = np.clip(mid_i[start:stop] @ mid_j.T, -1.0, 1.0)
            sep = np.arccos(cosd)
            rows, cols = np.nonzero(sep <= reach_i[start:stop, None] + reach_j[None, :] + 1e-9)
            cand_i.append(rows + start)
            cand_j.append(cols)
        ii = np.concatenate(cand_i)
        jj = np.concatenate(cand_j)
        if len(ii) == 0:
            return np.zeros((0, 3)), np.zeros(0)

        u = np.cross(wi[ii], wj[jj])
        nu = np.linalg.norm(u, axis=1)
        scale = np.linalg.norm(wi[ii], axis=1) * np.linalg.norm(wj[jj], axis=1)
        keep = nu > 1e-9 * scale  # parallel edges span a zero-area face
        ii, jj, u, nu = ii[keep], jj[keep], u[keep], nu[keep]
        if len(ii) == 0:
            return np.zeros((0, 3)), np.zeros(0)
        u = u / nu[:, None]

        def memberships(v):
            # signed positions of v inside each arc, normalized per arc plane
            s1 = np.einsum("kl,kl->k", np.cross(ai[ii], v), ci_plane[ii])
            s2 = np.einsum("kl,kl->k", np.cross(v, bi[ii]), ci_plane[ii])
            s3 = np.einsum("kl,kl->k", np.cross(aj[jj], v), cj_plane[jj])
            s4 = np.einsum("kl,kl->k", np.cross(v, bj[jj]), cj_plane[jj])
            bound_i = tol * np.einsum("kl,kl->k", ci_plane[ii], ci_plane[ii])
            bound_j = tol * np.einsum("kl,kl->k", cj_plane[jj], cj_plane[jj])
            strict = (s1 > bound_i) & (s2 > bound_i) & (s3 > bound_j) & (s4 > bound_j)
            near = (s1 > -bound_i) & (s2 > -bound_i) & (s3 > -bound_j) & (s4 > -bound_j)
            return strict, near

        strict_p, near_p = memberships(u)
        strict_m, near_m = memberships(-u)
        if np.any(near_p & ~strict_p) or np.any(near_m & ~strict_m):
            raise OverlayDegenerateError("arc crossing within tolerance of an arc endpoint")
        accept = strict_p | strict_m
        dirs = np.where(strict_p[:, None], u, -u)[accept]
        return dirs, nu[accept]

    def _self_check(self):
        # single-body volumes must reproduce the hull volumes exactly
        for i, V in enumerate(self.vertex_sets):
            lam = [0.0] * self.m
            lam[i] = 1.0
            ref = float(ConvexHull(V).volume)
            got = self.volume(lam)
            if not math.isclose(got, ref, rel_tol=1e-9, abs_tol=1e-12):
                raise OverlayDegenerateError(
                    f"overlay self-check failed on body {i}: {got!r} vs hull {ref!r}"
                )

    def volume(self, lambdas) -> float:
        lam = np.asarray(lambdas, dtype=float)
        total = 0.0
        for i, (normals, areas) in enumerate(self._facets):
            if lam[i] == 0.0 or len(areas) == 0:
                continue
            h = lam @ self._support_facets[i]
            total += lam[i] ** 2 * float(np.dot(areas, h))
        for (i, j, _, par_areas), H in zip(self._crossings, self._support_cross):
            if lam[i] == 0.0 or lam[j] == 0.0 or len(par_areas) == 0:
                continue
            h = lam @ H
            total += lam[i] * lam[j] * float(np.dot(par_areas, h))
        return total / 3.0


def _primitive(tup):
    g = math.gcd(*tup)
    if g <= 1:
        return tup, 1
    return tuple(v // g for v in tup), g


def polytope_mixed_volume(bodies, engine: str = "auto") -> float:
    """Mixed volume V(P_1, ..., P_n) of n polytopes via the volume polynomial.

    Evaluates vol(sum_i lambda_i P_i) on the grid of all integer tuples with
    entries in 0..n, fits the homogeneous degree-n polynomial exactly, and
    extracts the coefficient of lambda_1 * ... * lambda_n divided by n!.

    ``engine`` selects the Minkowski-volume evaluator: "hull" (convex hulls of
    vertex sums), "overlay" (exact Gauss-map overlay, n = 3, generic position),
    or "auto" (overlay for large vertex products, hulls otherwise).
    """
    bodies = list(bodies)
    n = bodies[0].n
    if len(bodies) != n:
        raise ValueError(f"mixed volume in R^{n} needs exactly {n} bodies, got {len(bodies)}")
    vertex_sets = []
    for b in bodies:
        if b.vertices is None:
            raise ValueError("polytope mixed volume needs vertex-backed bodies")
        vertex_sets.append(np.asarray(b.vertices, dtype=float))

    overlay = None
    if engine not in ("auto", "hull", "overlay"):
        raise ValueError(f"unknown engine {engine!r}")
    product_size = math.prod(len(V) for V in vertex_sets)
    if engine == "overlay" or (engine == "auto" and n == 3 and product_size > _HULL_POINT_LIMIT):
        try:
            overlay = _GaussMapOverlay(vertex_sets)
        except OverlayDegenerateError:
            if engine == "overlay":
                raise
            overlay = None

    def volume_at(primitive):
        if overlay is not None:
            return overlay.volume(primitive)
        return minkowski_volume(vertex_sets, primitive)

    grid_tuples = list(itertools.product(range(n + 1), repeat=n))
    primitives = sorted({_primitive(t)[0] for t in grid_tuples if any(t)})
    threads = _thread_count()
    if overlay is None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            prim_vols = dict(zip(primitives, pool.map(volume_at, primitives)))
    else:
        prim_vols = {p: volume_at(p) for p in primitives}

    monomials = list(itertools.combinations_with_replacement(range(n), n))
    design = np.empty((len(grid_tuples), len(monomials)))
    target = np.empty(len(grid_tuples))
    for r, tup in enumerate(grid_tuples):
        if any(tup):
            prim, g = _primitive(tup)
            target[r] = float(g) ** n * prim_vols[prim]
        else:
            target[r] = 0.0
        for c, mono in enumerate(monomials):
            design[r, c] = math.prod(tup[i] for i in mono)
    rank = np.linalg.matrix_rank(design)
    assert rank == len(monomials), "volume-polynomial interpolation system lost rank"
    coeffs, *_ = np.linalg.lstsq(design, target, rcond=None)
    mixed_index = monomials.index(tuple(range(n)))
    return float(coeffs[mixed_index] / math.factorial(n))


# -- Steiner coefficients -----------------------------------------------------


def parallel_body_volume(P: ConvexBody, t: float) -> float:
    """Exact volume of P + t*B for a full-dimensional polytope P (n <= 3).

    Decomposes the parallel body into the polytope, facet prisms, edge wedges,
    and vertex sphere sectors; in R^3
    vol = V + A t + (sum_e len_e * theta_e / 2) t^2 + (4 pi / 3) t^3
    with theta_e the exterior dihedral angle along edge e.
    """
    if P.vertices is None:
        raise ValueError("parallel body volume needs a vertex-backed polytope")
    if P.lower_dimensional:
        raise ValueError("parallel body volume needs a full-dimensional polytope")
    n = P.n
    V = np.asarray(P.vertices, dtype=float)
    if n == 2:
        hull = ConvexHull(V)
        area = float(hull.volume)
        perimeter = float(hull.area)
        return area + perimeter * t + math.pi * t * t
    if n != 3:
        raise NotImplementedError("parallel body volumes are implemented for n in {2, 3}")
    from .bodies import mean_support_integral

    hull = ConvexHull(V)
    # edge wedges carry sum_e len_e * theta_e / 2, the support integral of P
    return (
        float(hull.volume)
        + float(hull.area) * t
        + mean_support_integral(V) * t * t
        + ball_volume(3) * t ** 3
    )


def _steiner_smooth(K: ConvexBody, grid: SphereGrid) -> list:
    n = grid.n
    bases = tangent_bases(grid.nodes)
    k_stack = restricted_hessian_stack(K.support, grid.nodes, bases)
    eye = np.broadcast_to(np.eye(n - 1), k_stack.shape).copy()
    h_k = K.support_values(grid.nodes)
    coeffs = []
    for j in range(n + 1):
        if j == n:
            coeffs.append(ball_volume(n))
            continue
        if j == 0:
            # vol(K): K fills the support slot and all n-1 density slots
            density = mixed_discriminant_stack([k_stack] * (n - 1))
            value = grid.integrate(h_k * density) / n
        else:
            # V(K[n-j], B[j]): the ball takes the support slot (h == 1) and
            # j-1 density slots, K the remaining n-j
            density = mixed_discriminant_stack([k_stack] * (n - j) + [eye] * (j - 1))
            value = grid.integrate(density) / n
        coeffs.append(float(comb(n, j)) * value)
    return coeffs


def _steiner_polytope(P: ConvexBody) -> list:
    n = P.n
    ts = np.linspace(0.0, 1.0, n + 3)
    vols = np.array([parallel_body_volume(P, t) for t in ts])
    design = np.vander(ts, n + 1, increasing=True)
    coeffs, *_ = np.linalg.lstsq(design, vols, rcond=None)
    residual = float(np.max(np.abs(design @ coeffs - vols)))
    if residual > 1e-6:
        warnings.warn(f"Steiner polynomial fit residual {residual:.3e} exceeds 1e-6", stacklevel=3)
    return [float(c) for c in coeffs]


def steiner_coefficients(K: ConvexBody, grid: SphereGrid) -> list:
    """Coefficients of t^0..t^n in vol(K + t B).

    Smooth bodies go through the quadrature mixed-volume assembly; polytopes
    through exact parallel-body volumes on a t-grid plus a polynomial fit.
    """
    if K.smooth:
        return _steiner_smooth(K, grid)
    if K.vertices is not None:
        return _steiner_polytope(K)
    raise ValueError("Steiner coefficients need a smooth body or a polytope")
