"""From kernel-represented valuations to finite combinations of mixed volumes.

A k-homogeneous valuation given by a kernel F on (S^{n-1})^{n-k} evaluates as

    mu(K) = sum_j integral f_1^j * D(D^2 h_K [k], D^2 f_2^j, ..., D^2 f_{n-k}^j)

over the separable terms of F.  Expressing each D^2 f_l^j pointwise in the
spanning-family Hessians through the dual frame and regrouping by ellipsoid
multiset yields functions g_alpha with mu(K) = sum_alpha (1/n) integral
g~_alpha dS(K[k], E[alpha]) (g~ = n g absorbs the volume/measure scaling), and
splitting each g~_alpha = h_{L+} - h_{L-} against a large ball turns the sum
into differences of mixed volumes with certified convex bodies.
"""

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .bodies import ConvexBody, ConvexityViolation, make_ball, make_perturbed_ball
from .family import EllipsoidFamily, SpanningFrame
from .harmonics import (
    HarmonicCombination,
    combine_dictionary,
    parity_filter_coeffs,
    project_to_dictionary,
)
from .kernels import TensorDecomposition
from .mixed import mixed_area_density, mixed_volume_smooth
from .sphere import (
    SphereGrid,
    mixed_discriminant_stack,
    restricted_hessian_stack,
    tangent_bases,
)

__all__ = [
    "CombinationTerm",
    "FiniteCombination",
    "KernelValuation",
    "accumulate_g_alpha",
    "combination_from_dict",
    "combination_to_dict",
    "convexify",
    "evaluate_combination",
    "evaluate_kernel_valuation",
    "mixed_volume_count_bound",
    "parity_project",
    "synthesize",
]


@dataclass(frozen=True)
class KernelValuation:
    """k-homogeneous valuation represented by a separable kernel decomposition."""

    n: int
    k: int
    decomposition: TensorDecomposition
    parity: str | None = None

    def __post_init__(self):
        if not 1 <= self.k <= self.n - 1:
            raise ValueError(f"homogeneity degree must satisfy 1 <= k <= n-1, got {self.k}")
        if self.decomposition.factors != self.n - self.k:
            raise ValueError(
                f"kernel needs {self.n - self.k} factors, decomposition has {self.decomposition.factors}"
            )
        if self.parity not in (None, "even", "odd"):
            raise ValueError(f"parity must be None, 'even', or 'odd', got {self.parity!r}")


def evaluate_kernel_valuation(v: KernelValuation, K: ConvexBody, grid: SphereGrid) -> float:
    """Evaluate the kernel valuation on a smooth body by quadrature.

    Sum over terms of integral f_1^j * D(D^2 h_K taken k times, D^2 f_2^j, ...).
    For a separable kernel of support functions this equals n times the
    corresponding mixed volume.
    """
    if not K.smooth:
        raise ValueError("kernel valuations evaluate on smooth bodies only (singular measure otherwise)")
    bases = tangent_bases(grid.nodes)
    k_stack = restricted_hessian_stack(K.support, grid.nodes, bases)
    total = 0.0
    for term in v.decomposition.terms:
        f1 = term[0].values(grid.nodes)
        stacks = [k_stack] * v.k
        stacks += [restricted_hessian_stack(f, grid.nodes, bases) for f in term[1:]]
        density = mixed_discriminant_stack(stacks)
        total += grid.integrate(f1 * density)
    return total


def _alpha_of(indices, size: int) -> tuple:
    counts = [0] * size
    for s in indices:
        counts[s] += 1
    return tuple(counts)


def accumulate_g_alpha(v: KernelValuation, frame: SpanningFrame) -> dict:
    """Node-sampled g_alpha from the dual-frame coefficients of the kernel terms.

    For each term j and node x the coefficients psi^l = frame(D^2 f_l^j(x))
    are taken for l = 2..n-k; every index tuple (s_2, ..., s_{n-k}) contributes
    f_1^j(x) * prod_l psi^l_{s_l}(x) to the multi-index alpha counting
    ellipsoid multiplicities.  Terms with the same alpha merge.
    """
    grid = frame.grid
    n, k = v.n, v.k
    slots = n - k - 1
    N = frame.size
    buckets: dict = {}
    if slots == 0:
        g = np.zeros(grid.size)
        for term in v.decomposition.terms:
            g += term[0].values(grid.nodes)
        buckets[_alpha_of((), N)] = g
        return buckets

    bases = frame.bases
    for term in v.decomposition.terms:
        f1 = term[0].values(grid.nodes)
        psi = []
        for f in term[1:]:
            forms = restricted_hessian_stack(f, grid.nodes, bases)
            psi.append(frame.coefficients_stack(forms))  # (G, N)
        for indices in itertools.product(range(N), repeat=slots):
            weight = f1.copy()
            for level, s in enumerate(indices):
                weight *= psi[level][:, s]
            alpha = _alpha_of(indices, N)
            if alpha in buckets:
                buckets[alpha] += weight
            else:
                buckets[alpha] = weight
    return buckets


def parity_project(g, parity: str):
    """Even or odd part (g(x) +- g(-x)) / 2 of a spherical function."""
    if isinstance(g, HarmonicCombination) and g.dict_coeffs is not None:
        return combine_dictionary(g.n, parity_filter_coeffs(g.dict_coeffs, parity))
    if parity not in ("even", "odd"):
        raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")
    sign = 1.0 if parity == "even" else -1.0

    from .sphere import CallableSpherical

    return CallableSpherical(lambda X: 0.5 * (g.values(X) + sign * g.values(-np.asarray(X))))


def convexify(g, grid: SphereGrid, threshold: float = 1e-6, max_doublings: int = 10):
    """Split g = h_{L+} - h_{L-} with both bodies certified convex.

    L- is the centered ball of radius R = max(1, 2 * max_nodes(-lambda_min
    (D^2 g))_+ + max|g|) and L+ carries the support g + R; if the certificate
    fails the radius doubles, at most ``max_doublings`` times.
    """
    if not isinstance(g, HarmonicCombination) or g.dict_coeffs is None:
        raise ValueError("convexify needs a dictionary-backed band-limited function")
    bases = tangent_bases(grid.nodes)
    forms = restricted_hessian_stack(g, grid.nodes, bases)
    eigs = np.linalg.eigvalsh(forms)[:, 0]
    neg = max(0.0, float(-np.min(eigs)))
    gmax = float(np.max(np.abs(g.values(grid.nodes)))) if g.pieces else 0.0
    radius = max(1.0, 2.0 * neg + gmax)
    last_error = None
    for _ in range(max_doublings + 1):
        try:
            l_plus = make_perturbed_ball(radius, g.dict_coeffs, grid, threshold=threshold)
            l_minus = make_ball(radius, n=grid.n)
            return l_plus, l_minus, radius
        except ConvexityViolation as err:
            last_error = err
            radius *= 2.0
    raise RuntimeError(f"convexification failed up to radius {radius}: {last_error}")


@dataclass(frozen=True)
class CombinationTerm:
    alpha: tuple
    g: HarmonicCombination
    l_plus: ConvexBody
    l_minus: ConvexBody
    radius: float


@dataclass(frozen=True)
class FiniteCombination:
    """mu(K) = sum_alpha V(K[k], L+_alpha, E[alpha]) - V(K[k], L-_alpha, E[alpha])."""

    n: int
    k: int
    family: EllipsoidFamily
    terms: tuple
    kernel_max_degree: int

    @property
    def mixed_volume_count(self) -> int:
        return 2 * len(self.terms)


def mixed_volume_count_bound(n: int, k: int) -> int:
    """2 * C(C(n+1, 2) + n - k - 1, n - k - 1), the worst-case term count."""
    return 2 * math.comb(math.comb(n + 1, 2) + n - k - 1, n - k - 1)


def synthesize(
    v: KernelValuation,
    family: EllipsoidFamily,
    frame: SpanningFrame,
    projection_margin: int = 4,
) -> FiniteCombination:
    """Run the full pipeline: accumulate g_alpha, project, convexify.

    The accumulated node values are rescaled by n (turning the measure-pairing
    normalization into the mixed-volume one), projected onto the harmonic
    dictionary of degree kernel max_degree + projection_margin as a smooth
    carrier, parity-projected when the valuation declares a parity, and split
    into certified bodies.
    """
    grid = frame.grid
    n = v.n
    buckets = accumulate_g_alpha(v, frame)
    proj_degree = v.decomposition.max_degree + projection_margin
    terms = []
    for alpha in sorted(buckets):
        g_nodes = n * buckets[alpha]
        coeffs = project_to_dictionary(g_nodes, grid, proj_degree)
        if v.parity is not None:
            coeffs = parity_filter_coeffs(coeffs, v.parity)
        carrier = combine_dictionary(n, coeffs)
        l_plus, l_minus, radius = convexify(carrier, grid)
        terms.append(
            CombinationTerm(alpha=alpha, g=carrier, l_plus=l_plus, l_minus=l_minus, radius=radius)
        )
    bound = mixed_volume_count_bound(n, v.k)
    if 2 * len(terms) > bound:
        raise AssertionError(f"term count {len(terms)} exceeds the combinatorial bound {bound // 2}")
    return FiniteCombination(
        n=n, k=v.k, family=family, terms=tuple(terms), kernel_max_degree=v.decomposition.max_degree
    )


def _family_multiset(comb: FiniteCombination, alpha):
    bodies = []
    for index, count in enumerate(alpha):
        bodies.extend([comb.family.ellipsoids[index]] * count)
    return bodies


def evaluate_combination(
    comb: FiniteCombination, K: ConvexBody, grid: SphereGrid, route_rtol: float = 1e-6
) -> float:
    """Evaluate the finite combination on a smooth body.

    Computes both the mixed-volume route sum_alpha V(K[k], L+, E[alpha]) -
    V(K[k], L-, E[alpha]) and the density route sum_alpha (1/n) integral
    g~_alpha dS(K[k], E[alpha]); disagreement beyond ``route_rtol`` relative is
    reported as a diagnostic.  Returns the mixed-volume route value.
    """
    if not K.smooth:
        raise ValueError("finite combinations evaluate on smooth bodies (quadrature route)")
    body_route = 0.0
    density_route = 0.0
    for term in comb.terms:
        others = _family_multiset(comb, term.alpha)
        density = mixed_area_density(K, comb.k, others, grid)
        v_plus = mixed_volume_smooth(term.l_plus, K, comb.k, others, grid, density=density)
        v_minus = mixed_volume_smooth(term.l_minus, K, comb.k, others, grid, density=density)
        body_route += v_plus - v_minus
        density_route += grid.integrate(term.g.values(grid.nodes) * density.values) / grid.n
    spread = abs(body_route - density_route)
    if spread > route_rtol * max(1.0, abs(body_route), abs(density_route)):
        warnings.warn(
            f"mixed-volume and density routes disagree by {spread:.3e} "
            f"(values {body_route:.6e} / {density_route:.6e})",
            stacklevel=2,
        )
    return body_route


# -- artifact serialization ---------------------------------------------------


def _coeffs_to_json(coeffs: dict) -> dict:
    return {f"{l},{j}": float(c) for (l, j), c in sorted(coeffs.items())}


def _coeffs_from_json(data: dict) -> dict:
    out = {}
    for key, c in data.items():
        l, j = key.split(",")
        out[(int(l), int(j))] = float(c)
    return out


def combination_to_dict(comb: FiniteCombination, v: KernelValuation | None = None) -> dict:
    """JSON-ready artifact: family, per-alpha terms, and optionally the kernel."""
    from .bodies import body_to_dict

    out = {
        "n": comb.n,
        "k": comb.k,
        "kernel_max_degree": comb.kernel_max_degree,
        "family": {
            "t": comb.family.t,
            "c": comb.family.c,
            "size": comb.family.size,
            "matrices": [[[float(x) for x in row] for row in b.matrix] for b in comb.family.ellipsoids],
        },
        "mixed_volume_count": comb.mixed_volume_count,
        "terms": [
            {
                "alpha": list(term.alpha),
                "radius": float(term.radius),
                "g": _coeffs_to_json(term.g.dict_coeffs),
                "l_plus": body_to_dict(term.l_plus),
                "l_minus": body_to_dict(term.l_minus),
            }
            for term in comb.terms
        ],
    }
    if v is not None:
        out["kernel"] = {
            "factors": v.decomposition.factors,
            "max_degree": v.decomposition.max_degree,
            "parity": v.parity,
            "terms": [[_coeffs_to_json(f.dict_coeffs) for f in term] for term in v.decomposition.terms],
        }
    return out


def combination_from_dict(data: dict, grid: SphereGrid):
    """Rebuild (combination, kernel valuation or None) from an artifact dict."""
    from .bodies import body_from_dict
    from .family import build_family

    n = int(data["n"])
    k = int(data["k"])
    family = build_family(n)
    stored = np.asarray(data["family"]["matrices"], dtype=float)
    rebuilt = np.asarray([b.matrix for b in family.ellipsoids])
    if stored.shape != rebuilt.shape or not np.allclose(stored, rebuilt, atol=1e-12):
        raise ValueError("artifact family does not match the canonical construction")
    terms = []
    for entry in data["terms"]:
        coeffs = _coeffs_from_json(entry["g"])
        carrier = combine_dictionary(n, coeffs)
        terms.append(
            CombinationTerm(
                alpha=tuple(int(a) for a in entry["alpha"]),
                g=carrier,
                l_plus=body_from_dict(entry["l_plus"], grid=grid),
                l_minus=body_from_dict(entry["l_minus"], grid=grid),
                radius=float(entry["radius"]),
            )
        )
    comb = FiniteCombination(
        n=n,
        k=k,
        family=family,
        terms=tuple(terms),
        kernel_max_degree=int(data["kernel_max_degree"]),
    )
    valuation = None
    if "kernel" in data:
        from .kernels import TensorDecomposition as TD

        kdata = data["kernel"]
        kterms = []
        coeff_list = []
        for term in kdata["terms"]:
            fns = tuple(combine_dictionary(n, _coeffs_from_json(fc)) for fc in term)
            kterms.append(fns)
            coeff_list.append(1.0)
        decomp = TD(
            n=n,
            factors=int(kdata["factors"]),
            terms=tuple(kterms),
            coefficients=np.asarray(coeff_list),
            residual=0.0,
            max_degree=int(kdata["max_degree"]),
        )
        valuation = KernelValuation(n=n, k=k, decomposition=decomp, parity=kdata.get("parity"))
    return comb, valuation
