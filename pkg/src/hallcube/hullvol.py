"""Convex hull volume for point clouds up to 9 dimensions.

Exact computation is used wherever it is cheap: qhull below four
dimensions, the determinant formula when the cloud is a simplex.
Higher-dimensional clouds fall back to a quasi-Monte Carlo estimate
built on the radial function of the hull, evaluated through the polar
body:
for a hull K containing the origin, the reach of a ray along unit
direction u is 1 / max{u.y : p_i.y <= 1 for all cloud points p_i},
a small LP in d variables. The cloud is whitened first so ray lengths
stay well conditioned; the whitening determinant is multiplied back.
"""

import math

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull
from scipy.stats import norm, qmc

from .errors import DomainError

# singular values below this fraction of the largest are treated as a
# collapsed direction (affine rank deficiency -> volume 0)
RANK_RTOL = 1e-9

DEFAULT_RAYS = 4096


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def affine_rank(points: np.ndarray, rtol: float = RANK_RTOL) -> int:
    """Dimension of the affine span of the cloud."""
    pts = np.asarray(points, dtype=float)
    centered = pts - pts.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def simplex_volume(points: np.ndarray) -> float:
    """|det| / d! for exactly d+1 points in d dimensions."""
    pts = np.asarray(points, dtype=float)
    n, d = pts.shape
    if n != d + 1:
        raise DomainError(f"simplex in {d}-D needs {d + 1} points, got {n}")
    edges = pts[1:] - pts[0]
    return abs(float(np.linalg.det(edges))) / math.factorial(d)


def _ray_lengths(whitened: np.ndarray, directions: np.ndarray) -> np.ndarray:
    n, d = whitened.shape
    ones = np.ones(n)
    bounds = [(None, None)] * d
    radii = np.empty(len(directions))
    for i, u in enumerate(directions):
        # support of the polar body along u; its reciprocal is the
        # distance from the centroid to the hull boundary along u
        res = linprog(-u, A_ub=whitened, b_ub=ones, bounds=bounds, method="highs")
        if res.status != 0 or res.fun >= 0:
            raise DomainError("polar support LP failed; degenerate hull")
        radii[i] = 1.0 / (-res.fun)
    return radii


def _sphere_directions(n_rays: int, d: int, seed: int) -> np.ndarray:
    """Antithetic scrambled-Sobol directions on the unit sphere."""
    half = max(1, n_rays // 2)
    sampler = qmc.Sobol(d, scramble=True, seed=seed)
    u = sampler.random(half)
    # clip away 0/1 before the Gaussian inverse CDF
    eps = np.finfo(float).tiny
    gauss = norm.ppf(np.clip(u, eps, 1.0 - eps))
    dirs = np.vstack([gauss, -gauss])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs


def convex_hull_volume(points: np.ndarray, n_rays: int = DEFAULT_RAYS,
                       seed: int = 0) -> float:
    """Volume of the convex hull of an (n, d) cloud.

    Rank-deficient clouds return 0. Simplexes and d <= 3 are exact;
    otherwise volume = kappa_d * E[R(u)^d] * whitening determinant,
    estimated over n_rays seeded directions.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
        raise DomainError("expected a non-empty (n, d) point array")
    if not np.all(np.isfinite(pts)):
        raise DomainError("points must be finite")
    n, d = pts.shape
    if affine_rank(pts) < d:
        return 0.0
    if n == d + 1:
        return simplex_volume(pts)
    if d == 1:
        return float(pts.max() - pts.min())
    if d <= 3:
        return float(ConvexHull(pts).volume)

    center = pts.mean(axis=0)
    centered = pts - center
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    scales = s / math.sqrt(n)
    whitened = (centered @ vt.T) / scales

    dirs = _sphere_directions(n_rays, d, seed)
    radii = _ray_lengths(whitened, dirs)
    vol = unit_ball_volume(d) * float(np.mean(radii ** d))
    return vol * float(np.prod(scales))
