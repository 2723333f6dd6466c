"""Independent oracles used to derive and cross-check expected test values.

Everything here deliberately avoids the library's own closed forms: cross
sections are integrated by quadrature, unions are estimated by rejection over
a bounding ball, and gaussian ball measures reduce to one-dimensional
integrals against the central chi-square distribution.
"""

import math

import numpy as np
from scipy import integrate
from scipy.stats import chi2


def ball_volume_gamma(d: int, r: float = 1.0) -> float:
    """Reference ball volume straight from the gamma-function formula."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * r**d


def lens_volume_quad(d: int, r1: float, r2: float, dist: float) -> tuple[float, float]:
    """Two-ball intersection volume by 1-d quadrature over cross sections.

    Slices perpendicular to the center axis are (d-1)-balls whose radius is
    the smaller of the two sphere cross sections.  Returns (value, abserr).
    """
    lo = max(-r1, dist - r2)
    hi = min(r1, dist + r2)
    if lo >= hi:
        return 0.0, 0.0
    if d == 1:
        return hi - lo, 0.0
    slice_vol = ball_volume_gamma(d - 1)

    def cross_section(t):
        rho2 = min(r1 * r1 - t * t, r2 * r2 - (t - dist) * (t - dist))
        return slice_vol * max(rho2, 0.0) ** ((d - 1) / 2)

    val, err = integrate.quad(cross_section, lo, hi, limit=200, epsabs=1e-13)
    return val, err


def hit_or_miss_union(centers: np.ndarray, radii: np.ndarray, samples: int, rng) -> tuple[float, float]:
    """Rejection estimate of a ball-union volume over an enclosing ball."""
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    d = centers.shape[1]
    mid = centers.mean(axis=0)
    bound = float(np.max(np.linalg.norm(centers - mid, axis=1) + radii))
    g = rng.standard_normal((samples, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    pts = mid + g * (rng.random(samples)[:, None] ** (1.0 / d)) * bound
    inside = np.zeros(samples, dtype=bool)
    for c, r in zip(centers, radii):
        inside |= ((pts - c) ** 2).sum(axis=1) <= r * r
    vol_bound = ball_volume_gamma(d, bound)
    p = inside.mean()
    return vol_bound * p, vol_bound * math.sqrt(p * (1 - p) / samples)


def gaussian_ball_measure_quad(d: int, center_norm: float, r: float) -> float:
    """P(||X - c|| <= r) for standard gaussian X, by 1-d quadrature.

    Reduces over the axis through c: the remaining d-1 squared coordinates
    are central chi-square.
    """
    a = float(center_norm)
    if d == 1:
        return 0.5 * (math.erf((a + r) / math.sqrt(2)) - math.erf((a - r) / math.sqrt(2)))

    def integrand(t):
        rem = r * r - (t - a) ** 2
        if rem <= 0.0:
            return 0.0
        return math.exp(-t * t / 2) / math.sqrt(2 * math.pi) * chi2.cdf(rem, d - 1)

    val, _ = integrate.quad(integrand, a - r, a + r, limit=200)
    return val


def disk_square_overlap_quad(center: np.ndarray, r: float, side: float) -> float:
    """Area of disk(center, r) within the centered square of given side."""
    cx, cy = float(center[0]), float(center[1])
    half = side / 2

    def height(x):
        rem = r * r - (x - cx) ** 2
        if rem <= 0.0:
            return 0.0
        h = math.sqrt(rem)
        return max(min(cy + h, half) - max(cy - h, -half), 0.0)

    lo, hi = max(cx - r, -half), min(cx + r, half)
    if lo >= hi:
        return 0.0
    val, _ = integrate.quad(height, lo, hi, limit=200)
    return val


def ks_statistic(sample, cdf) -> float:
    """Exact sup-distance between the sample ECDF and a CDF callable."""
    s = np.sort(np.asarray(sample, dtype=float))
    n = s.size
    f = np.asarray(cdf(s), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def d1_cell_interval(x: float, others) -> tuple[float, float]:
    """Midpoint endpoints of the cell of x on the line (inf when unbounded)."""
    others = np.asarray(others, dtype=float).reshape(-1)
    left = others[others < x]
    right = others[others > x]
    lo = (x + left.max()) / 2 if left.size else -math.inf
    hi = (x + right.min()) / 2 if right.size else math.inf
    return lo, hi


def random_rotation(d: int, rng) -> np.ndarray:
    """Haar-ish random rotation from the QR decomposition of a gaussian matrix."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
