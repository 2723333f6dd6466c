"""Exact and Monte Carlo volumes of d-dimensional balls and their unions.

The exact two-ball machinery (cap volumes through the regularized incomplete
beta function) is the computational substrate for everything downstream; the
mixture Monte Carlo estimator covers unions of three or more balls, where no
closed form is attempted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

__all__ = [
    "Ball",
    "VolumeEstimate",
    "as_point",
    "unit_ball_volume",
    "ball_intersection_volume",
    "ball_intersection_volumes",
    "two_ball_union_volume",
    "union_volume_mc",
    "union_volume_mc_values",
    "interval_union_length",
]


def as_point(coords) -> np.ndarray:
    """Validate and return a coordinate vector as a float array."""
    p = np.asarray(coords, dtype=float)
    if p.ndim != 1 or p.size < 1:
        raise ValueError("a point must be a 1-d vector with at least one coordinate")
    if not np.all(np.isfinite(p)):
        raise ValueError("point coordinates must be finite")
    return p


def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in d dimensions, pi^(d/2) / Gamma(d/2 + 1).

    Evaluated by the two-step recursion V_d = V_{d-2} 2 pi / d, which is the
    same quantity with less rounding than the ratio of transcendentals (it
    returns 2, pi, and pi^2/2 exactly for d = 1, 2, 4).
    """
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d!r}")
    v = 2.0 if d % 2 else 1.0
    for j in range(2 + d % 2, int(d) + 1, 2):
        v *= 2.0 * math.pi / j
    return v


@dataclass(frozen=True, eq=False)
class Ball:
    """Closed ball given by a center point and a nonnegative radius."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        r = float(self.radius)
        if not (math.isfinite(r) and r >= 0.0):
            raise ValueError(f"radius must be finite and >= 0, got {self.radius!r}")
        object.__setattr__(self, "radius", r)

    @property
    def dimension(self) -> int:
        return self.center.size

    @property
    def volume(self) -> float:
        # np.power keeps this bit-identical to the vectorized kernels
        # (python's ** can differ from numpy's integer-power loop by an ulp)
        return float(unit_ball_volume(self.dimension) * np.power(np.float64(self.radius), self.dimension))


@dataclass(frozen=True)
class VolumeEstimate:
    """Monte Carlo volume estimate with its standard error and sample count."""

    value: float
    stderr: float
    samples: int


def _cap_volumes(d: int, r: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Volume of the spherical cap of a radius-r ball cut at signed height h.

    h is the distance from the ball center to the cutting hyperplane; h >= 0
    gives the minority cap, h < 0 the complementary one.  Evaluated with the
    regularized incomplete beta function I_x((d+1)/2, 1/2).
    """
    full = unit_ball_volume(d) * r**d
    # clamp guards ulp-level excursions of 1 - (h/r)^2 at the branch edges
    x = np.clip(1.0 - (h * h) / (r * r), 0.0, 1.0)
    half_cap = 0.5 * full * betainc((d + 1) / 2, 0.5, x)
    return np.where(h >= 0.0, half_cap, full - half_cap)


def ball_intersection_volumes(d: int, r1, r2, dist) -> np.ndarray:
    """Intersection volumes of ball pairs given radii and center distance.

    Vectorized over broadcastable arrays ``r1``, ``r2``, ``dist``.  Branches
    on the computed distance with exact comparisons: measure-zero boundaries
    are irrelevant to the Monte Carlo consumers, and exactness on the
    containment branch keeps degenerate configurations bit-reproducible.
    """
    r1, r2, dist = np.broadcast_arrays(
        np.asarray(r1, dtype=float), np.asarray(r2, dtype=float), np.asarray(dist, dtype=float)
    )
    # canonical radius order makes the evaluation exactly symmetric in (a, b)
    rlo = np.minimum(r1, r2)
    rhi = np.maximum(r1, r2)
    out = np.zeros(dist.shape)
    contained = dist <= rhi - rlo
    lens = ~contained & (dist < rhi + rlo)
    if np.any(contained):
        out[contained] = unit_ball_volume(d) * rlo[contained] ** d
    if np.any(lens):
        a, b, s = rhi[lens], rlo[lens], dist[lens]
        h1 = (s * s + a * a - b * b) / (2.0 * s)
        out[lens] = _cap_volumes(d, a, h1) + _cap_volumes(d, b, s - h1)
    return out


def _check_pair(a: Ball, b: Ball) -> None:
    if a.dimension != b.dimension:
        raise ValueError(
            f"dimension mismatch: {a.dimension} vs {b.dimension}"
        )


def ball_intersection_volume(a: Ball, b: Ball) -> float:
    """Exact volume of the intersection of two balls via the two-cap formula."""
    _check_pair(a, b)
    dist = np.linalg.norm(a.center - b.center)
    return float(ball_intersection_volumes(a.dimension, a.radius, b.radius, dist))


def two_ball_union_volume(a: Ball, b: Ball) -> float:
    """Exact volume of the union of two balls: vol(a) + vol(b) - vol(a ∩ b)."""
    _check_pair(a, b)
    inter = ball_intersection_volume(a, b)
    va, vb = a.volume, b.volume
    lo, hi = (va, vb) if va <= vb else (vb, va)
    # grouped so a contained ball cancels exactly against its intersection
    return hi + (lo - inter)


def union_volume_mc_values(centers: np.ndarray, radii: np.ndarray, samples: int, rng) -> np.ndarray:
    """Per-draw values of the mixture estimator for ball-union volumes.

    ``centers`` has shape (nsets, k, d) and ``radii`` (nsets, k); the return
    value has shape (nsets, samples) and each row averages to the union
    volume of that row's balls.  A draw picks ball i with probability
    vol_i / sum_j vol_j, samples a uniform point X in it, and contributes
    sum_j vol_j / #{j : X in B_j}.  Rows whose balls all have zero volume
    yield all-zero values.
    """
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    nsets, k, d = centers.shape
    m = int(samples)
    if m < 1:
        raise ValueError("samples must be >= 1")

    vols = unit_ball_volume(d) * radii**d
    total = vols.sum(axis=1)
    live = total > 0.0
    weights = np.where(live[:, None], vols / np.where(live, total, 1.0)[:, None], 0.0)
    cum = np.cumsum(weights, axis=1)

    u = rng.random((nsets, m))
    src = np.minimum((u[:, :, None] > cum[:, None, :]).sum(axis=2), k - 1)

    g = rng.standard_normal((nsets, m, d))
    g /= np.linalg.norm(g, axis=2, keepdims=True)
    rows = np.arange(nsets)[:, None]
    rad = rng.random((nsets, m)) ** (1.0 / d) * radii[rows, src]
    x = centers[rows, src] + g * rad[:, :, None]

    hits = np.zeros((nsets, m), dtype=np.int32)
    for j in range(k):
        d2 = ((x - centers[:, None, j, :]) ** 2).sum(axis=2)
        inside = d2 <= (radii[:, j] ** 2)[:, None]
        # the drawn point lies in its source ball by construction; rounding
        # at the boundary must not drop it
        inside |= src == j
        hits += inside
    values = total[:, None] / hits
    values[~live] = 0.0
    return values


def union_volume_mc(balls, samples: int, rng) -> VolumeEstimate:
    """Unbiased mixture-estimator Monte Carlo for the volume of a ball union.

    Parameters
    ----------
    balls : sequence of Ball, all of the same dimension, nonempty
    samples : number of Monte Carlo draws (>= 1)
    rng : random stream owned by the caller

    Returns the estimate with its sample standard error; a list whose balls
    all have radius zero gives (0, 0) exactly.
    """
    balls = list(balls)
    if not balls:
        raise ValueError("at least one ball is required")
    d = balls[0].dimension
    for b in balls[1:]:
        if b.dimension != d:
            raise ValueError(f"dimension mismatch: {d} vs {b.dimension}")
    m = int(samples)
    if m < 1:
        raise ValueError("samples must be >= 1")

    centers = np.stack([b.center for b in balls])[None, :, :]
    radii = np.array([b.radius for b in balls])[None, :]
    values = union_volume_mc_values(centers, radii, m, rng)[0]
    if np.all(values == values[0]):
        # constant draws (single ball, or all radii zero): exact, no noise
        return VolumeEstimate(value=float(values[0]), stderr=0.0, samples=m)
    value = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return VolumeEstimate(value=value, stderr=stderr, samples=m)


def interval_union_length(intervals) -> float:
    """Exact Lebesgue measure of a union of closed intervals by sort-and-sweep."""
    pairs = [(float(lo), float(hi)) for lo, hi in intervals]
    for lo, hi in pairs:
        if lo > hi:
            raise ValueError(f"interval with lo > hi: ({lo}, {hi})")
    if not pairs:
        return 0.0
    pairs.sort()
    length = 0.0
    cur_lo, cur_hi = pairs[0]
    for lo, hi in pairs[1:]:
        if lo > cur_hi:
            length += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
        else:
            cur_hi = max(cur_hi, hi)
    return length + (cur_hi - cur_lo)
