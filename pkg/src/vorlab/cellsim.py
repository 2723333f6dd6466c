"""Empirical cell experiments: measure and diameter of a conditioned cell.

The cell of a conditioned point x among n sample points is probed with fresh
draws from the same density: the fraction whose nearest neighbor is x is an
unbiased estimate of the cell measure, and falling-factorial hit statistics
give unbiased estimates of its higher moments (k distinct probes all landing
in the cell estimate mu^k without the binomial plug-in bias).  In one
dimension the cell is an interval with known midpoint endpoints and the
measure is computed exactly instead; that path backs the
distributional-convergence checks, where probe noise would swamp the shape
of the empirical law.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import ndtri

from .geometry import as_point
from .moments import Estimate
from .sampling import DensityModel, RandomStream

__all__ = [
    "NNIndex",
    "build_nn_index",
    "estimate_cell_measure",
    "exact_cell_measure_1d",
    "probe_cell_fractions",
    "CellExperimentConfig",
    "CellExperimentResult",
    "run_cell_experiment",
    "cone_directions",
    "cone_nn_radii",
    "estimate_cell_diameter",
    "DiameterExperimentConfig",
    "DiameterResult",
    "run_diameter_experiment",
]

# cones have full aperture pi/4: membership within angular radius pi/8 of the
# axis, closed with a small tolerance so boundary points are never dropped
CONE_HALF_APERTURE = math.pi / 8
_COS_CONE = math.cos(CONE_HALF_APERTURE)
_CONE_BOUNDARY_TOL = 1e-12
_CONE_SEED = 20260809

_QUANTILE_LEVELS = (0.5, 0.9, 0.99)


class NNIndex:
    """Exact nearest-neighbor index with ties resolved to the smallest index.

    Both a brute-force and a kd-tree backend exist and answer identically;
    the kd-tree is the default, the brute force is the oracle.
    """

    def __init__(self, points, method: str = "kdtree"):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.size == 0:
            raise ValueError("at least one point is required")
        if pts.ndim != 2:
            raise ValueError("points must form an (n, d) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        if method not in ("kdtree", "brute"):
            raise ValueError(f"unknown method {method!r}")
        self.points = pts
        self.method = method
        self._tree = cKDTree(pts) if method == "kdtree" else None

    def query(self, queries) -> np.ndarray:
        """Index of the exact nearest point for each query row."""
        q = np.atleast_2d(np.asarray(queries, dtype=float))
        if q.shape[1] != self.points.shape[1]:
            raise ValueError("query dimension does not match the index")
        if self.method == "brute":
            return self._query_brute(q)
        return self._query_kdtree(q)

    def _query_brute(self, q: np.ndarray) -> np.ndarray:
        n = self.points.shape[0]
        out = np.empty(q.shape[0], dtype=np.intp)
        step = max(1, (1 << 24) // max(n, 1))
        for lo in range(0, q.shape[0], step):
            block = q[lo : lo + step]
            d2 = ((block[:, None, :] - self.points[None, :, :]) ** 2).sum(axis=2)
            # argmin returns the first minimum, i.e. the smallest index
            out[lo : lo + step] = np.argmin(d2, axis=1)
        return out

    def _query_kdtree(self, q: np.ndarray) -> np.ndarray:
        n = self.points.shape[0]
        if n == 1:
            return np.zeros(q.shape[0], dtype=np.intp)
        dist, idx = self._tree.query(q, k=2)
        nearest = idx[:, 0].astype(np.intp)
        for i in np.nonzero(dist[:, 0] == dist[:, 1])[0]:
            cand = np.asarray(self._tree.query_ball_point(q[i], dist[i, 0] * (1 + 1e-12)))
            d2 = ((self.points[cand] - q[i]) ** 2).sum(axis=1)
            nearest[i] = cand[d2 == d2.min()].min()
        return nearest


def build_nn_index(points, method: str = "kdtree") -> NNIndex:
    """Construct an exact nearest-neighbor index over the given points."""
    return NNIndex(points, method=method)


def _stack_with_center(x: np.ndarray, others) -> np.ndarray:
    others = np.asarray(others, dtype=float).reshape(-1, x.size)
    return np.vstack([x[None, :], others])


def estimate_cell_measure(
    x, others, model: DensityModel, probes: int, rng: RandomStream
) -> Estimate:
    """Probe estimate of the measure of the cell centered at x.

    Draws `probes` points from the model and returns the fraction whose
    nearest neighbor among {x} plus `others` is x (ties to the smallest
    index, and x has index 0).  Unbiased given the point set.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    t0 = time.perf_counter()
    x = as_point(x)
    pts = _stack_with_center(x, others)
    draws = model.sample(rng, int(probes))
    hits = int(np.count_nonzero(NNIndex(pts).query(draws) == 0))
    p = hits / probes
    stderr = math.sqrt(p * (1.0 - p) / probes)
    return Estimate(
        value=p, stderr=stderr, samples=int(probes), seed=rng.seed,
        elapsed_ms=(time.perf_counter() - t0) * 1000.0,
    )


def exact_cell_measure_1d(x, others, model: DensityModel) -> float:
    """Exact cell measure in one dimension via neighbor midpoints.

    The cell of x is the interval between the midpoints toward its nearest
    left and right neighbors (unbounded sides extend to the support edge);
    points that duplicate x never win a tie against it and are ignored.
    """
    if model.dimension != 1:
        raise ValueError("exact cell measure requires dimension 1")
    x = float(as_point(np.atleast_1d(x))[0])
    others = np.asarray(others, dtype=float).reshape(-1)
    left = others[others < x]
    right = others[others > x]
    lo = (x + left.max()) / 2 if left.size else -math.inf
    hi = (x + right.min()) / 2 if right.size else math.inf
    return model.interval_measure(lo, hi)


def probe_cell_fractions(points, model: DensityModel, probes: int, rng: RandomStream) -> np.ndarray:
    """Probe fractions for every cell of the point set; they sum to one."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    idx = NNIndex(pts).query(model.sample(rng, int(probes)))
    return np.bincount(idx, minlength=pts.shape[0]) / probes


# ---------------------------------------------------------------------------
# cell-measure experiment


@dataclass(frozen=True, eq=False)
class CellExperimentConfig:
    """Parameters of a conditioned-cell measure experiment.

    `measure_mode` is "probe" (default, any dimension) or "exact"
    (one-dimensional models only: interval cell measure, no probe noise).
    """

    density: DensityModel
    x: np.ndarray | None = None
    n: int = 2000
    replicates: int = 2000
    probes: int = 5000
    k_max: int = 4
    seed: int = 0
    workers: int = 1
    measure_mode: str = "probe"

    def __post_init__(self):
        x = np.zeros(self.density.dimension) if self.x is None else as_point(self.x)
        object.__setattr__(self, "x", x)
        if self.n < 1 or self.replicates < 1 or self.probes < 1 or self.k_max < 1:
            raise ValueError("counts must be >= 1")
        if self.measure_mode not in ("probe", "exact"):
            raise ValueError(f"unknown measure_mode {self.measure_mode!r}")
        if self.measure_mode == "probe" and self.k_max > self.probes:
            raise ValueError("k_max cannot exceed probes (k distinct probes per tuple)")
        if self.measure_mode == "exact" and self.density.dimension != 1:
            raise ValueError("exact measure mode requires a one-dimensional model")
        if not self.density.support_contains(self.x):
            raise ValueError("conditioning point x lies outside the support")


@dataclass(frozen=True, eq=False)
class CellExperimentResult:
    """Replicated scaled cell measures with empirical moments and ECDF."""

    replicates: int
    scaled_measures: np.ndarray
    hits: np.ndarray | None
    empirical_moments: dict[int, float]
    moment_stderrs: dict[int, float]
    ecdf: np.ndarray
    config: CellExperimentConfig


def _falling(x: np.ndarray, k: int) -> np.ndarray:
    out = np.ones_like(x, dtype=float)
    for j in range(k):
        out = out * (x - j)
    return out


def _cell_block(args):
    cfg, start, stop = args
    scaled = np.empty(stop - start)
    hits = np.empty(stop - start, dtype=np.intp) if cfg.measure_mode == "probe" else None
    for r in range(start, stop):
        rng = RandomStream(cfg.seed, r)
        others = cfg.density.sample(rng, cfg.n - 1)
        if cfg.measure_mode == "exact":
            mu = exact_cell_measure_1d(cfg.x, others, cfg.density)
            scaled[r - start] = cfg.n * mu
        else:
            pts = _stack_with_center(cfg.x, others)
            draws = cfg.density.sample(rng, cfg.probes)
            h = int(np.count_nonzero(NNIndex(pts).query(draws) == 0))
            hits[r - start] = h
            scaled[r - start] = cfg.n * h / cfg.probes
    return start, scaled, hits


def _worker_blocks(total: int, workers: int) -> list[tuple[int, int]]:
    step = math.ceil(total / max(workers, 1))
    return [(lo, min(lo + step, total)) for lo in range(0, total, step)]


def _map_blocks(fn, args, workers: int):
    if workers <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, args))


def run_cell_experiment(config: CellExperimentConfig) -> CellExperimentResult:
    """Replicate the conditioned-cell experiment and aggregate its law.

    Each replicate r draws n - 1 fresh points from the density (the
    conditioning point is placed deterministically, which realizes the
    conditional law exactly), estimates the cell measure, and contributes
    n * mu_hat to the sample.  Replicates use streams (seed, r), so results
    are independent of the worker count.  Empirical moments use unbiased
    falling-factorial hit statistics in probe mode and plain powers in exact
    mode.
    """
    cfg = config
    blocks = _worker_blocks(cfg.replicates, cfg.workers)
    parts = _map_blocks(_cell_block, [(cfg, lo, hi) for lo, hi in blocks], cfg.workers)
    parts.sort(key=lambda p: p[0])
    scaled = np.concatenate([p[1] for p in parts])
    hits = np.concatenate([p[2] for p in parts]) if cfg.measure_mode == "probe" else None

    moments: dict[int, float] = {}
    stderrs: dict[int, float] = {}
    R = cfg.replicates
    for k in range(1, cfg.k_max + 1):
        if cfg.measure_mode == "probe":
            per = float(cfg.n) ** k * _falling(hits.astype(float), k) / _falling(
                np.array(float(cfg.probes)), k
            )
        else:
            per = scaled**k
        moments[k] = float(per.mean())
        stderrs[k] = float(per.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0

    return CellExperimentResult(
        replicates=R,
        scaled_measures=scaled,
        hits=hits,
        empirical_moments=moments,
        moment_stderrs=stderrs,
        ecdf=np.sort(scaled),
        config=cfg,
    )


# ---------------------------------------------------------------------------
# diameter machinery


def _sphere_lds(d: int, n: int, seed_key: int) -> np.ndarray:
    from scipy.stats import qmc

    gen = np.random.default_rng(
        np.random.SeedSequence(entropy=_CONE_SEED, spawn_key=(seed_key,))
    )
    u = qmc.Sobol(d, scramble=True, seed=gen).random(n)
    z = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


@lru_cache(maxsize=None)
def cone_directions(d: int) -> np.ndarray:
    """Unit directions whose pi/4-aperture cones cover all of R^d.

    Every unit vector lies within angular distance pi/8 of some direction.
    d = 1 and d = 2 use the minimal analytic families; higher dimensions run
    a greedy cap cover over a low-discrepancy sphere point set, validated
    (and repaired if needed) against 10^5 random unit vectors.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
    elif d == 2:
        ang = np.arange(8) * (math.pi / 4)
        dirs = np.column_stack([np.cos(ang), np.sin(ang)])
    else:
        cand = _sphere_lds(d, 4096, 0)
        # cover the candidate set at a slightly shrunk radius so that points
        # between candidates still fall inside the full pi/8 caps
        cover = cand @ cand.T >= math.cos(0.92 * CONE_HALF_APERTURE)
        uncovered = np.ones(len(cand), dtype=bool)
        rows = []
        while uncovered.any():
            best = int(np.argmax(cover[:, uncovered].sum(axis=1)))
            rows.append(cand[best])
            uncovered &= ~cover[best]
        dirs = np.array(rows)
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=_CONE_SEED, spawn_key=(d, 1)))
        )
        for _ in range(64):
            v = rng.standard_normal((100_000, d))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            covered = (v @ dirs.T >= _COS_CONE - _CONE_BOUNDARY_TOL).any(axis=1)
            if covered.all():
                break
            dirs = np.vstack([dirs, v[~covered][:1]])
    dirs.setflags(write=False)
    return dirs


def cone_nn_radii(x, others, directions) -> np.ndarray:
    """Per-cone distance from x to its nearest point, +inf for empty cones.

    A point belongs to every cone whose closed angular condition it meets;
    a point coinciding with x belongs to all cones at distance zero.
    """
    x = as_point(x)
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    others = np.asarray(others, dtype=float).reshape(-1, x.size)
    if others.shape[0] == 0:
        return np.full(dirs.shape[0], math.inf)
    diff = others - x[None, :]
    dist = np.linalg.norm(diff, axis=1)
    safe = np.where(dist > 0.0, dist, 1.0)
    cos = (diff / safe[:, None]) @ dirs.T
    member = (cos >= _COS_CONE - _CONE_BOUNDARY_TOL) | (dist == 0.0)[:, None]
    radii = np.where(member, dist[:, None], math.inf)
    return radii.min(axis=0)


def _max_pairwise_distance(pts: np.ndarray) -> float:
    if pts.shape[0] < 2:
        return 0.0
    best = 0.0
    step = max(1, (1 << 24) // pts.shape[0])
    for lo in range(0, pts.shape[0], step):
        block = pts[lo : lo + step]
        d2 = ((block[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        best = max(best, float(d2.max()))
    return math.sqrt(best)


def estimate_cell_diameter(
    x, others, model: DensityModel, probes: int, rng: RandomStream
) -> tuple[float, float]:
    """Bracket the diameter of the cell centered at x.

    The lower estimate is the farthest-pair distance among probe points that
    land in the cell (0 when fewer than two do); the upper estimate is
    sqrt(d) times the largest per-cone nearest-neighbor distance, infinite
    whenever some cone holds no point.  lower <= upper always.
    """
    if probes < 2:
        raise ValueError("probes must be >= 2")
    x = as_point(x)
    d = x.size
    pts = _stack_with_center(x, others)
    draws = model.sample(rng, int(probes))
    hits = draws[NNIndex(pts).query(draws) == 0]
    lower = _max_pairwise_distance(hits)
    radii = cone_nn_radii(x, pts[1:], cone_directions(d))
    upper = math.sqrt(d) * float(radii.max())
    return lower, upper


@dataclass(frozen=True, eq=False)
class DiameterExperimentConfig:
    """Parameters of the diameter-scaling experiment over a grid of n."""

    density: DensityModel
    n_grid: tuple[int, ...]
    t_grid: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    x: np.ndarray | None = None
    replicates: int = 2000
    probes: int = 5000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        x = np.zeros(self.density.dimension) if self.x is None else as_point(self.x)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "t_grid", tuple(float(t) for t in self.t_grid))
        if not self.n_grid or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("n_grid must be a nonempty increasing sequence")
        if min(self.n_grid) < 1 or self.replicates < 1 or self.probes < 2:
            raise ValueError("counts must be positive (probes >= 2)")
        if not self.density.support_contains(self.x):
            raise ValueError("conditioning point x lies outside the support")


@dataclass(frozen=True, eq=False)
class DiameterResult:
    """Scaled diameter brackets per n, with quantiles and exceedance curves.

    scaled_lower / scaled_upper map n to the per-replicate values of
    n^(1/d) times the lower / upper diameter estimates.  quantiles maps n to
    {level: (lower_estimator_quantile, upper_estimator_quantile)}, and
    exceedance maps n to the empirical P{n^(1/d) diam >= t} per t in t_grid,
    evaluated on the upper estimator.
    """

    n_grid: tuple[int, ...]
    t_grid: tuple[float, ...]
    scaled_lower: dict[int, np.ndarray]
    scaled_upper: dict[int, np.ndarray]
    quantiles: dict[int, dict[float, tuple[float, float]]]
    exceedance: dict[int, np.ndarray]
    config: DiameterExperimentConfig


def _diam_block(args):
    cfg, n, base, start, stop = args
    lows = np.empty(stop - start)
    ups = np.empty(stop - start)
    for r in range(start, stop):
        rng = RandomStream(cfg.seed, base + r)
        others = cfg.density.sample(rng, n - 1)
        lo, up = estimate_cell_diameter(cfg.x, others, cfg.density, cfg.probes, rng)
        lows[r - start] = lo
        ups[r - start] = up
    return start, lows, ups


def run_diameter_experiment(config: DiameterExperimentConfig) -> DiameterResult:
    """Estimate the n^(-1/d) diameter scaling over the configured n grid.

    Replicate r of grid entry i uses stream (seed, i * replicates + r), so
    results do not depend on the worker count.
    """
    cfg = config
    d = cfg.density.dimension
    scaled_lower: dict[int, np.ndarray] = {}
    scaled_upper: dict[int, np.ndarray] = {}
    quantiles: dict[int, dict[float, tuple[float, float]]] = {}
    exceedance: dict[int, np.ndarray] = {}
    for i, n in enumerate(cfg.n_grid):
        base = i * cfg.replicates
        blocks = _worker_blocks(cfg.replicates, cfg.workers)
        parts = _map_blocks(
            _diam_block, [(cfg, n, base, lo, hi) for lo, hi in blocks], cfg.workers
        )
        parts.sort(key=lambda p: p[0])
        lows = np.concatenate([p[1] for p in parts])
        ups = np.concatenate([p[2] for p in parts])
        scale = n ** (1.0 / d)
        lows *= scale
        ups *= scale
        scaled_lower[n] = lows
        scaled_upper[n] = ups
        # order-statistic quantiles: upper estimates may be infinite and
        # interpolation across infinities is meaningless
        quantiles[n] = {
            q: (
                float(np.quantile(lows, q, method="inverted_cdf")),
                float(np.quantile(ups, q, method="inverted_cdf")),
            )
            for q in _QUANTILE_LEVELS
        }
        exceedance[n] = np.array([float(np.mean(ups >= t)) for t in cfg.t_grid])
    return DiameterResult(
        n_grid=cfg.n_grid,
        t_grid=cfg.t_grid,
        scaled_lower=scaled_lower,
        scaled_upper=scaled_upper,
        quantiles=quantiles,
        exceedance=exceedance,
        config=cfg,
    )
