"""Box-counting dimension of fractal-surface graphs and the three-case upper bounds."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ResolutionError, UnsupportedError
from .fractal import FractalSurface, ScalingField
from .grid import AffineMaps, Partition

log = logging.getLogger(__name__)

MIN_SAMPLES = 4
SLOPE_SLACK = 0.2


def gamma(alpha: ScalingField, maps: AffineMaps, grid_per_axis: int = 65) -> float:
    """Sum over all cells of |alpha_j| (per-cell sampled sup for pullback fields)."""
    if not alpha.is_constant:
        log.warning("gamma of a pullback field uses per-cell sup |alpha_j|; "
                    "the dimension bounds are stated for constant scalings")
    return float(np.sum(alpha.cell_sup(maps, grid_per_axis)))


def theory_bounds(gam: float, xi: float, m: int, counts: Sequence[int]) -> tuple[str, float, float]:
    """(case, lower, upper) for the box dimension of the graph."""
    if not 0 < xi <= 1:
        raise ValueError("Hölder exponent must lie in (0, 1]")
    if gam < 0:
        raise ValueError("gamma must be nonnegative")
    P = math.prod(counts)
    if gam <= 1:
        return "i", float(m), m + 1.0 - xi
    if P ** (xi - m) * gam <= 1:
        return "ii", float(m), m + 1.0 - xi + math.log(gam) / math.log(P)
    return "iii", float(m), 1.0 + math.log(gam) / math.log(P)


def _check_setting(partition: Partition):
    if not partition.is_uniform():
        raise UnsupportedError("box counting is only supported on uniform partitions", key="domain")
    if np.any(np.abs(partition.lower) > 1e-12) or np.any(np.abs(partition.upper - 1) > 1e-12):
        raise UnsupportedError("box counting expects the domain [0,1]^m", key="domain")


def scale_delta(partition: Partition, r: int) -> float:
    return float(math.prod(partition.counts)) ** (-r)


def required_level(partition: Partition, r: int, oversample: int = MIN_SAMPLES) -> int:
    """Smallest surface level giving ``oversample`` grid intervals per column side on every axis."""
    P = math.prod(partition.counts)
    level = 0
    for n in partition.counts:
        need = math.log(oversample * P**r) / math.log(n) - 1
        level = max(level, math.ceil(need - 1e-9))
    return level


def _column_ranges(axis: np.ndarray, delta: float, ncols: int):
    tol = 1e-9 * delta
    edges = np.arange(ncols + 1) * delta
    lo = np.searchsorted(axis, edges[:-1] - tol, side="left")
    hi = np.searchsorted(axis, edges[1:] + tol, side="right") - 1
    return lo, hi


def box_count(surface: FractalSurface, r: int, min_samples: int = MIN_SAMPLES) -> int:
    """Number of delta_r-boxes met by the graph, counted column by column."""
    partition = surface.config.partition
    _check_setting(partition)
    delta = scale_delta(partition, r)
    ncols = round(1 / delta)
    vmax = surface.values
    vmin = surface.values
    for k, axis in enumerate(surface.axes):
        lo, hi = _column_ranges(axis, delta, ncols)
        if np.min(hi - lo + 1) < min_samples:
            raise ResolutionError(
                f"level-{surface.level} surface has {int(np.min(hi - lo + 1))} samples per column "
                f"side on axis {k + 1} at scale r={r}; need {min_samples}", key="level")
        vmax = np.maximum(np.maximum.reduceat(vmax, lo, axis=k), np.take(vmax, hi, axis=k))
        vmin = np.minimum(np.minimum.reduceat(vmin, lo, axis=k), np.take(vmin, hi, axis=k))
    boxes = np.floor(vmax / delta) - np.floor(vmin / delta) + 1
    return int(boxes.sum())


def estimate_dimension(counts: dict[int, int], r_min: int, r_max: int, n_product: int) -> tuple[float, float]:
    """Least-squares slope of log N(r) against r log(prod N); residual is the max abs deviation."""
    if r_max - r_min < 2:
        raise ValueError("need r_max - r_min >= 2")
    rs = np.arange(r_min, r_max + 1)
    x = rs * math.log(n_product)
    y = np.log([counts[r] for r in rs])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.max(np.abs(y - (slope * x + intercept))))
    return float(slope), resid


def data_on_hyperplane(partition: Partition, values: np.ndarray, rtol: float = 1e-10) -> bool:
    """True when the node data (X_i, y_i) satisfy y = c0 + c . X exactly (up to rtol)."""
    pts = partition.node_points()
    y = np.asarray(values, dtype=float).ravel()
    A = np.column_stack([np.ones(len(pts)), pts])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return bool(np.max(np.abs(A @ coef - y)) <= rtol * max(1.0, float(np.abs(y).max())))


@dataclass
class DimensionReport:
    gamma: float
    xi1: float
    xi2: float
    case: str
    lower: float
    upper: float
    scales: list[dict]
    slope: float
    residual: float
    r_range: tuple[int, int]
    flags: list[str] = field(default_factory=list)

    @property
    def xi(self) -> float:
        return min(self.xi1, self.xi2)

    @property
    def passed(self) -> bool:
        return not any(f in self.flags for f in ("slope-above-upper", "slope-below-lower"))

    def to_json(self) -> dict:
        return {
            "gamma": self.gamma,
            "xi": self.xi,
            "xi1": self.xi1,
            "xi2": self.xi2,
            "case": self.case,
            "lower": self.lower,
            "upper": self.upper,
            "scales": self.scales,
            "slope": self.slope,
            "residual": self.residual,
            "r_range": list(self.r_range),
            "flags": self.flags,
            "pass": self.passed,
        }


def dimension_report(surface: FractalSurface, xi1: float, xi2: float | None = None,
                     r_range: tuple[int, int] = (2, 6)) -> DimensionReport:
    config = surface.config
    partition = config.partition
    _check_setting(partition)
    xi2 = xi1 if xi2 is None else xi2
    xi = min(xi1, xi2)
    flags = []
    if not config.alpha.is_constant:
        flags.append("pullback-extended")
    gam = gamma(config.alpha, config.maps)
    case, lower, upper = theory_bounds(gam, xi, partition.m, partition.counts)
    r_min, r_max = r_range
    counts = {r: box_count(surface, r) for r in range(r_min, r_max + 1)}
    delta = {r: scale_delta(partition, r) for r in counts}
    slope, resid = estimate_dimension(counts, r_min, r_max, math.prod(partition.counts))
    hyperplane = data_on_hyperplane(partition, surface.node_values())
    if hyperplane and config.alpha.norm > 0:
        flags.append("hypothesis-violated")
    if any(counts[r + 1] < counts[r] for r in range(r_min, r_max)):
        flags.append("counts-not-monotone")
    if not hyperplane:
        if slope > upper + SLOPE_SLACK:
            flags.append("slope-above-upper")
        if slope < lower - SLOPE_SLACK:
            flags.append("slope-below-lower")
    scales = [{"r": r, "delta": delta[r], "count": counts[r]} for r in sorted(counts)]
    return DimensionReport(gam, xi1, xi2, case, lower, upper, scales, slope, resid, (r_min, r_max), flags)
