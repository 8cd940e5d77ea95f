"""Scaling intervals that guarantee positivity, dominance and coordinate-wise
monotonicity, scaling selection, and a-posteriori checks on refined surfaces.

All minima and maxima are estimated on uniform sampling grids; the verdict that
matters is the one from :func:`verify_shape` on the built surface.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bernstein import DEFAULT_GRID, BernsteinSpec
from .errors import ConfigError, EmptyIntersectionError
from .fractal import (FractalSurface, ScalingField, build_surface, make_config,
                      multilinear_field)
from .germ import GermFunction
from .grid import AffineMaps, Partition

ALPHA_CAP = 1.0 - 1e-6
VERIFY_TOL = 1e-9
SHRINK = 0.5
MAX_SHRINK = 40


@dataclass(frozen=True)
class CellExtrema:
    lo: float
    hi: float
    resolution: int


@dataclass(frozen=True, eq=False)
class CellIntervals:
    """Admissible scaling interval [lo, hi] for every cell (arrays shaped like the cell grid)."""

    property: str
    lo: np.ndarray
    hi: np.ndarray
    info: dict = field(default_factory=dict)

    def __getitem__(self, j: Sequence[int]) -> tuple[float, float]:
        idx = tuple(jk - 1 for jk in j)
        return float(self.lo[idx]), float(self.hi[idx])

    def cells(self):
        return itertools.product(*(range(1, n + 1) for n in self.lo.shape))

    def to_list(self) -> list[dict]:
        return [{"cell": list(j), "lo": self[j][0], "hi": self[j][1]} for j in self.cells()]

    def intersection(self) -> tuple[float, float]:
        return float(self.lo.max()), float(self.hi.min())

    def contains(self, value: float, tol: float = 0.0) -> bool:
        return bool(np.all(self.lo - tol <= value) and np.all(value <= self.hi + tol))


def _sample_axes(maps: AffineMaps, grid_per_axis: int):
    if grid_per_axis < 33:
        raise ValueError("grid_per_axis must be at least 33")
    return maps.partition.sample_grid(grid_per_axis)


def _child_axes(maps: AffineMaps, j, base_axes):
    return [maps.apply_axis(k, j[k], base_axes[k]) for k in range(maps.m)]


def cell_extrema(f, maps: AffineMaps, j: Sequence[int], grid_per_axis: int = DEFAULT_GRID) -> CellExtrema:
    """Sampled min and max of f o u_j over the domain."""
    v = f.on_grid(_child_axes(maps, j, _sample_axes(maps, grid_per_axis)))
    return CellExtrema(float(v.min()), float(v.max()), grid_per_axis)


def _all_cell_extrema(f, maps: AffineMaps, grid_per_axis: int):
    counts = maps.partition.counts
    lo = np.empty(counts)
    hi = np.empty(counts)
    for j in maps.partition.cells():
        e = cell_extrema(f, maps, j, grid_per_axis)
        lo[tuple(jk - 1 for jk in j)] = e.lo
        hi[tuple(jk - 1 for jk in j)] = e.hi
    return lo, hi


def _degrees(n, m: int) -> tuple[int, ...]:
    return tuple(int(v) for v in np.broadcast_to(np.atleast_1d(n), (m,)))


def _clip(lo, hi):
    return np.clip(lo, -ALPHA_CAP, ALPHA_CAP), np.clip(hi, -ALPHA_CAP, ALPHA_CAP)


def default_cn(phi_max: float, f_sup: float) -> float:
    return 1.05 * max(phi_max, f_sup) + 1e-9


def positivity_interval(f: GermFunction, maps: AffineMaps, n, C_n: float | None = None,
                        grid_per_axis: int = DEFAULT_GRID) -> CellIntervals:
    """Per-cell scaling bounds keeping the Bernstein zipper fractal function of f >= 0."""
    axes = _sample_axes(maps, grid_per_axis)
    fv = f.on_grid(axes)
    if fv.min() < 0:
        raise ConfigError(f"positivity needs f >= 0; sampled min is {fv.min():.6g}", key="germ")
    spec = BernsteinSpec(f, _degrees(n, maps.m))
    bv = spec.on_grid(axes)
    phi_n, Phi_n = float(bv.min()), float(bv.max())
    f_sup = float(np.abs(fv).max())
    if C_n is None:
        C_n = default_cn(Phi_n, f_sup)
    if Phi_n <= 0:
        raise ConfigError("max of B_n f is not positive (f vanishes identically)", key="germ")
    if not (C_n > Phi_n and C_n > f_sup and C_n > phi_n):
        raise ConfigError(f"C_n = {C_n} must exceed max B_n f = {Phi_n} and ||f|| = {f_sup}",
                          key="shape.C_n")
    cmin, cmax = _all_cell_extrema(f, maps, grid_per_axis)
    lo = np.maximum(-cmin / (C_n - phi_n), -(C_n - cmax) / Phi_n)
    hi = np.minimum(cmin / Phi_n, (C_n - cmax) / (C_n - phi_n))
    lo, hi = _clip(lo, hi)
    info = {"phi_n": phi_n, "Phi_n": Phi_n, "C_n": C_n, "grid_per_axis": grid_per_axis}
    return CellIntervals("positivity", lo, hi, info)


def difference_germ(f: GermFunction, g: GermFunction) -> GermFunction:
    grad = None
    if f.grad is not None and g.grad is not None:
        grad = lambda X: f.grad(X) - g.grad(X)  # noqa: E731
    return GermFunction(name=f"({f.name})-({g.name})", fn=lambda X: f.fn(X) - g.fn(X),
                        lower=f.lower, upper=f.upper, grad=grad)


def dominance_interval(f: GermFunction, g: GermFunction, maps: AffineMaps, n,
                       grid_per_axis: int = DEFAULT_GRID, pairwise: bool = False) -> CellIntervals:
    """Per-cell [0, hi] keeping the fractal function of f above g.

    With ``pairwise`` the bound keeps the fractal function of f above the fractal function
    of g built with the same maps and scaling.
    """
    axes = _sample_axes(maps, grid_per_axis)
    h = difference_germ(f, g)
    if h.on_grid(axes).min() < 0:
        raise ConfigError("dominance needs f >= g on the sampling grid", key="shape.g")
    degrees = _degrees(n, maps.m)
    if pairwise:
        denom = float(BernsteinSpec(h, degrees).on_grid(axes).max())
        what = "max B_n(f-g)"
    else:
        denom = float(BernsteinSpec(f, degrees).on_grid(axes).max()) - float(g.on_grid(axes).min())
        what = "max B_n f - min g"
    cmin, _ = _all_cell_extrema(h, maps, grid_per_axis)
    if denom <= 0:
        if np.all(cmin == 0):
            # f == g on the samples: only alpha = 0 is admissible
            hi = np.zeros_like(cmin)
        else:
            raise ConfigError(f"{what} = {denom:.6g} must be positive", key="shape.g")
    else:
        hi = np.minimum(cmin / denom, 1.0)
    lo, hi = _clip(np.zeros_like(hi), np.maximum(hi, 0.0))
    return CellIntervals("dominance", lo, hi,
                         {"denominator": denom, "pairwise": pairwise, "grid_per_axis": grid_per_axis})


def monotone_interval(f: GermFunction, maps: AffineMaps, n, l: int,
                      grid_per_axis: int = DEFAULT_GRID) -> CellIntervals:
    """Signed per-cell bounds keeping the fractal function increasing along 0-based axis ``l``."""
    axes = _sample_axes(maps, grid_per_axis)
    fv = f.on_grid(axes)
    if np.diff(fv, axis=l).min() < -1e-12 * max(1.0, float(np.abs(fv).max())):
        raise ConfigError(f"germ is not increasing along axis {l + 1} on the samples", key="shape.axis")
    spec = BernsteinSpec(f, _degrees(n, maps.m))
    Gamma_n = float(spec.partial_on_grid(axes, l).max())
    if Gamma_n <= 0:
        raise ConfigError(f"max dB_n f/dx_{l + 1} = {Gamma_n:.3g}; germ is constant along that axis",
                          key="shape.axis")
    counts = maps.partition.counts
    lo = np.empty(counts)
    hi = np.empty(counts)
    for j in maps.partition.cells():
        child = _child_axes(maps, j, axes)
        mesh = np.meshgrid(*child, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=-1)
        dg = maps.slopes[l][j[l] - 1] * np.asarray(f.partial(pts, l))
        idx = tuple(jk - 1 for jk in j)
        if maps.increasing(l, j[l]):
            lo[idx], hi[idx] = 0.0, max(float(dg.min()), 0.0) / Gamma_n
        else:
            lo[idx], hi[idx] = min(float(dg.max()), 0.0) / Gamma_n, 0.0
    lo, hi = _clip(lo, hi)
    hi = np.minimum(hi, ALPHA_CAP)
    return CellIntervals("monotone", lo, hi,
                         {"axis": l, "Gamma_n": Gamma_n, "gradient": "analytic" if f.has_gradient else "finite-difference",
                          "grid_per_axis": grid_per_axis})


def combine(*sets: CellIntervals) -> CellIntervals:
    """Cell-wise intersection of several interval sets."""
    lo = np.maximum.reduce([s.lo for s in sets])
    hi = np.minimum.reduce([s.hi for s in sets])
    return CellIntervals("+".join(s.property for s in sets), lo, hi, {"parts": [s.info for s in sets]})


def _blocking(intervals: CellIntervals) -> list[list[int]]:
    lo, hi = intervals.intersection()
    out = []
    for j in intervals.cells():
        a, b = intervals[j]
        if a == lo or b == hi or a > b:
            out.append(list(j))
    return out


def pick_scaling(intervals: CellIntervals, strategy: str = "max_constant",
                 partition: Partition | None = None, nonzero: bool = False) -> ScalingField:
    """Choose a scaling field inside every cell interval.

    ``max_constant`` takes the admissible constant of largest magnitude, preferring positive
    values.  ``node_blend`` builds a multilinear pullback field from per-cell midpoints averaged
    onto the partition nodes and shrinks it toward zero until it fits every cell.
    """
    if strategy == "max_constant":
        lo, hi = intervals.intersection()
        if lo > hi:
            raise EmptyIntersectionError(
                f"per-cell intervals have empty intersection [{lo:.6g}, {hi:.6g}]",
                blocking=_blocking(intervals))
        c = hi if hi > 0 else (lo if lo < 0 else 0.0)
        if nonzero and c == 0:
            raise EmptyIntersectionError("the only admissible constant is 0", blocking=_blocking(intervals))
        return ScalingField.global_constant(c)
    if strategy == "node_blend":
        if partition is None:
            raise ValueError("node_blend needs the partition")
        return _node_blend(intervals, partition)
    raise ConfigError(f"unknown scaling strategy {strategy!r}", key="shape.strategy")


def _node_values(intervals: CellIntervals, counts) -> np.ndarray:
    """Average of incident-cell midpoints, clamped into the incident cells' common interval."""
    m = len(counts)
    shape = tuple(n + 1 for n in counts)
    targets = 0.5 * (intervals.lo + intervals.hi)
    out = np.zeros(shape)
    weight = np.zeros(shape)
    lo = np.full(shape, -np.inf)
    hi = np.full(shape, np.inf)
    for corner in itertools.product((0, 1), repeat=m):
        sl = tuple(slice(c, c + n) for c, n in zip(corner, counts))
        out[sl] += targets
        weight[sl] += 1
        lo[sl] = np.maximum(lo[sl], intervals.lo)
        hi[sl] = np.minimum(hi[sl], intervals.hi)
    out /= weight
    ok = lo <= hi
    out[ok] = np.clip(out[ok], lo[ok], hi[ok])
    return out


def _cell_corner_range(node_vals: np.ndarray, counts):
    m = len(counts)
    views = []
    for corner in itertools.product((0, 1), repeat=m):
        views.append(node_vals[tuple(slice(c, c + n) for c, n in zip(corner, counts))])
    stack = np.stack(views)
    return stack.min(axis=0), stack.max(axis=0)


def _node_blend(intervals: CellIntervals, partition: Partition) -> ScalingField:
    counts = partition.counts
    if intervals.lo.shape != counts:
        raise ValueError("interval grid does not match the partition")
    if np.any(intervals.lo > intervals.hi):
        raise EmptyIntersectionError("a cell has an empty interval",
                                     blocking=[list(j) for j in intervals.cells()
                                               if intervals[j][0] > intervals[j][1]])
    nodes = _node_values(intervals, counts)
    scale = 1.0
    for _ in range(MAX_SHRINK + 1):
        vmin, vmax = _cell_corner_range(scale * nodes, counts)
        if np.all(vmin >= intervals.lo) and np.all(vmax <= intervals.hi):
            if not np.any(nodes) or scale == 0:
                return ScalingField.global_constant(0.0)
            return ScalingField.pullback(multilinear_field(partition, scale * nodes), partition,
                                         bound=float(np.abs(scale * nodes).max()),
                                         name=f"node-blend(scale={scale:g})")
        scale *= SHRINK
    if intervals.contains(0.0):
        return ScalingField.global_constant(0.0)
    raise EmptyIntersectionError("node blend did not fit after shrinking",
                                 blocking=_blocking(intervals))


@dataclass(frozen=True)
class NonNegative:
    name = "nonnegative"


@dataclass(frozen=True, eq=False)
class DominatesSurfaceOf:
    other: FractalSurface
    name = "dominates-surface"


@dataclass(frozen=True, eq=False)
class DominatesFunction:
    g: GermFunction
    name = "dominates"


@dataclass(frozen=True)
class IncreasingAlong:
    axis: int
    name = "increasing"


@dataclass
class ShapeReport:
    property: str
    worst_violation: float
    location: list[float]
    passed: bool
    intervals: CellIntervals | None = None
    chosen_alpha: dict | None = None
    level: int = 0

    def to_json(self) -> dict:
        return {
            "property": self.property,
            "per_cell_intervals": self.intervals.to_list() if self.intervals is not None else None,
            "chosen_alpha": self.chosen_alpha,
            "worst_violation": self.worst_violation,
            "location": self.location,
            "pass": self.passed,
            "level": self.level,
        }


def verify_shape(surface: FractalSurface, predicate, tol: float = VERIFY_TOL,
                 intervals: CellIntervals | None = None, min_level: int = 4) -> ShapeReport:
    """Check the target property on every stored value of the surface."""
    if surface.level < min_level:
        raise ValueError(f"verification needs a surface of level >= {min_level}")
    if isinstance(predicate, NonNegative):
        q = surface.values
    elif isinstance(predicate, DominatesSurfaceOf):
        if predicate.other.shape != surface.shape:
            raise ValueError("surfaces must share the refinement grid")
        q = surface.values - predicate.other.values
    elif isinstance(predicate, DominatesFunction):
        q = surface.values - predicate.g.on_grid(surface.axes)
    elif isinstance(predicate, IncreasingAlong):
        q = np.diff(surface.values, axis=predicate.axis)
    else:
        raise TypeError(f"unknown predicate {predicate!r}")
    flat = int(np.argmin(q))
    idx = np.unravel_index(flat, q.shape)
    worst = float(q[idx])
    location = [float(surface.axes[k][i]) for k, i in enumerate(idx)]
    return ShapeReport(predicate.name, worst, location, worst >= -tol, intervals,
                       surface.config.alpha.describe(), surface.level)


@dataclass
class ConvexSequenceReport:
    degrees: list[list[int]]
    increasing_gaps: list[float]
    below_germ_gaps: list[float]
    passed: bool

    def to_json(self) -> dict:
        return {"degrees": self.degrees, "min_successive_gap": self.increasing_gaps,
                "min_germ_gap": self.below_germ_gaps, "pass": self.passed}


def convex_sequence_check(f: GermFunction, partition: Partition, signature, alpha, n_list,
                          level: int, tol: float = VERIFY_TOL) -> ConvexSequenceReport:
    """For convex f and nonnegative scaling: surface_n <= surface_{n+1} <= f on the level grid."""
    if not isinstance(alpha, ScalingField):
        alpha = ScalingField.global_constant(alpha)
    if alpha.is_constant and alpha.constant < 0:
        raise ConfigError("convex one-sided approximation needs a nonnegative scaling", key="scaling")
    degrees = [_degrees(n, partition.m) for n in n_list]
    surfaces = [build_surface(make_config(partition, signature, alpha, f, d), level) for d in degrees]
    fv = surfaces[0].germ_values()
    below = [float((fv - s.values).min()) for s in surfaces]
    inc = [float((b.values - a.values).min()) for a, b in zip(surfaces, surfaces[1:])]
    ok = all(v >= -tol for v in below + inc)
    return ConvexSequenceReport([list(d) for d in degrees], inc, below, ok)
