"""Zipper alpha-fractal functions on Cartesian grids.

The surface is evaluated exactly on the self-similar refinement grids: level 0
holds the partition nodes, and level ``s+1`` holds the images of level ``s``
under every cell map ``u_j``.  Each child value follows from its parent by

    F(u_j(X)) = f(u_j(X)) + alpha_j(X) * (F(X) - b(X)).
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .bernstein import DEFAULT_GRID, BernsteinSpec
from .errors import BudgetError, ConfigError, MatchingError
from .germ import GermFunction, TabulatedGrid, builtin, lift_tabulated
from .grid import AffineMaps, Partition, Signature, build_affine_maps, locate_cell

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 2**24
MATCH_TOL = 1e-10
CORNER_TOL = 1e-10
ALPHA_GRID = 65


class ScalingField:
    """Vertical scaling alpha_j(X): a global constant, or a(u_j(X)) for a global
    continuous function ``a`` with sup-norm below one."""

    def __init__(self, constant: float | None = None, func=None, partition: Partition | None = None,
                 bound: float | None = None, name: str = ""):
        if (constant is None) == (func is None):
            raise ValueError("give exactly one of constant or func")
        self.constant = None if constant is None else float(constant)
        self.func = func
        self.partition = partition
        self.name = name
        if self.constant is not None:
            if not abs(self.constant) < 1:
                raise ConfigError(f"scaling constant {self.constant} must satisfy |c| < 1",
                                  key="scaling.constant")
            self._norm = abs(self.constant)
        else:
            if partition is None:
                raise ValueError("pullback scaling needs the partition to sample its norm")
            sampled = float(np.max(np.abs(func.on_grid(partition.sample_grid(ALPHA_GRID)))))
            if bound is not None and not bound < 1:
                raise ConfigError(f"declared scaling bound {bound} is not below 1", key="scaling.pullback")
            if not sampled < 1:
                raise ConfigError(f"pullback scaling reaches |a| = {sampled:.6g} >= 1", key="scaling.pullback")
            self._norm = sampled if bound is None else max(sampled, float(bound))

    @classmethod
    def global_constant(cls, c: float) -> "ScalingField":
        return cls(constant=c)

    @classmethod
    def pullback(cls, func, partition: Partition, bound: float | None = None, name: str = "") -> "ScalingField":
        return cls(func=func, partition=partition, bound=bound, name=name)

    @classmethod
    def per_cell(cls, values) -> "ScalingField":
        """Per-cell constants are only admissible when they coincide."""
        v = np.asarray(values, dtype=float).ravel()
        if v.size and np.all(v == v[0]):
            return cls(constant=float(v[0]))
        raise ConfigError(
            "unequal per-cell scaling constants violate the matching condition across adjacent "
            "cells (constants adjacent along any axis must agree, which forces a global constant); "
            "use a pullback field, e.g. a multilinear blend of per-cell targets",
            key="scaling.per_cell",
        )

    @property
    def is_constant(self) -> bool:
        return self.constant is not None

    @property
    def norm(self) -> float:
        """Sup-norm over all cells (sampled for pullback fields)."""
        return self._norm

    def alpha(self, maps: AffineMaps, j: Sequence[int], X):
        """alpha_j(X) for points X of shape (m,) or (P, m)."""
        X = np.asarray(X, dtype=float)
        if self.is_constant:
            return self.constant if X.ndim == 1 else np.full(X.shape[0], self.constant)
        return self.func(maps.apply(j, X))

    def on_child_grid(self, child_axes: Sequence[np.ndarray]):
        """alpha_j on the tensor grid whose images under u_j are ``child_axes``."""
        if self.is_constant:
            return self.constant
        return self.func.on_grid(child_axes)

    def cell_sup(self, maps: AffineMaps, per_axis: int = ALPHA_GRID) -> np.ndarray:
        """Sampled sup |alpha_j| for every cell, shaped like the cell grid."""
        counts = maps.partition.counts
        if self.is_constant:
            return np.full(counts, abs(self.constant))
        out = np.empty(counts)
        base = maps.partition.sample_grid(per_axis)
        for j in maps.partition.cells():
            child = [maps.apply_axis(k, j[k], base[k]) for k in range(maps.m)]
            out[tuple(jk - 1 for jk in j)] = np.max(np.abs(self.func.on_grid(child)))
        return out

    def describe(self) -> dict:
        if self.is_constant:
            return {"constant": self.constant}
        return {"pullback": self.name or "function", "norm": self.norm}


@dataclass(frozen=True, eq=False)
class BaseFunction:
    """The base function b subtracted inside the vertical maps."""

    evaluator: object
    tag: str
    degrees: tuple[int, ...] | None = None

    def __call__(self, X):
        return self.evaluator(X)

    def on_grid(self, axes):
        return self.evaluator.on_grid(axes)

    @classmethod
    def bernstein(cls, germ: GermFunction, degrees: Sequence[int]) -> "BaseFunction":
        spec = BernsteinSpec(germ, tuple(degrees))
        return cls(spec, "bernstein", spec.degrees)

    @classmethod
    def user(cls, evaluator) -> "BaseFunction":
        return cls(evaluator, "user")

    def describe(self) -> dict:
        if self.tag == "bernstein":
            return {"bernstein": list(self.degrees)}
        return {"user": getattr(self.evaluator, "name", "function")}


@dataclass(frozen=True, eq=False)
class FractalConfig:
    partition: Partition
    signature: Signature
    alpha: ScalingField
    germ: GermFunction
    base: BaseFunction
    maps: AffineMaps = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "maps", build_affine_maps(self.partition, self.signature))
        if self.germ.m != self.partition.m:
            raise ConfigError("germ dimension does not match the partition", key="germ")
        corners = self.partition.corners()
        gap = np.max(np.abs(np.asarray(self.germ(corners)) - np.asarray(self.base(corners))))
        if gap > CORNER_TOL:
            raise ConfigError(f"base function differs from the germ by {gap:.3g} at a domain corner",
                              key="base")

    @property
    def m(self) -> int:
        return self.partition.m


def make_config(partition: Partition, signature, alpha, germ: GermFunction, base=None) -> FractalConfig:
    """Convenience constructor: ``alpha`` may be a float, ``signature`` a bit sequence and
    ``base`` a degree vector (Bernstein) or an evaluator."""
    if not isinstance(signature, Signature):
        signature = Signature(tuple(signature))
    if not isinstance(alpha, ScalingField):
        alpha = ScalingField.global_constant(alpha)
    if base is None:
        base = BaseFunction.bernstein(germ, (1,) * partition.m)
    elif not isinstance(base, BaseFunction):
        if np.ndim(base) == 1 or isinstance(base, int):
            base = BaseFunction.bernstein(germ, np.atleast_1d(base))
        else:
            base = BaseFunction.user(base)
    return FractalConfig(partition, signature, alpha, germ, base)


def level_shape(partition: Partition, level: int) -> tuple[int, ...]:
    return tuple(n ** (level + 1) + 1 for n in partition.counts)


def level_count(partition: Partition, level: int) -> int:
    return math.prod(level_shape(partition, level))


def nearest_index(axis: np.ndarray, x, tol: float = 1e-9) -> np.ndarray:
    """Index of the grid coordinate nearest to each x; asserts a match within tol * span."""
    x = np.asarray(x, dtype=float)
    i = np.clip(np.searchsorted(axis, x), 1, axis.size - 1)
    left = axis[i - 1]
    i = np.where(np.abs(x - left) <= np.abs(axis[i] - x), i - 1, i)
    span = axis[-1] - axis[0]
    if np.any(np.abs(axis[i] - x) > tol * span):
        raise ValueError("coordinate is not on the refinement grid")
    return i


@dataclass(frozen=True, eq=False)
class FractalSurface:
    """Exact values of the fractal function on the level-``level`` refinement grid."""

    config: FractalConfig
    level: int
    axes: tuple[np.ndarray, ...]
    values: np.ndarray
    level_axes: tuple[tuple[np.ndarray, ...], ...] = field(repr=False)
    boundary_mismatch: float = 0.0

    @property
    def m(self) -> int:
        return self.config.m

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    def index_of(self, X) -> tuple[int, ...]:
        X = np.asarray(X, dtype=float)
        return tuple(int(nearest_index(a, X[k])) for k, a in enumerate(self.axes))

    def node_values(self) -> np.ndarray:
        """Stored values at the original partition nodes."""
        idx = [nearest_index(a, x) for a, x in zip(self.axes, self.config.partition.nodes)]
        return self.values[np.ix_(*idx)]

    def germ_values(self) -> np.ndarray:
        return self.config.germ.on_grid(self.axes)

    def with_values(self, values: np.ndarray) -> "FractalSurface":
        return replace(self, values=np.asarray(values, dtype=float))

    def __call__(self, X, depth: int | None = None) -> float:
        """Stored value when X is a grid point, otherwise a depth-limited point query."""
        X = np.asarray(X, dtype=float)
        try:
            return float(self.values[self.index_of(X)])
        except ValueError:
            return eval_point(self.config, X, self.level if depth is None else depth)[0]


def _cell_blocks(config: FractalConfig, axes: Sequence[np.ndarray]):
    """Yield (cell, child axes in grid order, slices, flip axes) for one refinement step."""
    maps = config.maps
    lens = [a.size - 1 for a in axes]
    for j in config.partition.cells():
        child = []
        flips = []
        slices = []
        for k in range(config.m):
            c = maps.apply_axis(k, j[k], axes[k])
            if not maps.increasing(k, j[k]):
                c = c[::-1]
                flips.append(k)
            child.append(c)
            start = (j[k] - 1) * lens[k]
            slices.append(slice(start, start + lens[k] + 1))
        yield j, child, tuple(slices), tuple(flips)


def _refine(config: FractalConfig, axes, values, tol: float):
    """One refinement step; returns new axes, values and the boundary mismatch."""
    new_shape = tuple(n * (a.size - 1) + 1 for n, a in zip(config.partition.counts, axes))
    new_axes = [np.full(s, np.nan) for s in new_shape]
    new_vals = np.empty(new_shape)
    filled = np.zeros(new_shape, dtype=bool)
    gap = values - config.base.on_grid(axes)
    scale = max(1.0, float(np.max(np.abs(values))))
    mismatch = 0.0
    for j, child, slices, flips in _cell_blocks(config, axes):
        d = np.flip(gap, axis=flips) if flips else gap
        block = config.germ.on_grid(child) + config.alpha.on_child_grid(child) * d
        region = new_vals[slices]
        seen = filled[slices]
        if seen.any():
            diff = float(np.max(np.abs(region[seen] - block[seen])))
            mismatch = max(mismatch, diff)
            if diff > tol * scale:
                raise MatchingError(
                    f"cell {j}: boundary values disagree by {diff:.3g}; the scaling field or base "
                    "function violates the matching condition"
                )
        region[~seen] = block[~seen]
        seen[...] = True
        for k in range(config.m):
            ax = new_axes[k][slices[k]]
            unset = np.isnan(ax)
            ax[unset] = child[k][unset]
    return tuple(new_axes), new_vals, mismatch


def build_surface(config: FractalConfig, level: int, budget: int = DEFAULT_BUDGET,
                  tol: float = MATCH_TOL) -> FractalSurface:
    if level < 0:
        raise ConfigError("level must be >= 0", key="level")
    count = level_count(config.partition, level)
    if count > budget:
        raise BudgetError(f"level {level} needs {count} stored values, budget is {budget}",
                          count=count, budget=budget)
    axes = tuple(np.array(x) for x in config.partition.nodes)
    values = config.germ.on_grid(axes)
    history = [axes]
    worst = 0.0
    for _ in range(level):
        axes, values, mismatch = _refine(config, axes, values, tol)
        history.append(axes)
        worst = max(worst, mismatch)
    for a in axes:
        a.setflags(write=False)
    values.setflags(write=False)
    log.debug("built level %d surface with %d values", level, values.size)
    return FractalSurface(config, level, axes, values, tuple(history), worst)


def build_interpolant(data: TabulatedGrid, signature, alpha, base=None, level: int = 4,
                      budget: int = DEFAULT_BUDGET) -> FractalSurface:
    """Fractal interpolant of node data; the germ is the multilinear lift of the data and the
    base defaults to its degree-(N_1,...,N_m) Bernstein polynomial."""
    germ = lift_tabulated(data)
    if base is None:
        base = data.partition.counts
    return build_surface(make_config(data.partition, signature, alpha, germ, base), level, budget)


def sup_gap(config: FractalConfig, grid_per_axis: int = DEFAULT_GRID, extra_axes=None) -> float:
    """Sampled sup |f - b|, optionally also over an extra tensor grid."""
    axes = config.partition.sample_grid(grid_per_axis)
    gap = float(np.max(np.abs(config.germ.on_grid(axes) - config.base.on_grid(axes))))
    if extra_axes is not None:
        gap = max(gap, float(np.max(np.abs(config.germ.on_grid(extra_axes) - config.base.on_grid(extra_axes)))))
    return gap


def perturbation_bound(config: FractalConfig, grid_per_axis: int = DEFAULT_GRID, extra_axes=None) -> float:
    """||alpha|| / (1 - ||alpha||) * sampled ||f - b||."""
    a = config.alpha.norm
    if a == 0:
        return 0.0
    return a / (1.0 - a) * sup_gap(config, grid_per_axis, extra_axes)


def eval_point(config: FractalConfig, X, depth: int, grid_per_axis: int = DEFAULT_GRID) -> tuple[float, float]:
    """Value at an arbitrary point by descending ``depth`` cells and replaying the recursion.

    The returned bound is the product of |alpha| along the path times the perturbation bound,
    i.e. the worst error carried up from seeding with the germ at the deepest preimage.
    """
    maps = config.maps
    X = np.asarray(X, dtype=float)
    path = [X]
    cells = []
    cur = X
    lo, hi = config.partition.lower, config.partition.upper
    for _ in range(depth):
        j = locate_cell(config.partition, cur)
        cur = np.clip(maps.invert(j, cur), lo, hi)
        cells.append(j)
        path.append(cur)
    value = float(config.germ(path[-1]))
    prod = 1.0
    for i in range(depth - 1, -1, -1):
        parent = path[i + 1]
        a = float(config.alpha.alpha(maps, cells[i], parent))
        value = float(config.germ(path[i])) + a * (value - float(config.base(parent)))
        prod *= abs(a)
    bound = prod * perturbation_bound(config, grid_per_axis) if prod else 0.0
    return value, bound


def _parent_embedding(surface: FractalSurface):
    parents = surface.level_axes[-2]
    return parents, [nearest_index(a, p) for a, p in zip(surface.axes, parents)]


def residual_map(surface: FractalSurface) -> np.ndarray:
    """|stored - recomputed| for every child slot of the last refinement step (max over duplicates)."""
    out = np.zeros(surface.shape)
    if surface.level == 0:
        return np.abs(surface.values - surface.germ_values())
    config = surface.config
    parents, emb = _parent_embedding(surface)
    pv = surface.values[np.ix_(*emb)]
    gap = pv - config.base.on_grid(parents)
    for j, child, slices, flips in _cell_blocks(config, parents):
        d = np.flip(gap, axis=flips) if flips else gap
        expect = config.germ.on_grid(child) + config.alpha.on_child_grid(child) * d
        np.maximum(out[slices], np.abs(surface.values[slices] - expect), out=out[slices])
    return out


def residual_check(surface: FractalSurface, samples: int | None = None, seed: int = 0) -> float:
    """Max self-referential residual over all stored points, or over ``samples`` random ones."""
    res = residual_map(surface)
    if samples is None or samples >= res.size:
        return float(res.max())
    rng = np.random.default_rng(seed)
    pick = rng.choice(res.size, size=samples, replace=False)
    return float(res.ravel()[pick].max())


def rb_iterates(surface: FractalSurface, iterations: int) -> list[float]:
    """Iterate the Read-Bajraktarevic operator on the surface grid starting from the germ.

    Returns the sup-distance between successive iterates; the last iterate is compared with the
    stored surface in :func:`rb_fixed_point_gap`.
    """
    g, diffs = _rb_run(surface, iterations)
    return diffs


def rb_fixed_point_gap(surface: FractalSurface, iterations: int) -> float:
    g, _ = _rb_run(surface, iterations)
    return float(np.max(np.abs(g - surface.values)))


def _rb_run(surface: FractalSurface, iterations: int):
    if surface.level == 0:
        raise ValueError("the operator needs a surface of level >= 1")
    config = surface.config
    parents, emb = _parent_embedding(surface)
    b = config.base.on_grid(parents)
    blocks = []
    for j, child, slices, flips in _cell_blocks(config, parents):
        blocks.append((slices, flips, config.germ.on_grid(child), config.alpha.on_child_grid(child)))
    g = surface.germ_values()
    diffs = []
    for _ in range(iterations):
        gap = g[np.ix_(*emb)] - b
        new = np.empty_like(g)
        for slices, flips, fv, av in blocks:
            d = np.flip(gap, axis=flips) if flips else gap
            new[slices] = fv + av * d
        diffs.append(float(np.max(np.abs(new - g))))
        g = new
    return g, diffs


def multilinear_field(partition: Partition, node_values) -> GermFunction:
    """Global multilinear function through values at the partition nodes (used for pullback fields)."""
    return lift_tabulated(TabulatedGrid(partition, np.asarray(node_values, dtype=float)), name="node-blend")


def germ_scaling(name: str, partition: Partition, scale: float = 1.0, **params) -> ScalingField:
    """Pullback field a = scale * (builtin germ)."""
    g = builtin(name, partition, **params)
    scaled = GermFunction(name=f"{scale}*{name}", fn=lambda X: scale * g.fn(X), lower=g.lower, upper=g.upper)
    return ScalingField.pullback(scaled, partition, name=scaled.name)
