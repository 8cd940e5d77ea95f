"""Cartesian partitions, zipper signatures and the signed affine domain maps.

Cell indices are 1-based along every axis (``j_k in 1..N_k``); node indices
are 0-based (``0..N_k``).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError

JOIN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Partition:
    """Per-axis strictly increasing node vectors."""

    nodes: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.nodes) < 1:
            raise ConfigError("partition needs at least one axis", key="domain")
        cleaned = []
        for k, x in enumerate(self.nodes):
            x = np.array(x, dtype=float)
            if x.ndim != 1 or x.size < 3:
                raise ConfigError(
                    f"axis {k + 1}: need at least 3 nodes (2 subintervals), got {x.size}",
                    key=f"domain.axes[{k}]",
                )
            if not np.all(np.isfinite(x)):
                raise ConfigError(f"axis {k + 1}: non-finite node", key=f"domain.axes[{k}]")
            if np.any(np.diff(x) <= 0):
                raise ConfigError(
                    f"axis {k + 1}: nodes must be strictly increasing", key=f"domain.axes[{k}]"
                )
            x.setflags(write=False)
            cleaned.append(x)
        object.__setattr__(self, "nodes", tuple(cleaned))

    @classmethod
    def uniform(cls, counts: Sequence[int], lo: Sequence[float] | float = 0.0,
                hi: Sequence[float] | float = 1.0) -> "Partition":
        m = len(counts)
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (m,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (m,))
        return cls(tuple(np.linspace(a, b, n + 1) for a, b, n in zip(lo, hi, counts)))

    @property
    def m(self) -> int:
        return len(self.nodes)

    @property
    def counts(self) -> tuple[int, ...]:
        """Number of subintervals N_k per axis."""
        return tuple(x.size - 1 for x in self.nodes)

    @property
    def lower(self) -> np.ndarray:
        return np.array([x[0] for x in self.nodes])

    @property
    def upper(self) -> np.ndarray:
        return np.array([x[-1] for x in self.nodes])

    @property
    def lengths(self) -> np.ndarray:
        return self.upper - self.lower

    def is_uniform(self, rtol: float = 1e-12) -> bool:
        for x in self.nodes:
            h = np.diff(x)
            if np.max(np.abs(h - h.mean())) > rtol * (x[-1] - x[0]):
                return False
        return True

    def cells(self):
        """Iterate over all cell multi-indices in lexicographic order."""
        return itertools.product(*(range(1, n + 1) for n in self.counts))

    def corners(self) -> np.ndarray:
        """The 2^m corners of the domain, shape (2^m, m)."""
        return np.array(list(itertools.product(*((x[0], x[-1]) for x in self.nodes))))

    def node_points(self) -> np.ndarray:
        """All tensor-grid nodes in lexicographic order, shape (prod(N_k+1), m)."""
        mesh = np.meshgrid(*self.nodes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    def contains(self, X, tol: float = 0.0) -> bool:
        X = np.asarray(X, dtype=float)
        slack = tol * self.lengths
        return bool(np.all(X >= self.lower - slack) and np.all(X <= self.upper + slack))

    def sample_grid(self, per_axis: int) -> tuple[np.ndarray, ...]:
        """Uniform sampling axes including all boundary faces."""
        return tuple(np.linspace(x[0], x[-1], per_axis) for x in self.nodes)


@dataclass(frozen=True)
class Signature:
    """One zipper bit per axis."""

    bits: tuple[int, ...]

    def __post_init__(self):
        bits = []
        for k, b in enumerate(self.bits):
            if isinstance(b, (list, tuple, np.ndarray)):
                raise ConfigError(
                    f"axis {k + 1}: per-subinterval signatures are not supported; "
                    "consecutive unequal bits break the join condition, use one bit per axis",
                    key=f"signature[{k}]",
                )
            if b not in (0, 1):
                raise ConfigError(f"axis {k + 1}: signature bit must be 0 or 1, got {b!r}",
                                  key=f"signature[{k}]")
            bits.append(int(b))
        object.__setattr__(self, "bits", tuple(bits))

    @property
    def m(self) -> int:
        return len(self.bits)

    def __getitem__(self, k: int) -> int:
        return self.bits[k]


def tau(j: int, endpoint: int, n_cells: int, eps: int) -> int:
    """Node index hit by the endpoint ``x_0`` (endpoint=0) or ``x_N`` (endpoint=N)
    under the ``j``-th map of an axis with ``n_cells`` subintervals."""
    if not 1 <= j <= n_cells:
        raise ValueError(f"cell index {j} out of range 1..{n_cells}")
    if endpoint not in (0, n_cells):
        raise ValueError(f"endpoint must be 0 or {n_cells}, got {endpoint}")
    if eps not in (0, 1):
        raise ValueError(f"signature bit must be 0 or 1, got {eps}")
    odd = j % 2 == 1
    if odd == (endpoint == 0):
        return j - 1 + eps
    return j - eps


@dataclass(frozen=True, eq=False)
class AffineMaps:
    """Signed affine maps u_{k,j}(x) = slope * x + intercept for every axis and cell.

    ``slopes[k][j-1]`` / ``intercepts[k][j-1]`` hold the map of cell ``j`` on axis
    ``k``. Evaluation is anchored at the image of the left endpoint so that the
    endpoint conditions hold exactly at ``x_0``.
    """

    partition: Partition
    signature: Signature
    slopes: tuple[np.ndarray, ...]
    intercepts: tuple[np.ndarray, ...]
    anchors: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def m(self) -> int:
        return self.partition.m

    def increasing(self, k: int, j: int) -> bool:
        return bool(self.slopes[k][j - 1] > 0)

    def apply_axis(self, k: int, j: int, x):
        x0 = self.partition.nodes[k][0]
        return self.anchors[k][j - 1] + self.slopes[k][j - 1] * (np.asarray(x, dtype=float) - x0)

    def invert_axis(self, k: int, j: int, y):
        x0 = self.partition.nodes[k][0]
        return x0 + (np.asarray(y, dtype=float) - self.anchors[k][j - 1]) / self.slopes[k][j - 1]

    def apply(self, j: Sequence[int], X) -> np.ndarray:
        """Image of X (shape (m,) or (P, m)) under u_j."""
        X = np.asarray(X, dtype=float)
        self._check_cell(j)
        return np.stack([self.apply_axis(k, j[k], X[..., k]) for k in range(self.m)], axis=-1)

    def invert(self, j: Sequence[int], X, tol: float = 1e-12) -> np.ndarray:
        """Preimage under u_j of a point lying in cell j."""
        X = np.asarray(X, dtype=float)
        self._check_cell(j)
        for k in range(self.m):
            x = self.partition.nodes[k]
            slack = tol * (x[-1] - x[0])
            xk = X[..., k]
            if np.any(xk < x[j[k] - 1] - slack) or np.any(xk > x[j[k]] + slack):
                raise DomainError(f"point outside cell {tuple(j)} along axis {k + 1}")
        return np.stack([self.invert_axis(k, j[k], X[..., k]) for k in range(self.m)], axis=-1)

    def _check_cell(self, j):
        if len(j) != self.m:
            raise ValueError(f"cell index has {len(j)} entries, expected {self.m}")
        for k, (jk, n) in enumerate(zip(j, self.partition.counts)):
            if not 1 <= jk <= n:
                raise ValueError(f"axis {k + 1}: cell index {jk} out of range 1..{n}")


def build_affine_maps(p: Partition, sig: Signature) -> AffineMaps:
    if sig.m != p.m:
        raise ConfigError(f"signature has {sig.m} bits for a {p.m}-dimensional partition",
                          key="signature")
    slopes, intercepts, anchors = [], [], []
    for k, x in enumerate(p.nodes):
        n = x.size - 1
        length = x[-1] - x[0]
        if not length > 0:
            raise ConfigError(f"axis {k + 1}: degenerate partition", key=f"domain.axes[{k}]")
        s = np.empty(n)
        c = np.empty(n)
        a = np.empty(n)
        for j in range(1, n + 1):
            y0 = x[tau(j, 0, n, sig[k])]
            y1 = x[tau(j, n, n, sig[k])]
            s[j - 1] = (y1 - y0) / length
            c[j - 1] = y0 - s[j - 1] * x[0]
            a[j - 1] = y0
        for arr in (s, c, a):
            arr.setflags(write=False)
        slopes.append(s)
        intercepts.append(c)
        anchors.append(a)
    return AffineMaps(p, sig, tuple(slopes), tuple(intercepts), tuple(anchors))


def apply_map(maps: AffineMaps, j: Sequence[int], X) -> np.ndarray:
    return maps.apply(j, X)


def invert_map(maps: AffineMaps, j: Sequence[int], X) -> np.ndarray:
    return maps.invert(j, X)


def locate_cell(p: Partition, X, tol: float = 1e-12) -> tuple[int, ...]:
    """Cell containing X; interior ties go to the lower cell, the last cell is closed."""
    X = np.asarray(X, dtype=float)
    if X.shape != (p.m,):
        raise DomainError(f"expected a point with {p.m} coordinates, got shape {X.shape}")
    if not p.contains(X, tol):
        raise DomainError(f"point {X.tolist()} outside the domain")
    j = []
    for k, x in enumerate(p.nodes):
        xk = min(max(X[k], x[0]), x[-1])
        # first node >= xk gives the right end of the lower cell on ties
        idx = int(np.searchsorted(x, xk, side="left"))
        j.append(min(max(idx, 1), x.size - 1))
    return tuple(j)


@dataclass(frozen=True)
class JoinReport:
    ok: bool
    residuals: tuple[np.ndarray, ...]
    preimages: tuple[np.ndarray, ...]


def check_join(maps: AffineMaps) -> JoinReport:
    """Compare the preimages of every interior node under its two adjacent maps."""
    ok = True
    residuals, preimages = [], []
    for k, x in enumerate(maps.partition.nodes):
        n = x.size - 1
        length = x[-1] - x[0]
        res = np.empty(n - 1)
        pre = np.empty(n - 1)
        for j in range(1, n):
            left = maps.invert_axis(k, j, x[j])
            right = maps.invert_axis(k, j + 1, x[j])
            res[j - 1] = abs(left - right)
            pre[j - 1] = 0.5 * (left + right)
        ok = ok and bool(np.all(res <= JOIN_TOL * length))
        residuals.append(res)
        preimages.append(pre)
    return JoinReport(ok, tuple(residuals), tuple(preimages))
