"""Germ functions: built-in analytic test functions and tabulated node data.

A germ is evaluated on arrays of points of shape ``(P, m)`` (a single point of
shape ``(m,)`` is also accepted) and on tensor grids via :meth:`GermFunction.on_grid`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .grid import Partition

FD_STEP = 1e-6
DOMAIN_TOL = 1e-12


def _as_points(X, m: int) -> tuple[np.ndarray, bool]:
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[-1] != m:
        raise DomainError(f"expected points with {m} coordinates, got shape {X.shape}")
    return X, single


@dataclass(frozen=True, eq=False)
class GermFunction:
    """A continuous function on a hyperrectangle with smoothness metadata.

    ``fn`` and ``grad`` take an ``(P, m)`` array; ``grad`` returns ``(P, m)``.
    ``lipschitz`` is the Hölder constant ``A`` for exponent ``holder``.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    lower: np.ndarray
    upper: np.ndarray
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    holder: float | None = None
    lipschitz: float | None = None
    convex: bool = False
    params: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.lower)

    def _check_domain(self, X: np.ndarray):
        slack = DOMAIN_TOL * (self.upper - self.lower)
        if np.any(X < self.lower - slack) or np.any(X > self.upper + slack):
            raise DomainError(f"{self.name}: point outside the domain")

    def __call__(self, X) -> np.ndarray | float:
        X, single = _as_points(X, self.m)
        self._check_domain(X)
        y = np.asarray(self.fn(X), dtype=float)
        return float(y[0]) if single else y

    def on_grid(self, axes: Sequence[np.ndarray]) -> np.ndarray:
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=-1)
        return np.asarray(self(pts)).reshape(mesh[0].shape)

    @property
    def has_gradient(self) -> bool:
        return self.grad is not None

    def partial(self, X, l: int) -> np.ndarray | float:
        """Partial derivative along 0-based axis ``l``; central differences when no
        analytic gradient is attached (one-sided at the boundary)."""
        X, single = _as_points(X, self.m)
        self._check_domain(X)
        if self.grad is not None:
            d = np.asarray(self.grad(X), dtype=float)[:, l]
        else:
            d = self._fd_partial(X, l)
        return float(d[0]) if single else d

    def _fd_partial(self, X: np.ndarray, l: int) -> np.ndarray:
        lo, hi = self.lower[l], self.upper[l]
        h = FD_STEP * (hi - lo)
        xp = np.minimum(X[:, l] + h, hi)
        xm = np.maximum(X[:, l] - h, lo)
        Xp = X.copy()
        Xm = X.copy()
        Xp[:, l] = xp
        Xm[:, l] = xm
        return (self.fn(Xp) - self.fn(Xm)) / (xp - xm)


@dataclass(frozen=True, eq=False)
class TabulatedGrid:
    """Samples at every tensor node of a partition, indexed ``values[i_1, ..., i_m]``."""

    partition: Partition
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        expected = tuple(n + 1 for n in self.partition.counts)
        if v.shape != expected:
            raise ConfigError(f"tabulated data has shape {v.shape}, partition needs {expected}",
                              key="germ.csv")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def _multilinear(nodes: Sequence[np.ndarray], values: np.ndarray, X: np.ndarray,
                 deriv: int | None = None) -> np.ndarray:
    m = len(nodes)
    idx, wts = [], []
    for k, x in enumerate(nodes):
        i = np.clip(np.searchsorted(x, X[:, k], side="right") - 1, 0, x.size - 2)
        h = x[i + 1] - x[i]
        t = (X[:, k] - x[i]) / h
        idx.append(i)
        if k == deriv:
            wts.append((-1.0 / h, 1.0 / h))
        else:
            wts.append((1.0 - t, t))
    out = np.zeros(X.shape[0])
    for corner in itertools.product((0, 1), repeat=m):
        w = np.ones(X.shape[0])
        for k in range(m):
            w = w * wts[k][corner[k]]
        out += w * values[tuple(idx[k] + corner[k] for k in range(m))]
    return out


def lift_tabulated(t: TabulatedGrid, name: str = "tabulated") -> GermFunction:
    """Multilinear extension of node data; exact at the nodes."""
    nodes = t.partition.nodes
    values = t.values
    m = t.partition.m
    slopes = []
    for k in range(m):
        h = np.diff(nodes[k]).reshape([-1 if a == k else 1 for a in range(m)])
        slopes.append(np.max(np.abs(np.diff(values, axis=k) / h)))
    return GermFunction(
        name=name,
        fn=lambda X: _multilinear(nodes, values, X),
        grad=lambda X: np.stack([_multilinear(nodes, values, X, deriv=k) for k in range(m)], axis=-1),
        lower=t.partition.lower,
        upper=t.partition.upper,
        holder=1.0,
        lipschitz=float(np.sqrt(np.sum(np.square(slopes)))),
        params={"shape": values.shape},
    )


def _max_abs(lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    return np.maximum(np.abs(lower), np.abs(upper))


def _sinprod(lower, upper, **_):
    m = len(lower)
    M = _max_abs(lower, upper)

    def fn(X):
        return np.sin(0.5 * np.pi * np.prod(X, axis=1))

    def grad(X):
        c = 0.5 * np.pi * np.cos(0.5 * np.pi * np.prod(X, axis=1))
        cols = [c * np.prod(np.delete(X, l, axis=1), axis=1) for l in range(m)]
        return np.stack(cols, axis=-1)

    others = [np.prod(np.delete(M, l)) for l in range(m)]
    A = 0.5 * np.pi * float(np.sqrt(np.sum(np.square(others))))
    return dict(fn=fn, grad=grad, lipschitz=A)


def _sqsum(lower, upper, offset: float = 0.0, **_):
    M = _max_abs(lower, upper)
    return dict(
        fn=lambda X: offset + np.sum(X * X, axis=1),
        grad=lambda X: 2.0 * X,
        lipschitz=2.0 * float(np.linalg.norm(M)),
        convex=True,
    )


def _affine(lower, upper, coeffs=None, const: float = 0.0, **_):
    m = len(lower)
    c = np.ones(m) if coeffs is None else np.asarray(coeffs, dtype=float)
    if c.shape != (m,):
        raise ConfigError(f"affine germ needs {m} coefficients, got {c.shape}", key="germ.params.coeffs")
    return dict(
        fn=lambda X: const + X @ c,
        grad=lambda X: np.broadcast_to(c, X.shape).copy(),
        lipschitz=float(np.linalg.norm(c)),
        convex=True,
    )


def _constant(lower, upper, value: float = 1.0, **_):
    return dict(
        fn=lambda X: np.full(X.shape[0], float(value)),
        grad=lambda X: np.zeros_like(X),
        lipschitz=0.0,
        convex=True,
    )


def _absdev(lower, upper, center=None, **_):
    m = len(lower)
    c = 0.5 * (lower + upper) if center is None else np.broadcast_to(np.asarray(center, dtype=float), (m,))
    return dict(
        fn=lambda X: np.sum(np.abs(X - c), axis=1),
        grad=lambda X: np.sign(X - c),
        lipschitz=float(np.sqrt(m)),
        convex=True,
    )


def _sinwave(lower, upper, freq: float = 1.0, **_):
    # sum of sin(freq * pi * x_k): smooth, non-affine in every variable
    w = float(freq) * np.pi
    m = len(lower)
    return dict(
        fn=lambda X: np.sum(np.sin(w * X), axis=1),
        grad=lambda X: w * np.cos(w * X),
        lipschitz=w * float(np.sqrt(m)),
    )


BUILTINS: dict[str, Callable[..., dict]] = {
    "sinprod": _sinprod,
    "sqsum": _sqsum,
    "oneplussq": lambda lower, upper, **kw: _sqsum(lower, upper, offset=1.0),
    "affine": _affine,
    "constant": _constant,
    "absdev": _absdev,
    "sinwave": _sinwave,
}


def builtin(name: str, partition: Partition | None = None, *, lower=None, upper=None,
            **params) -> GermFunction:
    """Instantiate a registered germ on the domain of ``partition`` (or ``lower``/``upper``)."""
    if name not in BUILTINS:
        raise ConfigError(f"unknown builtin germ {name!r}; known: {sorted(BUILTINS)}", key="germ.builtin")
    if partition is not None:
        lower, upper = partition.lower, partition.upper
    if lower is None or upper is None:
        raise ValueError("builtin germ needs a partition or explicit bounds")
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    spec = BUILTINS[name](lower, upper, **params)
    return GermFunction(name=name, lower=lower, upper=upper, holder=1.0, params=dict(params), **spec)


def eval_germ(f: GermFunction, X) -> float:
    return f(X)


def grad_germ(f: GermFunction, X, l: int) -> float:
    return f.partial(X, l)
