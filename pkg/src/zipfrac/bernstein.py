"""Tensor-product Bernstein operator on a hyperrectangle."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .germ import DOMAIN_TOL, GermFunction, _as_points

MAX_DEGREE = 200
DEFAULT_GRID = 129


def bernstein_basis(n: int, t: np.ndarray) -> np.ndarray:
    """All degree-``n`` basis polynomials at ``t`` in [0, 1], shape ``(len(t), n + 1)``.

    Built with the triangular recurrence b_{k,n} = (1-t) b_{k,n-1} + t b_{k-1,n-1}.
    """
    t = np.asarray(t, dtype=float)
    s = 1.0 - t
    B = np.zeros((t.size, n + 1))
    B[:, 0] = 1.0
    for d in range(1, n + 1):
        prev = B[:, :d].copy()
        B[:, 0] = s * prev[:, 0]
        B[:, 1:d] = s[:, None] * prev[:, 1:] + t[:, None] * prev[:, :-1]
        B[:, d] = t * prev[:, d - 1]
    return B


@dataclass(frozen=True, eq=False)
class BernsteinSpec:
    germ: GermFunction
    degrees: tuple[int, ...]
    coeffs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        degrees = tuple(int(n) for n in np.atleast_1d(self.degrees))
        if len(degrees) != self.germ.m:
            raise ConfigError(f"degree vector has {len(degrees)} entries, domain has {self.germ.m} axes",
                              key="base.bernstein")
        for n in degrees:
            if n < 1:
                raise ConfigError("Bernstein degrees must be >= 1", key="base.bernstein")
            if n > MAX_DEGREE:
                raise ConfigError(f"Bernstein degree {n} exceeds cap {MAX_DEGREE}", key="base.bernstein")
        object.__setattr__(self, "degrees", degrees)
        axes = [lo + (hi - lo) * np.arange(n + 1) / n
                for lo, hi, n in zip(self.lower, self.upper, degrees)]
        # snap the last sample onto the boundary exactly
        for a, hi in zip(axes, self.upper):
            a[-1] = hi
        c = self.germ.on_grid(axes)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def m(self) -> int:
        return self.germ.m

    @property
    def lower(self) -> np.ndarray:
        return self.germ.lower

    @property
    def upper(self) -> np.ndarray:
        return self.germ.upper

    @property
    def name(self) -> str:
        return f"bernstein{list(self.degrees)}({self.germ.name})"

    def _scaled(self, k: int, x: np.ndarray) -> np.ndarray:
        lo, hi = self.lower[k], self.upper[k]
        return np.clip((x - lo) / (hi - lo), 0.0, 1.0)

    def _check(self, X):
        slack = DOMAIN_TOL * (self.upper - self.lower)
        if np.any(X < self.lower - slack) or np.any(X > self.upper + slack):
            raise DomainError("Bernstein evaluation outside the domain")

    @staticmethod
    def _contract_points(C: np.ndarray, bases: list[np.ndarray]) -> np.ndarray:
        P = bases[0].shape[0]
        T = bases[0] @ C.reshape(C.shape[0], -1)  # (P, rest)
        for B in bases[1:]:
            T = T.reshape(P, B.shape[1], -1)
            T = np.einsum("pk,pkr->pr", B, T)
        return T.reshape(P)

    @staticmethod
    def _contract_grid(C: np.ndarray, bases: list[np.ndarray]) -> np.ndarray:
        T = C
        for k, B in enumerate(bases):
            T = np.moveaxis(np.tensordot(B, T, axes=([1], [k])), 0, k)
        return T

    def __call__(self, X):
        X, single = _as_points(X, self.m)
        self._check(X)
        bases = [bernstein_basis(n, self._scaled(k, X[:, k])) for k, n in enumerate(self.degrees)]
        y = self._contract_points(self.coeffs, bases)
        return float(y[0]) if single else y

    def on_grid(self, axes: Sequence[np.ndarray]) -> np.ndarray:
        bases = [bernstein_basis(n, self._scaled(k, np.asarray(a, dtype=float)))
                 for k, (n, a) in enumerate(zip(self.degrees, axes))]
        return self._contract_grid(self.coeffs, bases)

    def _partial_parts(self, l: int):
        n = self.degrees[l]
        D = np.diff(self.coeffs, axis=l) * (n / (self.upper[l] - self.lower[l]))
        degrees = list(self.degrees)
        degrees[l] = n - 1
        return D, degrees

    def partial(self, X, l: int):
        """Exact derivative along 0-based axis ``l`` from forward differences of the coefficients."""
        X, single = _as_points(X, self.m)
        self._check(X)
        D, degrees = self._partial_parts(l)
        bases = [bernstein_basis(n, self._scaled(k, X[:, k])) for k, n in enumerate(degrees)]
        y = self._contract_points(D, bases)
        return float(y[0]) if single else y

    def partial_on_grid(self, axes: Sequence[np.ndarray], l: int) -> np.ndarray:
        D, degrees = self._partial_parts(l)
        bases = [bernstein_basis(n, self._scaled(k, np.asarray(a, dtype=float)))
                 for k, (n, a) in enumerate(zip(degrees, axes))]
        return self._contract_grid(D, bases)

    def sample_axes(self, grid_per_axis: int = DEFAULT_GRID) -> list[np.ndarray]:
        return [np.linspace(lo, hi, grid_per_axis) for lo, hi in zip(self.lower, self.upper)]


def eval_bernstein(spec: BernsteinSpec, X):
    return spec(X)


def bernstein_partial(spec: BernsteinSpec, l: int, X):
    return spec.partial(X, l)


def bernstein_extrema(spec: BernsteinSpec, grid_per_axis: int = DEFAULT_GRID) -> tuple[float, float]:
    """Sampled (min, max) of B_n f over a uniform grid including all faces."""
    if grid_per_axis < 33:
        raise ValueError("grid_per_axis must be at least 33")
    v = spec.on_grid(spec.sample_axes(grid_per_axis))
    return float(v.min()), float(v.max())


def bernstein_sup_error(spec: BernsteinSpec, grid_per_axis: int = DEFAULT_GRID) -> float:
    axes = spec.sample_axes(grid_per_axis)
    return float(np.max(np.abs(spec.germ.on_grid(axes) - spec.on_grid(axes))))


@dataclass(frozen=True)
class LipschitzReport:
    passed: bool
    max_ratio: float
    worst_excess: float
    trials: int


def verify_lipschitz(spec: BernsteinSpec, A: float, beta: float = 1.0, trials: int = 10_000,
                     seed: int = 0, tol: float = 1e-9) -> LipschitzReport:
    """Check |B_n f(X) - B_n f(Y)| <= A |X - Y|^beta on random pairs."""
    rng = np.random.default_rng(seed)
    span = spec.upper - spec.lower
    X = spec.lower + rng.random((trials, spec.m)) * span
    Y = spec.lower + rng.random((trials, spec.m)) * span
    d = np.linalg.norm(X - Y, axis=1) ** beta
    diff = np.abs(spec(X) - spec(Y))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d > 0, diff / d, 0.0)
    excess = diff - (A * d + tol)
    return LipschitzReport(bool(np.all(excess <= 0)), float(ratio.max()), float(excess.max()), trials)
