import numpy as np
import pytest

from zipfrac.errors import BudgetError, ConfigError, MatchingError
from zipfrac.fractal import (BaseFunction, ScalingField, build_interpolant, build_surface,
                             eval_point, germ_scaling, level_count, make_config,
                             multilinear_field, perturbation_bound, rb_fixed_point_gap, rb_iterates,
                             residual_check)
from zipfrac.germ import GermFunction, TabulatedGrid, builtin, lift_tabulated
from zipfrac.grid import Partition

HALF = Partition((np.array([0.0, 0.5, 1.0]),))
THIRDS = Partition((np.array([0, 1 / 3, 2 / 3, 1]), np.array([0, 1 / 3, 2 / 3, 1])))


def square_config(alpha=0.5):
    f = GermFunction(name="x^2", fn=lambda X: X[:, 0] ** 2, lower=np.zeros(1), upper=np.ones(1))
    return make_config(HALF, [0], alpha, f, [2])


def test_hand_values_one_step():
    s = build_surface(square_config(), 1)
    assert s([0.25]) == pytest.approx(0.0, abs=1e-12)
    assert s([0.75]) == pytest.approx(0.5, abs=1e-12)


def test_alpha_zero_is_germ():
    f = builtin("sinprod", THIRDS)
    s = build_surface(make_config(THIRDS, [1, 0], 0.0, f, [3, 3]), 3)
    assert np.max(np.abs(s.values - s.germ_values())) <= 1e-12


def test_interpolates_nodes():
    f = builtin("sinwave", THIRDS, freq=2.3)
    s = build_surface(make_config(THIRDS, [1, 1], -0.7, f, [3, 2]), 3)
    assert np.max(np.abs(s.node_values() - f.on_grid(THIRDS.nodes))) <= 1e-12


def test_eval_point_examples():
    cfg = square_config()
    v, b = eval_point(cfg, [0.3], 0)
    assert v == 0.09
    assert b == pytest.approx(perturbation_bound(cfg))
    v, b = eval_point(cfg, [0.25], 1)
    assert v == pytest.approx(0.0, abs=1e-15)
    assert b == pytest.approx(0.5 * 0.125)
    v, b = eval_point(square_config(0.0), [0.3], 5)
    assert (v, b) == (0.09, 0.0)


def test_eval_point_within_bound_of_grid_values():
    f = builtin("sinprod", THIRDS)
    cfg = make_config(THIRDS, [1, 1], 0.5, f, [3, 3])
    s = build_surface(cfg, 4)
    rng = np.random.default_rng(0)
    for _ in range(50):
        i = tuple(int(rng.integers(0, n)) for n in s.shape)
        X = np.array([s.axes[0][i[0]], s.axes[1][i[1]]])
        for d in (0, 2, 3):
            v, bound = eval_point(cfg, X, d)
            assert abs(v - s.values[i]) <= bound + 1e-12
        # deep enough descent reaches the seeds of the grid and is exact
        v, _ = eval_point(cfg, X, 5)
        assert v == pytest.approx(s.values[i], abs=1e-12)


def test_off_grid_query_falls_back_to_descent():
    cfg = square_config()
    s = build_surface(cfg, 3)
    assert s([0.3]) == eval_point(cfg, [0.3], 3)[0]


def test_perturbation_bound_examples():
    f = builtin("sqsum", HALF)
    assert perturbation_bound(make_config(HALF, [0], 0.5, f, BaseFunction.user(f))) == 0.0
    assert perturbation_bound(square_config()) == pytest.approx(0.125, abs=1e-15)
    assert perturbation_bound(square_config(0.0)) == 0.0


@pytest.mark.parametrize("sig", [(0, 0), (0, 1), (1, 0), (1, 1)])
def test_surface_within_perturbation_bound(sig):
    f = builtin("sinprod", THIRDS)
    cfg = make_config(THIRDS, sig, 0.5, f, [3, 3])
    s = build_surface(cfg, 4)
    err = np.max(np.abs(s.values - s.germ_values()))
    assert err <= perturbation_bound(cfg, extra_axes=s.axes) + 1e-9


def test_residual_check_fresh_and_zero_alpha():
    s = build_surface(make_config(THIRDS, [0, 1], 0.4, builtin("sinprod", THIRDS), [3, 3]), 3)
    assert residual_check(s) <= 1e-10
    assert residual_check(s, samples=100, seed=3) <= 1e-10
    s0 = build_surface(make_config(THIRDS, [0, 1], 0.0, builtin("sinprod", THIRDS), [3, 3]), 3)
    assert residual_check(s0) == 0.0


@pytest.mark.parametrize("alpha", [0.3, -0.6])
def test_residual_detects_corruption(alpha):
    s = build_surface(make_config(THIRDS, [1, 0], alpha, builtin("sqsum", THIRDS), [2, 2]), 3)
    rng = np.random.default_rng(11)
    for _ in range(5):
        vals = s.values.copy()
        vals.ravel()[rng.integers(vals.size)] += 0.1
        assert residual_check(s.with_values(vals)) >= 0.05 * abs(alpha)


def test_build_interpolant_thirds_grid():
    f = builtin("sinprod", THIRDS)
    data = TabulatedGrid(THIRDS, f.on_grid(THIRDS.nodes))
    s = build_interpolant(data, [1, 1], 0.5, base=[3, 3], level=3)
    assert np.max(np.abs(s.node_values() - data.values)) <= 1e-12
    assert residual_check(s) <= 1e-10


def test_build_interpolant_constant_and_zero_alpha():
    data = TabulatedGrid(THIRDS, np.full((4, 4), 1.7))
    s = build_interpolant(data, [0, 1], 0.6, base=[3, 3], level=3)
    assert np.max(np.abs(s.values - 1.7)) <= 1e-12
    rng = np.random.default_rng(4)
    data = TabulatedGrid(THIRDS, rng.random((4, 4)))
    s = build_interpolant(data, [1, 1], 0.0, level=3)
    lift = lift_tabulated(data)
    assert np.max(np.abs(s.values - lift.on_grid(s.axes))) <= 1e-12


def test_budget_error_reports_count():
    cfg = square_config()
    with pytest.raises(BudgetError) as exc:
        build_surface(cfg, 10, budget=1000)
    assert exc.value.count == level_count(HALF, 10) == 2**11 + 1


def test_unequal_cell_constants_rejected():
    with pytest.raises(ConfigError, match="matching condition"):
        ScalingField.per_cell([0.2, 0.4])
    assert ScalingField.per_cell([0.3, 0.3]).constant == 0.3
    with pytest.raises(ConfigError):
        ScalingField.global_constant(1.0)


class _CellwiseAlpha(ScalingField):
    """Per-cell constants smuggled past validation, to exercise the boundary assertion."""

    def __init__(self):
        super().__init__(constant=0.6)

    def on_child_grid(self, child_axes):
        return 0.2 if child_axes[0][-1] <= 0.5 else 0.6


def test_boundary_mismatch_detected():
    # in one dimension shared nodes are images of interpolated endpoints, so the
    # disagreement only shows on faces that carry interior points of another axis
    p = Partition.uniform([2, 2])
    cfg = make_config(p, [1, 0], _CellwiseAlpha(), builtin("sinprod", p), [3, 3])
    with pytest.raises(MatchingError):
        build_surface(cfg, 3)


def test_boundary_consistency_recorded():
    f = builtin("sinwave", THIRDS, freq=1.3)
    s = build_surface(make_config(THIRDS, [1, 0], 0.7, f, [2, 4]), 4)
    assert s.boundary_mismatch <= 1e-10


def test_pullback_field_builds_consistently():
    nodes = np.linspace(-0.5, 0.5, 16).reshape(4, 4)
    alpha = ScalingField.pullback(multilinear_field(THIRDS, nodes), THIRDS)
    assert alpha.norm == pytest.approx(0.5)
    s = build_surface(make_config(THIRDS, [1, 1], alpha, builtin("sinprod", THIRDS), [3, 3]), 3)
    assert s.boundary_mismatch <= 1e-10
    assert residual_check(s) <= 1e-10
    assert np.max(np.abs(s.node_values() - builtin("sinprod", THIRDS).on_grid(THIRDS.nodes))) <= 1e-12


def test_pullback_norm_must_be_below_one():
    with pytest.raises(ConfigError):
        germ_scaling("oneplussq", HALF, scale=0.6)
    assert germ_scaling("sqsum", HALF, scale=0.9).norm == pytest.approx(0.9)


def test_base_must_match_corners():
    f = builtin("sqsum", HALF)
    with pytest.raises(ConfigError):
        make_config(HALF, [0], 0.5, f, BaseFunction.user(builtin("oneplussq", HALF)))


def test_zipper_flip_symmetry():
    p = Partition.uniform([2])
    f = builtin("absdev", p)
    s0 = build_surface(make_config(p, [0], 0.45, f, [4]), 8)
    s1 = build_surface(make_config(p, [1], 0.45, f, [4]), 8)
    assert np.allclose(s0.axes[0][::-1], 1 - s1.axes[0], atol=1e-15)
    assert np.max(np.abs(s1.values - s0.values[::-1])) <= 1e-10


@pytest.mark.parametrize("alpha", [0.5, -0.8, 0.2])
def test_rb_operator_contracts_to_surface(alpha):
    f = builtin("sinwave", THIRDS)
    s = build_surface(make_config(THIRDS, [1, 0], alpha, f, [3, 3]), 3)
    diffs = rb_iterates(s, 6)
    for a, b in zip(diffs, diffs[1:]):
        assert b <= (abs(alpha) + 1e-6) * a + 1e-15
    # the level-r grid reaches its fixed point after r+1 sweeps
    assert rb_fixed_point_gap(s, 6) <= 1e-12
