import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zipfrac.errors import ConfigError, EmptyIntersectionError
from zipfrac.fractal import ScalingField, build_surface, make_config, multilinear_field
from zipfrac.germ import GermFunction, builtin
from zipfrac.grid import Partition, Signature, build_affine_maps
from zipfrac.shape import (ALPHA_CAP, CellIntervals, DominatesFunction, DominatesSurfaceOf,
                           IncreasingAlong, NonNegative, cell_extrema, combine, convex_sequence_check,
                           dominance_interval, monotone_interval, pick_scaling, positivity_interval,
                           verify_shape)

HALF = Partition.uniform([2])
SQUARE = Partition.uniform([2, 2])


def maps_for(p, sig):
    return build_affine_maps(p, Signature(tuple(sig)))


def intervals(lo, hi):
    return CellIntervals("test", np.array(lo, float), np.array(hi, float))


def test_cell_extrema_examples():
    f = builtin("oneplussq", HALF)
    maps = maps_for(HALF, [0])
    e1, e2 = cell_extrema(f, maps, (1,)), cell_extrema(f, maps, (2,))
    assert (e1.lo, e1.hi) == (1.0, 1.25)
    assert (e2.lo, e2.hi) == (1.25, 2.0)
    c = cell_extrema(builtin("constant", SQUARE, value=3.0), maps_for(SQUARE, [1, 0]), (2, 1))
    assert (c.lo, c.hi) == (3.0, 3.0)


def test_positivity_worked_example():
    iv = positivity_interval(builtin("oneplussq", HALF), maps_for(HALF, [0]), 2, C_n=2.5)
    assert iv[(1,)] == pytest.approx((-0.625, 0.5), abs=1e-9)
    # cell 2: phi = 1.25, Phi = 2 -> [max(-1.25/1.5, -0.5/2), min(1.25/2, 0.5/1.5)]
    assert iv[(2,)] == pytest.approx((-0.25, 1 / 3), abs=1e-9)


def test_positivity_constant_germ_clipped():
    iv = positivity_interval(builtin("constant", SQUARE, value=1.0), maps_for(SQUARE, [0, 1]), 4, C_n=2.0)
    assert np.all(iv.lo == -ALPHA_CAP) and np.all(iv.hi == ALPHA_CAP)


def test_positivity_zero_in_cell_gives_zero_upper():
    iv = positivity_interval(builtin("sqsum", HALF), maps_for(HALF, [0]), 2)
    assert iv[(1,)][1] == 0.0
    assert iv[(2,)][1] > 0


def test_positivity_errors():
    maps = maps_for(HALF, [0])
    with pytest.raises(ConfigError):
        positivity_interval(builtin("affine", HALF, const=-1.0), maps, 2)
    with pytest.raises(ConfigError):
        positivity_interval(builtin("oneplussq", HALF), maps, 2, C_n=1.5)


def test_dominance_examples():
    f = builtin("oneplussq", HALF)
    zero = builtin("constant", HALF, value=0.0)
    maps = maps_for(HALF, [0])
    iv = dominance_interval(f, zero, maps, 2)
    assert iv[(1,)] == pytest.approx((0.0, 0.5), abs=1e-12)
    assert iv[(2,)] == pytest.approx((0.0, 0.625), abs=1e-12)
    same = dominance_interval(f, f, maps, 2)
    assert np.all(same.hi == 0) and np.all(same.lo == 0)


def test_dominance_matches_large_cn_positivity_limit():
    f = builtin("oneplussq", HALF)
    maps = maps_for(HALF, [0])
    dom = dominance_interval(f, builtin("constant", HALF, value=0.0), maps, 2)
    pos = positivity_interval(f, maps, 2, C_n=1e12)
    assert np.allclose(dom.hi, np.maximum(pos.hi, 0), atol=1e-9)
    assert np.all(dom.lo >= np.maximum(pos.lo, 0))


def test_pairwise_dominance_uses_difference_bernstein():
    f = GermFunction(name="1+x+x^2", fn=lambda X: 1 + X[:, 0] + X[:, 0] ** 2,
                     lower=np.zeros(1), upper=np.ones(1))
    g = builtin("affine", HALF)
    maps = maps_for(HALF, [0])
    pair = dominance_interval(f, g, maps, 2, pairwise=True)
    ref = dominance_interval(builtin("oneplussq", HALF), builtin("constant", HALF, value=0.0), maps, 2)
    assert np.allclose(pair.hi, ref.hi, atol=1e-12)


def test_dominance_requires_order():
    with pytest.raises(ConfigError):
        dominance_interval(builtin("affine", HALF), builtin("oneplussq", HALF), maps_for(HALF, [0]), 2)


def test_monotone_worked_example():
    f = builtin("affine", HALF)
    iv = monotone_interval(f, maps_for(HALF, [0]), 3, 0)
    assert iv[(1,)] == pytest.approx((0.0, 0.5), abs=1e-12)
    assert iv[(2,)] == pytest.approx((-0.5, 0.0), abs=1e-12)
    flipped = monotone_interval(f, maps_for(HALF, [1]), 3, 0)
    assert flipped[(1,)] == pytest.approx((-0.5, 0.0), abs=1e-12)
    assert flipped[(2,)] == pytest.approx((0.0, 0.5), abs=1e-12)


def test_monotone_errors():
    with pytest.raises(ConfigError):
        monotone_interval(builtin("constant", HALF, value=2.0), maps_for(HALF, [0]), 3, 0)
    with pytest.raises(ConfigError):
        monotone_interval(builtin("affine", HALF, coeffs=[-1.0]), maps_for(HALF, [0]), 3, 0)


def test_pick_scaling_examples():
    assert pick_scaling(intervals([-0.625, -0.55], [0.5, 0.45])).constant == 0.45
    assert pick_scaling(intervals([0.0], [0.5])).constant == 0.5
    assert pick_scaling(intervals([-0.5, -0.3], [0.0, 0.0])).constant == -0.3
    with pytest.raises(EmptyIntersectionError) as exc:
        pick_scaling(intervals([0.2, -0.3], [0.3, -0.2]))
    assert exc.value.blocking
    with pytest.raises(EmptyIntersectionError):
        pick_scaling(intervals([0.0, -0.5], [0.5, 0.0]), nonzero=True)
    with pytest.raises(ConfigError):
        pick_scaling(intervals([0.0], [0.5]), strategy="greedy")


def test_combine_intersects_cellwise():
    both = combine(intervals([-0.5, 0.0], [0.5, 0.4]), intervals([0.0, -0.2], [0.3, 0.9]))
    assert both.lo.tolist() == [0.0, 0.0] and both.hi.tolist() == [0.3, 0.4]


def test_verify_shape_examples():
    f = builtin("oneplussq", HALF)
    s0 = build_surface(make_config(HALF, [0], 0.0, f, [2]), 4)
    assert verify_shape(s0, NonNegative()).passed
    iv = positivity_interval(f, maps_for(HALF, [0]), 2, C_n=2.5)
    s = build_surface(make_config(HALF, [0], 0.3, f, [2]), 8)
    rep = verify_shape(s, NonNegative(), intervals=iv)
    assert rep.passed and rep.worst_violation >= -1e-10
    out = rep.to_json()
    assert set(out) >= {"property", "per_cell_intervals", "chosen_alpha", "worst_violation", "location", "pass"}
    with pytest.raises(ValueError):
        verify_shape(build_surface(make_config(HALF, [0], 0.3, f, [2]), 3), NonNegative())


def test_verify_shape_negative_control():
    # outside the sufficient condition the check is allowed to fail; this one does
    f = GermFunction(name="x^2", fn=lambda X: X[:, 0] ** 2, lower=np.zeros(1), upper=np.ones(1))
    s = build_surface(make_config(HALF, [0], 0.95, f, [2]), 8)
    rep = verify_shape(s, NonNegative())
    assert not rep.passed and rep.worst_violation < -0.5


def test_dominance_verified_on_surfaces():
    f = builtin("oneplussq", SQUARE)
    g = builtin("sqsum", SQUARE)
    maps = maps_for(SQUARE, [1, 0])
    alpha = pick_scaling(dominance_interval(f, g, maps, 3))
    sf = build_surface(make_config(SQUARE, [1, 0], alpha, f, [3, 3]), 5)
    assert verify_shape(sf, DominatesFunction(g)).passed
    pair = pick_scaling(dominance_interval(f, g, maps, 3, pairwise=True))
    sf = build_surface(make_config(SQUARE, [1, 0], pair, f, [3, 3]), 5)
    sg = build_surface(make_config(SQUARE, [1, 0], pair, g, [3, 3]), 5)
    assert verify_shape(sf, DominatesSurfaceOf(sg)).passed


def test_convex_sequence_examples():
    f = builtin("sqsum", SQUARE)
    assert convex_sequence_check(f, SQUARE, [0, 1], 0.3, (2, 3, 4), 5).passed
    rep = convex_sequence_check(f, SQUARE, [1, 1], 0.0, (2, 3), 4)
    assert rep.passed
    lin = convex_sequence_check(builtin("affine", SQUARE, coeffs=[0.5, 2.0]), SQUARE, [0, 0], 0.4, (1, 2, 3), 4)
    assert lin.passed and max(map(abs, lin.increasing_gaps + lin.below_germ_gaps)) <= 1e-12
    with pytest.raises(ConfigError):
        convex_sequence_check(f, SQUARE, [0, 0], -0.2, (2, 3), 4)


# properties

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 1), st.integers(2, 6), st.floats(2.05, 10.0))
def test_positivity_intervals_bounded_and_sufficient(eps, n, C):
    f = builtin("oneplussq", HALF)
    iv = positivity_interval(f, maps_for(HALF, [eps]), n, C_n=C)
    assert np.all(iv.lo > -1) and np.all(iv.hi < 1)
    lo, hi = iv.intersection()
    for a in (lo, hi, 0.5 * (lo + hi)):
        s = build_surface(make_config(HALF, [eps], a, f, [n]), 8)
        assert verify_shape(s, NonNegative(), tol=1e-10).passed


def _random_field_in_intervals(iv, partition, u):
    """Multilinear field whose node values lie in every incident cell's interval."""
    counts = partition.counts
    shape = tuple(n + 1 for n in counts)
    lo = np.full(shape, -np.inf)
    hi = np.full(shape, np.inf)
    for corner in itertools.product((0, 1), repeat=partition.m):
        sl = tuple(slice(c, c + n) for c, n in zip(corner, counts))
        lo[sl] = np.maximum(lo[sl], iv.lo)
        hi[sl] = np.minimum(hi[sl], iv.hi)
    vals = lo + np.asarray(u).reshape(shape) * (hi - lo)
    return ScalingField.pullback(multilinear_field(partition, vals), partition)


@settings(max_examples=15, deadline=None)
@given(st.sampled_from([(0, 0), (0, 1), (1, 0), (1, 1)]), st.integers(0, 1),
       st.lists(st.floats(0, 1), min_size=9, max_size=9))
def test_monotone_any_field_in_intervals_is_increasing(sig, axis, u):
    f = builtin("affine", SQUARE, coeffs=[1.0, 1.0])
    maps = maps_for(SQUARE, sig)
    iv = monotone_interval(f, maps, 3, axis)
    assert np.all(iv.lo > -1) and np.all(iv.hi < 1)
    alpha = _random_field_in_intervals(iv, SQUARE, u)
    s = build_surface(make_config(SQUARE, sig, alpha, f, [3, 3]), 6)
    assert verify_shape(s, IncreasingAlong(axis), tol=1e-10).passed


@pytest.mark.parametrize("sig", [(0, 0), (0, 1), (1, 0), (1, 1)])
def test_node_blend_monotone_both_axes(sig):
    f = builtin("affine", SQUARE, coeffs=[1.0, 1.0])
    maps = maps_for(SQUARE, sig)
    iv = combine(monotone_interval(f, maps, 3, 0), monotone_interval(f, maps, 3, 1))
    alpha = pick_scaling(iv, "node_blend", SQUARE)
    s = build_surface(make_config(SQUARE, sig, alpha, f, [3, 3]), 6)
    for axis in (0, 1):
        assert verify_shape(s, IncreasingAlong(axis), tol=1e-10).passed


def test_node_blend_m1_is_nonzero_and_monotone():
    f = builtin("affine", HALF)
    iv = monotone_interval(f, maps_for(HALF, [0]), 3, 0)
    alpha = pick_scaling(iv, "node_blend", HALF)
    assert alpha.norm > 0
    s = build_surface(make_config(HALF, [0], alpha, f, [3]), 6)
    assert verify_shape(s, IncreasingAlong(0), tol=1e-10).passed
