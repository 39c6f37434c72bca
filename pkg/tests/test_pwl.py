import math

from hypothesis import given, settings
from hypothesis import strategies as st

from exitcontracts.pwl import PwlMonotone, combine

finite = st.floats(min_value=-50, max_value=50, allow_nan=False)


@st.composite
def pwl_functions(draw):
    k = draw(st.integers(min_value=1, max_value=6))
    xs = sorted(draw(st.lists(st.floats(min_value=-10, max_value=10),
                              min_size=k, max_size=k, unique=True)))
    # keep breakpoints separated so slopes stay finite
    xs = [x + 0.05 * i for i, x in enumerate(xs)]
    steps = draw(st.lists(st.floats(min_value=0, max_value=5),
                          min_size=k, max_size=k))
    ys = []
    acc = draw(st.floats(min_value=-5, max_value=5))
    for s in steps:
        acc += s
        ys.append(acc)
    sl = draw(st.floats(min_value=0, max_value=3))
    sr = draw(st.floats(min_value=0, max_value=3))
    return PwlMonotone(tuple(xs), tuple(ys), sl, sr)


@given(pwl_functions(), finite, finite)
@settings(max_examples=200)
def test_monotone_everywhere(f, a, b):
    lo, hi = min(a, b), max(a, b)
    assert f(lo) <= f(hi) + 1e-12


@given(pwl_functions(), pwl_functions(),
       st.floats(min_value=0, max_value=3),
       st.floats(min_value=0, max_value=3), finite)
@settings(max_examples=200)
def test_combine_matches_pointwise_sum(f, g, cf, cg, x):
    h = combine([(cf, f), (cg, g)])
    expect = cf * f(x) + cg * g(x)
    assert math.isclose(h(x), expect, rel_tol=1e-9, abs_tol=1e-9)


@given(pwl_functions(), finite, finite)
@settings(max_examples=200)
def test_max_with_constant_pointwise(f, c, x):
    h = f.max_with_constant(c)
    assert math.isclose(h(x), max(f(x), c), rel_tol=1e-9, abs_tol=1e-9)


@given(pwl_functions(), finite)
@settings(max_examples=300)
def test_sup_level_is_the_rightmost_solution(f, y):
    x = f.sup_level_at_or_below(y)
    if x == -math.inf:
        # even far left the function exceeds y
        assert f(f.xs[0] - 100.0) > y
        return
    if x == math.inf:
        assert f(f.xs[-1] + 100.0) <= y + 1e-12
        return
    assert f(x) <= y + 1e-9
    # strictly to the right the function exceeds y
    assert f(x + 1e-6) >= y - 1e-9
    assert f(x + 1.0) > y - 1e-9


def test_rate_interpolation_hits_integer_levels():
    f = PwlMonotone.from_rates([-1.0, 0.25, 2.0])
    assert f(1.0) == -1.0
    assert f(2.0) == 0.25
    assert f(3.0) == 2.0
    assert f(0.0) == -2.0  # unit left tail
    assert f(4.5) == 3.5  # unit right tail


def test_flat_run_sup_returns_right_endpoint():
    f = PwlMonotone((0.0, 1.0, 2.0), (0.0, 1.0, 1.0), 1.0, 0.0)
    # plateau at height 1 runs to +inf because the right tail is flat
    assert f.sup_level_at_or_below(1.0) == math.inf
    g = PwlMonotone((0.0, 1.0, 2.0, 3.0), (0.0, 1.0, 1.0, 5.0), 1.0, 1.0)
    assert g.sup_level_at_or_below(1.0) == 2.0
