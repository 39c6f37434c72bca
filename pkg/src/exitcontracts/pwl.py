"""Exact algebra for continuous nondecreasing piecewise-linear functions.

The level-extraction pass needs, at every tree node, the full map from a
candidate level to the best achievable continuation payment.  That map is
piecewise linear because the interpolated agent rate is piecewise linear in
the level, and every operation applied to it (positive linear combination,
pointwise max with a constant) preserves piecewise linearity.  Keeping the
breakpoints explicitly makes root finding exact up to float rounding, with
no iterative solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

# Breakpoints closer than this (in the level coordinate) are merged.
MERGE_EPS = 1e-12


@dataclass(frozen=True)
class PwlMonotone:
    """Continuous nondecreasing piecewise-linear function on all of R.

    ``xs``/``ys`` are the breakpoints in strictly increasing ``xs`` order;
    left of ``xs[0]`` the function is affine with slope ``slope_left``,
    right of ``xs[-1]`` affine with slope ``slope_right``.
    """

    xs: tuple[float, ...]
    ys: tuple[float, ...]
    slope_left: float
    slope_right: float

    def __post_init__(self):
        if not self.xs or len(self.xs) != len(self.ys):
            raise ValueError("need matching non-empty breakpoint lists")
        if self.slope_left < 0 or self.slope_right < 0:
            raise ValueError("tail slopes must be nonnegative")
        for k in range(len(self.xs) - 1):
            if not self.xs[k] < self.xs[k + 1]:
                raise ValueError("breakpoints must be strictly increasing")
            if self.ys[k + 1] < self.ys[k]:
                raise ValueError("function must be nondecreasing")

    @staticmethod
    def constant(c: float) -> "PwlMonotone":
        return PwlMonotone((0.0,), (c,), 0.0, 0.0)

    @staticmethod
    def from_rates(rates: Sequence[float]) -> "PwlMonotone":
        """Interpolation of ordered agent rates: value ``rates[i-1]`` at
        integer level i, linear in between, unit slope in both tails."""
        xs = tuple(float(i) for i in range(1, len(rates) + 1))
        return PwlMonotone(xs, tuple(float(r) for r in rates), 1.0, 1.0)

    def __call__(self, x: float) -> float:
        xs, ys = self.xs, self.ys
        if x <= xs[0]:
            return ys[0] - self.slope_left * (xs[0] - x)
        if x >= xs[-1]:
            return ys[-1] + self.slope_right * (x - xs[-1])
        lo, hi = 0, len(xs) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if xs[mid] <= x:
                lo = mid
            else:
                hi = mid
        if x == xs[lo]:
            return ys[lo]
        w = (x - xs[lo]) / (xs[hi] - xs[lo])
        return ys[lo] * (1.0 - w) + ys[hi] * w

    def sup_level_at_or_below(self, y: float) -> float:
        """Largest x with f(x) <= y.

        Returns ``-inf`` when f stays above y everywhere and ``+inf`` when f
        never exceeds y.  On a flat run at height exactly y the right
        endpoint of the run is returned (sup of the solution set).
        """
        xs, ys = self.xs, self.ys
        if ys[-1] <= y:
            if self.slope_right == 0.0:
                return math.inf
            return xs[-1] + (y - ys[-1]) / self.slope_right
        # smallest k with ys[k] > y
        lo, hi = 0, len(ys) - 1
        if ys[0] > y:
            k = 0
        else:
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if ys[mid] > y:
                    hi = mid
                else:
                    lo = mid
            k = hi
        if k == 0:
            if self.slope_left == 0.0:
                return -math.inf
            return xs[0] - (ys[0] - y) / self.slope_left
        slope = (ys[k] - ys[k - 1]) / (xs[k] - xs[k - 1])
        return xs[k - 1] + (y - ys[k - 1]) / slope

    def max_with_constant(self, floor_value: float) -> "PwlMonotone":
        """Pointwise max(f, floor_value); stays nondecreasing and continuous."""
        cross = self.sup_level_at_or_below(floor_value)
        if cross == -math.inf:
            return self
        if cross == math.inf:
            return PwlMonotone.constant(floor_value)
        keep_xs = [x for x in self.xs if x > cross + MERGE_EPS]
        keep_ys = []
        run = floor_value
        for x in keep_xs:
            run = max(run, self(x))  # absorb sub-ulp interpolation jitter
            keep_ys.append(run)
        return PwlMonotone(
            (cross, *keep_xs),
            (floor_value, *keep_ys),
            0.0,
            self.slope_right,
        )


def combine(terms: Iterable[tuple[float, PwlMonotone]]) -> PwlMonotone:
    """Nonnegative linear combination sum(c_k * f_k), exact on breakpoints."""
    terms = [(c, f) for c, f in terms if c != 0.0]
    if not terms:
        return PwlMonotone.constant(0.0)
    if any(c < 0 for c, _ in terms):
        raise ValueError("coefficients must be nonnegative")
    grid: list[float] = sorted({x for _, f in terms for x in f.xs})
    xs = [grid[0]]
    for x in grid[1:]:
        if x - xs[-1] > MERGE_EPS:
            xs.append(x)
    ys = []
    run = -math.inf
    for x in xs:
        run = max(run, sum(c * f(x) for c, f in terms))  # absorb ulp jitter
        ys.append(run)
    sl = sum(c * f.slope_left for c, f in terms)
    sr = sum(c * f.slope_right for c, f in terms)
    return PwlMonotone(tuple(xs), tuple(ys), sl, sr)
