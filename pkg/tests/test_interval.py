"""
Tests for interval arithmetic and inclusion functions

"""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lpreach.core.errors import DimensionMismatch, DivisionByZeroInterval, DomainError, IntervalError
from lpreach.services import interval as iv
from lpreach.services.autodiff import Dual
from lpreach.services.interval import Interval, IntervalVector, inclusion, mat_vec
from lpreach.services.systems import vanderpol_field

UNARY = {
    "sin": (iv.sin, np.sin, (-10.0, 10.0)),
    "cos": (iv.cos, np.cos, (-10.0, 10.0)),
    "arctan": (iv.arctan, np.arctan, (-10.0, 10.0)),
    "tan": (iv.tan, np.tan, (-1.5, 1.5)),
    "sqr": (iv.sqr, np.square, (-3.0, 3.0)),
}

BINARY = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / b,
}


def _random_interval(rng, low, high):
    a, b = np.sort(rng.uniform(low, high, 2))
    return Interval(float(a), float(b))


def _samples(rng, a: Interval, count: int) -> np.ndarray:
    points = rng.uniform(a.lo, a.hi, count)
    points[:2] = [a.lo, a.hi]
    return points


def _inside(a: Interval, values: np.ndarray, tol: float = 1e-12) -> bool:
    scale = 1.0 + max(abs(a.lo), abs(a.hi))
    return bool(np.all((values >= a.lo - tol * scale) & (values <= a.hi + tol * scale)))


class TestArithmetic:
    def test_add(self):
        assert (Interval(0.0, 1.0) + Interval(2.0, 3.0)).as_floats() == (2.0, 4.0)

    def test_mul_four_products(self):
        assert (Interval(-1.0, 2.0) * Interval(-1.0, 2.0)).as_floats() == (-2.0, 4.0)

    def test_div(self):
        assert (Interval(1.0, 2.0) / Interval(1.0, 2.0)).as_floats() == (0.5, 2.0)

    def test_div_by_zero(self):
        with pytest.raises(DivisionByZeroInterval):
            Interval(1.0, 2.0) / Interval(-1.0, 1.0)
        with pytest.raises(ZeroDivisionError):
            Interval(1.0, 2.0) / 0.0

    def test_scalar_operands(self):
        assert (2.0 - Interval(0.0, 1.0)).as_floats() == (1.0, 2.0)
        assert (Interval(1.0, 2.0) * -3.0).as_floats() == (-6.0, -3.0)
        assert (1.0 / Interval(2.0, 4.0)).as_floats() == (0.25, 0.5)

    def test_invalid_order(self):
        with pytest.raises(IntervalError):
            Interval(1.0, 0.0)

    def test_even_power_straddling_zero(self):
        assert (Interval(-2.0, 1.0) ** 2).as_floats() == (0.0, 4.0)
        assert (Interval(-2.0, -1.0) ** 2).as_floats() == (1.0, 4.0)
        assert (Interval(-2.0, 1.0) ** 3).as_floats() == (-8.0, 1.0)

    def test_set_helpers(self):
        a = Interval(0.0, 2.0)
        assert a.width == 2.0
        assert a.midpoint == 1.0
        assert a.contains(2.0)
        assert Interval(0.5, 1.0).subset(a)
        assert a.intersect(Interval(3.0, 4.0)) is None
        assert a.hull(Interval(3.0, 4.0)).as_floats() == (0.0, 4.0)

    def test_dual_endpoints_follow_selection(self):
        a = Interval(Dual(-1.0, [1.0]), Dual(2.0, [0.0]))
        b = Interval(3.0, 3.0)
        prod = a * b
        assert prod.as_floats() == (-3.0, 6.0)
        assert prod.lo.tangent[0] == 3.0


class TestElementary:
    def test_sin_monotone_branch(self):
        lo, hi = iv.sin(Interval(0.0, math.pi / 2)).as_floats()
        assert lo == pytest.approx(0.0, abs=1e-15)
        assert hi == 1.0

    def test_cos_spans_extremum(self):
        assert iv.cos(Interval(0.0, math.pi)).as_floats() == (-1.0, 1.0)

    def test_arctan(self):
        lo, hi = iv.arctan(Interval(-1.0, 1.0)).as_floats()
        assert lo == pytest.approx(-math.pi / 4)
        assert hi == pytest.approx(math.pi / 4)

    def test_tan_pole(self):
        with pytest.raises(DomainError):
            iv.tan(Interval(1.0, 2.0))
        with pytest.raises(DomainError):
            iv.tan(Interval(-4.0, 0.0))

    def test_wide_argument(self):
        assert iv.sin(Interval(0.0, 7.0)).as_floats() == (-1.0, 1.0)

    def test_dispatch_on_arrays_and_floats(self):
        assert_allclose(iv.sin(np.array([0.0, math.pi / 2])), [0.0, 1.0], atol=1e-15)
        assert iv.cos(0.0) == 1.0


class TestSoundness:
    @pytest.mark.parametrize("name", sorted(UNARY))
    def test_unary(self, name, rng):
        f_interval, f_point, (low, high) = UNARY[name]
        for _ in range(2000):
            a = _random_interval(rng, low, high)
            if name == "tan" and (a.lo <= -math.pi / 2 or a.hi >= math.pi / 2):
                continue
            result = f_interval(a)
            assert _inside(result, f_point(_samples(rng, a, 10))), f"{name}{a!r} -> {result!r}"

    @pytest.mark.parametrize("name", sorted(BINARY))
    def test_binary(self, name, rng):
        op = BINARY[name]
        for _ in range(2000):
            a = _random_interval(rng, -5.0, 5.0)
            if name == "div":
                b = _random_interval(rng, 0.1, 5.0) * (1.0 if rng.uniform() < 0.5 else -1.0)
            else:
                b = _random_interval(rng, -5.0, 5.0)
            result = op(a, b)
            xs = _samples(rng, a, 10)
            ys = _samples(rng, b, 10)
            assert _inside(result, op(xs[:, None], ys[None, :]).ravel()), f"{name}({a!r}, {b!r})"

    @pytest.mark.parametrize("name", ["sin", "cos", "arctan", "sqr"])
    def test_inclusion_monotone(self, name, rng):
        f_interval, _, (low, high) = UNARY[name]
        for _ in range(500):
            outer = _random_interval(rng, low, high)
            inner = _random_interval(rng, outer.lo, outer.hi)
            assert f_interval(inner).subset(f_interval(outer), tol=1e-12)

    def test_degenerate_matches_points(self, rng):
        for x in rng.uniform(-3.0, 3.0, 200):
            point = Interval(float(x))
            for name, (f_interval, f_point, _) in UNARY.items():
                if name == "tan" and abs(x) >= 1.5:
                    continue
                lo, hi = f_interval(point).as_floats()
                assert lo == pytest.approx(f_point(x), rel=1e-12, abs=1e-15)
                assert hi == pytest.approx(f_point(x), rel=1e-12, abs=1e-15)


class TestMatVec:
    def test_identity(self):
        v = IntervalVector.from_bounds([0.0, 1.0], [1.0, 3.0])
        out = mat_vec(np.eye(2), v)
        assert_allclose(out.lower_values(), [0.0, 1.0])
        assert_allclose(out.upper_values(), [1.0, 3.0])

    def test_sign_split(self):
        v = IntervalVector.from_bounds([0.0, 0.0], [1.0, 1.0])
        assert mat_vec(np.array([[1.0, -1.0]]), v)[0].as_floats() == (-1.0, 1.0)

    def test_zero_row(self):
        v = IntervalVector.from_bounds([0.0, 0.0], [1.0, 1.0])
        assert mat_vec(np.zeros((1, 2)), v)[0].as_floats() == (0.0, 0.0)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            mat_vec(np.eye(3), IntervalVector.from_bounds([0.0, 0.0], [1.0, 1.0]))

    def test_exact_range(self, rng):
        M = rng.normal(size=(4, 3))
        lo = rng.uniform(-1.0, 0.0, 3)
        hi = lo + rng.uniform(0.0, 1.0, 3)
        out = mat_vec(M, IntervalVector.from_bounds(lo, hi))
        corners = np.array(np.meshgrid(*zip(lo, hi))).reshape(3, -1)
        images = M @ corners
        assert_allclose(out.lower_values(), images.min(axis=1), atol=1e-12)
        assert_allclose(out.upper_values(), images.max(axis=1), atol=1e-12)


class TestInclusion:
    def test_identity_field(self):
        x = IntervalVector.from_bounds([0.0, -1.0], [1.0, 1.0])
        out = inclusion(lambda x, u, w: x, x, [])
        assert_allclose(out.lower_values(), [0.0, -1.0])
        assert_allclose(out.upper_values(), [1.0, 1.0])

    def test_vanderpol_point(self):
        x = IntervalVector.from_bounds([1.0, 0.0], [1.0, 0.0])
        out = inclusion(lambda x, u, w: vanderpol_field(x, 1.0), x, [])
        assert_allclose(out.lower_values(), [2.0 / 3.0, 1.0], rtol=1e-12)
        assert_allclose(out.upper_values(), [2.0 / 3.0, 1.0], rtol=1e-12)

    def test_vanderpol_containment(self, rng):
        lo = np.array([0.5, -0.5])
        hi = np.array([1.5, 0.5])
        out = inclusion(lambda x, u, w: vanderpol_field(x, 1.0), IntervalVector.from_bounds(lo, hi), [])
        points = rng.uniform(lo, hi, (100, 2))
        derivs = np.array(vanderpol_field(points.T, 1.0)).T
        assert np.all(derivs >= out.lower_values() - 1e-12)
        assert np.all(derivs <= out.upper_values() + 1e-12)

    def test_disturbance_enters(self):
        x = IntervalVector.from_bounds([0.0], [1.0])
        w = IntervalVector.from_bounds([-0.5], [0.5])
        out = inclusion(lambda x, u, w: [x[0] + u[0] + w[0]], x, [1.0], w)
        assert_allclose(out.lower_values(), [0.5])
        assert_allclose(out.upper_values(), [2.5])
