"""Closed-interval arithmetic and natural inclusion functions

Endpoints may be floats or ``Dual`` numbers; every branch decision (min/max
of candidate endpoints, extremum detection in trig functions) uses primal
values, so tangents follow the selected endpoint. No directed rounding:
enclosures are sound up to floating-point roundoff.

The module-level ``sin``/``cos``/``tan``/``arctan``/``sqr`` dispatch on their
argument (Interval, Dual, numpy array or float), so a vector field written
with them can be evaluated on points, on sample arrays and on boxes.
"""
import math
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Sequence

import numpy as np

from lpreach.core.errors import DimensionMismatch, DivisionByZeroInterval, DomainError, IntervalError
from lpreach.services import autodiff as ad
from lpreach.services.autodiff import Dual, value_of

_TWO_PI = 2.0 * math.pi
_HALF_PI = 0.5 * math.pi


def _lowest(*candidates):
    return min(candidates, key=value_of)


def _highest(*candidates):
    return max(candidates, key=value_of)


class Interval:
    """Closed interval [lo, hi] with lo <= hi"""

    __slots__ = ("lo", "hi")
    __array_ufunc__ = None

    def __init__(self, lo, hi=None):
        if hi is None:
            hi = lo
        if isinstance(lo, (np.floating, np.integer, int)):
            lo = float(lo)
        if isinstance(hi, (np.floating, np.integer, int)):
            hi = float(hi)
        if value_of(lo) > value_of(hi):
            raise IntervalError(f"invalid interval: lo={value_of(lo)!r} > hi={value_of(hi)!r}")
        self.lo = lo
        self.hi = hi

    @staticmethod
    def _coerce(other) -> "Interval":
        if isinstance(other, Interval):
            return other
        return Interval(other, other)

    # arithmetic
    def __add__(self, other):
        if isinstance(other, Interval):
            return Interval(self.lo + other.lo, self.hi + other.hi)
        return Interval(self.lo + other, self.hi + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Interval):
            return Interval(self.lo - other.hi, self.hi - other.lo)
        return Interval(self.lo - other, self.hi - other)

    def __rsub__(self, other):
        return Interval(other - self.hi, other - self.lo)

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __mul__(self, other):
        if isinstance(other, Interval):
            products = (
                self.lo * other.lo, self.lo * other.hi,
                self.hi * other.lo, self.hi * other.hi,
            )
            return Interval(_lowest(*products), _highest(*products))
        if value_of(other) >= 0.0:
            return Interval(self.lo * other, self.hi * other)
        return Interval(self.hi * other, self.lo * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Interval._coerce(other)
        if value_of(other.lo) <= 0.0 <= value_of(other.hi):
            raise DivisionByZeroInterval(f"divisor {other!r} contains zero")
        return self * Interval(1.0 / other.hi, 1.0 / other.lo)

    def __rtruediv__(self, other):
        return Interval._coerce(other) / self

    def __pow__(self, power: int):
        if not isinstance(power, (int, np.integer)) or power < 0:
            raise TypeError("Interval supports non-negative integer powers only")
        power = int(power)
        if power == 0:
            return Interval(1.0, 1.0)
        lo_p, hi_p = self.lo ** power, self.hi ** power
        if power % 2:
            return Interval(lo_p, hi_p)
        if value_of(self.lo) >= 0.0:
            return Interval(lo_p, hi_p)
        if value_of(self.hi) <= 0.0:
            return Interval(hi_p, lo_p)
        return Interval(0.0, _highest(lo_p, hi_p))

    # set helpers
    @property
    def width(self) -> float:
        return value_of(self.hi) - value_of(self.lo)

    @property
    def midpoint(self) -> float:
        return 0.5 * (value_of(self.lo) + value_of(self.hi))

    def contains(self, x, tol: float = 0.0) -> bool:
        x = value_of(x)
        return value_of(self.lo) - tol <= x <= value_of(self.hi) + tol

    def subset(self, other: "Interval", tol: float = 0.0) -> bool:
        return (
            value_of(other.lo) - tol <= value_of(self.lo)
            and value_of(self.hi) <= value_of(other.hi) + tol
        )

    def hull(self, other: "Interval") -> "Interval":
        return Interval(_lowest(self.lo, other.lo), _highest(self.hi, other.hi))

    def intersect(self, other: "Interval") -> Optional["Interval"]:
        lo, hi = _highest(self.lo, other.lo), _lowest(self.hi, other.hi)
        if value_of(lo) > value_of(hi):
            return None
        return Interval(lo, hi)

    def as_floats(self) -> tuple:
        return value_of(self.lo), value_of(self.hi)

    def __repr__(self) -> str:
        return f"Interval({value_of(self.lo)!r}, {value_of(self.hi)!r})"


@dataclass
class IntervalVector:
    components: List[Interval]

    @classmethod
    def from_bounds(
        cls,
        lo: Sequence[float],
        hi: Sequence[float],
        dlo: Optional[np.ndarray] = None,
        dhi: Optional[np.ndarray] = None,
    ) -> "IntervalVector":
        """Box from corner arrays; tangent arrays (len, k) make Dual endpoints"""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape:
            raise DimensionMismatch(f"corner shapes {lo.shape} and {hi.shape} differ")
        los = ad.pack(lo, dlo)
        his = ad.pack(hi, dhi)
        return cls([Interval(a, b) for a, b in zip(los, his)])

    def __len__(self) -> int:
        return len(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def __iter__(self) -> Iterator[Interval]:
        return iter(self.components)

    def lower(self) -> list:
        return [c.lo for c in self.components]

    def upper(self) -> list:
        return [c.hi for c in self.components]

    def lower_values(self) -> np.ndarray:
        return np.array([value_of(c.lo) for c in self.components])

    def upper_values(self) -> np.ndarray:
        return np.array([value_of(c.hi) for c in self.components])

    def widths(self) -> np.ndarray:
        return self.upper_values() - self.lower_values()

    def contains(self, point: Sequence[float], tol: float = 0.0) -> bool:
        return all(c.contains(x, tol) for c, x in zip(self.components, point))

    def subset(self, other: "IntervalVector", tol: float = 0.0) -> bool:
        return all(a.subset(b, tol) for a, b in zip(self.components, other.components))


# ---------------------------------------------------------------------------
# Elementary functions
# ---------------------------------------------------------------------------

def _contains_phase(lo: float, hi: float, phase: float, period: float) -> bool:
    """Does [lo, hi] contain phase + j*period for some integer j"""
    j = math.ceil((lo - phase) / period)
    return phase + j * period <= hi


def _interval_sin(a: Interval) -> Interval:
    lo_v, hi_v = a.as_floats()
    if hi_v - lo_v >= _TWO_PI:
        return Interval(-1.0, 1.0)
    s_lo, s_hi = ad.sin(a.lo), ad.sin(a.hi)
    low = -1.0 if _contains_phase(lo_v, hi_v, -_HALF_PI, _TWO_PI) else _lowest(s_lo, s_hi)
    high = 1.0 if _contains_phase(lo_v, hi_v, _HALF_PI, _TWO_PI) else _highest(s_lo, s_hi)
    return Interval(low, high)


def _interval_cos(a: Interval) -> Interval:
    lo_v, hi_v = a.as_floats()
    if hi_v - lo_v >= _TWO_PI:
        return Interval(-1.0, 1.0)
    c_lo, c_hi = ad.cos(a.lo), ad.cos(a.hi)
    low = -1.0 if _contains_phase(lo_v, hi_v, math.pi, _TWO_PI) else _lowest(c_lo, c_hi)
    high = 1.0 if _contains_phase(lo_v, hi_v, 0.0, _TWO_PI) else _highest(c_lo, c_hi)
    return Interval(low, high)


def _interval_tan(a: Interval) -> Interval:
    lo_v, hi_v = a.as_floats()
    if hi_v - lo_v >= math.pi or _contains_phase(lo_v, hi_v, _HALF_PI, math.pi):
        raise DomainError(f"tan is undefined on {a!r}: interval crosses a pole")
    return Interval(ad.tan(a.lo), ad.tan(a.hi))


def _interval_arctan(a: Interval) -> Interval:
    return Interval(ad.arctan(a.lo), ad.arctan(a.hi))


def sin(x):
    if isinstance(x, Interval):
        return _interval_sin(x)
    if isinstance(x, np.ndarray):
        return np.sin(x)
    return ad.sin(x)


def cos(x):
    if isinstance(x, Interval):
        return _interval_cos(x)
    if isinstance(x, np.ndarray):
        return np.cos(x)
    return ad.cos(x)


def tan(x):
    if isinstance(x, Interval):
        return _interval_tan(x)
    if isinstance(x, np.ndarray):
        return np.tan(x)
    return ad.tan(x)


def arctan(x):
    if isinstance(x, Interval):
        return _interval_arctan(x)
    if isinstance(x, np.ndarray):
        return np.arctan(x)
    return ad.arctan(x)


def sqr(x):
    """x**2, tight on intervals that straddle zero"""
    return x ** 2


# ---------------------------------------------------------------------------
# Linear maps and inclusion functions
# ---------------------------------------------------------------------------

def mat_vec(M: np.ndarray, v: Sequence) -> IntervalVector:
    """
    Exact range of M v for a real matrix and an interval (or point) vector

    Raises:
        DimensionMismatch: M has a different number of columns than v has components
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[1] != len(v):
        raise DimensionMismatch(f"matrix of shape {M.shape} cannot act on a vector of length {len(v)}")
    out = []
    for row in M:
        acc = Interval(0.0, 0.0)
        for coef, comp in zip(row, v):
            if coef == 0.0:
                continue
            acc = acc + comp * float(coef)
        out.append(acc)
    return IntervalVector(out)


def as_interval(x) -> Interval:
    return x if isinstance(x, Interval) else Interval(x, x)


VectorField = Callable[[Sequence, Sequence, Optional[Sequence]], Sequence]


def inclusion(f: VectorField, x: IntervalVector, u: Sequence, w: Optional[IntervalVector] = None) -> IntervalVector:
    """
    Natural inclusion function of ``f`` over the box ``x`` and disturbance box ``w``

    ``f(x, u, w)`` must be composed from the arithmetic operators and the
    dispatching elementary functions of this module. ``u`` may hold points or
    intervals.

    Raises:
        DomainError: a primitive left its domain
    """
    components = list(x.components)
    dist = list(w.components) if w is not None else None
    result = f(components, list(u), dist)
    return IntervalVector([as_interval(r) for r in result])
