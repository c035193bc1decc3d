"""Forward-mode differentiation

Two pieces live here:

* ``Dual``: a scalar carrying a value and a k-wide tangent, used by interval
  arithmetic and the embedding loop.
* Tangent propagation through the simplex tableau. The kernel in
  ``simplex`` calls ``propagate_pivot`` and ``propagate_marking`` next to the
  primal row operations, so pivot selection is driven by primal values only
  and the tangent follows the same pivot path.

Two tangent layouts are supported. The full layout keeps a tangent for every
tableau entry, shape (B, k, R, C). When only right-hand sides are seeded the
multipliers of every row operation are tangent-free, so all non-rhs tangents
stay zero and the rhs-only layout (B, k, R) is exact.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from lpreach.core.errors import DimensionMismatch
from lpreach.services.lp_core import GeneralLP, LPBatch, LPTangents

logger = logging.getLogger(__name__)

Number = Union[float, "Dual"]
_SCALARS = (int, float, np.integer, np.floating)


class Dual:
    """Value plus tangent vector; ordering compares values only"""

    __slots__ = ("value", "tangent")
    __array_ufunc__ = None  # numpy scalars defer to the reflected operators

    def __init__(self, value: float, tangent: np.ndarray):
        self.value = float(value)
        self.tangent = np.asarray(tangent, dtype=float)

    @classmethod
    def constant(cls, value: float, k: int) -> "Dual":
        return cls(value, np.zeros(k))

    @classmethod
    def seed(cls, value: float, index: int, k: int) -> "Dual":
        t = np.zeros(k)
        t[index] = 1.0
        return cls(value, t)

    @property
    def k(self) -> int:
        return self.tangent.shape[0]

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.tangent + other.tangent)
        if not isinstance(other, _SCALARS):
            return NotImplemented
        return Dual(self.value + float(other), self.tangent)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.tangent - other.tangent)
        if not isinstance(other, _SCALARS):
            return NotImplemented
        return Dual(self.value - float(other), self.tangent)

    def __rsub__(self, other):
        if not isinstance(other, _SCALARS):
            return NotImplemented
        return Dual(float(other) - self.value, -self.tangent)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.value * other.value,
                self.value * other.tangent + other.value * self.tangent,
            )
        if not isinstance(other, _SCALARS):
            return NotImplemented
        other = float(other)
        return Dual(self.value * other, self.tangent * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            if other.value == 0.0:
                raise ZeroDivisionError("Dual division by zero value")
            q = self.value / other.value
            return Dual(q, (self.tangent - q * other.tangent) / other.value)
        if not isinstance(other, _SCALARS):
            return NotImplemented
        other = float(other)
        if other == 0.0:
            raise ZeroDivisionError("Dual division by zero")
        return Dual(self.value / other, self.tangent / other)

    def __rtruediv__(self, other):
        if not isinstance(other, _SCALARS):
            return NotImplemented
        if self.value == 0.0:
            raise ZeroDivisionError("Dual division by zero value")
        q = float(other) / self.value
        return Dual(q, -q / self.value * self.tangent)

    def __neg__(self):
        return Dual(-self.value, -self.tangent)

    def __pos__(self):
        return self

    def __abs__(self):
        return -self if self.value < 0 else self

    def __pow__(self, power: int):
        if not isinstance(power, (int, np.integer)):
            raise TypeError("Dual supports integer powers only")
        power = int(power)
        if power == 0:
            return Dual(1.0, np.zeros_like(self.tangent))
        if power < 0:
            return 1.0 / (self ** (-power))
        return Dual(self.value ** power, power * self.value ** (power - 1) * self.tangent)

    def __float__(self) -> float:
        return self.value

    def __lt__(self, other):
        return self.value < _value(other)

    def __le__(self, other):
        return self.value <= _value(other)

    def __gt__(self, other):
        return self.value > _value(other)

    def __ge__(self, other):
        return self.value >= _value(other)

    def __eq__(self, other):
        return self.value == _value(other)

    __hash__ = None

    def __repr__(self) -> str:
        return f"Dual({self.value!r}, {self.tangent!r})"


def _value(x) -> float:
    return x.value if isinstance(x, Dual) else float(x)


def value_of(x) -> float:
    """Primal value of a float or Dual"""
    return _value(x)


def sin(x):
    if isinstance(x, Dual):
        return Dual(math.sin(x.value), math.cos(x.value) * x.tangent)
    return math.sin(float(x))


def cos(x):
    if isinstance(x, Dual):
        return Dual(math.cos(x.value), -math.sin(x.value) * x.tangent)
    return math.cos(float(x))


def tan(x):
    if isinstance(x, Dual):
        t = math.tan(x.value)
        return Dual(t, (1.0 + t * t) * x.tangent)
    return math.tan(float(x))


def arctan(x):
    if isinstance(x, Dual):
        return Dual(math.atan(x.value), x.tangent / (1.0 + x.value * x.value))
    return math.atan(float(x))


def positive_part(x):
    """max{x, 0}; at exactly 0 the tangent of x is kept"""
    if _value(x) >= 0.0:
        return x
    return Dual.constant(0.0, x.k) if isinstance(x, Dual) else 0.0


def pack(values: np.ndarray, tangents: Optional[np.ndarray]) -> list:
    """Turn (values, tangents[len, k]) into a list of Duals, or floats when untangled"""
    if tangents is None:
        return [float(v) for v in values]
    return [Dual(v, t) for v, t in zip(values, tangents)]


def unpack(items: Sequence, k: Optional[int]) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Inverse of ``pack``"""
    values = np.array([_value(v) for v in items], dtype=float)
    if k is None:
        return values, None
    tangents = np.zeros((len(items), k))
    for i, v in enumerate(items):
        if isinstance(v, Dual):
            tangents[i] = v.tangent
    return values, tangents


# ---------------------------------------------------------------------------
# Tableau tangents
# ---------------------------------------------------------------------------

def tangent_tableau(
    dA: Optional[np.ndarray],
    db: np.ndarray,
    dc: Optional[np.ndarray],
    n_c: int,
    rhs_only: bool,
) -> np.ndarray:
    """Tangent of the initial phase-1 tableau for seeds in canonical space"""
    B, k, m = db.shape
    if rhs_only:
        dT = np.zeros((B, k, m + 2))
        dT[:, :, :m] = db
        for i in range(m):
            dT[:, :, m + 1] -= db[:, :, i]
        return dT

    dT = np.zeros((B, k, m + 2, n_c + m + 1))
    dT[:, :, :m, -1] = db
    if dA is not None:
        dT[:, :, :m, :n_c] = dA
    if dc is not None:
        dT[:, :, m, :n_c] = dc
    for i in range(m):
        if dA is not None:
            dT[:, :, m + 1, :n_c] -= dA[:, :, i, :]
        dT[:, :, m + 1, -1] -= db[:, :, i]
    return dT


def propagate_pivot(
    dsub: np.ndarray,
    rows: np.ndarray,
    cols: np.ndarray,
    pivot: np.ndarray,
    pivot_row: np.ndarray,
    factors: np.ndarray,
    rhs_only: bool,
) -> None:
    """
    Tangent of one Gauss-Jordan pivot, in place

    Args:
        dsub: tangents of the pivoted problems, (B', k, R, C) or (B', k, R)
        rows, cols: pivot positions
        pivot: primal pivot entries
        pivot_row: primal pivot row after scaling
        factors: primal pivot column before the pivot, (B', R)
        rhs_only: layout of ``dsub``
    """
    kk = np.arange(rows.shape[0])
    if rhs_only:
        dprow = dsub[kk, :, rows] / pivot[:, None]
        dsub -= factors[:, None, :] * dprow[:, :, None]
        dsub[kk, :, rows] = dprow
        return

    dp = dsub[kk, :, rows, cols]
    dP = dsub[kk, :, rows, :]
    df = dsub[kk, :, :, cols]
    dprow = (dP - pivot_row[:, None, :] * dp[:, :, None]) / pivot[:, None, None]
    dsub -= df[:, :, :, None] * pivot_row[:, None, None, :]
    dsub -= factors[:, None, :, None] * dprow[:, :, None, :]
    dsub[kk, :, rows, :] = dprow
    dsub[kk, :, :, cols] = 0.0


def propagate_marking(dT: np.ndarray, T: np.ndarray, mask: np.ndarray, rhs_only: bool) -> None:
    """Tangent of |row| for the masked constraint rows, sign(0) taken as +1"""
    m = mask.shape[1]
    if rhs_only:
        sign = np.where(T[:, :m, -1] >= 0.0, 1.0, -1.0)
        dT[:, :, :m] *= np.where(mask, sign, 1.0)[:, None, :]
        return
    sign = np.where(T[:, :m, :] >= 0.0, 1.0, -1.0)
    dT[:, :, :m, :] *= np.where(mask[:, :, None], sign, 1.0)[:, None, :, :]


# ---------------------------------------------------------------------------
# Bundle-level API
# ---------------------------------------------------------------------------

@dataclass
class TangentBundle:
    """
    Primal problem plus k-wide tangent seeds

    Seeds have the primal shape with a trailing k axis: c (n, k),
    A_ub (m_ub, n, k), b_ub (m_ub, k), A_eq (m_eq, n, k), b_eq (m_eq, k).
    """

    primal: GeneralLP
    k: int
    c: Optional[np.ndarray] = None
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.k < 1:
            raise DimensionMismatch("tangent bundles need k >= 1 directions")
        p = self.primal
        expected = {
            "c": (p.n,),
            "A_ub": (p.m_ub, p.n),
            "b_ub": (p.m_ub,),
            "A_eq": (p.m_eq, p.n),
            "b_eq": (p.m_eq,),
        }
        for name, shape in expected.items():
            seed = getattr(self, name)
            if seed is None:
                continue
            seed = np.asarray(seed, dtype=float)
            if seed.shape != shape + (self.k,):
                raise DimensionMismatch(
                    f"seed for {name} must have shape {shape + (self.k,)}, got {seed.shape}"
                )
            setattr(self, name, seed)

    def scaled(self, factor: float) -> "TangentBundle":
        def _s(a):
            return None if a is None else a * factor

        return TangentBundle(
            self.primal, self.k, _s(self.c), _s(self.A_ub), _s(self.b_ub), _s(self.A_eq), _s(self.b_eq)
        )

    def to_batch(self) -> Tuple[LPBatch, LPTangents]:
        """Batch-of-one view with k moved next to the batch axis"""

        def _lead(a):
            return None if a is None else np.moveaxis(a, -1, 0)[None]

        return LPBatch.stack([self.primal]), LPTangents(
            k=self.k,
            dc=_lead(self.c),
            dA_ub=_lead(self.A_ub),
            db_ub=_lead(self.b_ub),
            dA_eq=_lead(self.A_eq),
            db_eq=_lead(self.b_eq),
        )


@dataclass
class DifferentiableOutcome:
    """Primal outcome with tangents of x (n, k) and fun (k)"""

    outcome: "object"  # simplex.SolveOutcome
    dx: np.ndarray
    dfun: np.ndarray
    valid: bool = True
    pivots: List = field(default_factory=list)


def solve_with_tangents(tb: TangentBundle, config=None) -> DifferentiableOutcome:
    """
    Solve ``tb.primal`` and push the seeds through every row operation

    When status.success is false, dx and dfun are zero and ``valid`` is False.
    """
    # 延迟导入，避免循环依赖
    from lpreach.services.simplex import solve_stacked

    batch, seeds = tb.to_batch()
    solution = solve_stacked(batch, config=config, tangents=seeds, record_pivots=True)
    outcome = solution.outcome(0)
    return DifferentiableOutcome(
        outcome=outcome,
        dx=solution.dx[0],
        dfun=solution.dfun[0],
        valid=bool(solution.success[0]),
        pivots=outcome.pivots,
    )


def solve_batch_with_tangents(
    batch: LPBatch,
    seeds: Optional[LPTangents],
    config=None,
    workers: Optional[int] = None,
):
    """
    Batch form of ``solve_with_tangents``, used by interval refinement

    Returns a ``BatchSolution`` whose dx/dfun rows equal the per-problem
    results bit for bit; with ``seeds=None`` only the primal is solved.
    """
    from lpreach.services.simplex import solve_chunked

    return solve_chunked(batch, config=config, tangents=seeds, workers=workers)
