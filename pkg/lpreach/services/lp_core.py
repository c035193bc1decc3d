"""General and canonical LP forms

A general problem reads

    min c^T x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0 (or x free)

and is converted to the canonical form ``min c_c^T z  s.t.  A z = b, z >= 0,
b >= 0`` with the column layout ``[x | -x (free mode) | slacks]`` and the row
layout ``[equalities | inequalities]``. Rows whose right-hand side is negative
are negated after the slacks are inserted; the signs are kept in the
``RecoveryMap`` so tangents can be pushed through the same assembly.

Everything here works on stacked problems of identical shape (leading batch
axis); the single-problem functions are thin views over the batch ones.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from lpreach.core.errors import DimensionMismatch, UnsupportedBounds

logger = logging.getLogger(__name__)


def _as_matrix(value, rows: int, cols: int, name: str) -> np.ndarray:
    if value is None:
        if rows:
            raise DimensionMismatch(f"{name} is missing but its right-hand side has {rows} entries")
        return np.zeros((0, cols))
    arr = np.array(value, dtype=float)
    if arr.size == 0:
        return np.zeros((0, cols))
    if arr.ndim == 1 and rows == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != cols:
        raise DimensionMismatch(f"{name} must have {cols} columns, got shape {arr.shape}")
    return arr


def _as_vector(value, length: Optional[int], name: str) -> np.ndarray:
    if value is None:
        return np.zeros(length or 0)
    arr = np.array(value, dtype=float).reshape(-1)
    if length is not None and arr.shape[0] != length:
        raise DimensionMismatch(f"{name} must have length {length}, got {arr.shape[0]}")
    return arr


@dataclass(frozen=True)
class GeneralLP:
    """Problem in general form; ``unbounded`` selects free variables instead of x >= 0"""

    c: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    unbounded: bool = False

    @classmethod
    def create(
        cls,
        c,
        A_ub=None,
        b_ub=None,
        A_eq=None,
        b_eq=None,
        unbounded: bool = False,
        bounds=None,
    ) -> "GeneralLP":
        """
        Build and validate a problem; missing blocks become empty arrays

        Raises:
            UnsupportedBounds: ``bounds`` was given
            DimensionMismatch: shapes disagree
        """
        if bounds is not None:
            raise UnsupportedBounds(
                "general variable bounds are not supported; use unbounded=True for free variables"
            )
        c_arr = _as_vector(c, None, "c")
        n = c_arr.shape[0]
        if n == 0:
            raise DimensionMismatch("c must have at least one entry")

        b_ub_arr = _as_vector(b_ub, None, "b_ub")
        A_ub_arr = _as_matrix(A_ub, b_ub_arr.shape[0], n, "A_ub")
        b_eq_arr = _as_vector(b_eq, None, "b_eq")
        A_eq_arr = _as_matrix(A_eq, b_eq_arr.shape[0], n, "A_eq")

        problem = cls(c_arr, A_ub_arr, b_ub_arr, A_eq_arr, b_eq_arr, bool(unbounded))
        problem.validate()
        return problem

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def m_ub(self) -> int:
        return self.A_ub.shape[0]

    @property
    def m_eq(self) -> int:
        return self.A_eq.shape[0]

    def validate(self) -> None:
        n = self.c.shape[0]
        if self.c.ndim != 1:
            raise DimensionMismatch(f"c must be a vector, got shape {self.c.shape}")
        for name, A, b in (("ub", self.A_ub, self.b_ub), ("eq", self.A_eq, self.b_eq)):
            if A.ndim != 2 or A.shape[1] != n:
                raise DimensionMismatch(f"A_{name} must have shape (m_{name}, {n}), got {A.shape}")
            if b.ndim != 1 or b.shape[0] != A.shape[0]:
                raise DimensionMismatch(
                    f"b_{name} length {b.shape[0] if b.ndim else 0} does not match {A.shape[0]} rows of A_{name}"
                )

    def objective(self, x: np.ndarray) -> float:
        return float(np.dot(self.c, x))


@dataclass(frozen=True)
class LPBatch:
    """Stacked problems sharing (n, m_ub, m_eq) and the ``unbounded`` flag"""

    c: np.ndarray      # (B, n)
    A_ub: np.ndarray   # (B, m_ub, n)
    b_ub: np.ndarray   # (B, m_ub)
    A_eq: np.ndarray   # (B, m_eq, n)
    b_eq: np.ndarray   # (B, m_eq)
    unbounded: bool = False

    @classmethod
    def stack(cls, problems: Sequence[GeneralLP]) -> "LPBatch":
        if not problems:
            raise DimensionMismatch("cannot stack an empty problem list")
        first = problems[0]
        shape = (first.n, first.m_ub, first.m_eq)
        for i, p in enumerate(problems):
            if (p.n, p.m_ub, p.m_eq) != shape:
                raise DimensionMismatch(
                    f"problem {i} has dimensions {(p.n, p.m_ub, p.m_eq)}, expected {shape}"
                )
            if p.unbounded != first.unbounded:
                raise DimensionMismatch(f"problem {i} has a different unbounded flag")
        return cls(
            c=np.stack([p.c for p in problems]),
            A_ub=np.stack([p.A_ub for p in problems]),
            b_ub=np.stack([p.b_ub for p in problems]),
            A_eq=np.stack([p.A_eq for p in problems]),
            b_eq=np.stack([p.b_eq for p in problems]),
            unbounded=first.unbounded,
        )

    @property
    def size(self) -> int:
        return self.c.shape[0]

    @property
    def n(self) -> int:
        return self.c.shape[1]

    @property
    def m_ub(self) -> int:
        return self.A_ub.shape[1]

    @property
    def m_eq(self) -> int:
        return self.A_eq.shape[1]

    def validate(self) -> None:
        B, n = self.c.shape
        expected = {
            "A_ub": (B, self.b_ub.shape[-1] if self.b_ub.ndim == 2 else -1, n),
            "A_eq": (B, self.b_eq.shape[-1] if self.b_eq.ndim == 2 else -1, n),
        }
        if self.A_ub.shape != expected["A_ub"] or self.b_ub.shape[0] != B:
            raise DimensionMismatch(f"A_ub/b_ub shapes {self.A_ub.shape}/{self.b_ub.shape} disagree")
        if self.A_eq.shape != expected["A_eq"] or self.b_eq.shape[0] != B:
            raise DimensionMismatch(f"A_eq/b_eq shapes {self.A_eq.shape}/{self.b_eq.shape} disagree")

    def problem(self, i: int) -> GeneralLP:
        return GeneralLP(
            self.c[i], self.A_ub[i], self.b_ub[i], self.A_eq[i], self.b_eq[i], self.unbounded
        )

    def chunk(self, start: int, stop: int) -> "LPBatch":
        return LPBatch(
            self.c[start:stop],
            self.A_ub[start:stop],
            self.b_ub[start:stop],
            self.A_eq[start:stop],
            self.b_eq[start:stop],
            self.unbounded,
        )


@dataclass(frozen=True)
class LPTangents:
    """
    Tangent seeds for a batch, k directions on axis 1

    Any field left as None is an all-zero seed. Shapes: dc (B, k, n),
    dA_ub (B, k, m_ub, n), db_ub (B, k, m_ub), dA_eq (B, k, m_eq, n),
    db_eq (B, k, m_eq).
    """

    k: int
    dc: Optional[np.ndarray] = None
    dA_ub: Optional[np.ndarray] = None
    db_ub: Optional[np.ndarray] = None
    dA_eq: Optional[np.ndarray] = None
    db_eq: Optional[np.ndarray] = None

    @property
    def rhs_only(self) -> bool:
        """True when only right-hand sides carry tangents"""
        return self.dc is None and self.dA_ub is None and self.dA_eq is None

    def chunk(self, start: int, stop: int) -> "LPTangents":
        def _cut(a):
            return None if a is None else a[start:stop]

        return LPTangents(
            self.k, _cut(self.dc), _cut(self.dA_ub), _cut(self.db_ub), _cut(self.dA_eq), _cut(self.db_eq)
        )


@dataclass(frozen=True)
class RecoveryMap:
    """How canonical columns map back to the original variables"""

    n: int
    m_eq: int
    m_ub: int
    unbounded: bool
    row_signs: np.ndarray  # (m,) or (B, m), +1/-1 per canonical row

    @property
    def n_c(self) -> int:
        return (2 * self.n if self.unbounded else self.n) + self.m_ub

    @property
    def m(self) -> int:
        return self.m_eq + self.m_ub

    @property
    def slack_columns(self) -> np.ndarray:
        start = 2 * self.n if self.unbounded else self.n
        return np.arange(start, start + self.m_ub)


@dataclass(frozen=True)
class CanonicalLP:
    A: np.ndarray  # (m, n_c)
    b: np.ndarray  # (m,)
    c: np.ndarray  # (n_c,)
    recovery: RecoveryMap

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n_c(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class CanonicalBatch:
    A: np.ndarray  # (B, m, n_c)
    b: np.ndarray  # (B, m)
    c: np.ndarray  # (B, n_c)
    recovery: RecoveryMap  # row_signs (B, m)

    @property
    def size(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[1]

    @property
    def n_c(self) -> int:
        return self.A.shape[2]

    def problem(self, i: int) -> CanonicalLP:
        r = self.recovery
        return CanonicalLP(
            self.A[i], self.b[i], self.c[i],
            RecoveryMap(r.n, r.m_eq, r.m_ub, r.unbounded, r.row_signs[i]),
        )


def _assemble_columns(A_eq: np.ndarray, A_ub: np.ndarray, unbounded: bool, with_slack: bool) -> np.ndarray:
    """Stack [A_eq; A_ub] over the last two axes and add split and slack blocks"""
    A = np.concatenate([A_eq, A_ub], axis=-2)
    blocks = [A]
    if unbounded:
        blocks.append(-A)
    m_eq, m_ub = A_eq.shape[-2], A_ub.shape[-2]
    slack = np.zeros(A.shape[:-1] + (m_ub,))
    if with_slack and m_ub:
        slack[..., m_eq:, :] = np.eye(m_ub)
    blocks.append(slack)
    return np.concatenate(blocks, axis=-1)


def _assemble_objective(c: np.ndarray, m_ub: int, unbounded: bool) -> np.ndarray:
    blocks = [c]
    if unbounded:
        blocks.append(-c)
    blocks.append(np.zeros(c.shape[:-1] + (m_ub,)))
    return np.concatenate(blocks, axis=-1)


def canonicalize_batch(batch: LPBatch) -> CanonicalBatch:
    """Canonical form of every problem in ``batch``"""
    batch.validate()
    A = _assemble_columns(batch.A_eq, batch.A_ub, batch.unbounded, with_slack=True)
    b = np.concatenate([batch.b_eq, batch.b_ub], axis=-1)
    signs = np.where(b < 0, -1.0, 1.0)
    A = A * signs[..., :, None]
    b = b * signs
    c = _assemble_objective(batch.c, batch.m_ub, batch.unbounded)
    recovery = RecoveryMap(batch.n, batch.m_eq, batch.m_ub, batch.unbounded, signs)
    return CanonicalBatch(A, b, c, recovery)


def canonicalize(p: GeneralLP) -> CanonicalLP:
    """
    Canonical form of a single problem

    Raises:
        DimensionMismatch: shapes of ``p`` disagree
    """
    p.validate()
    return canonicalize_batch(LPBatch.stack([p])).problem(0)


def canonical_tangents(seeds: LPTangents, recovery: RecoveryMap):
    """
    Push tangent seeds through the canonical assembly

    The slack block is constant, so its tangent is zero; row signs come from
    the primal right-hand side.

    Returns:
        (dA, db, dc) with shapes (B, k, m, n_c), (B, k, m), (B, k, n_c);
        dA and dc are None when the corresponding seeds are absent
    """
    signs = recovery.row_signs  # (B, m)
    B, m = signs.shape
    k, n, m_eq, m_ub = seeds.k, recovery.n, recovery.m_eq, recovery.m_ub

    db_eq = seeds.db_eq if seeds.db_eq is not None else np.zeros((B, k, m_eq))
    db_ub = seeds.db_ub if seeds.db_ub is not None else np.zeros((B, k, m_ub))
    db = np.concatenate([db_eq, db_ub], axis=-1) * signs[:, None, :]

    dA = None
    if seeds.dA_eq is not None or seeds.dA_ub is not None:
        dA_eq = seeds.dA_eq if seeds.dA_eq is not None else np.zeros((B, k, m_eq, n))
        dA_ub = seeds.dA_ub if seeds.dA_ub is not None else np.zeros((B, k, m_ub, n))
        dA = _assemble_columns(dA_eq, dA_ub, recovery.unbounded, with_slack=False)
        dA = dA * signs[:, None, :, None]

    dc = None
    if seeds.dc is not None:
        dc = _assemble_objective(seeds.dc, m_ub, recovery.unbounded)
    return dA, db, dc


def recover(meta: RecoveryMap, x_c: np.ndarray) -> np.ndarray:
    """
    Original variables from a canonical point; leading axes are kept

    Raises:
        DimensionMismatch: last axis of ``x_c`` is not n_c long
    """
    x_c = np.asarray(x_c, dtype=float)
    if x_c.shape[-1] != meta.n_c:
        raise DimensionMismatch(f"canonical point must have length {meta.n_c}, got {x_c.shape[-1]}")
    n = meta.n
    if meta.unbounded:
        return x_c[..., :n] - x_c[..., n:2 * n]
    return x_c[..., :n].copy()
