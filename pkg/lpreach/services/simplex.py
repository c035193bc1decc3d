"""Two-phase tableau simplex with a fixed-shape state

The phase-1 tableau of a canonical problem with m rows and n_c columns is

    [ A   I   b  ]     rows 0 .. m-1   constraints
    [ c   0   -z ]     row  m          original objective
    [ -1A 0   -w ]     row  m+1        auxiliary objective (column sums of A)

and is allocated once, shape (m+2, n_c+m+1). Phase 2 reads the same
allocation: it scans only the first n_c columns of row m, and the auxiliary
columns and bottom row are left in place but never read.

Entering columns follow Bland's rule (first reduced cost below -eps_opt).
Exits use the ratio test over entries above eps_piv with ties broken by the
smallest basic-variable index; in phase 2 a tied row holding a lingering
auxiliary always wins, so marked rows are cleared at their first zero-ratio
opportunity. Between the phases the rows of lingering auxiliaries are
replaced by their absolute values.

The kernel works on a stack of tableaus (B, m+2, n_c+m+1). Per problem only
elementwise arithmetic is applied, so a batch gives the same bits as solving
its members one by one.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from lpreach.core.config import SolverConfig
from lpreach.core.errors import DimensionMismatch, PivotTooSmall
from lpreach.models.schemas import SolverStatus
from lpreach.services.autodiff import propagate_marking, propagate_pivot, tangent_tableau
from lpreach.services.lp_core import (
    CanonicalLP,
    GeneralLP,
    LPBatch,
    LPTangents,
    RecoveryMap,
    canonical_tangents,
    canonicalize_batch,
    recover,
)

logger = logging.getLogger(__name__)


class PivotRecord(NamedTuple):
    phase: int
    entering: int
    row: int
    leaving: int
    ratio: float


@dataclass
class BasisSet:
    """Basic column per constraint row"""

    indices: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)

    def __len__(self) -> int:
        return self.indices.shape[0]

    def as_tuple(self) -> Tuple[int, ...]:
        return tuple(int(i) for i in self.indices)

    def auxiliary_rows(self, n_c: int) -> np.ndarray:
        """Rows whose basic variable is an auxiliary"""
        return np.flatnonzero(self.indices >= n_c)

    def copy(self) -> "BasisSet":
        return BasisSet(self.indices.copy())


@dataclass
class Tableau:
    """Phase-1 sized tableau plus the pivot history that produced it"""

    entries: np.ndarray
    n_c: int
    m: int
    phase: int = 1
    iterations: int = 0
    hit_iteration_cap: bool = False
    pivots: List[PivotRecord] = field(default_factory=list)

    @classmethod
    def from_canonical(cls, p: CanonicalLP) -> Tuple["Tableau", BasisSet]:
        T, basis = _initial_tableau(p.A[None], p.b[None], p.c[None])
        return cls(T[0], p.n_c, p.m), BasisSet(basis[0])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.entries.shape

    @property
    def rhs(self) -> np.ndarray:
        return self.entries[:self.m, -1]

    @property
    def objective_row(self) -> np.ndarray:
        return self.entries[self.m]

    @property
    def aux_row(self) -> np.ndarray:
        return self.entries[self.m + 1]

    def copy(self) -> "Tableau":
        return Tableau(
            self.entries.copy(), self.n_c, self.m, self.phase,
            self.iterations, self.hit_iteration_cap, list(self.pivots),
        )


@dataclass(frozen=True)
class SolveStatus:
    feasible: bool
    bounded: bool
    success: bool
    iterations: int
    hit_iteration_cap: bool

    @classmethod
    def from_flags(cls, feasible: bool, bounded: bool, iterations: int, hit_iteration_cap: bool) -> "SolveStatus":
        return cls(
            feasible=bool(feasible),
            bounded=bool(bounded),
            success=bool(feasible and bounded and not hit_iteration_cap),
            iterations=int(iterations),
            hit_iteration_cap=bool(hit_iteration_cap),
        )

    @property
    def label(self) -> SolverStatus:
        if self.hit_iteration_cap:
            return SolverStatus.ITERATION_CAP
        if not self.feasible:
            return SolverStatus.INFEASIBLE
        if not self.bounded:
            return SolverStatus.UNBOUNDED
        return SolverStatus.SUCCESS


@dataclass
class SolveOutcome:
    """x and fun are zero unless status.success"""

    x: np.ndarray
    fun: float
    tableau: Tableau
    basis: BasisSet
    status: SolveStatus
    pivots: List[PivotRecord] = field(default_factory=list)


@dataclass
class BatchSolution:
    """Array form of B outcomes; tangent fields are None without seeds"""

    x: np.ndarray            # (B, n)
    fun: np.ndarray          # (B,)
    x_canonical: np.ndarray  # (B, n_c)
    feasible: np.ndarray
    bounded: np.ndarray
    hit_iteration_cap: np.ndarray
    iterations: np.ndarray
    basis: np.ndarray        # (B, m)
    tableau: np.ndarray      # (B, m+2, n_c+m+1)
    n_c: int
    dx: Optional[np.ndarray] = None    # (B, n, k)
    dfun: Optional[np.ndarray] = None  # (B, k)
    pivots: Optional[List[List[PivotRecord]]] = None

    @property
    def success(self) -> np.ndarray:
        return self.feasible & self.bounded & ~self.hit_iteration_cap

    @property
    def size(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.basis.shape[1]

    def status(self, i: int) -> SolveStatus:
        return SolveStatus.from_flags(
            self.feasible[i], self.bounded[i], self.iterations[i], self.hit_iteration_cap[i]
        )

    def outcome(self, i: int) -> SolveOutcome:
        status = self.status(i)
        pivots = self.pivots[i] if self.pivots is not None else []
        tableau = Tableau(
            self.tableau[i], self.n_c, self.m,
            phase=2 if status.feasible else 1,
            iterations=status.iterations,
            hit_iteration_cap=status.hit_iteration_cap,
            pivots=pivots,
        )
        return SolveOutcome(
            x=self.x[i], fun=float(self.fun[i]), tableau=tableau,
            basis=BasisSet(self.basis[i]), status=status, pivots=pivots,
        )

    @classmethod
    def concat(cls, parts: Sequence["BatchSolution"]) -> "BatchSolution":
        if len(parts) == 1:
            return parts[0]

        def _cat(name):
            values = [getattr(p, name) for p in parts]
            return None if values[0] is None else np.concatenate(values)

        pivots = None
        if parts[0].pivots is not None:
            pivots = [log for p in parts for log in p.pivots]
        return cls(
            x=_cat("x"), fun=_cat("fun"), x_canonical=_cat("x_canonical"),
            feasible=_cat("feasible"), bounded=_cat("bounded"),
            hit_iteration_cap=_cat("hit_iteration_cap"), iterations=_cat("iterations"),
            basis=_cat("basis"), tableau=_cat("tableau"), n_c=parts[0].n_c,
            dx=_cat("dx"), dfun=_cat("dfun"), pivots=pivots,
        )


# ---------------------------------------------------------------------------
# Batched kernel
# ---------------------------------------------------------------------------

@dataclass
class _KernelState:
    T: np.ndarray
    basis: np.ndarray
    n_c: int
    m: int
    cap: int
    iterations: np.ndarray
    feasible: np.ndarray
    bounded: np.ndarray
    capped: np.ndarray
    dT: Optional[np.ndarray] = None
    rhs_only: bool = True
    log: Optional[List[List[PivotRecord]]] = None


def _initial_tableau(A: np.ndarray, b: np.ndarray, c: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    B, m, n_c = A.shape
    T = np.zeros((B, m + 2, n_c + m + 1))
    T[:, :m, :n_c] = A
    T[:, :m, n_c:n_c + m] = np.eye(m)
    T[:, :m, -1] = b
    T[:, m, :n_c] = c
    # explicit row loop keeps the bits independent of the batch size
    for i in range(m):
        T[:, m + 1, :n_c] -= A[:, i, :]
        T[:, m + 1, -1] -= b[:, i]
    basis = np.tile(n_c + np.arange(m, dtype=np.int64), (B, 1))
    return T, basis


def _new_state(T, basis, n_c, m, cfg, iterations=None, dT=None, rhs_only=True, record=False) -> _KernelState:
    B = T.shape[0]
    return _KernelState(
        T=T, basis=basis, n_c=n_c, m=m, cap=cfg.cap_for(n_c, m),
        iterations=np.zeros(B, dtype=np.int64) if iterations is None else iterations,
        feasible=np.ones(B, dtype=bool),
        bounded=np.ones(B, dtype=bool),
        capped=np.zeros(B, dtype=bool),
        dT=dT, rhs_only=rhs_only,
        log=[[] for _ in range(B)] if record else None,
    )


def _ratio_rows(
    Tsub: np.ndarray,
    bsub: np.ndarray,
    cols: np.ndarray,
    n_c: int,
    phase: int,
    cfg: SolverConfig,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Leaving row, its ratio and an 'is bounded' flag per problem"""
    count, m = bsub.shape
    if m == 0:
        return np.zeros(count, dtype=np.int64), np.zeros(count), np.zeros(count, dtype=bool)
    kk = np.arange(count)
    colv = Tsub[kk, :m, cols]
    rhs = Tsub[:, :m, -1]
    pos = colv > cfg.eps_piv
    ratio = np.where(pos, rhs / np.where(pos, colv, 1.0), np.inf)
    best = ratio.min(axis=1)
    has = pos.any(axis=1)
    tied = pos & (ratio <= best[:, None] + cfg.tie_tol)
    if phase == 2:
        aux = tied & (bsub >= n_c)
        tied = np.where(aux.any(axis=1)[:, None], aux, tied)
    key = np.where(tied, bsub, np.iinfo(np.int64).max)
    rows = key.argmin(axis=1)
    return rows, ratio[kk, rows], has


def _pivot_rows(state: _KernelState, idx: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> None:
    """Gauss-Jordan pivot of problems ``idx`` in place; basis updated"""
    sub = state.T[idx]
    kk = np.arange(idx.shape[0])
    pivot = sub[kk, rows, cols]
    prow = sub[kk, rows, :] / pivot[:, None]
    factors = sub[kk, :, cols]

    if state.dT is not None:
        dsub = state.dT[idx]
        propagate_pivot(dsub, rows, cols, pivot, prow, factors, state.rhs_only)
        state.dT[idx] = dsub

    sub -= factors[:, :, None] * prow[:, None, :]
    sub[kk, rows, :] = prow
    sub[kk, :, cols] = 0.0
    sub[kk, rows, cols] = 1.0
    state.T[idx] = sub
    state.basis[idx, rows] = cols


def _run_phase(state: _KernelState, phase: int, running: np.ndarray, cfg: SolverConfig) -> None:
    m, n_c = state.m, state.n_c
    obj = m + 1 if phase == 1 else m
    width = n_c + m if phase == 1 else n_c
    active = running.copy()

    while True:
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        eligible = state.T[idx, obj, :width] < -cfg.eps_opt
        has_col = eligible.any(axis=1)
        active[idx[~has_col]] = False
        eligible, idx = eligible[has_col], idx[has_col]

        over = state.iterations[idx] >= state.cap
        if over.any():
            state.capped[idx[over]] = True
            active[idx[over]] = False
            eligible, idx = eligible[~over], idx[~over]
        if idx.size == 0:
            continue

        cols = eligible.argmax(axis=1)
        rows, ratios, has_row = _ratio_rows(state.T[idx], state.basis[idx], cols, n_c, phase, cfg)
        if not has_row.all():
            lost = idx[~has_row]
            if phase == 2:
                state.bounded[lost] = False
            active[lost] = False
            idx, cols, rows, ratios = idx[has_row], cols[has_row], rows[has_row], ratios[has_row]
            if idx.size == 0:
                continue

        leaving = state.basis[idx, rows]
        _pivot_rows(state, idx, rows, cols)
        state.iterations[idx] += 1
        if state.log is not None:
            for j, b in enumerate(idx):
                state.log[b].append(
                    PivotRecord(phase, int(cols[j]), int(rows[j]), int(leaving[j]), float(ratios[j]))
                )


def _mark(state: _KernelState, running: np.ndarray) -> None:
    m = state.m
    if m == 0:
        return
    mask = (state.basis >= state.n_c) & running[:, None]
    if not mask.any():
        return
    rows = state.T[:, :m, :]
    if state.dT is not None:
        propagate_marking(state.dT, state.T, mask, state.rhs_only)
    np.abs(rows, out=rows, where=mask[:, :, None])


def _phase_one_feasible(state: _KernelState, cfg: SolverConfig) -> np.ndarray:
    return -state.T[:, state.m + 1, -1] <= cfg.eps_feas


def solve_stacked(
    batch: LPBatch,
    config: Optional[SolverConfig] = None,
    tangents: Optional[LPTangents] = None,
    record_pivots: bool = False,
) -> BatchSolution:
    """
    Solve every problem of ``batch`` in one stacked tableau

    Args:
        batch: problems with identical dimensions
        config: tolerances and iteration cap
        tangents: optional forward-mode seeds
        record_pivots: keep a pivot log per problem

    Returns:
        BatchSolution with tangents filled when seeds were given
    """
    cfg = config or SolverConfig.from_settings()
    canon = canonicalize_batch(batch)
    T, basis = _initial_tableau(canon.A, canon.b, canon.c)
    B, m, n_c = canon.size, canon.m, canon.n_c

    dT, rhs_only = None, True
    if tangents is not None:
        rhs_only = tangents.rhs_only
        dA, db, dc = canonical_tangents(tangents, canon.recovery)
        dT = tangent_tableau(dA, db, dc, n_c, rhs_only)

    state = _new_state(T, basis, n_c, m, cfg, dT=dT, rhs_only=rhs_only, record=record_pivots)
    allocation = state.T

    _run_phase(state, 1, np.ones(B, dtype=bool), cfg)
    state.feasible = _phase_one_feasible(state, cfg)
    running = state.feasible & ~state.capped
    _mark(state, running)
    _run_phase(state, 2, running, cfg)

    assert state.T is allocation and state.T.shape == (B, m + 2, n_c + m + 1)
    return _extract(state, canon.recovery, batch, tangents)


def _extract(state: _KernelState, recovery: RecoveryMap, batch: LPBatch, tangents: Optional[LPTangents]) -> BatchSolution:
    B, m, n_c, n = state.T.shape[0], state.m, state.n_c, batch.n
    x_c = np.zeros((B, n_c))
    bb, rr = np.nonzero(state.basis < n_c)
    x_c[bb, state.basis[bb, rr]] = state.T[bb, rr, -1]
    x = recover(recovery, x_c)

    fun = np.zeros(B)
    for j in range(n):
        fun += batch.c[:, j] * x[:, j]

    success = state.feasible & state.bounded & ~state.capped
    x[~success] = 0.0
    fun[~success] = 0.0

    dx = dfun = None
    if state.dT is not None:
        k = tangents.k
        dx_c = np.zeros((B, k, n_c))
        if state.rhs_only:
            dx_c[bb, :, state.basis[bb, rr]] = state.dT[bb, :, rr]
        else:
            dx_c[bb, :, state.basis[bb, rr]] = state.dT[bb, :, rr, -1]
        dx_k = recover(recovery, dx_c)  # (B, k, n)
        dfun = np.zeros((B, k))
        for j in range(n):
            dfun += batch.c[:, j, None] * dx_k[:, :, j]
            if tangents.dc is not None:
                dfun += tangents.dc[:, :, j] * x[:, j, None]
        dx_k[~success] = 0.0
        dfun[~success] = 0.0
        dx = np.transpose(dx_k, (0, 2, 1))

    counts = {
        "success": int(success.sum()),
        "infeasible": int((~state.feasible).sum()),
        "unbounded": int((state.feasible & ~state.bounded).sum()),
        "capped": int(state.capped.sum()),
    }
    logger.debug(
        f"solved {B} LPs (m={m}, n_c={n_c}): {counts}, "
        f"pivots max={int(state.iterations.max()) if B else 0}"
    )
    return BatchSolution(
        x=x, fun=fun, x_canonical=x_c,
        feasible=state.feasible.copy(), bounded=state.bounded.copy(),
        hit_iteration_cap=state.capped.copy(), iterations=state.iterations.copy(),
        basis=state.basis, tableau=state.T, n_c=n_c,
        dx=dx, dfun=dfun, pivots=state.log,
    )


def solve_chunked(
    batch: LPBatch,
    config: Optional[SolverConfig] = None,
    tangents: Optional[LPTangents] = None,
    workers: Optional[int] = None,
    record_pivots: bool = False,
) -> BatchSolution:
    """Split ``batch`` into chunks and run them, in a thread pool when workers > 1"""
    cfg = config or SolverConfig.from_settings()
    size = batch.size
    bounds = [(s, min(s + cfg.chunk_size, size)) for s in range(0, size, cfg.chunk_size)]

    def _run(span):
        start, stop = span
        part = batch.chunk(start, stop)
        seeds = tangents.chunk(start, stop) if tangents is not None else None
        return solve_stacked(part, cfg, seeds, record_pivots)

    if workers and workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run, bounds))
    else:
        parts = [_run(span) for span in bounds]
    return BatchSolution.concat(parts)


# ---------------------------------------------------------------------------
# Public single-problem operations
# ---------------------------------------------------------------------------

def linprog(p: GeneralLP, config: Optional[SolverConfig] = None) -> SolveOutcome:
    """
    canonicalize -> phase one -> mark -> phase two -> recover

    Raises:
        DimensionMismatch: shapes of ``p`` disagree
    """
    p.validate()
    solution = solve_stacked(LPBatch.stack([p]), config, record_pivots=True)
    return solution.outcome(0)


def solve_batch(
    problems: Union[Sequence[GeneralLP], LPBatch],
    config: Optional[SolverConfig] = None,
    workers: Optional[int] = None,
    record_pivots: bool = True,
) -> List[SolveOutcome]:
    """Order-preserving batch solve; results do not depend on ``workers``"""
    batch = problems if isinstance(problems, LPBatch) else LPBatch.stack(list(problems))
    solution = solve_chunked(batch, config, workers=workers, record_pivots=record_pivots)
    return [solution.outcome(i) for i in range(solution.size)]


def select_entering(t: Tableau, config: Optional[SolverConfig] = None) -> Optional[int]:
    """Smallest column with reduced cost below -eps_opt; None at optimality"""
    cfg = config or SolverConfig.from_settings()
    if t.phase == 1:
        row = t.aux_row[:t.n_c + t.m]
    else:
        row = t.objective_row[:t.n_c]
    eligible = np.flatnonzero(row < -cfg.eps_opt)
    return int(eligible[0]) if eligible.size else None


def ratio_test(
    t: Tableau,
    c_enter: int,
    basis: Optional[BasisSet] = None,
    config: Optional[SolverConfig] = None,
) -> Optional[int]:
    """Leaving row for column ``c_enter``; None when the column is unbounded"""
    cfg = config or SolverConfig.from_settings()
    indices = basis.indices if basis is not None else np.arange(t.m, dtype=np.int64)
    rows, _, has = _ratio_rows(
        t.entries[None], indices[None], np.array([c_enter]), t.n_c, t.phase, cfg
    )
    return int(rows[0]) if has[0] else None


def pivot(
    t: Tableau,
    basis: BasisSet,
    c_enter: int,
    r_exit: int,
    config: Optional[SolverConfig] = None,
) -> Tuple[Tableau, BasisSet]:
    """
    Pivot on (r_exit, c_enter), returning new objects

    Raises:
        PivotTooSmall: |t[r_exit, c_enter]| <= eps_piv
    """
    cfg = config or SolverConfig.from_settings()
    value = t.entries[r_exit, c_enter]
    if abs(value) <= cfg.eps_piv:
        raise PivotTooSmall(f"pivot entry {value!r} at ({r_exit}, {c_enter}) is below {cfg.eps_piv}")
    new_t = t.copy()
    new_basis = basis.copy()
    state = _new_state(new_t.entries[None], new_basis.indices[None], t.n_c, t.m, cfg)
    leaving = int(basis.indices[r_exit])
    _pivot_rows(state, np.array([0]), np.array([r_exit]), np.array([c_enter]))
    new_t.entries = state.T[0]
    new_basis.indices = state.basis[0]
    new_t.iterations += 1
    new_t.pivots.append(PivotRecord(t.phase, int(c_enter), int(r_exit), leaving, float("nan")))
    return new_t, new_basis


def _run_single_phase(t: Tableau, basis: BasisSet, phase: int, cfg: SolverConfig) -> Tuple[Tableau, BasisSet, _KernelState]:
    new_t = t.copy()
    new_basis = basis.copy()
    state = _new_state(
        new_t.entries[None], new_basis.indices[None], t.n_c, t.m, cfg,
        iterations=np.array([t.iterations], dtype=np.int64), record=True,
    )
    _run_phase(state, phase, np.ones(1, dtype=bool), cfg)
    new_t.entries = state.T[0]
    new_t.phase = phase
    new_t.iterations = int(state.iterations[0])
    new_t.hit_iteration_cap = bool(state.capped[0]) or t.hit_iteration_cap
    new_t.pivots.extend(state.log[0])
    new_basis.indices = state.basis[0]
    return new_t, new_basis, state


def phase_one(p: CanonicalLP, config: Optional[SolverConfig] = None) -> Tuple[Tableau, BasisSet, bool]:
    """Drive the auxiliary objective to optimality; feasible when it is <= eps_feas"""
    cfg = config or SolverConfig.from_settings()
    t, basis = Tableau.from_canonical(p)
    t, basis, state = _run_single_phase(t, basis, 1, cfg)
    feasible = bool(_phase_one_feasible(state, cfg)[0])
    return t, basis, feasible


def mark_aux_rows(t: Tableau, basis: BasisSet, n_c: Optional[int] = None) -> Tableau:
    """Replace every row holding a lingering auxiliary by its absolute value"""
    n_c = t.n_c if n_c is None else n_c
    marked = t.copy()
    for r in basis.auxiliary_rows(n_c):
        marked.entries[r] = np.abs(marked.entries[r])
    return marked


def phase_two(t: Tableau, basis: BasisSet, config: Optional[SolverConfig] = None) -> Tuple[Tableau, BasisSet, bool]:
    """Optimize the original objective row; bounded is False when a column has no exit"""
    cfg = config or SolverConfig.from_settings()
    if t.entries.shape != (t.m + 2, t.n_c + t.m + 1):
        raise DimensionMismatch(f"tableau shape {t.entries.shape} does not match m={t.m}, n_c={t.n_c}")
    t, basis, state = _run_single_phase(t, basis, 2, cfg)
    return t, basis, bool(state.bounded[0])
