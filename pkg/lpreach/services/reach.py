"""LP-refined interval reachability and feedforward nudging

A lifted system carries a full-rank H (m x n) and a left inverse H_plus. The
reachable set at time t is over-approximated by the polytope
{x : y_lo(t) <= H x <= y_hi(t)}, and (y_lo, y_hi) follows the embedding
dynamics: for every lifted coordinate i, the opposite face is flattened onto
face i, the flattened box is tightened by LPs over the invariant subspace
(min/max of e_j^T H x subject to the box), and the derivative bound is the
interval enclosure of (H f(H_plus z, u, w))_i over the tightened box.

``safety_check`` integrates the positive part of an upper bound of the
obstacle function along the tube, and ``nudge`` runs gradient descent on the
feedforward table with forward-mode tangents through the whole pipeline.
"""
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from lpreach.core.config import SolverConfig
from lpreach.core.errors import DimensionMismatch, DomainError, ScenarioError
from lpreach.models.schemas import NudgeConfig, ObstacleSpec
from lpreach.services import autodiff as ad
from lpreach.services.autodiff import Dual, value_of
from lpreach.services.interval import Interval, IntervalVector, inclusion, mat_vec, sqr
from lpreach.services.lp_core import LPBatch, LPTangents

logger = logging.getLogger(__name__)

LEFT_INVERSE_TOL = 1e-10

# step enclosure: relative slack on the first guess, absolute floor, widening rounds
ENCLOSURE_SLACK = 0.1
ENCLOSURE_FLOOR = 1e-12
ENCLOSURE_TRIES = 8


@dataclass
class EmbeddingState:
    """Lower and upper face vectors, with optional (m, k) tangents"""

    y_lo: np.ndarray
    y_hi: np.ndarray
    dy_lo: Optional[np.ndarray] = None
    dy_hi: Optional[np.ndarray] = None

    def __post_init__(self):
        self.y_lo = np.asarray(self.y_lo, dtype=float)
        self.y_hi = np.asarray(self.y_hi, dtype=float)
        if self.y_lo.shape != self.y_hi.shape:
            raise DimensionMismatch(f"face shapes {self.y_lo.shape} and {self.y_hi.shape} differ")

    @classmethod
    def from_state_box(cls, H: np.ndarray, lo: Sequence[float], hi: Sequence[float]) -> "EmbeddingState":
        """Lifted bounds of the box [lo, hi]: the tightest y with lo <= x <= hi => y_lo <= Hx <= y_hi"""
        lifted = mat_vec(H, IntervalVector.from_bounds(lo, hi))
        return cls(lifted.lower_values(), lifted.upper_values())

    @property
    def m(self) -> int:
        return self.y_lo.shape[0]

    @property
    def k(self) -> Optional[int]:
        return None if self.dy_lo is None else self.dy_lo.shape[1]

    def is_ordered(self) -> bool:
        return bool(np.all(self.y_lo <= self.y_hi))

    def with_zero_tangents(self, k: int) -> "EmbeddingState":
        return EmbeddingState(self.y_lo, self.y_hi, np.zeros((self.m, k)), np.zeros((self.m, k)))

    def box(self) -> IntervalVector:
        return IntervalVector.from_bounds(self.y_lo, self.y_hi, self.dy_lo, self.dy_hi)


@dataclass
class LiftedSystem:
    """
    Lifted closed-loop system

    ``field(x, u, w)`` takes sequences and returns a sequence; it is evaluated
    on boxes via ``interval.inclusion``. ``u_ff`` holds one input row per
    Euler step, ``du_ff`` optional (steps, p, k) tangents of that table.
    With a feedback gain K the applied input is u_ff + K (x - x_nom).
    """

    H: np.ndarray
    H_plus: np.ndarray
    field: Callable
    u_ff: np.ndarray
    dt: float
    K: Optional[np.ndarray] = None
    x_nom: Optional[np.ndarray] = None
    w_box: Optional[IntervalVector] = None
    initial_state: Optional[EmbeddingState] = None
    du_ff: Optional[np.ndarray] = None
    name: str = "system"

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.H_plus = np.asarray(self.H_plus, dtype=float)
        self.u_ff = np.atleast_2d(np.asarray(self.u_ff, dtype=float))
        m, n = self.H.shape
        if self.H_plus.shape != (n, m):
            raise DimensionMismatch(f"H_plus must have shape {(n, m)}, got {self.H_plus.shape}")
        if np.linalg.matrix_rank(self.H) < n:
            raise ScenarioError("H must have full column rank")
        if not np.allclose(self.H_plus @ self.H, np.eye(n), rtol=0.0, atol=LEFT_INVERSE_TOL):
            raise ScenarioError("H_plus is not a left inverse of H")
        if self.K is not None:
            self.K = np.atleast_2d(np.asarray(self.K, dtype=float))
            if self.K.shape != (self.p, n):
                raise DimensionMismatch(f"K must have shape {(self.p, n)}, got {self.K.shape}")
            if self.x_nom is None:
                raise ScenarioError("feedback gain K needs a nominal trajectory x_nom")
            self.x_nom = np.atleast_2d(np.asarray(self.x_nom, dtype=float))
        if self.initial_state is not None and self.initial_state.m != m:
            raise DimensionMismatch(f"initial state has {self.initial_state.m} faces, H has {m} rows")

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def n(self) -> int:
        return self.H.shape[1]

    @property
    def p(self) -> int:
        return self.u_ff.shape[1]

    @property
    def steps(self) -> int:
        return self.u_ff.shape[0]

    @property
    def refine_coords(self) -> np.ndarray:
        """Lifted coordinates read by H_plus; only these need refinement LPs"""
        return np.flatnonzero(np.any(self.H_plus != 0.0, axis=0))

    def with_inputs(self, u_ff: np.ndarray, du_ff: Optional[np.ndarray] = None) -> "LiftedSystem":
        return replace(self, u_ff=np.asarray(u_ff, dtype=float), du_ff=du_ff)

    def step_index(self, t: float) -> int:
        s = int(math.floor(t / self.dt + 1e-9))
        return min(max(s, 0), self.steps - 1)

    def input_at(self, step: int, x_box: Optional[IntervalVector] = None) -> list:
        """Applied input at ``step``: points, or intervals when feedback acts on ``x_box``"""
        if self.du_ff is not None:
            u = [Dual(v, t) for v, t in zip(self.u_ff[step], self.du_ff[step])]
        else:
            u = [float(v) for v in self.u_ff[step]]
        if self.K is None or x_box is None:
            return u
        nominal = self.x_nom[min(step, self.x_nom.shape[0] - 1)]
        deviation = IntervalVector([x_box[j] - float(nominal[j]) for j in range(self.n)])
        feedback = mat_vec(self.K, deviation)
        return [u[i] + feedback[i] for i in range(self.p)]


@dataclass
class RefineResult:
    """Tightened box; iterating yields (z_lo, z_hi)"""

    z_lo: np.ndarray
    z_hi: np.ndarray
    dz_lo: Optional[np.ndarray] = None
    dz_hi: Optional[np.ndarray] = None
    flagged: Optional[np.ndarray] = None

    def __iter__(self) -> Iterator[np.ndarray]:
        yield self.z_lo
        yield self.z_hi


def _refine_boxes(
    lo: np.ndarray,
    hi: np.ndarray,
    H: np.ndarray,
    coords: np.ndarray,
    dlo: Optional[np.ndarray] = None,
    dhi: Optional[np.ndarray] = None,
    config: Optional[SolverConfig] = None,
    workers: Optional[int] = None,
):
    """
    Refine F boxes at once: 2 |coords| LPs per box in one batch

    Args:
        lo, hi: (F, m) box corners
        dlo, dhi: optional (F, m, k) tangents of the corners

    Returns:
        z_lo, z_hi (F, m); dz_lo, dz_hi (F, m, k) or None; flagged (F, m)
    """
    F, m = lo.shape
    n = H.shape[1]
    J = coords.shape[0]
    z_lo, z_hi = lo.copy(), hi.copy()
    dz_lo = None if dlo is None else dlo.copy()
    dz_hi = None if dhi is None else dhi.copy()
    flagged = np.zeros((F, m), dtype=bool)
    if J == 0 or F == 0:
        return z_lo, z_hi, dz_lo, dz_hi, flagged

    count = F * J * 2
    senses = np.array([1.0, -1.0])
    c = (senses[None, None, :, None] * H[coords][None, :, None, :]) * np.ones((F, 1, 1, 1))
    rhs = np.concatenate([hi, -lo], axis=1)  # (F, 2m)
    b_ub = np.broadcast_to(rhs[:, None, None, :], (F, J, 2, 2 * m)).reshape(count, 2 * m)
    A = np.concatenate([H, -H], axis=0)
    batch = LPBatch(
        c=c.reshape(count, n),
        A_ub=np.broadcast_to(A, (count, 2 * m, n)),
        b_ub=b_ub,
        A_eq=np.zeros((count, 0, n)),
        b_eq=np.zeros((count, 0)),
        unbounded=True,
    )
    seeds = None
    if dlo is not None:
        k = dlo.shape[2]
        drhs = np.concatenate([dhi, -dlo], axis=1).transpose(0, 2, 1)  # (F, k, 2m)
        db_ub = np.broadcast_to(drhs[:, None, None], (F, J, 2, k, 2 * m)).reshape(count, k, 2 * m)
        seeds = LPTangents(k=k, db_ub=db_ub)

    solution = ad.solve_batch_with_tangents(batch, seeds, config, workers)
    fun = solution.fun.reshape(F, J, 2)
    ok = solution.success.reshape(F, J, 2)
    lp_lo, lp_hi = fun[:, :, 0], -fun[:, :, 1]
    ok_lo, ok_hi = ok[:, :, 0], ok[:, :, 1]

    box_lo, box_hi = lo[:, coords], hi[:, coords]
    take_lo = ok_lo & (lp_lo > box_lo)
    take_hi = ok_hi & (lp_hi < box_hi)
    new_lo = np.where(take_lo, lp_lo, box_lo)
    new_hi = np.where(take_hi, lp_hi, box_hi)
    crossed = new_lo > new_hi
    take_lo &= ~crossed
    take_hi &= ~crossed
    z_lo[:, coords] = np.where(take_lo, lp_lo, box_lo)
    z_hi[:, coords] = np.where(take_hi, lp_hi, box_hi)
    flagged[:, coords] = ~ok_lo | ~ok_hi | crossed

    if seeds is not None:
        dfun = solution.dfun.reshape(F, J, 2, -1)
        sel = dz_lo[:, coords]
        sel[take_lo] = dfun[:, :, 0][take_lo]
        dz_lo[:, coords] = sel
        sel = dz_hi[:, coords]
        sel[take_hi] = -dfun[:, :, 1][take_hi]
        dz_hi[:, coords] = sel
    return z_lo, z_hi, dz_lo, dz_hi, flagged


def refine(
    y_lo: Sequence[float],
    y_hi: Sequence[float],
    H: np.ndarray,
    coords: Optional[Sequence[int]] = None,
    config: Optional[SolverConfig] = None,
    dy_lo: Optional[np.ndarray] = None,
    dy_hi: Optional[np.ndarray] = None,
) -> RefineResult:
    """
    Tightest box implied by y_lo <= H x <= y_hi on the lifted coordinates

    Solves min and max of e_j^T H x over the polytope (x free) for each j in
    ``coords`` (all m by default). The result lies inside the input box; a
    coordinate whose LPs fail keeps its input interval and is flagged.
    """
    H = np.asarray(H, dtype=float)
    lo = np.asarray(y_lo, dtype=float)[None]
    hi = np.asarray(y_hi, dtype=float)[None]
    if lo.shape[1] != H.shape[0] or hi.shape != lo.shape:
        raise DimensionMismatch(f"bounds of length {lo.shape[1]} do not match H with {H.shape[0]} rows")
    coords_arr = np.arange(H.shape[0]) if coords is None else np.asarray(coords, dtype=np.int64)
    z_lo, z_hi, dz_lo, dz_hi, flagged = _refine_boxes(
        lo, hi, H, coords_arr,
        None if dy_lo is None else np.asarray(dy_lo)[None],
        None if dy_hi is None else np.asarray(dy_hi)[None],
        config,
    )
    if flagged.any():
        logger.debug(f"refine: {int(flagged.sum())} coordinate(s) fell back to the input box")
    return RefineResult(
        z_lo[0], z_hi[0],
        None if dz_lo is None else dz_lo[0],
        None if dz_hi is None else dz_hi[0],
        flagged[0],
    )


@dataclass
class DynamicsResult:
    derivative: EmbeddingState
    flagged: int = 0


def embedding_dynamics(
    s: EmbeddingState,
    t: float,
    sys: LiftedSystem,
    refine_faces: bool = True,
    config: Optional[SolverConfig] = None,
    workers: Optional[int] = None,
) -> DynamicsResult:
    """
    Derivative of the embedding state

    Raises:
        DomainError: an interval primitive left its domain
    """
    faces = _faces(s.y_lo, s.y_hi, s.y_lo, s.y_hi, s.dy_lo, s.dy_hi)
    return _face_derivatives(*faces, t, sys, s.k, refine_faces, config, workers)


def _faces(outer_lo, outer_hi, lower_top, upper_bottom, dy_lo=None, dy_hi=None):
    """
    2m face boxes: row i is lower face i, row m+i upper face i

    Every face spans [outer_lo, outer_hi] except in its own coordinate, where
    lower face i spans [outer_lo_i, lower_top_i] and upper face i spans
    [upper_bottom_i, outer_hi_i]. Point faces pass the state twice.
    """
    m = outer_lo.shape[0]
    faces_lo = np.tile(outer_lo, (2 * m, 1))
    faces_hi = np.tile(outer_hi, (2 * m, 1))
    rng = np.arange(m)
    faces_hi[rng, rng] = lower_top
    faces_lo[m + rng, rng] = upper_bottom

    dfaces_lo = dfaces_hi = None
    if dy_lo is not None:
        dfaces_lo = np.tile(dy_lo, (2 * m, 1, 1))
        dfaces_hi = np.tile(dy_hi, (2 * m, 1, 1))
        dfaces_hi[rng, rng] = dy_lo
        dfaces_lo[m + rng, rng] = dy_hi
    return faces_lo, faces_hi, dfaces_lo, dfaces_hi


def _face_derivatives(
    faces_lo: np.ndarray,
    faces_hi: np.ndarray,
    dfaces_lo: Optional[np.ndarray],
    dfaces_hi: Optional[np.ndarray],
    t: float,
    sys: LiftedSystem,
    k: Optional[int],
    refine_faces: bool = True,
    config: Optional[SolverConfig] = None,
    workers: Optional[int] = None,
) -> DynamicsResult:
    """Lower rate over each lower face box, upper rate over each upper face box"""
    m = sys.m
    flagged = 0
    if refine_faces:
        faces_lo, faces_hi, dfaces_lo, dfaces_hi, flags = _refine_boxes(
            faces_lo, faces_hi, sys.H, sys.refine_coords, dfaces_lo, dfaces_hi, config, workers
        )
        flagged = int(flags.any(axis=1).sum())

    step = sys.step_index(t)
    d_lo, d_hi = [None] * m, [None] * m
    for f in range(2 * m):
        i = f % m
        z_box = IntervalVector.from_bounds(
            faces_lo[f], faces_hi[f],
            None if dfaces_lo is None else dfaces_lo[f],
            None if dfaces_hi is None else dfaces_hi[f],
        )
        x_box = mat_vec(sys.H_plus, z_box)
        u = sys.input_at(step, x_box)
        fx = inclusion(sys.field, x_box, u, sys.w_box)
        lifted = mat_vec(sys.H[i:i + 1], fx.components)[0]
        if f < m:
            d_lo[i] = lifted.lo
        else:
            d_hi[i] = lifted.hi

    lo_v, lo_t = ad.unpack(d_lo, k)
    hi_v, hi_t = ad.unpack(d_hi, k)
    return DynamicsResult(EmbeddingState(lo_v, hi_v, lo_t, hi_t), flagged)


def enclosed_dynamics(
    s: EmbeddingState,
    t: float,
    dt: float,
    sys: LiftedSystem,
    refine_faces: bool = True,
    config: Optional[SolverConfig] = None,
    workers: Optional[int] = None,
    guess_sys: Optional[LiftedSystem] = None,
) -> Tuple[DynamicsResult, bool]:
    """
    Face rates that stay valid over the whole step [t, t + dt]

    A first guess from the point faces (no LPs, no tangents) gives a candidate
    range [a, b] for the lower faces and [c, d] for the upper faces over the
    step. The rates are then bounded over faces that sweep those ranges, and
    the candidate is accepted once y + dt [min(r, 0), max(r, 0)] lies inside
    it; otherwise it is widened and tried again, ENCLOSURE_TRIES times.
    Tangents of a, b follow dy_lo and those of c, d follow dy_hi.

    Returns:
        (rates, validated)

    Raises:
        DomainError: an interval primitive left its domain
    """
    guess_sys = guess_sys or sys
    flat = _faces(s.y_lo, s.y_hi, s.y_lo, s.y_hi)
    guess = _face_derivatives(*flat, t, guess_sys, None, False, config, workers).derivative
    r_lo, r_hi = guess.y_lo, guess.y_hi

    slack = ENCLOSURE_SLACK
    a = b = s.y_lo
    c = d = s.y_hi
    result = None
    for _ in range(ENCLOSURE_TRIES):
        scale = dt * (1.0 + slack)
        a = np.minimum(a, s.y_lo + scale * np.minimum(r_lo, 0.0) - ENCLOSURE_FLOOR)
        b = np.maximum(b, s.y_lo + scale * np.maximum(r_lo, 0.0) + ENCLOSURE_FLOOR)
        c = np.minimum(c, s.y_hi + scale * np.minimum(r_hi, 0.0) - ENCLOSURE_FLOOR)
        d = np.maximum(d, s.y_hi + scale * np.maximum(r_hi, 0.0) + ENCLOSURE_FLOOR)
        faces = _faces(a, d, b, c, s.dy_lo, s.dy_hi)
        result = _face_derivatives(*faces, t, sys, s.k, refine_faces, config, workers)
        r_lo, r_hi = result.derivative.y_lo, result.derivative.y_hi
        lo_reach = (s.y_lo + dt * np.minimum(r_lo, 0.0), s.y_lo + dt * np.maximum(r_lo, 0.0))
        hi_reach = (s.y_hi + dt * np.minimum(r_hi, 0.0), s.y_hi + dt * np.maximum(r_hi, 0.0))
        if (
            np.all(lo_reach[0] >= a) and np.all(lo_reach[1] <= b)
            and np.all(hi_reach[0] >= c) and np.all(hi_reach[1] <= d)
        ):
            return result, True
        slack *= 2.0
    return result, False


@dataclass
class Trajectory:
    """States at t = 0, dt, ..., truncated before an order violation or a failed step enclosure"""

    times: np.ndarray
    y_lo: np.ndarray
    y_hi: np.ndarray
    dt: float
    refine: bool = True
    dy_lo: Optional[np.ndarray] = None
    dy_hi: Optional[np.ndarray] = None
    order_violation: bool = False
    violation_step: Optional[int] = None
    enclosure_failed: bool = False
    flagged_refinements: int = 0
    runtime_seconds: float = 0.0

    @property
    def truncated(self) -> bool:
        """The run stopped before the horizon"""
        return self.order_violation or self.enclosure_failed

    @property
    def length(self) -> int:
        return self.times.shape[0]

    def state(self, step: int) -> EmbeddingState:
        return EmbeddingState(
            self.y_lo[step], self.y_hi[step],
            None if self.dy_lo is None else self.dy_lo[step],
            None if self.dy_hi is None else self.dy_hi[step],
        )

    def widths(self, n: Optional[int] = None) -> np.ndarray:
        w = self.y_hi - self.y_lo
        return w if n is None else w[:, :n]

    def bound_width_sum(self, n: int, step: int = -1) -> float:
        """Sum of final widths over the first n lifted coordinates"""
        return float(np.sum(self.widths(n)[step]))

    def bound_volume(self, n: int, step: int = -1) -> float:
        """Product of final widths over the first n lifted coordinates"""
        return float(np.prod(self.widths(n)[step]))


def step_count(T: float, dt: float) -> int:
    """Number of Euler steps; T must be an integral multiple of dt"""
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(1.0, abs(T)):
        raise ScenarioError(f"horizon T={T!r} is not an integral number of steps of dt={dt!r}")
    return steps


def integrate_embedding(
    sys: LiftedSystem,
    s0: EmbeddingState,
    dt: float,
    T: float,
    refine_faces: bool = True,
    config: Optional[SolverConfig] = None,
    workers: Optional[int] = None,
    enclose: bool = True,
) -> Trajectory:
    """
    Explicit Euler on the embedding system

    With ``enclose`` every step uses rates bounded over a validated enclosure
    of the step (``enclosed_dynamics``), so the tube contains the exact flow
    and not only its Euler discretisation. A step whose enclosure cannot be
    validated truncates the run like an order violation. ``enclose=False``
    takes plain Euler steps with the rates at the left end point.

    Raises:
        ScenarioError: T is not an integral multiple of dt, or u_ff is too short
        DomainError: stamped with the time of the failing step
    """
    steps = step_count(T, dt)
    if sys.steps < steps:
        raise ScenarioError(f"u_ff has {sys.steps} rows, the horizon needs {steps}")

    started = time.perf_counter()
    k = s0.k
    y_lo, y_hi = [s0.y_lo.copy()], [s0.y_hi.copy()]
    dy_lo = [s0.dy_lo.copy()] if k is not None else None
    dy_hi = [s0.dy_hi.copy()] if k is not None else None
    state = s0
    flagged = 0
    violation = None
    enclosure_failed = False
    guess_sys = sys if sys.du_ff is None else sys.with_inputs(sys.u_ff)

    for step in range(steps):
        t = step * dt
        try:
            if enclose:
                result, validated = enclosed_dynamics(state, t, dt, sys, refine_faces, config, workers, guess_sys)
            else:
                result, validated = embedding_dynamics(state, t, sys, refine_faces, config, workers), True
        except DomainError as exc:
            raise exc.at_time(t) from exc
        if not validated:
            violation = step + 1
            enclosure_failed = True
            logger.warning(f"[{sys.name}] no validated enclosure for step {violation} (t={t:.6g}); trajectory truncated")
            break
        flagged += result.flagged
        d = result.derivative
        nxt = EmbeddingState(
            state.y_lo + dt * d.y_lo,
            state.y_hi + dt * d.y_hi,
            None if k is None else state.dy_lo + dt * d.dy_lo,
            None if k is None else state.dy_hi + dt * d.dy_hi,
        )
        if not nxt.is_ordered():
            violation = step + 1
            logger.warning(f"[{sys.name}] order violation at step {violation} (t={violation * dt:.6g}); trajectory truncated")
            break
        state = nxt
        y_lo.append(state.y_lo)
        y_hi.append(state.y_hi)
        if k is not None:
            dy_lo.append(state.dy_lo)
            dy_hi.append(state.dy_hi)

    if flagged:
        logger.debug(f"[{sys.name}] {flagged} face refinement(s) fell back to the flattened box")
    length = len(y_lo)
    return Trajectory(
        times=np.arange(length) * dt,
        y_lo=np.array(y_lo),
        y_hi=np.array(y_hi),
        dt=dt,
        refine=refine_faces,
        dy_lo=None if k is None else np.array(dy_lo),
        dy_hi=None if k is None else np.array(dy_hi),
        order_violation=violation is not None and not enclosure_failed,
        violation_step=violation,
        enclosure_failed=enclosure_failed,
        flagged_refinements=flagged,
        runtime_seconds=time.perf_counter() - started,
    )


# ---------------------------------------------------------------------------
# Safety check and nudging
# ---------------------------------------------------------------------------

def obstacle_function(obstacle: ObstacleSpec, x: Sequence):
    """o(x) = radius^2 - sum_j (x[coord_j] - center_j)^2; works on points, Duals and intervals"""
    value = obstacle.radius ** 2
    for coord, center in zip(obstacle.state_coords, obstacle.center):
        value = value - sqr(x[coord] - center)
    return value


def obstacle_bound(obstacle: ObstacleSpec, state: EmbeddingState, H_plus: np.ndarray):
    """Upper bound of o over the H_plus pullback of the lifted box"""
    x_box = mat_vec(H_plus, state.box().components)
    o = obstacle_function(obstacle, x_box.components)
    return o.hi if isinstance(o, Interval) else o


@dataclass
class SafetyReport:
    value: float
    bounds: np.ndarray           # upper bound of o per stored step
    trajectory: Trajectory
    gradient: Optional[np.ndarray] = None  # (blocks, p)
    block_steps: int = 1

    @property
    def initial_bound(self) -> float:
        return float(self.bounds[0])

    @property
    def initial_unsafe(self) -> bool:
        """The initial set already meets the obstacle; ``value`` starts at dt and cannot show it"""
        return self.initial_bound > 0.0

    @property
    def safe(self) -> bool:
        return (
            self.value <= 0.0
            and not self.initial_unsafe
            and not self.trajectory.truncated
            and bool(np.all(self.bounds <= 0.0))
        )


def _block_seeds(steps: int, p: int, block: int) -> np.ndarray:
    blocks = -(-steps // block)
    k = blocks * p
    du = np.zeros((steps, p, k))
    for s in range(steps):
        for j in range(p):
            du[s, j, (s // block) * p + j] = 1.0
    return du


def evaluate_safety(
    u_ff: np.ndarray,
    sys: LiftedSystem,
    obstacle: ObstacleSpec,
    cfg: NudgeConfig,
    with_gradient: bool = False,
    config: Optional[SolverConfig] = None,
    workers: Optional[int] = None,
) -> SafetyReport:
    """Safety value of ``u_ff``, optionally with its gradient over blocks of cfg.block_steps steps"""
    if sys.initial_state is None:
        raise ScenarioError("safety checks need the system's initial_state")
    steps = step_count(cfg.horizon, cfg.dt)
    u_ff = np.atleast_2d(np.asarray(u_ff, dtype=float))

    du, k = None, None
    s0 = EmbeddingState(sys.initial_state.y_lo, sys.initial_state.y_hi)
    if with_gradient:
        du = _block_seeds(u_ff.shape[0], u_ff.shape[1], cfg.block_steps)
        k = du.shape[2]
        s0 = s0.with_zero_tangents(k)

    traj = integrate_embedding(
        sys.with_inputs(u_ff, du), s0, cfg.dt, cfg.horizon, cfg.refine, config, workers, cfg.enclose,
    )
    bounds = [obstacle_bound(obstacle, traj.state(i), sys.H_plus) for i in range(traj.length)]

    total = 0.0
    for b in bounds[1:]:
        total = total + ad.positive_part(b) * cfg.dt

    gradient = None
    if with_gradient:
        tangent = total.tangent if isinstance(total, Dual) else np.zeros(k)
        gradient = tangent.reshape(-1, u_ff.shape[1])
    if traj.truncated:
        logger.warning(f"[{sys.name}] safety value covers {traj.length - 1} of {steps} steps only")
    if value_of(bounds[0]) > 0.0:
        logger.warning(f"[{sys.name}] initial set meets the obstacle (bound {value_of(bounds[0]):.6g}); not counted in the safety value")
    return SafetyReport(
        value=value_of(total),
        bounds=np.array([value_of(b) for b in bounds]),
        trajectory=traj,
        gradient=gradient,
        block_steps=cfg.block_steps,
    )


def safety_check(
    u_ff: np.ndarray,
    sys: LiftedSystem,
    obstacle: ObstacleSpec,
    cfg: NudgeConfig,
    config: Optional[SolverConfig] = None,
) -> float:
    """
    Sum over steps 1..N of max{upper bound of o, 0} * dt; zero iff those bounds are all <= 0

    The bound at t = 0 is not part of the sum; ``SafetyReport.initial_unsafe`` reports it.
    """
    return evaluate_safety(u_ff, sys, obstacle, cfg, config=config).value


@dataclass
class NudgeResult:
    u_ff: np.ndarray
    iterations: int
    converged: bool
    history: List[float] = field(default_factory=list)
    eta: float = 0.0
    report: Optional[SafetyReport] = None
    initial_report: Optional[SafetyReport] = None


def nudge(
    u_ff: np.ndarray,
    sys: LiftedSystem,
    obstacle: ObstacleSpec,
    cfg: NudgeConfig,
    config: Optional[SolverConfig] = None,
    workers: Optional[int] = None,
) -> NudgeResult:
    """
    Gradient descent on the feedforward table until the tube clears the obstacle

    A step that increases the safety value is rejected and eta is scaled by
    cfg.backoff. Every outer iteration (accepted or rejected) counts against
    cfg.max_outer_iters.
    """
    u = np.array(u_ff, dtype=float)
    steps = u.shape[0]
    report = evaluate_safety(u, sys, obstacle, cfg, with_gradient=True, config=config, workers=workers)
    initial = report
    history = [report.value]
    eta = cfg.eta
    logger.info(f"[{sys.name}] nudge start: safety={report.value:.6g}, initial bound={report.initial_bound:.6g}")

    if report.safe:
        return NudgeResult(u, 0, True, history, eta, report, initial)
    if report.initial_unsafe:
        logger.warning(f"[{sys.name}] initial set meets the obstacle; no input can clear it")
        return NudgeResult(u, 0, False, history, eta, report, initial)

    iterations = 0
    while iterations < cfg.max_outer_iters:
        iterations += 1
        step = np.repeat(report.gradient, cfg.block_steps, axis=0)[:steps]
        candidate = u - eta * step
        trial = evaluate_safety(candidate, sys, obstacle, cfg, with_gradient=True, config=config, workers=workers)
        if trial.value > report.value:
            eta *= cfg.backoff
            history.append(report.value)
            logger.info(f"[{sys.name}] iter {iterations}: rejected (safety {trial.value:.6g}), eta -> {eta:.4g}")
            continue
        u, report = candidate, trial
        history.append(report.value)
        logger.info(f"[{sys.name}] iter {iterations}: safety={report.value:.6g} eta={eta:.4g}")
        if report.safe:
            return NudgeResult(u, iterations, True, history, eta, report, initial)

    logger.warning(f"[{sys.name}] nudge did not converge after {iterations} iterations (safety={report.value:.6g})")
    return NudgeResult(u, iterations, False, history, eta, report, initial)


# ---------------------------------------------------------------------------
# Point simulation
# ---------------------------------------------------------------------------

def sample_box(lo: Sequence[float], hi: Sequence[float], count: int, rng: np.random.Generator) -> np.ndarray:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return lo + (hi - lo) * rng.random((count, lo.shape[0]))


def box_corners(lo: Sequence[float], hi: Sequence[float]) -> np.ndarray:
    """The 2^n vertices of [lo, hi] as a (2^n, n) array, lo first"""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = lo.shape[0]
    bits = (np.arange(2 ** n)[:, None] >> np.arange(n)[None, :]) & 1
    return np.where(bits == 1, hi, lo)


def simulate_points(
    sys: LiftedSystem,
    x0: np.ndarray,
    dt: float,
    T: float,
    w: Optional[np.ndarray] = None,
    substeps: int = 1,
) -> np.ndarray:
    """
    Euler trajectories of sampled points, vectorised over samples

    Args:
        x0: (N, n) initial states
        w: (N, q) constant disturbance per sample, or None
        substeps: Euler sub-steps per dt

    Returns:
        (steps + 1, N, n) states at t = 0, dt, ..., T
    """
    steps = step_count(T, dt)
    x = np.array(x0, dtype=float)
    out = [x.copy()]
    h = dt / substeps
    w_cols = None if w is None else [w[:, j] for j in range(w.shape[1])]
    for step in range(steps):
        u_row = sys.u_ff[min(step, sys.steps - 1)]
        for _ in range(substeps):
            cols = [x[:, j] for j in range(x.shape[1])]
            u = [np.full(x.shape[0], float(v)) for v in u_row]
            if sys.K is not None:
                dev = x - sys.x_nom[min(step, sys.x_nom.shape[0] - 1)]
                fb = dev @ sys.K.T
                u = [u[i] + fb[:, i] for i in range(sys.p)]
            dx = sys.field(cols, u, w_cols)
            x = x + h * np.column_stack([np.broadcast_to(d, (x.shape[0],)) for d in dx])
        out.append(x.copy())
    return np.array(out)


def tube_contains(traj: Trajectory, H: np.ndarray, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """
    Per step and sample: does H x lie inside [y_lo, y_hi] (within ``tol``)

    Args:
        points: (steps + 1, N, n) trajectories from ``simulate_points``

    Returns:
        (traj.length, N) boolean array; steps after a truncation are not checked
    """
    length = min(traj.length, points.shape[0])
    lifted = points[:length] @ np.asarray(H, dtype=float).T  # (L, N, m)
    lo = traj.y_lo[:length, None, :] - tol
    hi = traj.y_hi[:length, None, :] + tol
    return np.all((lifted >= lo) & (lifted <= hi), axis=2)
