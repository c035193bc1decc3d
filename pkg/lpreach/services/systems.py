"""Demo systems: Van der Pol, kinematic bicycle and a 1-D toy

Vector fields are written with the dispatching primitives of ``interval`` so
one definition serves point evaluation, sample arrays and boxes.
"""
import logging
import math
from dataclasses import dataclass
from functools import partial
from typing import Optional, Sequence

import numpy as np

from lpreach.core.config import settings
from lpreach.core.errors import ScenarioError
from lpreach.models.schemas import NudgeConfig, ObstacleSpec, ScenarioFile, SystemName
from lpreach.services import interval as iv
from lpreach.services.interval import IntervalVector
from lpreach.services.reach import EmbeddingState, LiftedSystem, step_count

logger = logging.getLogger(__name__)

BICYCLE_X0 = (8.0, 7.0, -2.0 / math.pi, 2.0)
BICYCLE_HALF_WIDTHS = (0.1, 0.1, 0.01, 0.01)
BICYCLE_OBSTACLE = ObstacleSpec(center=[4.0, 4.0], radius=3.0, coords=[0, 1])
BICYCLE_DT = 5e-3
BICYCLE_T = 3.0

VDP_BOX = ((0.9, -0.1), (1.1, 0.1))
VDP_MAX_DT = 0.01


# ---------------------------------------------------------------------------
# Vector fields
# ---------------------------------------------------------------------------

def vanderpol_field(x: Sequence, mu: float = 1.0) -> list:
    """x1' = mu (x1 - x1^3/3 - x2), x2' = x1 / mu"""
    x1, x2 = x[0], x[1]
    return [mu * (x1 - x1 ** 3 / 3.0 - x2), x1 / mu]


def slip_angle(steer, lf: float = 1.0, lr: float = 1.0):
    return iv.arctan(lf / (lf + lr) * iv.tan(steer))


def bicycle_field(x: Sequence, u: Sequence, w: Optional[Sequence] = None, lf: float = 1.0, lr: float = 1.0) -> list:
    """
    Second-order kinematic bicycle, state (px, py, phi, v), input (accel, steer)

    The disturbance enters additively on every state derivative.
    """
    px, py, phi, v = x
    beta = slip_angle(u[1], lf, lr)
    heading = phi + beta
    dx = [
        v * iv.cos(heading),
        v * iv.sin(heading),
        v / lr * iv.sin(beta),
        u[0],
    ]
    if w is not None:
        dx = [d + wi for d, wi in zip(dx, w)]
    return dx


def toy_field(x: Sequence, u: Sequence, w: Optional[Sequence] = None) -> list:
    """x' = u + w"""
    dx = u[0]
    if w is not None:
        dx = dx + w[0]
    return [dx]


def _vdp_closed(x, u, w, mu: float):
    return vanderpol_field(x, mu)


# ---------------------------------------------------------------------------
# Liftings
# ---------------------------------------------------------------------------

def stacked_lifting(H2: np.ndarray):
    """H = [I; H2] and H_plus = [I 0]"""
    H2 = np.asarray(H2, dtype=float)
    n = H2.shape[1]
    H = np.vstack([np.eye(n), H2])
    H_plus = np.hstack([np.eye(n), np.zeros((n, H2.shape[0]))])
    return H, H_plus


def vanderpol_lifting():
    return stacked_lifting([[1.0, 1.0], [1.0, -1.0]])


def bicycle_lifting():
    return stacked_lifting([
        [1.0, 0.0, 1.0, 0.0],
        [1.0, 0.0, -1.0, 0.0],
        [0.0, 1.0, 1.0, 0.0],
        [0.0, 1.0, -1.0, 0.0],
    ])


# ---------------------------------------------------------------------------
# Scenario assembly
# ---------------------------------------------------------------------------

@dataclass
class DemoScenario:
    """Lifted system plus everything needed to check or nudge it"""

    system: LiftedSystem
    state_lo: np.ndarray
    state_hi: np.ndarray
    dt: float
    T: float
    obstacle: Optional[ObstacleSpec] = None
    w_lo: Optional[np.ndarray] = None
    w_hi: Optional[np.ndarray] = None
    nudge: Optional[NudgeConfig] = None

    @property
    def steps(self) -> int:
        return step_count(self.T, self.dt)


def _nudge_config(dt: float, T: float, eta=None, max_outer_iters=None, block_steps=None, refine: bool = True) -> NudgeConfig:
    return NudgeConfig(
        eta=eta if eta is not None else settings.nudge_eta,
        max_outer_iters=max_outer_iters if max_outer_iters is not None else settings.nudge_max_outer_iters,
        backoff=settings.nudge_backoff,
        dt=dt,
        horizon=T,
        block_steps=block_steps or 1,
        refine=refine,
        enclose=settings.enclose_steps,
    )


def _build(
    name: str,
    field,
    H: np.ndarray,
    H_plus: np.ndarray,
    lo: Sequence[float],
    hi: Sequence[float],
    u_ff: np.ndarray,
    dt: float,
    T: float,
    w_lo=None,
    w_hi=None,
    K=None,
    x_nom=None,
) -> LiftedSystem:
    w_box = None
    if w_lo is not None:
        w_box = IntervalVector.from_bounds(w_lo, w_hi)
    return LiftedSystem(
        H=H,
        H_plus=H_plus,
        field=field,
        u_ff=u_ff,
        dt=dt,
        K=K,
        x_nom=x_nom,
        w_box=w_box,
        initial_state=EmbeddingState.from_state_box(H, lo, hi),
        name=name,
    )


def vanderpol_dt(t_f: float, max_dt: float = VDP_MAX_DT) -> float:
    """Largest step <= max_dt dividing t_f into an integral count"""
    return t_f / math.ceil(t_f / max_dt - 1e-12)


def vanderpol_system(
    mu: float = 1.0,
    t_f: float = 2.0 * math.pi,
    dt: Optional[float] = None,
    lo: Sequence[float] = VDP_BOX[0],
    hi: Sequence[float] = VDP_BOX[1],
    H: Optional[np.ndarray] = None,
    H_plus: Optional[np.ndarray] = None,
) -> DemoScenario:
    if mu <= 0:
        raise ScenarioError(f"mu must be positive, got {mu}")
    dt = dt or vanderpol_dt(t_f)
    steps = step_count(t_f, dt)
    if H is None:
        H, H_plus = vanderpol_lifting()
    sys = _build(
        "vanderpol", partial(_vdp_closed, mu=mu), H, H_plus, lo, hi,
        np.zeros((steps, 0)), dt, t_f,
    )
    return DemoScenario(sys, np.asarray(lo, dtype=float), np.asarray(hi, dtype=float), dt, t_f)


def simulate_nominal(field, x0: np.ndarray, u_ff: np.ndarray, dt: float) -> np.ndarray:
    """
    Euler rollout of one or more point trajectories

    Args:
        x0: (n,) start state
        u_ff: (steps, p) or (steps, p, R) for R candidate inputs at once

    Returns:
        (steps + 1, n) or (steps + 1, n, R)
    """
    u_ff = np.asarray(u_ff, dtype=float)
    batched = u_ff.ndim == 3
    R = u_ff.shape[2] if batched else 1
    x = np.tile(np.asarray(x0, dtype=float)[:, None], (1, R))
    out = [x.copy()]
    for s in range(u_ff.shape[0]):
        u = u_ff[s] if batched else u_ff[s][:, None]
        dx = field(list(x), list(u), None)
        x = x + dt * np.array([np.broadcast_to(d, (R,)) for d in dx])
        out.append(x.copy())
    traj = np.array(out)
    return traj if batched else traj[:, :, 0]


def _fallback_inputs(amplitudes: np.ndarray, steps: int, decel: float) -> np.ndarray:
    ramp = np.arange(steps) / max(steps - 1, 1)
    u = np.zeros((steps, 2, amplitudes.shape[0]))
    u[:, 0, :] = decel
    u[:, 1, :] = -ramp[:, None] * amplitudes[None, :]
    return u


def bicycle_fallback_nominal(
    x0: Sequence[float] = BICYCLE_X0,
    dt: float = BICYCLE_DT,
    T: float = BICYCLE_T,
    obstacle: ObstacleSpec = BICYCLE_OBSTACLE,
    clearance: float = 3.05,
    decel: float = -0.2,
    max_amplitude: float = 1.2,
    lf: float = 1.0,
    lr: float = 1.0,
) -> np.ndarray:
    """
    Self-contained nominal input: constant deceleration plus a right-turn steering ramp

    The ramp amplitude is the smallest one (grid scan, then bisection) whose
    point trajectory passes the obstacle center at distance ``clearance``.

    Raises:
        ScenarioError: no amplitude in [0, max_amplitude] gets that close
    """
    steps = step_count(T, dt)
    field = partial(bicycle_field, lf=lf, lr=lr)
    coords = obstacle.state_coords
    center = np.asarray(obstacle.center, dtype=float)

    def closest(amplitudes: np.ndarray) -> np.ndarray:
        traj = simulate_nominal(field, np.asarray(x0, dtype=float), _fallback_inputs(amplitudes, steps, decel), dt)
        pos = traj[:, coords, :]
        return np.sqrt(np.sum((pos - center[None, :, None]) ** 2, axis=1)).min(axis=0)

    grid = np.linspace(0.0, max_amplitude, 25)
    dist = closest(grid)
    below = np.flatnonzero(dist < clearance)
    if below.size == 0 or below[0] == 0:
        raise ScenarioError(
            f"steering ramp cannot reach clearance {clearance} (closest {dist.min():.4g})"
        )
    lo, hi = grid[below[0] - 1], grid[below[0]]
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if closest(np.array([mid]))[0] < clearance:
            hi = mid
        else:
            lo = mid
    amplitude = lo
    logger.info(f"bicycle fallback nominal: steering amplitude {amplitude:.6g}, decel {decel}")
    return _fallback_inputs(np.array([amplitude]), steps, decel)[:, :, 0]


def bicycle_system(
    u_ff: Optional[np.ndarray] = None,
    x0: Sequence[float] = BICYCLE_X0,
    half_widths: Sequence[float] = BICYCLE_HALF_WIDTHS,
    dt: float = BICYCLE_DT,
    T: float = BICYCLE_T,
    obstacle: ObstacleSpec = BICYCLE_OBSTACLE,
    w_lo: Optional[Sequence[float]] = None,
    w_hi: Optional[Sequence[float]] = None,
    K: Optional[np.ndarray] = None,
    x_nom: Optional[np.ndarray] = None,
    lf: float = 1.0,
    lr: float = 1.0,
    H: Optional[np.ndarray] = None,
    H_plus: Optional[np.ndarray] = None,
    nudge: Optional[NudgeConfig] = None,
) -> DemoScenario:
    x0 = np.asarray(x0, dtype=float)
    lo = x0 - np.asarray(half_widths, dtype=float)
    hi = x0 + np.asarray(half_widths, dtype=float)
    if u_ff is None:
        u_ff = bicycle_fallback_nominal(x0, dt, T, obstacle, lf=lf, lr=lr)
    if w_lo is None:
        w_lo, w_hi = np.zeros(4), np.zeros(4)
    if H is None:
        H, H_plus = bicycle_lifting()
    sys = _build(
        "bicycle", partial(bicycle_field, lf=lf, lr=lr), H, H_plus, lo, hi,
        np.asarray(u_ff, dtype=float), dt, T, w_lo, w_hi, K, x_nom,
    )
    return DemoScenario(
        sys, lo, hi, dt, T, obstacle,
        np.asarray(w_lo, dtype=float), np.asarray(w_hi, dtype=float),
        nudge or _nudge_config(dt, T, block_steps=50),
    )


def toy_system(
    u: float = 0.0,
    lo: float = 0.55,
    hi: float = 0.65,
    w_lo: float = -0.3,
    w_hi: float = -0.1,
    dt: float = 0.05,
    T: float = 1.0,
    obstacle: Optional[ObstacleSpec] = None,
    nudge: Optional[NudgeConfig] = None,
) -> DemoScenario:
    """x' = u + w, drifting toward an obstacle interval around the origin"""
    steps = step_count(T, dt)
    obstacle = obstacle or ObstacleSpec(center=[0.0], radius=0.5, coords=[0])
    H = np.array([[1.0]])
    sys = _build(
        "toy", toy_field, H, H.copy(), [lo], [hi],
        np.full((steps, 1), float(u)), dt, T, [w_lo], [w_hi],
    )
    return DemoScenario(
        sys, np.array([lo]), np.array([hi]), dt, T, obstacle,
        np.array([w_lo]), np.array([w_hi]),
        nudge or _nudge_config(dt, T, eta=10.0),
    )


def system_from_scenario(doc: ScenarioFile, refine: bool = True) -> DemoScenario:
    """
    Build a demo scenario from a parsed scenario file

    Raises:
        ScenarioError: the document does not fit the named system
    """
    H = None if doc.H is None else np.asarray(doc.H, dtype=float)
    H_plus = None if doc.H_plus is None else np.asarray(doc.H_plus, dtype=float)
    if (H is None) != (H_plus is None):
        raise ScenarioError("H and H_plus must be given together")
    lo = np.asarray(doc.initial_lo, dtype=float)
    hi = np.asarray(doc.initial_hi, dtype=float)
    cfg = _nudge_config(doc.dt, doc.T, doc.eta, doc.max_outer_iters, doc.block_steps, refine)

    if doc.system == SystemName.VANDERPOL:
        if lo.shape != (2,):
            raise ScenarioError("the Van der Pol system has 2 states")
        scenario = vanderpol_system(doc.params.get("mu", 1.0), doc.T, doc.dt, lo, hi, H, H_plus)
        scenario.obstacle = doc.obstacle
        scenario.nudge = cfg
        return scenario

    if doc.system == SystemName.BICYCLE:
        if lo.shape != (4,):
            raise ScenarioError("the bicycle system has 4 states")
        return bicycle_system(
            u_ff=None if doc.u_ff is None else np.asarray(doc.u_ff, dtype=float),
            x0=0.5 * (lo + hi),
            half_widths=0.5 * (hi - lo),
            dt=doc.dt,
            T=doc.T,
            obstacle=doc.obstacle or BICYCLE_OBSTACLE,
            w_lo=doc.disturbance_lo,
            w_hi=doc.disturbance_hi,
            K=None if doc.K is None else np.asarray(doc.K, dtype=float),
            x_nom=None if doc.x_nom is None else np.asarray(doc.x_nom, dtype=float),
            lf=doc.params.get("lf", 1.0),
            lr=doc.params.get("lr", 1.0),
            H=H,
            H_plus=H_plus,
            nudge=cfg,
        )

    if lo.shape != (1,):
        raise ScenarioError("the toy system has 1 state")
    u = 0.0 if doc.u_ff is None else float(np.asarray(doc.u_ff, dtype=float)[0, 0])
    w_lo = doc.disturbance_lo or [0.0]
    w_hi = doc.disturbance_hi or [0.0]
    scenario = toy_system(u, lo[0], hi[0], w_lo[0], w_hi[0], doc.dt, doc.T, doc.obstacle, cfg)
    if doc.u_ff is not None and len(doc.u_ff) > 1:
        scenario.system = scenario.system.with_inputs(np.asarray(doc.u_ff, dtype=float))
    return scenario
