"""
Van der Pol tube: containment, refinement gain and bound size

"""
import math

import numpy as np
import pytest

from lpreach.services.reach import (
    box_corners,
    integrate_embedding,
    refine,
    sample_box,
    simulate_points,
    tube_contains,
)
from lpreach.services.systems import vanderpol_dt, vanderpol_system

REFERENCE_BOUND_SIZE = 6.8724e-2
SHORT_T = 0.628
# reference trajectories take 20 Euler sub-steps per tube step
SUBSTEPS = 20
CONTAINMENT_TOL = 1e-9


@pytest.fixture(scope="module")
def short_run():
    scenario = vanderpol_system(t_f=SHORT_T)
    sys = scenario.system
    refined = integrate_embedding(sys, sys.initial_state, scenario.dt, scenario.T, refine_faces=True)
    plain = integrate_embedding(sys, sys.initial_state, scenario.dt, scenario.T, refine_faces=False)
    return scenario, refined, plain


def _check_tube(scenario, refined, plain, samples, rng):
    sys = scenario.system
    assert not refined.truncated
    assert refined.length == scenario.steps + 1

    # refinement never loosens a face
    assert np.all(refined.y_lo >= plain.y_lo - 1e-12)
    assert np.all(refined.y_hi <= plain.y_hi + 1e-12)

    x0 = np.vstack([
        box_corners(scenario.state_lo, scenario.state_hi),
        sample_box(scenario.state_lo, scenario.state_hi, samples, rng),
    ])
    points = simulate_points(sys, x0, scenario.dt, scenario.T, substeps=SUBSTEPS)
    for traj in (refined, plain):
        inside = tube_contains(traj, sys.H, points, tol=CONTAINMENT_TOL)
        assert inside.all(), f"{int((~inside).sum())} sample states outside the tube (refine={traj.refine})"


class TestShortHorizon:
    def test_dt_divides_horizon(self):
        dt = vanderpol_dt(SHORT_T)
        assert dt <= 0.01
        assert round(SHORT_T / dt) * dt == pytest.approx(SHORT_T, abs=1e-12)

    def test_containment_and_tightening(self, short_run, rng):
        scenario, refined, plain = short_run
        _check_tube(scenario, refined, plain, 300, rng)

    def test_corner_trajectories_stay_inside(self, short_run):
        # corner trajectories reach the tube boundary first
        scenario, refined, _ = short_run
        sys = scenario.system
        corners = box_corners(scenario.state_lo, scenario.state_hi)
        points = simulate_points(sys, corners, scenario.dt, scenario.T, substeps=SUBSTEPS)
        assert tube_contains(refined, sys.H, points, tol=CONTAINMENT_TOL).all()
        assert not refined.truncated

    def test_bound_size(self, short_run):
        scenario, refined, plain = short_run
        volume = refined.bound_volume(scenario.system.n)
        assert REFERENCE_BOUND_SIZE / 3.0 <= volume <= 3.0 * REFERENCE_BOUND_SIZE
        assert volume <= plain.bound_volume(scenario.system.n)
        assert refined.bound_width_sum(2) == pytest.approx(np.sum(refined.widths(2)[-1]))

    def test_refine_sandwich_along_run(self, short_run, rng):
        scenario, refined, _ = short_run
        H = scenario.system.H
        for step in np.linspace(0, refined.length - 1, 20).astype(int):
            y_lo, y_hi = refined.y_lo[step], refined.y_hi[step]
            z_lo, z_hi = refine(y_lo, y_hi, H)
            assert np.all(z_lo >= y_lo - 1e-12)
            assert np.all(z_hi <= y_hi + 1e-12)

            x_lo, x_hi = y_lo[:2], y_hi[:2]
            points = rng.uniform(x_lo, x_hi, (1000, 2))
            images = points @ H.T
            feasible = np.all((images >= y_lo) & (images <= y_hi), axis=1)
            assert np.all(images[feasible] >= z_lo - 1e-9)
            assert np.all(images[feasible] <= z_hi + 1e-9)

    def test_deterministic(self, short_run):
        scenario, refined, _ = short_run
        sys = scenario.system
        again = integrate_embedding(sys, sys.initial_state, scenario.dt, scenario.T)
        np.testing.assert_array_equal(again.y_lo, refined.y_lo)
        np.testing.assert_array_equal(again.y_hi, refined.y_hi)


@pytest.mark.slow
def test_full_period(rng):
    scenario = vanderpol_system(t_f=2.0 * math.pi)
    sys = scenario.system
    refined = integrate_embedding(sys, sys.initial_state, scenario.dt, scenario.T, refine_faces=True, workers=4)
    plain = integrate_embedding(sys, sys.initial_state, scenario.dt, scenario.T, refine_faces=False)
    _check_tube(scenario, refined, plain, 1000, rng)
