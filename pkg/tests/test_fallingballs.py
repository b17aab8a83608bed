import math

import numpy as np
import pytest

from cmzlab import rv
from cmzlab.dynamics.fallingballs import (
    FallingBallsParams,
    FallingBallsState,
    FallingBallsSystem,
    elastic_velocities,
    energy,
    falling_balls_step,
    fiducial_state,
)
from cmzlab.errors import DomainError
from cmzlab.estat import tail_from_counts


PARAMS = FallingBallsParams(m1=2.0, m2=1.0, g=1.0, energy=6.0)


def test_elastic_collision_frozen_values():
    v1, v2 = elastic_velocities(2.0, 1.0, 1.0, -1.0)
    assert v1 == pytest.approx(-1.0 / 3.0, rel=1e-15)
    assert v2 == pytest.approx(5.0 / 3.0, rel=1e-15)
    # momentum and energy oracles
    assert 2.0 * v1 + 1.0 * v2 == pytest.approx(2.0 * 1.0 + 1.0 * (-1.0), rel=1e-14)
    assert 2.0 * v1**2 + v2**2 == pytest.approx(2.0 * 1.0 + 1.0, rel=1e-14)


def test_elastic_equal_masses_swap():
    v1, v2 = elastic_velocities(1.0, 1.0, 0.3, -0.8)
    assert v1 == pytest.approx(-0.8) and v2 == pytest.approx(0.3)


def test_zero_relative_velocity_rejected():
    state = FallingBallsState(1.0, 1.0, 0.5, 0.5)
    with pytest.raises(DomainError):
        falling_balls_step(state, PARAMS)


def test_step_conserves_energy_and_floor_reset():
    state = fiducial_state(PARAMS)
    e0 = energy(state, PARAMS)
    for _ in range(500):
        state, ev = falling_balls_step(state, PARAMS)
        if ev["kind"] == "floor":
            assert state.q1 == 0.0
        assert 0.0 <= state.q1 <= state.q2 + 1e-12
    assert energy(state, PARAMS) == pytest.approx(e0, rel=1e-12)


def test_simultaneous_event_tie_break():
    # constructed so the floor and ball-ball events coincide: floor first
    state = FallingBallsState(q1=1.0, q2=2.0, v1=-0.5, v2=-1.5)
    params = FallingBallsParams(m1=2.0, m2=1.0, g=1.0,
                                energy=energy(FallingBallsState(1.0, 2.0, -0.5, -1.5), PARAMS))
    new, ev = falling_balls_step(state, params)
    assert ev["kind"] == "floor"
    assert ev["degenerate_tie"]


def test_burn_in_zero_returns_fiducial():
    system = FallingBallsSystem(PARAMS)
    st = system.sample_invariant(seed=7, burn_in=0)
    assert st == fiducial_state(PARAMS, jitter=(7 % 2**24) / 2**24)


def test_energy_drift_contract():
    system = FallingBallsSystem(PARAMS)
    _hist, quality = system.return_tail_counts(n_events=10**6, seed=3, workers=1,
                                               burn_in=10**4)
    assert quality["max_rel_energy_drift"] < 1e-9


def test_kac_identity():
    system = FallingBallsSystem(PARAMS)
    stream = system.first_return_stream(n_returns=200_000, seed=5, workers=2,
                                        burn_in=10**4)
    assert stream.kac_gap() < 3.0 / math.sqrt(stream.n_returns)


def test_tail_exponent_quick():
    # desk-size version of the acceptance run (1e7 events, wide tolerance)
    system = FallingBallsSystem(PARAMS)
    hist, _ = system.return_tail_counts(n_events=10**7, seed=11, workers=2)
    curve = tail_from_counts(hist)
    ns = np.unique(np.round(np.geomspace(10, 100, 25)).astype(int))
    vals = np.array([curve.value(int(n)) for n in ns])
    fit = rv.estimate_index(np.column_stack([ns, vals]), (10.0, 100.0))
    assert fit.alpha == pytest.approx(3.0, abs=0.3)


def test_determinism_and_sharding():
    system = FallingBallsSystem(PARAMS)
    h1, _ = system.return_tail_counts(n_events=10**5, seed=9, workers=3, burn_in=1000)
    h2, _ = system.return_tail_counts(n_events=10**5, seed=9, workers=3, burn_in=1000)
    assert np.array_equal(h1, h2)
    h3, _ = system.return_tail_counts(n_events=10**5, seed=10, workers=3, burn_in=1000)
    assert not np.array_equal(h1, h3)


def test_return_map_on_section():
    system = FallingBallsSystem(PARAMS)
    stream = system.first_return_stream(n_returns=200, seed=2, workers=1, burn_in=10**4)
    v1s = stream.states[:50, 1]
    v2s = stream.states[:50, 2]
    images, r_vals, valid = system.return_map(v1s, v2s)
    assert np.all(valid)
    assert np.all(r_vals >= 2)  # a floor bounce always separates collisions
    # images stay on the energy surface: kinetic part below total energy
    kin = 0.5 * PARAMS.m1 * images[:, 0] ** 2 + 0.5 * PARAMS.m2 * images[:, 1] ** 2
    assert np.all(kin <= PARAMS.energy + 1e-12)


def test_param_validation():
    with pytest.raises(DomainError):
        FallingBallsParams(m1=1.0, m2=1.0)  # needs m1 > m2
    with pytest.raises(DomainError):
        FallingBallsParams(m1=2.0, m2=1.0, g=-1.0)


def test_return_stream_csv_export(tmp_path):
    system = FallingBallsSystem(PARAMS)
    stream = system.first_return_stream(n_returns=100, seed=2, workers=2, burn_in=1000)
    path = tmp_path / "stream.csv"
    stream.to_csv(path, flavor="falling-balls")
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "worker,index,R,q1,q2,v1,v2"
    assert len(lines) == 101
    first = lines[1].split(",")
    assert first[3] == first[4]  # ball-ball section: equal heights
