import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schwinger_medium.trajectory import (
    ChargeSchedule,
    MovingCharge,
    StaticCharge,
    TrajectoryError,
    TrajectoryParams,
    eval_trajectory,
    partition_charge,
    step_schedule,
    time_for_position,
)

FIG1 = TrajectoryParams(v_max=0.2, a_max=0.04, x0=3, xf=11, a0=1e-4)


def test_reference_trajectory_constants():
    assert FIG1.t0 == 9
    assert FIG1.T == pytest.approx(40.0)
    assert FIG1.beta == pytest.approx(0.4)


def test_parameter_validation():
    with pytest.raises(TrajectoryError):
        TrajectoryParams(v_max=0.0, a_max=0.1, x0=0, xf=4)
    with pytest.raises(TrajectoryError):
        TrajectoryParams(v_max=0.2, a_max=-0.1, x0=0, xf=4)
    with pytest.raises(TrajectoryError):
        TrajectoryParams(v_max=0.2, a_max=0.04, x0=4, xf=3)
    with pytest.raises(TrajectoryError):  # degenerate: a(0) >= a_max
        TrajectoryParams(v_max=0.2, a_max=0.04, x0=3, xf=11, a0=0.05)
    with pytest.raises(TrajectoryError):
        eval_trajectory(FIG1, -1.0)


def test_midpoint_symmetry_and_plateau_velocity():
    t_mid = FIG1.t0 + FIG1.T / 2
    x, v, a = eval_trajectory(FIG1, t_mid)
    assert x == pytest.approx(0.5 * (FIG1.x0 + FIG1.xf), abs=1e-12)
    assert v == pytest.approx(FIG1.v_max * math.tanh(FIG1.beta * FIG1.T / 2), rel=1e-12)
    assert v == pytest.approx(0.2, abs=1e-6)
    assert abs(a) < 1e-12


def test_endpoints_approached():
    x_start, v_start, _ = eval_trajectory(FIG1, 0.0)
    assert x_start == pytest.approx(FIG1.x0, abs=1e-3)
    assert v_start < 1e-3
    x_end, _, _ = eval_trajectory(FIG1, FIG1.t_total + 30.0)
    assert x_end == pytest.approx(FIG1.xf, abs=1e-6)


def test_derivatives_match_finite_differences():
    h = 1e-5
    for t in np.linspace(0.5, FIG1.t_total - 0.5, 37):
        xm, _, _ = eval_trajectory(FIG1, t - h)
        xp, _, _ = eval_trajectory(FIG1, t + h)
        x, v, a = eval_trajectory(FIG1, t)
        vm = eval_trajectory(FIG1, t - h)[1]
        vp = eval_trajectory(FIG1, t + h)[1]
        assert (xp - xm) / (2 * h) == pytest.approx(v, rel=1e-6, abs=1e-9)
        assert (vp - vm) / (2 * h) == pytest.approx(a, rel=1e-6, abs=1e-9)


def test_velocity_and_acceleration_bounds():
    ts = np.linspace(0.0, FIG1.t_total + 10, 2001)
    vals = [eval_trajectory(FIG1, t) for t in ts]
    assert max(v for _, v, _ in vals) <= FIG1.v_max + 1e-12
    assert max(abs(a) for _, _, a in vals) <= FIG1.a_max + 1e-12


def test_charge_partition_reference_points():
    p = partition_charge(3.0, 1.0, n_sites=16)
    assert (p.site_lo, p.q_lo, p.q_hi) == (3, 1.0, 0.0)
    p = partition_charge(4.0, 1.0, n_sites=16)
    assert (p.site_lo, p.q_lo, p.q_hi) == (3, 0.5, 0.5)
    p = partition_charge(3.5, 1.0, n_sites=16)
    assert p.site_lo == 3
    assert p.q_lo == pytest.approx(0.75)
    assert p.q_hi == pytest.approx(0.25)
    with pytest.raises(TrajectoryError):
        partition_charge(0.5, 1.0, n_sites=16)
    with pytest.raises(TrajectoryError):
        partition_charge(14.2, 1.0, n_sites=16)


@given(
    x=st.floats(min_value=1.0, max_value=13.0),
    Q=st.floats(min_value=-2.0, max_value=2.0),
)
@settings(max_examples=100, deadline=None)
def test_partition_conserves_charge(x, Q):
    p = partition_charge(x, Q, n_sites=16)
    assert p.q_lo + p.q_hi == pytest.approx(Q, abs=1e-12)
    assert p.site_lo % 2 == 1 and p.site_hi % 2 == 1
    if Q > 0:
        assert -1e-12 <= p.q_lo <= Q + 1e-12
        assert -1e-12 <= p.q_hi <= Q + 1e-12


def test_time_position_round_trip():
    for t_star in [3.0, 9.0, 17.5, 29.0, 40.0]:
        x, _, _ = eval_trajectory(FIG1, t_star)
        assert time_for_position(FIG1, x) == pytest.approx(t_star, abs=1e-9)
    assert time_for_position(FIG1, 7.0) == pytest.approx(FIG1.t0 + FIG1.T / 2, abs=1e-9)


def test_time_for_final_position_hits_tail():
    # x = xf is approached asymptotically past t0 + T with deficit
    # delta(t) = v^2/(4a) exp(-2 beta (t - t0 - T)); the numeric inversion
    # must land on that analytic tail.
    amp = FIG1.v_max**2 / (4 * FIG1.a_max)
    for delta in [1e-3, 1e-4, 1e-6]:
        t = time_for_position(FIG1, FIG1.xf - delta)
        t_tail = FIG1.t0 + FIG1.T + math.log(amp / delta) / (2 * FIG1.beta)
        assert t == pytest.approx(t_tail, abs=1e-2)
    with pytest.raises(TrajectoryError):
        time_for_position(FIG1, FIG1.xf + 0.1)
    with pytest.raises(TrajectoryError):
        time_for_position(FIG1, FIG1.x0 - 0.1)


def test_step_schedule_boundaries():
    assert step_schedule(0.05) == 2.0
    assert step_schedule(0.07) == 1.5
    assert step_schedule(0.1) == 1.5
    assert step_schedule(0.2) == 1.0
    assert step_schedule(0.3) == 0.5
    assert step_schedule(0.4) == 0.5
    assert step_schedule(0.8) == 0.25
    with pytest.raises(TrajectoryError):
        step_schedule(0.0)
    with pytest.raises(TrajectoryError):
        step_schedule(1.0)


def test_charge_schedule_combines_static_and_moving():
    sched = ChargeSchedule(
        n_sites=16,
        statics=(StaticCharge(site=11, Q=1.0),),
        moving=MovingCharge(FIG1, Q=1.0),
    )
    bc = sched.charges_at(FIG1.t0 + FIG1.T / 2)  # moving charge at x = 7
    got = dict(bc.entries)
    assert got[11] == 1.0
    assert got[7] == pytest.approx(1.0, abs=1e-9)
    assert bc.total() == pytest.approx(2.0, abs=1e-12)
    assert sched.default_dt() == 1.0
    assert sched.default_t_end() == pytest.approx(58.0)
    assert sched.v_at(FIG1.t0 + 20) == pytest.approx(0.2, abs=1e-5)


def test_charge_schedule_requires_moving_for_defaults():
    sched = ChargeSchedule(n_sites=16, statics=(StaticCharge(site=11, Q=1.0),))
    with pytest.raises(TrajectoryError):
        sched.default_dt()
    assert math.isnan(sched.x_at(0.0))
