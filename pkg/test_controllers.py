#!/usr/bin/env python3
"""
Test script for the wave-dampening control laws.

Exercises FollowerStopper, PI with saturation, the human-average variant and
the gap smoother, including a closed-loop no-collision property.
"""

import sys
from pathlib import Path

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent))

import numpy as np
import pytest

from src.actuation import RateLimitedTracker
from src.controllers import (
    ControllerError,
    ControllerInput,
    FollowerStopperConfig,
    FollowerStopperController,
    GapSmoother,
    HumanAverageController,
    HumanAvgConfig,
    PiSatConfig,
    PiSatState,
    PiSaturationController,
    build_controller,
    follower_stopper,
    fs_boundaries,
    human_avg_controller,
    pi_alpha_beta,
    pi_command_update,
    pi_desired_velocity,
    pi_target_velocity,
    quantize_speed,
    smooth_gap_signal,
)


FS = FollowerStopperConfig()
PI = PiSatConfig()


def fs_command(gap, dv, v_av, U):
    return follower_stopper(ControllerInput(v_av=v_av, gap=gap, dv=dv, U=U), FS)


# ─────────────────────────────────────────────────────────────────────────────
# FOLLOWERSTOPPER
# ─────────────────────────────────────────────────────────────────────────────

def test_fs_boundaries():
    assert fs_boundaries(-3.0, FS) == pytest.approx((7.5, 9.75, 15.0))
    assert fs_boundaries(0.0, FS) == pytest.approx((4.5, 5.25, 6.0))
    assert fs_boundaries(2.0, FS) == pytest.approx((4.5, 5.25, 6.0))
    for dv in np.linspace(-15.0, 5.0, 201):
        x1, x2, x3 = fs_boundaries(dv, FS)
        assert x1 < x2 < x3
    print("✓ Region boundaries match the published values")


def test_follower_stopper_branches():
    assert fs_command(20.0, 0.0, 7.5, 7.5) == pytest.approx(7.5)
    assert fs_command(3.0, 1.0, 5.0, 7.5) == 0.0
    # v_lead = 3 with dv = 0 means v_av = 3
    assert fs_command(5.0, 0.0, 3.0, 7.5) == pytest.approx(2.0)
    assert fs_command(5.5, 0.0, 3.0, 7.5) == pytest.approx(4.5)


def test_follower_stopper_needs_u():
    with pytest.raises(ControllerError):
        follower_stopper(ControllerInput(v_av=5.0, gap=10.0, dv=0.0), FS)


def test_follower_stopper_continuous_and_monotone():
    """Dense sampling in gap: no jumps at the boundaries, never decreasing."""
    for dv, v_av, U in [(0.0, 3.0, 7.5), (-3.0, 6.0, 7.5), (-1.0, 9.0, 8.0), (2.0, 4.0, 6.5)]:
        boundaries = fs_boundaries(dv, FS)
        # 1e-4 m steps around each boundary, coarser elsewhere
        grid = np.unique(np.concatenate(
            [np.arange(0.0, 25.0, 1e-2)]
            + [np.arange(b - 0.05, b + 0.05, 1e-4) for b in boundaries]
        ))
        values = np.array([fs_command(x, dv, v_av, U) for x in grid])
        steps = np.diff(values)
        assert steps.min() >= -1e-12
        assert values.min() >= 0.0 and values.max() <= U + 1e-12
        fine = np.diff(grid) <= 1.0001e-4
        slope_bound = max(v_av + dv, U) / min(b2 - b1 for b1, b2 in zip(boundaries, boundaries[1:]))
        assert np.all(steps[fine] <= slope_bound * 1e-4 + 1e-9)
        for boundary in boundaries:
            left = fs_command(boundary, dv, v_av, U)
            right = fs_command(boundary + 1e-12, dv, v_av, U)
            assert abs(right - left) < 1e-9
    print("✓ FollowerStopper is continuous and monotone in the gap")


def test_follower_stopper_bounded_random():
    rng = np.random.default_rng(21)
    for _ in range(5000):
        U = rng.uniform(0.0, 12.0)
        v_av = rng.uniform(0.0, 15.0)
        dv = rng.uniform(-v_av, 5.0)
        command = fs_command(rng.uniform(0.0, 40.0), dv, v_av, U)
        assert 0.0 <= command <= U + 1e-12


def test_follower_stopper_avoids_braking_leader():
    """
    1000 random profiles: the leader brakes to a stop at no more than d1, the
    follower starts at least dx3 behind and tracks the FollowerStopper command
    with bounded acceleration. The gap never closes.
    """
    rng = np.random.default_rng(99)
    cfg = FollowerStopperConfig()
    d1 = cfg.decel[0]
    tracker = RateLimitedTracker(max_accel=1.5, max_decel=4.5)
    dt = 0.05
    closest = np.inf
    for _ in range(1000):
        U = rng.uniform(6.0, 10.0)
        v_lead = rng.uniform(0.0, U)
        v_follow = rng.uniform(max(0.0, v_lead - 3.0), min(U, v_lead + 3.0))
        dx3 = fs_boundaries(v_lead - v_follow, cfg)[2]
        gap = dx3 + rng.uniform(0.0, 20.0)
        brake = rng.uniform(0.0, d1)
        brake_at = rng.uniform(0.0, 5.0)
        assert gap >= dx3 and brake <= d1
        for k in range(800):
            command = fs_command(gap, v_lead - v_follow, v_follow, U)
            next_follow = tracker.step(v_follow, command, dt)
            lead_accel = -brake if k * dt >= brake_at else 0.0
            next_lead = max(0.0, v_lead + lead_accel * dt)
            gap += (next_lead - next_follow) * dt
            v_follow, v_lead = next_follow, next_lead
            closest = min(closest, gap)
    assert closest > 0.0
    print(f"✓ No collision over 1000 braking profiles (closest gap {closest:.2f} m)")


def test_follower_stopper_controller_uses_event_u():
    controller = FollowerStopperController()
    controller.set_desired_velocity(6.5)
    assert controller.command(ControllerInput(v_av=6.0, gap=30.0, dv=0.0)) == pytest.approx(6.5)


# ─────────────────────────────────────────────────────────────────────────────
# PI WITH SATURATION
# ─────────────────────────────────────────────────────────────────────────────

def test_pi_desired_velocity():
    capacity = PI.capacity(0.05)
    assert capacity == 760
    assert pi_desired_velocity(PiSatState.from_samples([7.0] * 10, capacity)) == pytest.approx(7.0)
    assert pi_desired_velocity(PiSatState.from_samples([6.0, 8.0], capacity)) == pytest.approx(7.0)

    t = np.arange(capacity) * 0.05
    samples = 7.2 + 1.5 * np.sin(2 * np.pi * t / 38.0)
    assert pi_desired_velocity(PiSatState.from_samples(samples, capacity)) == pytest.approx(7.2, abs=0.01)

    with pytest.raises(ControllerError):
        pi_desired_velocity(PiSatState.create(PI, 0.05))


def test_pi_history_is_bounded():
    state = PiSatState.from_samples(range(1000), 760)
    assert len(state.history) == 760
    assert state.history[0] == 240


def test_pi_target_velocity():
    assert pi_target_velocity(7.0, 5.0, PI) == pytest.approx(7.0)
    assert pi_target_velocity(7.0, 40.0, PI) == pytest.approx(8.0)
    assert pi_target_velocity(7.0, 18.5, PI) == pytest.approx(7.5)


def test_pi_alpha_beta():
    assert pi_alpha_beta(4.0, 0.0, PI) == pytest.approx((0.0, 1.0))
    assert pi_alpha_beta(6.0, 0.0, PI) == pytest.approx((1.0, 0.5))
    assert pi_alpha_beta(5.0, 0.0, PI) == pytest.approx((0.5, 0.75))
    # opening gap at 3 m/s pushes the safety distance to 6 m
    assert pi_alpha_beta(6.0, 3.0, PI) == pytest.approx((0.0, 1.0))

    ego = PiSatConfig(safety_reference="ego")
    assert pi_alpha_beta(16.0, 0.0, ego, v_av=7.0) == pytest.approx((1.0, 0.5))
    with pytest.raises(ControllerError):
        pi_alpha_beta(16.0, 0.0, ego)


def test_pi_command_update():
    state = PiSatState.from_samples([7.0], 760, prev_cmd=7.0)
    assert pi_command_update(state, 8.0, 6.0, 1.0, 1.0) == pytest.approx(8.0)
    assert pi_command_update(state, 8.0, 6.0, 0.0, 1.0) == pytest.approx(6.0)
    state.prev_cmd = 7.0
    assert pi_command_update(state, 8.0, 6.0, 0.5, 0.75) == pytest.approx(7.0)
    assert state.prev_cmd == pytest.approx(7.0)

    with pytest.raises(ControllerError):
        pi_command_update(PiSatState.create(PI, 0.05), 8.0, 6.0, 0.5, 0.75)


def test_pi_command_in_convex_hull():
    rng = np.random.default_rng(5)
    for _ in range(2000):
        prev, target, lead = rng.uniform(0.0, 12.0, size=3)
        alpha, beta = pi_alpha_beta(rng.uniform(0.0, 20.0), rng.uniform(-5.0, 5.0), PI)
        state = PiSatState.from_samples([prev], 760, prev_cmd=prev)
        command = pi_command_update(state, target, lead, alpha, beta)
        assert min(prev, target, lead) - 1e-12 <= command <= max(prev, target, lead) + 1e-12


def test_pi_controller_activation():
    """Activation clears the history and starts from the current speed."""
    controller = PiSaturationController(dt=0.05)
    controller.state.history.extend([1.0] * 50)
    controller.activate(7.0)
    assert controller.state.prev_cmd == 7.0
    assert len(controller.state.history) == 0

    command = controller.command(ControllerInput(v_av=7.0, gap=10.0, dv=0.0))
    assert len(controller.state.history) == 1
    assert 7.0 <= command <= 8.0


# ─────────────────────────────────────────────────────────────────────────────
# HUMAN AVERAGE
# ─────────────────────────────────────────────────────────────────────────────

def test_quantize_speed():
    assert quantize_speed(6.26, 0.447) == pytest.approx(6.26, abs=0.01)
    with pytest.raises(ControllerError):
        quantize_speed(6.26, 0.0)


def test_human_avg_controller():
    cfg = HumanAvgConfig()
    far = ControllerInput(v_av=6.0, gap=40.0, dv=0.0)
    assert human_avg_controller(far, cfg, 6.26) == pytest.approx(quantize_speed(6.26, cfg.quantum))
    close = ControllerInput(v_av=6.0, gap=3.0, dv=0.0)
    assert human_avg_controller(close, cfg, 6.26) == 0.0


def test_human_average_reaction_lag():
    """A communicated speed shows in the command reaction_lag seconds later."""
    controller = HumanAverageController(HumanAvgConfig(reaction_lag=2.0), dt=0.5)
    controller.activate(5.0, time=100.0)
    far = ControllerInput(v_av=5.0, gap=40.0, dv=0.0)
    for _ in range(4):
        assert controller.command(far) == pytest.approx(quantize_speed(5.0, 0.447))

    controller.set_desired_velocity(7.15, time=102.0)
    for _ in range(4):
        assert controller.command(far) == pytest.approx(quantize_speed(5.0, 0.447))
    assert controller.command(far) == pytest.approx(quantize_speed(7.15, 0.447))

    controller.update_lap_average(6.0)
    for _ in range(6):
        assert controller.command(far) == pytest.approx(quantize_speed(7.15, 0.447))


def test_human_average_inputs_are_delayed():
    """A jump in the leader's speed reaches the command only after reaction_lag."""
    dt, lag = 0.5, 2.0
    controller = HumanAverageController(HumanAvgConfig(reaction_lag=lag), dt=dt)
    controller.activate(6.26)
    # gap on the second boundary: the command equals the leader's speed
    slow = ControllerInput(v_av=5.0, gap=5.25, dv=0.0)
    fast = ControllerInput(v_av=5.0, gap=5.25, dv=1.0)
    assert human_avg_controller(slow, HumanAvgConfig(), 6.26) == pytest.approx(5.0)
    assert human_avg_controller(fast, HumanAvgConfig(), 6.26) == pytest.approx(6.0)

    commands = [controller.command(slow) for _ in range(4)]
    commands += [controller.command(fast) for _ in range(8)]
    lag_steps = int(round(lag / dt))
    assert commands[:4 + lag_steps] == pytest.approx([5.0] * (4 + lag_steps))
    assert commands[4 + lag_steps:] == pytest.approx([6.0] * (8 - lag_steps))

    instant = HumanAverageController(HumanAvgConfig(reaction_lag=0.0), dt=dt)
    instant.activate(6.26)
    instant.command(slow)
    assert instant.command(fast) == pytest.approx(6.0)
    print("✓ Human-average driver reacts reaction_lag seconds late")


# ─────────────────────────────────────────────────────────────────────────────
# SMOOTHING
# ─────────────────────────────────────────────────────────────────────────────

def test_smoother_constant_gap():
    gaps, dv = smooth_gap_signal([10.0] * 50, 0.05)
    assert np.allclose(gaps, 10.0)
    assert np.allclose(dv, 0.0)

    gaps, dv = smooth_gap_signal([4.0], 0.05)
    assert gaps[0] == 4.0 and dv[0] == 0.0


def test_smoother_ramp_converges():
    """A gap opening at 1 m/s is reported as dv = 1 within 2%."""
    dt = 0.05
    t = np.arange(100) * dt
    _, dv = smooth_gap_signal(10.0 + t, dt, smoothing_time=0.3)
    assert dv[-1] == pytest.approx(1.0, rel=0.02)


def test_smoother_noise_envelope():
    rng = np.random.default_rng(8)
    sigma, smoothing_time = 0.1, 0.3
    raw = 10.0 + rng.normal(0.0, sigma, size=2000)
    _, dv = smooth_gap_signal(raw, 0.05, smoothing_time)
    assert np.max(np.abs(dv)) < 3 * sigma / smoothing_time


def test_smoother_validation():
    with pytest.raises(ControllerError):
        GapSmoother(0.0)


def test_build_controller():
    assert build_controller("none", 0.05) is None
    assert isinstance(build_controller("follower_stopper", 0.05), FollowerStopperController)
    assert isinstance(build_controller("pi_saturation", 0.05), PiSaturationController)
    assert isinstance(build_controller("human_avg", 0.05), HumanAverageController)
    with pytest.raises(ControllerError):
        build_controller("cruise", 0.05)


def test_config_validation():
    with pytest.raises(ControllerError):
        FollowerStopperConfig(dx0=(5.0, 4.0, 6.0))
    with pytest.raises(ControllerError):
        FollowerStopperConfig(decel=(0.5, 1.0, 1.5))
    with pytest.raises(ControllerError):
        PiSatConfig(g_l=40.0)
    with pytest.raises(ControllerError):
        PiSatConfig(safety_reference="leader")
    with pytest.raises(ControllerError):
        HumanAvgConfig(quantum=0.0)


def main():
    """Run all controller tests."""
    print("\n" + "=" * 70)
    print("  CONTROLLER TEST SUITE")
    print("=" * 70)
    for name, test in list(globals().items()):
        if name.startswith("test_") and callable(test):
            test()
    print("\n✅ All controller tests passed!\n")


if __name__ == "__main__":
    main()
