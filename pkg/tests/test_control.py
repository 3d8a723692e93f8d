"""Animation state machine, invocation, and teleport baseline."""

from __future__ import annotations

import math
import random

import pytest

from tunnelwalk.control import (
    ALLOWED_TRANSITIONS,
    AimModel,
    CooldownActive,
    EffectKind,
    InvocationAnchor,
    NotOnPlatform,
    PhaseDurations,
    TeleportConfig,
    Teleporter,
    TunnelAlreadyActive,
    TunnelMachine,
    TunnelPhase,
    invoke_tunnel,
    teleport_aim,
)
from tunnelwalk.geometry import PlaySpace, Pose, Quat, Segment, Vec2, Vec3
from tunnelwalk.scenario import NavigableRegion, Rect
from tunnelwalk.tunnel import FixedGain, TunnelParams

DT = 1.0 / 90.0
PLAYSPACE = PlaySpace(Vec2(0, 0), Vec2(2, 2))
NAV = NavigableRegion((Rect(-10.0, -10.0, 50.0, 10.0),))


def make_anchor(destination: int = 1) -> InvocationAnchor:
    return InvocationAnchor(
        platform_center=Vec3(-0.9, 0.0, 0.0),
        platform_radius=0.5,
        button_position=Vec3(-0.6, 0.9, 0.0),
        destination=destination,
    )


def run_until(machine: TunnelMachine, phase: TunnelPhase, max_ticks: int = 10000) -> int:
    ticks = 0
    while machine.phase is not phase:
        machine.tick(DT)
        ticks += 1
        assert ticks < max_ticks, f"never reached {phase}"
    return ticks


class TestPhaseMachine:
    def test_press_starts_rising(self):
        m = TunnelMachine()
        effects = m.press()
        assert m.phase is TunnelPhase.RISING_HALF
        assert effects[0].kind is EffectKind.PHASE_CHANGED

    def test_open_after_default_animation(self):
        m = TunnelMachine()
        m.press()
        ticks = run_until(m, TunnelPhase.OPEN)
        # 0.5 + 1.0 + 0.5 + 0.5 s at 90 Hz
        assert ticks == round(2.5 / DT)

    def test_phase_order_never_skips(self):
        m = TunnelMachine()
        seen = []
        effects = m.press()
        for _ in range(1000):
            effects += m.tick(DT)
        effects += m.entry_crossed()
        effects += m.exit_crossed()
        effects += m.cabin_cleared()
        for _ in range(1000):
            effects += m.tick(DT)
        for e in effects:
            if e.kind is EffectKind.PHASE_CHANGED:
                seen.append((e.previous, e.phase))
        assert seen
        for pair in seen:
            assert pair in ALLOWED_TRANSITIONS
        assert m.phase is TunnelPhase.IDLE

    def test_waiting_phases_do_not_time_out(self):
        m = TunnelMachine()
        m.press()
        run_until(m, TunnelPhase.OPEN)
        for _ in range(10000):
            m.tick(DT)
        assert m.phase is TunnelPhase.OPEN

    def test_entry_crossing_only_from_open(self):
        m = TunnelMachine()
        m.press()
        assert m.entry_crossed() == []
        assert m.phase is TunnelPhase.RISING_HALF
        run_until(m, TunnelPhase.OPEN)
        effects = m.entry_crossed()
        assert m.phase is TunnelPhase.TRAVERSING
        kinds = [e.kind for e in effects]
        assert EffectKind.PARENT_RIG in kinds

    def test_teardown_from_traversing_only(self):
        m = TunnelMachine()
        assert m.cabin_cleared() == []
        m.press()
        run_until(m, TunnelPhase.OPEN)
        m.entry_crossed()
        effects = m.exit_crossed()
        assert [e.kind for e in effects] == [EffectKind.UNPARENT_RIG]
        assert m.phase is TunnelPhase.TRAVERSING
        effects = m.cabin_cleared()
        kinds = [e.kind for e in effects]
        assert EffectKind.START_TEARDOWN in kinds
        assert m.phase is TunnelPhase.DOORS_CLOSING

    def test_abort_flag_carried(self):
        m = TunnelMachine()
        m.press()
        run_until(m, TunnelPhase.OPEN)
        m.entry_crossed()
        effects = m.exit_crossed(abort=True)
        assert effects[0].abort is True

    def test_duration_schedule_speeds_up_later_invocations(self):
        durations = PhaseDurations(schedule=(1.0, 0.5))
        m = TunnelMachine(durations)
        m.press()
        first = run_until(m, TunnelPhase.OPEN)
        m.entry_crossed()
        m.exit_crossed()
        m.cabin_cleared()
        run_until(m, TunnelPhase.IDLE)
        m.press()
        second = run_until(m, TunnelPhase.OPEN)
        assert second == math.ceil(first / 2)  # 1.25 s needs 113 of the 1/90 s ticks

    def test_big_dt_can_cross_multiple_phases(self):
        m = TunnelMachine()
        m.press()
        effects = m.tick(10.0)
        assert m.phase is TunnelPhase.OPEN
        assert len([e for e in effects if e.kind is EffectKind.PHASE_CHANGED]) == 4

    def test_zero_dt_rejected(self):
        m = TunnelMachine()
        with pytest.raises(ValueError):
            m.tick(0.0)


class TestInvoke:
    def test_press_on_platform_builds_60m_spec(self):
        m = TunnelMachine()
        path = Segment(Vec3(0, 0, 0), Vec3(60, 0, 0))
        user = Pose(Vec3(-0.9, 1.7, 0.1), Quat.identity())
        spec, effects = invoke_tunnel(
            make_anchor(), user, m, path, FixedGain(30.0), TunnelParams(),
            PLAYSPACE, Vec3(-1.0, 0.0, 0.0),
        )
        assert m.phase is TunnelPhase.RISING_HALF
        assert spec.cabin_length == 2.0

    def test_off_platform_rejected(self):
        m = TunnelMachine()
        path = Segment(Vec3(0, 0, 0), Vec3(60, 0, 0))
        user = Pose(Vec3(-2.9, 1.7, 0.0), Quat.identity())  # 2 m from the platform
        with pytest.raises(NotOnPlatform):
            invoke_tunnel(
                make_anchor(), user, m, path, FixedGain(30.0), TunnelParams(),
                PLAYSPACE, Vec3(-1.0, 0.0, 0.0),
            )

    def test_press_during_retracting_rejected(self):
        m = TunnelMachine()
        m.press()
        run_until(m, TunnelPhase.OPEN)
        m.entry_crossed()
        m.exit_crossed()
        m.cabin_cleared()
        run_until(m, TunnelPhase.RETRACTING)
        path = Segment(Vec3(0, 0, 0), Vec3(60, 0, 0))
        user = Pose(Vec3(-0.9, 1.7, 0.0), Quat.identity())
        with pytest.raises(TunnelAlreadyActive):
            invoke_tunnel(
                make_anchor(), user, m, path, FixedGain(30.0), TunnelParams(),
                PLAYSPACE, Vec3(-1.0, 0.0, 0.0),
            )

    def test_button_reach_validated(self):
        with pytest.raises(ValueError):
            InvocationAnchor(
                platform_center=Vec3(0, 0, 0),
                platform_radius=0.5,
                button_position=Vec3(1.0, 1.2, 0.0),
                destination=1,
            )


class TestTeleportAim:
    def test_floor_hit_5m_ahead(self):
        origin = Pose(Vec3(0.0, 1.7, 0.0))
        direction = (Vec3(5.0, 0.0, 0.0) - origin.position).normalized()
        result = teleport_aim(origin, direction, TeleportConfig(), NAV)
        assert result.valid
        assert (result.target - Vec3(5.0, 0.0, 0.0)).norm() < 1e-9

    def test_beyond_range_invalid_by_default(self):
        origin = Pose(Vec3(0.0, 1.7, 0.0))
        direction = (Vec3(20.0, 0.0, 0.0) - origin.position).normalized()
        result = teleport_aim(origin, direction, TeleportConfig(max_range=12.0), NAV)
        assert not result.valid

    def test_beyond_range_clamped_when_configured(self):
        origin = Pose(Vec3(0.0, 1.7, 0.0))
        direction = (Vec3(20.0, 0.0, 0.0) - origin.position).normalized()
        cfg = TeleportConfig(max_range=12.0, clamp_to_range=True)
        result = teleport_aim(origin, direction, cfg, NAV)
        assert result.valid
        assert (result.target - Vec3(0, 0, 0)).norm() == pytest.approx(12.0, abs=1e-9)

    def test_outside_navigable_invalid(self):
        origin = Pose(Vec3(0.0, 1.7, 0.0))
        direction = (Vec3(0.0, 0.0, -11.0) - origin.position).normalized()
        result = teleport_aim(origin, direction, TeleportConfig(), NAV)
        assert not result.valid

    def test_upward_ray_invalid(self):
        origin = Pose(Vec3(0.0, 1.7, 0.0))
        result = teleport_aim(origin, Vec3(1.0, 0.5, 0.0), TeleportConfig(), NAV)
        assert not result.valid

    def test_only_endpoint_validity_matters(self):
        # two islands with a non-navigable gap between them: jumping across is
        # legal because relocation is instant, only the landing is checked
        islands = NavigableRegion((Rect(-1, -1, 1, 1), Rect(8, -1, 10, 1)))
        origin = Pose(Vec3(0.0, 1.7, 0.0))
        direction = (Vec3(9.0, 0.0, 0.0) - origin.position).normalized()
        result = teleport_aim(origin, direction, TeleportConfig(), islands)
        assert result.valid
        assert (result.target - Vec3(9.0, 0.0, 0.0)).norm() < 1e-9

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TeleportConfig(max_range=0.0)
        with pytest.raises(ValueError):
            TeleportConfig(cooldown=-1.0)

    def test_parabolic_lands_forward(self):
        origin = Pose(Vec3(0.0, 1.7, 0.0))
        cfg = TeleportConfig(aim_model=AimModel.PARABOLIC, launch_speed=8.0)
        result = teleport_aim(origin, Vec3(1.0, 0.3, 0.0).normalized(), cfg, NAV)
        assert result.valid
        assert result.target.x > 0.0
        # ballistic oracle: t solves y0 + vy t = g t^2 / 2, landing x = vx t
        d = Vec3(1.0, 0.3, 0.0).normalized()
        vx, vy = 8.0 * d.x, 8.0 * d.y
        t = (vy + math.sqrt(vy * vy + 2 * 9.81 * 1.7)) / 9.81
        assert result.target.x == pytest.approx(vx * t, abs=1e-9)


class TestTeleportExecute:
    def test_relocation_preserves_orientation(self):
        tp = Teleporter(TeleportConfig())
        rig = Pose(Vec3(1.0, 1.7, 2.0), Quat.from_yaw(0.8))
        moved = tp.execute(rig, Vec3(5.0, 0.0, -3.0), now=0.0)
        assert moved.position == Vec3(5.0, 1.7, -3.0)
        assert moved.orientation is rig.orientation

    def test_cooldown_blocks_second_jump(self):
        tp = Teleporter(TeleportConfig(cooldown=1.0))
        rig = Pose(Vec3(0, 1.7, 0), Quat.identity())
        tp.execute(rig, Vec3(1, 0, 0), now=0.0)
        with pytest.raises(CooldownActive):
            tp.execute(rig, Vec3(2, 0, 0), now=0.5)
        tp.execute(rig, Vec3(2, 0, 0), now=1.0)  # exactly elapsed

    def test_teleport_to_current_position_is_noop(self):
        tp = Teleporter(TeleportConfig())
        rig = Pose(Vec3(1.0, 1.7, 2.0), Quat.identity())
        moved = tp.execute(rig, Vec3(1.0, 0.0, 2.0), now=0.0)
        assert moved.position == rig.position


class TestFuzzSmoke:
    def test_random_event_soup(self):
        # quick version; the full-size fuzz lives in the acceptance suite
        rng = random.Random(99)
        for _ in range(2000):
            m = TunnelMachine()
            transitions = []
            for _ in range(rng.randint(3, 12)):
                op = rng.randrange(5)
                if op == 0:
                    effects = m.tick(rng.uniform(1e-3, 1.5))
                elif op == 1:
                    effects = m.press()
                elif op == 2:
                    effects = m.entry_crossed()
                elif op == 3:
                    effects = m.exit_crossed(abort=rng.random() < 0.2)
                else:
                    effects = m.cabin_cleared()
                transitions += [
                    (e.previous, e.phase)
                    for e in effects
                    if e.kind is EffectKind.PHASE_CHANGED
                ]
            for pair in transitions:
                assert pair in ALLOWED_TRANSITIONS
