"""Trace IO, replay, flow proxy, and comparisons."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from tunnelwalk.geometry import Pose, Segment, Vec3
from tunnelwalk.metrics import (
    CorruptTrace,
    ScenarioMismatch,
    SeedMismatch,
    compare,
    compute_report,
    estimation_errors,
    flow_proxy,
    make_direction_bundle,
    read_trace,
    replay,
    trace_lines,
    verify_trace,
    write_trace,
)
from tunnelwalk.tunnel import TunnelParams, TunnelSpec, WindowLayout


@pytest.fixture(scope="module")
def tunnel_trace(tunnel_run, tmp_path_factory):
    settings, header, events = tunnel_run
    path = tmp_path_factory.mktemp("traces") / "trace.jsonl"
    write_trace(path, header, events)
    return path, header, events


class TestTraceIO:
    def test_round_trip(self, tunnel_trace):
        path, header, events = tunnel_trace
        td = read_trace(path)
        assert td.header == json.loads(json.dumps(header))
        assert len(td.events) == len(events)
        assert td.events[0] == events[0]
        assert td.events[-1] == events[-1]

    def test_replay_reproduces_report(self, tunnel_trace):
        path, header, events = tunnel_trace
        live = compute_report(header, events)
        from_file = replay(path)
        assert from_file.to_dict() == live.to_dict()

    def test_truncated_file_detected_at_final_line(self, tunnel_trace, tmp_path):
        path, _, _ = tunnel_trace
        lines = path.read_text().splitlines()
        clipped = tmp_path / "clipped.jsonl"
        clipped.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(CorruptTrace) as err:
            read_trace(clipped)
        assert err.value.line == len(lines) - 1

    def test_garbage_line_detected(self, tunnel_trace, tmp_path):
        path, _, _ = tunnel_trace
        lines = path.read_text().splitlines()
        lines[5] = lines[5][:-4]  # break the JSON
        bad = tmp_path / "bad.jsonl"
        bad.write_text("\n".join(lines) + "\n")
        with pytest.raises(CorruptTrace) as err:
            read_trace(bad)
        assert err.value.line == 6

    def test_edited_seed_detected(self, tunnel_trace, tmp_path):
        path, header, _ = tunnel_trace
        lines = path.read_text().splitlines()
        forged = json.loads(lines[0])
        forged["seed"] = header["seed"] + 1
        lines[0] = json.dumps(forged, separators=(",", ":"))
        bad = tmp_path / "seed.jsonl"
        bad.write_text("\n".join(lines) + "\n")
        with pytest.raises(SeedMismatch):
            read_trace(bad)

    def test_verify_fresh_trace(self, tunnel_trace):
        path, _, _ = tunnel_trace
        result = verify_trace(path)
        assert result.ok

    def test_verify_detects_payload_edit(self, tunnel_trace, tmp_path):
        path, _, events = tunnel_trace
        lines = path.read_text().splitlines()
        # perturb one step payload, keeping valid JSON
        idx = next(
            i for i, l in enumerate(lines) if '"kind":"step"' in l and '"dx":0.0' not in l
        )
        obj = json.loads(lines[idx])
        obj["data"]["dx"] = obj["data"]["dx"] + 1e-9
        lines[idx] = json.dumps(obj, separators=(",", ":"))
        tampered = tmp_path / "tampered.jsonl"
        tampered.write_text("\n".join(lines) + "\n")
        result = verify_trace(tampered)
        assert not result.ok
        assert result.line == idx + 1
        assert result.tick == events[idx - 1].tick


class TestReportInvariants:
    def test_decomposition(self, tunnel_run):
        _, header, events = tunnel_run
        report = compute_report(header, events)
        assert report.total_walk == pytest.approx(
            report.local_walk + report.tunnel_walk, abs=1e-9
        )

    def test_virtual_distance_matches_true_length(self, tunnel_run):
        _, header, events = tunnel_run
        report = compute_report(header, events)
        for leg in report.legs:
            assert leg.virtual_distance == pytest.approx(leg.true_length, abs=1e-6)

    def test_true_lengths_canonical(self, tunnel_run):
        _, header, events = tunnel_run
        report = compute_report(header, events)
        assert report.true_lengths == (60.0, 75.0, 45.0, 75.0, 45.0, 60.0)
        assert [l.true_length for l in report.legs] == [60.0, 75.0, 45.0, 75.0, 45.0, 60.0]

    def test_travel_time_matches_tick_span(self, tunnel_run):
        _, header, events = tunnel_run
        report = compute_report(header, events)
        for leg in report.legs:
            assert leg.travel_ticks == leg.end_tick - leg.start_tick
            assert leg.travel_time == pytest.approx(
                leg.travel_ticks / report.tick_rate, abs=1e-9
            )

    def test_seq_and_tick_monotone(self, tunnel_run):
        _, _, events = tunnel_run
        for i, ev in enumerate(events):
            assert ev.seq == i
        ticks = [ev.tick for ev in events]
        assert ticks == sorted(ticks)

    def test_estimation_error_helper(self):
        mse, me = estimation_errors([60.0, 75.0], [50.0, 80.0])
        assert mse == pytest.approx((100.0 + 25.0) / 2.0)
        assert me == pytest.approx((-10.0 + 5.0) / 2.0)
        with pytest.raises(ValueError):
            estimation_errors([60.0], [1.0, 2.0])


class TestCompare:
    def test_identical_reports_unit_ratios(self, tunnel_run):
        _, header, events = tunnel_run
        report = compute_report(header, events)
        summary = compare(report, report)
        for _, a, b, diff, ratio in summary.rows:
            assert diff == 0.0
            if b != 0.0:
                assert ratio == 1.0

    def test_direction_flags(self, tunnel_run, teleport_run):
        _, h1, e1 = tunnel_run
        _, h2, e2 = teleport_run
        summary = compare(compute_report(h1, e1), compute_report(h2, e2))
        assert summary.flags["tunnel_total_walk_exceeds_teleport"] is True
        assert summary.flags["decomposition_holds"] is True

    def test_scenario_mismatch(self, tunnel_run):
        from tunnelwalk.engine import SimSettings, run_simulation
        from tunnelwalk.geometry import PlaySpace, Vec2
        from tunnelwalk.scenario import AgentProfile, Technique, build_default_scenario

        _, h1, e1 = tunnel_run
        other = build_default_scenario("L1", PlaySpace(Vec2(0, 0), Vec2(3, 3)))
        settings = SimSettings(
            scenario=other, profile=AgentProfile(technique=Technique.TELEPORT), seed=7
        )
        h2, e2 = run_simulation(settings)
        with pytest.raises(ScenarioMismatch):
            compare(compute_report(h1, e1), compute_report(h2, e2))


DT = 1.0 / 90.0


def spec_with_coverage(coverage: float) -> TunnelSpec:
    layout = WindowLayout.for_coverage(coverage, 2.3)
    path = Segment(Vec3(0, 0, 0), Vec3(75, 0, 0))
    return TunnelSpec.build(path, 30.0, TunnelParams(windows=layout))


def cabin_center_sample(spec: TunnelSpec, speed: float):
    """Head poses for one tick of forward walking from the cabin center."""
    x0 = spec.cabin_length / 2.0
    x1 = x0 + speed * DT
    axis_pos0 = spec.gain * x0
    axis_pos1 = spec.gain * x1
    h0 = Pose(Vec3(axis_pos0, 1.15, 0.0))
    h1 = Pose(Vec3(axis_pos1, 1.15, 0.0))
    return h0, h1, x0, x1


class TestFlowProxy:
    def test_stationary_head_zero_flow(self):
        dirs = make_direction_bundle(Vec3(1, 0, 0))
        h = Pose(Vec3(0.0, 1.7, 0.0))
        sample = flow_proxy(h, h, DT, dirs)
        assert sample.mean_angular_speed == 0.0
        assert sample.visible_fraction_fast == 0.0

    def test_naked_gain_scales_flow_by_about_the_gain(self):
        dirs = make_direction_bundle(Vec3(1, 0, 0))
        h0 = Pose(Vec3(0.0, 1.7, 0.0))
        walk = flow_proxy(
            h0, Pose(Vec3(1.0 * DT, 1.7, 0.0)), DT, dirs,
            physical_delta=Vec3(1.0 * DT, 0.0, 0.0),
        )
        gained = flow_proxy(
            h0, Pose(Vec3(30.0 * DT, 1.7, 0.0)), DT, dirs,
            physical_delta=Vec3(1.0 * DT, 0.0, 0.0),
        )
        # small-angle oracle: angular speed of far content scales with speed
        ratio = gained.mean_angular_speed / walk.mean_angular_speed
        assert ratio == pytest.approx(30.0, rel=0.05)
        assert gained.visible_fraction_fast == 1.0
        assert walk.visible_fraction_fast == 0.0

    def test_fast_fraction_bounded_by_openings(self):
        spec = spec_with_coverage(0.75 / 2.3)  # the default stripe area
        h0, h1, x0, x1 = cabin_center_sample(spec, 1.0)
        dirs = make_direction_bundle(Vec3(1, 0, 0))  # forward: portal in view
        sample = flow_proxy(h0, h1, DT, dirs, spec=spec, x_before=x0, x_after=x1)
        openings = (
            sample.counts["window"]
            + sample.counts["portal_entry"]
            + sample.counts["portal_exit"]
        )
        assert sample.visible_fraction_fast <= openings / sum(sample.counts.values())

    def test_lateral_gaze_shielding_ordering(self):
        # gaze at the side wall: portals out of the bundle, pure wall/window mix
        side = Vec3(0, 0, 1)
        dirs = make_direction_bundle(side)
        speed = 1.0
        means = {}
        for coverage in (0.0, 0.25, 0.5, 0.75, 1.0):
            spec = spec_with_coverage(coverage)
            h0, h1, x0, x1 = cabin_center_sample(spec, speed)
            s = flow_proxy(h0, h1, DT, dirs, spec=spec, x_before=x0, x_after=x1)
            means[coverage] = s.mean_angular_speed
        baseline = flow_proxy(
            Pose(Vec3(0, 1.15, 0)), Pose(Vec3(speed * DT, 1.15, 0)), DT, dirs
        ).mean_angular_speed
        gained = flow_proxy(
            Pose(Vec3(0, 1.15, 0)), Pose(Vec3(30.0 * speed * DT, 1.15, 0)), DT, dirs
        ).mean_angular_speed
        assert means[0.0] == pytest.approx(baseline, rel=1e-9)
        assert means[1.0] == pytest.approx(gained, rel=1e-9)
        ordered = [means[c] for c in (0.0, 0.25, 0.5, 0.75, 1.0)]
        assert all(a < b for a, b in zip(ordered[:-1], ordered[1:]))

    def test_invalid_dt(self):
        dirs = make_direction_bundle(Vec3(1, 0, 0))
        h = Pose(Vec3(0, 1.7, 0))
        with pytest.raises(ValueError):
            flow_proxy(h, h, 0.0, dirs)

    def test_bundle_is_unit_and_within_fov(self):
        view = Vec3(1, 0, 0)
        dirs = make_direction_bundle(view, fov_deg=110.0, count=256)
        assert dirs.shape == (256, 3)
        norms = np.linalg.norm(dirs, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)
        cosines = dirs @ np.array(view.as_tuple())
        assert np.all(cosines >= math.cos(math.radians(55.0)) - 1e-12)
