"""Shared fixtures: canonical runs are expensive, so run each once per session."""

from __future__ import annotations

import pytest

from tunnelwalk.engine import SimSettings, run_simulation
from tunnelwalk.scenario import AgentProfile, Technique, build_default_scenario


@pytest.fixture(scope="session")
def tunnel_run():
    scenario = build_default_scenario("L1")
    profile = AgentProfile(technique=Technique.TUNNEL)
    settings = SimSettings(scenario=scenario, profile=profile, seed=7)
    header, events = run_simulation(settings)
    return settings, header, events


@pytest.fixture(scope="session")
def teleport_run():
    scenario = build_default_scenario("L1")
    profile = AgentProfile(technique=Technique.TELEPORT)
    settings = SimSettings(scenario=scenario, profile=profile, seed=7)
    header, events = run_simulation(settings)
    return settings, header, events
