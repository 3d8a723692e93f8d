"""Deterministic simulation engine for tunnel-based augmented walking.

The package models a locomotion technique for room-scale VR: a virtual tunnel
whose exterior hull spans the full travel distance while its interior cabin is
only a gain-th as long. Walking the short cabin moves the rig the full
distance; windows in the cabin walls expose the accelerated motion while the
solid walls act as a visual rest frame. A point-and-teleport baseline, a
scripted-agent testbed, deterministic trace replay, and quantitative reports
round out the artifact.
"""

from .control import (
    AimModel,
    Effect,
    EffectKind,
    InvocationAnchor,
    PhaseDurations,
    TeleportConfig,
    Teleporter,
    TunnelMachine,
    TunnelPhase,
    invoke_tunnel,
    teleport_aim,
)
from .engine import Engine, SimSettings, SimulationError, run_simulation
from .geometry import (
    PlaySpace,
    Pose,
    Quat,
    Segment,
    Transform,
    Vec2,
    Vec3,
    compose,
    decompose,
)
from .metrics import (
    ComparisonSummary,
    FlowSample,
    MetricsReport,
    compare,
    compute_report,
    flow_proxy,
    make_direction_bundle,
    read_trace,
    replay,
    verify_trace,
    write_trace,
)
from .scenario import (
    AgentProfile,
    Scenario,
    ScriptedAgent,
    TaskState,
    Technique,
    agent_step,
    build_default_scenario,
)
from .tunnel import (
    AdaptiveToPlayspace,
    CabinDoesNotFit,
    DegeneratePath,
    FixedCabinLength,
    FixedGain,
    GainBelowOne,
    PortalSide,
    Surface,
    TraversalState,
    TunnelParams,
    TunnelSpec,
    WindowLayout,
    advance_traversal,
    portal_view_transform,
    project_step,
    tunnel_build,
    window_mask,
)

__version__ = "0.1.0"
