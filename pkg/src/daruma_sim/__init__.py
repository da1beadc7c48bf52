"""Deterministic multi-channel automated-driving arbitration simulator."""
from .catalog import CATALOG, OiCategory, OiCriterion, OiDescriptor, OiTiming, format_catalog, oi_catalog
from .channel import (
    ChannelConfig,
    InjectionFlags,
    OiEntry,
    OiSchedule,
    OiTarget,
    PlannerConfig,
    RandomSchedule,
    channel_tick,
    inject_oi,
    perceive,
    plan,
    predict,
)
from .cross import (
    AnalysisConfig,
    ConflictEvent,
    RiskMatrix,
    RiskProfile,
    SimilarityReport,
    geometric_overlay,
    last_safe_intervention_time,
    risk_matrix,
    risk_profile,
    similarity,
    similarity_report,
    temporal_credit,
)
from .errors import (
    BadTarget,
    DarumaError,
    DimensionMismatch,
    MismatchedTimestamps,
    OutOfHorizon,
    OutOfRange,
    ParseError,
    SchemaError,
    UnknownCurrentChannel,
    UnknownScenario,
)
from .fusion import (
    AggregatedSafetyScore,
    ArbiterConfig,
    ArbiterDecision,
    FusionConfig,
    arbitrate,
    fallback_plan,
    fuse_scores,
)
from .geometry import OrientedRect, footprint_at, rects_intersect
from .harness import Metrics, Mode, RunTrace, TickRecord, compare, monte_carlo, run
from .scenario import (
    ActorScript,
    ControlCommand,
    HazardEvent,
    Scenario,
    SceneState,
    builtin_scenario,
    detect_hazards,
    ground_truth_view,
    initial_state,
    load_scenario,
    step,
)
from .traceio import emit, read_trace_csv, write_trace_csv
from .types import (
    CapabilityProfile,
    ChannelState,
    LightState,
    ObjectClass,
    ObjectState,
    Pose2D,
    PredictionSet,
    RuleAssessment,
    Traffic,
    Trajectory,
    WorldModel,
    pose_at,
    validate_world_model,
)

__version__ = "0.1.0"
