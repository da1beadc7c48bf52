"""Domain value types shared by every stage of the pipeline.

All types are frozen dataclasses holding tuples, so instances can be shared
between channels, worker processes and trace records without copying.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional

from .errors import OutOfHorizon

TWO_PI = 2.0 * math.pi
_T_EPS = 1e-9

Point = tuple[float, float]


def normalize_angle(a: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    w = (a + math.pi) % TWO_PI - math.pi
    if w >= math.pi:
        w -= TWO_PI
    if w < -math.pi:
        w = -math.pi
    return w


class ObjectClass(str, Enum):
    VEHICLE = "vehicle"
    TRUCK = "truck"
    CYCLIST = "cyclist"
    PEDESTRIAN = "pedestrian"
    UNKNOWN = "unknown"


class LightState(str, Enum):
    RED = "red"
    GREEN = "green"
    YELLOW = "yellow"
    NONE = "none"


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self) -> None:
        x, y, h = self.x, self.y, self.heading
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(h)):
            raise ValueError(f"non-finite pose {x!r}, {y!r}, {h!r}")
        if type(x) is not float:
            object.__setattr__(self, "x", float(x))
        if type(y) is not float:
            object.__setattr__(self, "y", float(y))
        if type(h) is not float or not -math.pi <= h < math.pi:
            object.__setattr__(self, "heading", normalize_angle(float(h)))

    def moved(self, dx: float = 0.0, dy: float = 0.0, dheading: float = 0.0) -> "Pose2D":
        return Pose2D(self.x + dx, self.y + dy, self.heading + dheading)

    def distance_to(self, other: "Pose2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class ObjectState:
    id: int
    cls: ObjectClass
    pose: Pose2D
    dims: tuple[float, float] = (4.5, 2.0)
    velocity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "cls", ObjectClass(self.cls))
        object.__setattr__(self, "dims", (float(self.dims[0]), float(self.dims[1])))
        object.__setattr__(self, "velocity", (float(self.velocity[0]), float(self.velocity[1])))

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)

    @property
    def length(self) -> float:
        return self.dims[0]

    @property
    def width(self) -> float:
        return self.dims[1]


@dataclass(frozen=True)
class Traffic:
    light_state: LightState = LightState.NONE
    speed_limit: float = 0.0  # 0 means no posted limit
    stop_line: Optional[tuple[Point, Point]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "light_state", LightState(self.light_state))
        if self.stop_line is not None:
            (ax, ay), (bx, by) = self.stop_line
            object.__setattr__(self, "stop_line", ((float(ax), float(ay)), (float(bx), float(by))))


@dataclass(frozen=True)
class WorldModel:
    timestamp: float
    ego: ObjectState
    objects: tuple[ObjectState, ...] = ()
    drivable_space: tuple[Point, ...] = ()
    traffic: Traffic = field(default_factory=Traffic)

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(
            self, "drivable_space", tuple((float(x), float(y)) for x, y in self.drivable_space)
        )

    def object_by_id(self, oid: int) -> Optional[ObjectState]:
        for o in self.objects:
            if o.id == oid:
                return o
        return None


@dataclass(frozen=True)
class Trajectory:
    """Timed ego plan or predicted object path, sampled every ``dt`` seconds."""

    t0: float
    dt: float
    samples: tuple[tuple[Pose2D, float], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple((p, float(v)) for p, v in self.samples))
        if not self.dt > 0:
            raise ValueError(f"trajectory dt must be > 0, got {self.dt}")
        if len(self.samples) < 2:
            raise ValueError("trajectory needs at least 2 samples")
        for _, v in self.samples:
            if v < 0 or not math.isfinite(v):
                raise ValueError(f"trajectory speed must be finite and >= 0, got {v}")

    @property
    def horizon(self) -> float:
        return (len(self.samples) - 1) * self.dt

    @property
    def t_end(self) -> float:
        return self.t0 + self.horizon

    def times(self) -> list[float]:
        return [self.t0 + k * self.dt for k in range(len(self.samples))]

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[tuple[Pose2D, float]]:
        return iter(self.samples)


def pose_at(traj: Trajectory, t: float) -> tuple[Pose2D, float]:
    """Interpolated (pose, speed) at absolute time ``t``.

    Position and speed are linear between samples, heading follows the
    shortest arc. Sample times return the stored sample unchanged.
    """
    u = (t - traj.t0) / traj.dt
    last = len(traj.samples) - 1
    if u < -_T_EPS / traj.dt or u > last + _T_EPS / traj.dt:
        raise OutOfHorizon(f"t={t} outside [{traj.t0}, {traj.t_end}]")
    u = min(max(u, 0.0), float(last))
    k = int(math.floor(u))
    if k >= last:
        return traj.samples[last]
    f = u - k
    if f <= 1e-12:
        return traj.samples[k]
    if f >= 1.0 - 1e-12:
        return traj.samples[k + 1]
    (p0, v0), (p1, v1) = traj.samples[k], traj.samples[k + 1]
    dh = normalize_angle(p1.heading - p0.heading)
    pose = Pose2D(p0.x + f * (p1.x - p0.x), p0.y + f * (p1.y - p0.y), p0.heading + f * dh)
    return pose, v0 + f * (v1 - v0)


@dataclass(frozen=True)
class PredictionSet:
    """Predicted paths per object id: ``((object_id, ((traj, prob), ...)), ...)``."""

    entries: tuple[tuple[int, tuple[tuple[Trajectory, float], ...]], ...] = ()

    def __post_init__(self) -> None:
        norm = tuple(
            sorted(
                ((int(oid), tuple((tr, float(p)) for tr, p in modes)) for oid, modes in self.entries),
                key=lambda e: e[0],
            )
        )
        object.__setattr__(self, "entries", norm)
        for oid, modes in norm:
            total = 0.0
            for _, p in modes:
                if not 0.0 <= p <= 1.0:
                    raise ValueError(f"prediction probability {p} for object {oid} outside [0, 1]")
                total += p
            if total > 1.0 + 1e-9:
                raise ValueError(f"prediction probabilities for object {oid} sum to {total} > 1")

    @classmethod
    def from_dict(cls, d: dict) -> "PredictionSet":
        return cls(tuple(d.items()))

    def get(self, oid: int) -> tuple[tuple[Trajectory, float], ...]:
        for k, modes in self.entries:
            if k == oid:
                return modes
        return ()

    def __contains__(self, oid: object) -> bool:
        return any(k == oid for k, _ in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def object_ids(self) -> list[int]:
        return [k for k, _ in self.entries]


@dataclass(frozen=True)
class CapabilityProfile:
    detection_range: float = 100.0
    fov: float = TWO_PI
    detects: frozenset[ObjectClass] = frozenset(ObjectClass)
    has_prediction: bool = True
    reads_traffic_lights: bool = True
    preference_weight: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "detects", frozenset(ObjectClass(c) for c in self.detects))
        if not self.detection_range > 0:
            raise ValueError("detection_range must be > 0")
        if not 0 < self.fov <= TWO_PI + 1e-12:
            raise ValueError("fov must lie in (0, 2*pi]")
        if not 0.0 <= self.preference_weight <= 1.0:
            raise ValueError("preference_weight must lie in [0, 1]")


OMNISCIENT = CapabilityProfile()


@dataclass(frozen=True)
class RuleAssessment:
    red_light_ahead: bool = False
    speed_limit_exceeded: bool = False


@dataclass(frozen=True)
class ChannelState:
    channel_id: int
    world: WorldModel
    predictions: PredictionSet
    plan: Trajectory
    rule_assessment: RuleAssessment = RuleAssessment()
    fault_ok: bool = True
    odd_ok: bool = True
    active_ois: tuple[int, ...] = ()
    misclassifications: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if abs(self.plan.t0 - self.world.timestamp) > _T_EPS:
            raise ValueError(
                f"plan.t0 {self.plan.t0} differs from world timestamp {self.world.timestamp}"
            )


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str = ""


def validate_world_model(w: WorldModel) -> list[Violation]:
    """List every violated WorldModel invariant; empty means valid."""
    from .geometry import polygon_area, polygon_is_simple

    report: list[Violation] = []
    if not (math.isfinite(w.timestamp) and w.timestamp >= 0):
        report.append(Violation("NegativeTimestamp", f"timestamp={w.timestamp}"))
    seen: set[int] = set()
    for o in (w.ego, *w.objects):
        if not (o.length > 0 and o.width > 0):
            report.append(Violation("NonPositiveDims", f"object {o.id} dims={o.dims}"))
        if not all(math.isfinite(c) for c in o.velocity):
            report.append(Violation("NonFinite", f"object {o.id} velocity={o.velocity}"))
    for o in w.objects:
        if o.id in seen:
            report.append(Violation("DuplicateId", f"object id {o.id}"))
        seen.add(o.id)
    poly = w.drivable_space
    if len(poly) < 3:
        report.append(Violation("DegeneratePolygon", f"{len(poly)} vertices"))
    elif not all(math.isfinite(c) for p in poly for c in p):
        report.append(Violation("NonFinite", "drivable_space vertex"))
    elif abs(polygon_area(poly)) < 1e-12:
        report.append(Violation("DegeneratePolygon", "zero area"))
    elif not polygon_is_simple(poly):
        report.append(Violation("SelfIntersectingPolygon", "drivable_space"))
    return report
