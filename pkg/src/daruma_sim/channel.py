"""Synthetic AD channels: limited perception, OI injection, prediction, planning.

A channel is a pure function of (ground truth, config, t, seed). Randomness only
enters through injection parameters, drawn from a counter-based stream keyed on
(seed, channel stream id, entry index, entry start), so every tick of one
activation sees the same draw and evaluation order never matters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from . import _schema as sch
from .catalog import OiTiming, oi_catalog
from .errors import BadTarget, SchemaError
from .geometry import OrientedRect, Route, scale_polygon
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
    normalize_angle,
)

GHOST_ID_BASE = 1_000_000
_T_EPS = 1e-9
_CLASS_ORDER = tuple(ObjectClass)
_LIGHT_ORDER = (LightState.RED, LightState.GREEN, LightState.YELLOW, LightState.NONE)

# targets each OI may be aimed at; the first one is the default
_TARGETS: dict[int, tuple[str, ...]] = {
    1: ("ego",),
    2: ("map",),
    3: ("object", "all"),
    4: ("all",),
    5: ("object", "all"),
    6: ("object", "all"),
    7: ("map",),
    8: ("object", "all"),
    9: ("all",),
    10: ("plan", "all"),
    11: ("plan",),
    12: ("plan",),
    13: ("plan",),
    14: ("all",),
    15: ("all",),
    16: ("all",),
}
_DEFAULT_TARGET = {k: ("all" if v[0] == "object" else v[0]) for k, v in _TARGETS.items()}

_ODD_RECORDS = {14: "weather", 15: "road", 16: "traffic"}


@dataclass(frozen=True)
class OiTarget:
    kind: str  # object, ego, all, plan, map
    object_id: Optional[int] = None

    @classmethod
    def parse(cls, text: str) -> "OiTarget":
        if text.startswith("object:"):
            try:
                return cls("object", int(text.split(":", 1)[1]))
            except ValueError:
                raise BadTarget(f"bad object target {text!r}") from None
        if text in ("ego", "all", "plan", "map"):
            return cls(text)
        raise BadTarget(f"unknown target {text!r}")

    def __str__(self) -> str:
        return f"object:{self.object_id}" if self.kind == "object" else self.kind


@dataclass(frozen=True)
class OiEntry:
    oi_id: int
    target: OiTarget
    start_t: float
    duration: float  # math.inf means persistent
    params: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        oi_catalog(self.oi_id)
        if isinstance(self.target, str):
            object.__setattr__(self, "target", OiTarget.parse(self.target))
        if self.target.kind not in _TARGETS[self.oi_id]:
            raise BadTarget(f"OI {self.oi_id} cannot target {self.target}")
        if not self.duration > 0:
            raise ValueError(f"OI duration must be > 0, got {self.duration}")
        if not (math.isfinite(self.start_t) and self.start_t >= 0):
            raise ValueError(f"OI start_t must be finite and >= 0, got {self.start_t}")
        params = self.params.items() if isinstance(self.params, Mapping) else self.params
        object.__setattr__(self, "params", tuple(sorted((str(k), float(v)) for k, v in params)))

    @property
    def end_t(self) -> float:
        return self.start_t + self.duration

    def active(self, t: float) -> bool:
        return self.start_t - _T_EPS <= t < self.end_t - _T_EPS

    def param(self, name: str, default: Any = None) -> Any:
        for k, v in self.params:
            if k == name:
                return v
        return default


def timing_class(duration: float, long_threshold: float = 5.0) -> OiTiming:
    return OiTiming.LONG if duration >= long_threshold else OiTiming.SPORADIC


@dataclass(frozen=True)
class OiSchedule:
    entries: tuple[OiEntry, ...] = ()
    long_threshold: float = 5.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        for i, e in enumerate(self.entries):
            cls_ = timing_class(e.duration, self.long_threshold)
            if cls_ not in oi_catalog(e.oi_id).timing_set:
                raise ValueError(
                    f"entry {i}: OI {e.oi_id} does not occur as {cls_.value} "
                    f"(duration {e.duration}, threshold {self.long_threshold})"
                )
            if e.oi_id == 11 and e.param("amplitude", 1.0) <= 0.5:
                raise ValueError(f"entry {i}: OI 11 amplitude must exceed 0.5 m")

    def active_entries(self, t: float) -> list[tuple[int, OiEntry]]:
        return [(i, e) for i, e in enumerate(self.entries) if e.active(t)]


@dataclass(frozen=True)
class PlannerConfig:
    target_speed: float = 10.0
    comfortable_decel: float = 3.0
    corridor_halfwidth: float = 1.5
    accel: float = 2.0
    stop_margin: float = 4.0
    stop_line_margin: float = 1.0
    max_decel: float = 8.0
    lateral_blend: float = 10.0

    def __post_init__(self) -> None:
        for name in ("target_speed", "comfortable_decel", "corridor_halfwidth", "accel", "max_decel"):
            if not getattr(self, name) > 0:
                raise ValueError(f"planner {name} must be > 0")
        if self.max_decel < self.comfortable_decel:
            raise ValueError("planner max_decel must be >= comfortable_decel")


@dataclass(frozen=True)
class RandomSchedule:
    """Independent per-window OI draws, expanded into fixed entries at run start."""

    window: float
    fi_probability: float
    oi_ids: tuple[int, ...]
    params: tuple[tuple[int, tuple[tuple[str, float], ...]], ...] = ()
    start: float = 0.0
    end: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.window > 0:
            raise ValueError("random schedule window must be > 0")
        if not 0.0 <= self.fi_probability <= 1.0:
            raise ValueError("fi_probability must lie in [0, 1]")
        if not self.oi_ids:
            raise ValueError("random schedule needs at least one OI id")
        for k in self.oi_ids:
            oi_catalog(k)

    def params_for(self, oi_id: int) -> tuple[tuple[str, float], ...]:
        for k, p in self.params:
            if k == oi_id:
                return p
        return ()

    def expand(self, seed: int, stream_id: int, duration: float) -> tuple[OiEntry, ...]:
        rng = np.random.default_rng(np.random.SeedSequence([seed, stream_id, 0x5EED]))
        end = duration if self.end is None else min(self.end, duration)
        out = []
        k = 0
        while True:
            start = round(self.start + k * self.window, 9)
            if start >= end - _T_EPS:
                break
            u = rng.random()
            pick = int(rng.integers(len(self.oi_ids)))
            if u < self.fi_probability:
                oi = self.oi_ids[pick]
                out.append(OiEntry(oi, _DEFAULT_TARGET[oi], start, self.window, self.params_for(oi)))
            k += 1
        return tuple(out)


@dataclass(frozen=True)
class ChannelConfig:
    channel_id: int
    capability: CapabilityProfile = field(default_factory=CapabilityProfile)
    oi_schedule: OiSchedule = field(default_factory=OiSchedule)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    rng_stream_id: Optional[int] = None
    name: str = ""
    fault_windows: tuple[tuple[float, float], ...] = ()
    random_schedule: Optional[RandomSchedule] = None

    def __post_init__(self) -> None:
        if isinstance(self.channel_id, bool) or not isinstance(self.channel_id, int) or self.channel_id < 0:
            raise ValueError(f"channel_id must be a non-negative integer, got {self.channel_id!r}")
        if self.rng_stream_id is None:
            object.__setattr__(self, "rng_stream_id", self.channel_id)
        object.__setattr__(self, "fault_windows", tuple((float(s), float(d)) for s, d in self.fault_windows))

    def materialize(self, seed: int, duration: float) -> "ChannelConfig":
        """Resolve the random schedule (if any) into concrete entries."""
        if self.random_schedule is None:
            return self
        extra = self.random_schedule.expand(seed, self.rng_stream_id, duration)
        sched = OiSchedule(self.oi_schedule.entries + extra, self.oi_schedule.long_threshold)
        return replace(self, oi_schedule=sched, random_schedule=None)

    def fault_ok_at(self, t: float) -> bool:
        return not any(s - _T_EPS <= t < s + d - _T_EPS for s, d in self.fault_windows)


@dataclass(frozen=True)
class InjectionFlags:
    """Plan-stage and verdict effects produced by the world-stage injection."""

    active_ois: tuple[int, ...] = ()
    wrong_predictions: tuple[tuple[Optional[int], float], ...] = ()  # (object id or None=all, rotation)
    ignore_rules: bool = False
    suppress_stop: bool = False
    route_offset: tuple[float, float] = (0.0, 0.0)
    lateral_wave: Optional[tuple[float, float]] = None  # (amplitude, period)
    alternate: Optional[tuple[float, float]] = None  # (signed offset this tick, ramp seconds)
    odd_ok: bool = True
    misclassifications: tuple[str, ...] = ()


def entry_rng(seed: int, stream_id: int, entry_index: int, start_t: float) -> np.random.Generator:
    key = [int(seed) & (2**64 - 1), int(stream_id), int(entry_index), int(round(start_t * 1000))]
    return np.random.default_rng(np.random.SeedSequence(key))


def perceive(truth: WorldModel, cap: CapabilityProfile) -> WorldModel:
    ego = truth.ego.pose
    kept = []
    for o in truth.objects:
        if o.cls not in cap.detects:
            continue
        dx, dy = o.pose.x - ego.x, o.pose.y - ego.y
        rng_ = math.hypot(dx, dy)
        if rng_ > cap.detection_range:
            continue
        if rng_ > 0 and cap.fov < 2 * math.pi:
            bearing = normalize_angle(math.atan2(dy, dx) - ego.heading)
            if abs(bearing) > cap.fov / 2 + 1e-12:
                continue
        kept.append(o)
    traffic = truth.traffic
    if not cap.reads_traffic_lights and traffic.light_state != LightState.NONE:
        traffic = replace(traffic, light_state=LightState.NONE)
    if len(kept) == len(truth.objects) and traffic is truth.traffic:
        return truth
    return replace(truth, objects=tuple(kept), traffic=traffic)


def _targets(world: WorldModel, target: OiTarget, strict: bool) -> list[int]:
    if target.kind == "all":
        return [o.id for o in world.objects]
    if world.object_by_id(target.object_id) is None:
        if strict:
            raise BadTarget(f"object {target.object_id} not present at t={world.timestamp}")
        return []
    return [target.object_id]


def _replace_objects(world: WorldModel, ids: Sequence[int], fn) -> WorldModel:
    ids = set(ids)
    if not ids:
        return world
    return replace(world, objects=tuple(fn(o) if o.id in ids else o for o in world.objects))


def inject_world(
    world: WorldModel,
    schedule: OiSchedule,
    t: float,
    seed: int = 0,
    stream_id: int = 0,
    strict: bool = True,
) -> tuple[WorldModel, InjectionFlags]:
    """Apply the world-model stage of every active entry at ``t``."""
    active = schedule.active_entries(t)
    if not active:
        return world, InjectionFlags()
    flags: dict[str, Any] = {"wrong_predictions": [], "misclassifications": [], "active_ois": []}
    for idx, e in active:
        rng = entry_rng(seed, stream_id, idx, e.start_t)
        flags["active_ois"].append(e.oi_id)
        world = _apply_world(world, e, idx, rng, flags, strict)
    return world, InjectionFlags(
        active_ois=tuple(sorted(set(flags["active_ois"]))),
        wrong_predictions=tuple(flags["wrong_predictions"]),
        ignore_rules=flags.get("ignore_rules", False),
        suppress_stop=flags.get("suppress_stop", False),
        route_offset=flags.get("route_offset", (0.0, 0.0)),
        lateral_wave=flags.get("lateral_wave"),
        alternate=_alternate_now(flags.get("alternate"), t),
        odd_ok=not flags["misclassifications"],
        misclassifications=tuple(flags["misclassifications"]),
    )


def _alternate_now(spec, t: float) -> Optional[tuple[float, float]]:
    if spec is None:
        return None
    offset, period, start, ramp = spec
    k = int(math.floor((t - start) / period + 1e-6))
    return (offset if k % 2 == 0 else -offset), ramp


def _apply_world(world: WorldModel, e: OiEntry, idx: int, rng: np.random.Generator, flags: dict, strict: bool) -> WorldModel:
    oi, p = e.oi_id, e.param
    if oi == 1:
        dx, dy = p("localization_offset"), p("localization_offset_y")
        if dx is None and dy is None:
            dx, dy = rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)
        ego = replace(world.ego, pose=world.ego.pose.moved(dx or 0.0, dy or 0.0, p("heading_offset", 0.0)))
        return replace(world, ego=ego)
    if oi == 2:
        dx, dy = p("map_offset_x"), p("map_offset_y")
        if dx is None and dy is None:
            dx, dy = 0.0, rng.uniform(-2.0, 2.0)
        dx, dy = dx or 0.0, dy or 0.0
        tr = world.traffic
        if tr.stop_line is not None:
            (ax, ay), (bx, by) = tr.stop_line
            tr = replace(tr, stop_line=((ax + dx, ay + dy), (bx + dx, by + dy)))
        ox, oy = flags.get("route_offset", (0.0, 0.0))
        flags["route_offset"] = (ox + dx, oy + dy)
        poly = tuple((x + dx, y + dy) for x, y in world.drivable_space)
        return replace(world, drivable_space=poly, traffic=tr)
    if oi == 3:
        ids = set(_targets(world, e.target, strict))
        if not ids:
            return world
        return replace(world, objects=tuple(o for o in world.objects if o.id not in ids))
    if oi == 4:
        ego = world.ego.pose
        dist = rng.uniform(10.0, 30.0)
        lat = rng.uniform(-1.0, 1.0)
        gx, gy = p("ghost_x"), p("ghost_y")
        if gx is None or gy is None:
            c, s = math.cos(ego.heading), math.sin(ego.heading)
            d, l = p("ghost_distance", dist), p("ghost_lateral", lat)
            gx, gy = ego.x + c * d - s * l, ego.y + s * d + c * l
        cls_ = _CLASS_ORDER[int(p("classification_to", 0)) % len(_CLASS_ORDER)]
        ghost = ObjectState(
            GHOST_ID_BASE + idx,
            cls_,
            Pose2D(gx, gy, p("ghost_heading", ego.heading)),
            (p("ghost_length", 4.5), p("ghost_width", 2.0)),
            (p("ghost_vx", 0.0), p("ghost_vy", 0.0)),
        )
        return replace(world, objects=world.objects + (ghost,))
    if oi == 5:
        keys = ("position_offset", "position_offset_y", "heading_offset", "length_scale", "width_scale")
        draws = (rng.uniform(-1.5, 1.5), rng.uniform(-1.0, 1.0), 0.0, rng.uniform(1.0, 1.6), 1.0)
        if all(p(k) is None for k in keys):
            vals = draws
        else:
            vals = tuple(p(k, d) for k, d in zip(keys, (0.0, 0.0, 0.0, 1.0, 1.0)))
        dx, dy, dh, ls, ws = vals

        def perturb(o: ObjectState) -> ObjectState:
            return replace(o, pose=o.pose.moved(dx, dy, dh), dims=(o.length * ls, o.width * ws))

        return _replace_objects(world, _targets(world, e.target, strict), perturb)
    if oi == 6:
        to = p("classification_to")

        def reclass(o: ObjectState) -> ObjectState:
            if to is not None:
                return replace(o, cls=_CLASS_ORDER[int(to) % len(_CLASS_ORDER)])
            others = [c for c in _CLASS_ORDER if c != o.cls]
            return replace(o, cls=others[int(rng.integers(len(others)))])

        return _replace_objects(world, _targets(world, e.target, strict), reclass)
    if oi == 7:
        factor = p("drivable_scale")
        if factor is None:
            factor = rng.uniform(0.5, 0.8)
        if len(world.drivable_space) < 3:
            return world
        return replace(world, drivable_space=scale_polygon(world.drivable_space, factor))
    if oi == 8:
        rot = p("rotation", math.pi / 2)
        if e.target.kind == "all":
            flags["wrong_predictions"].append((None, rot))
        else:
            for oid in _targets(world, e.target, strict):
                flags["wrong_predictions"].append((oid, rot))
        return world
    if oi == 9:
        tr = world.traffic
        to = p("light_to")
        if to is not None:
            light = _LIGHT_ORDER[int(to) % len(_LIGHT_ORDER)]
        else:
            light = {
                LightState.RED: LightState.GREEN,
                LightState.GREEN: LightState.RED,
                LightState.YELLOW: LightState.GREEN,
                LightState.NONE: LightState.RED,
            }[tr.light_state]
        limit = p("speed_limit_to", tr.speed_limit)
        return replace(world, traffic=replace(tr, light_state=light, speed_limit=limit))
    if oi == 10:
        flags["ignore_rules"] = True
        return world
    if oi == 11:
        flags["lateral_wave"] = (p("amplitude", 1.0), p("period", 2.0))
        return world
    if oi == 12:
        flags["alternate"] = (p("alt_offset", 2.0), p("period", 0.1), e.start_t, p("ramp", 1.0))
        return world
    if oi == 13:
        flags["suppress_stop"] = True
        return world
    flags["misclassifications"].append(f"{_ODD_RECORDS[oi]} misclassified")
    return world


def inject_plan(plan: Trajectory, flags: InjectionFlags) -> Trajectory:
    """Apply the plan-stage effects (#11, #12) to a finished plan."""
    if flags.lateral_wave is None and flags.alternate is None:
        return plan
    samples = plan.samples
    offsets = [0.0] * len(samples)
    for k in range(len(samples)):
        tau = k * plan.dt
        if flags.lateral_wave is not None:
            amp, period = flags.lateral_wave
            offsets[k] += amp * math.sin(2 * math.pi * tau / period)
        if flags.alternate is not None:
            off, ramp = flags.alternate
            offsets[k] += off * (min(1.0, tau / ramp) if ramp > 0 else 1.0)
    out = []
    for (pose, v), off in zip(samples, offsets):
        out.append((Pose2D(pose.x - math.sin(pose.heading) * off, pose.y + math.cos(pose.heading) * off, pose.heading), v))
    return replace(plan, samples=tuple(out))


def inject_oi(
    world: WorldModel,
    plan: Optional[Trajectory],
    schedule: OiSchedule,
    t: float,
    seed: int = 0,
    stream_id: int = 0,
    strict: bool = True,
) -> tuple[WorldModel, Optional[Trajectory], InjectionFlags]:
    w, flags = inject_world(world, schedule, t, seed, stream_id, strict)
    return w, (inject_plan(plan, flags) if plan is not None else None), flags


def predict(
    world: WorldModel,
    horizon: float,
    dt: float,
    wrong: Sequence[tuple[Optional[int], float]] = (),
) -> PredictionSet:
    """One constant-velocity path per object, probability 1."""
    if not horizon > 0:
        raise ValueError("prediction horizon must be > 0")
    n = int(round(horizon / dt))
    entries = []
    for o in world.objects:
        vx, vy = o.velocity
        heading = o.pose.heading
        rot = 0.0
        for oid, r in wrong:
            if oid is None or oid == o.id:
                rot += r
        if rot:
            c, s = math.cos(rot), math.sin(rot)
            vx, vy = c * vx - s * vy, s * vx + c * vy
            heading += rot
        speed = math.hypot(vx, vy)
        samples = tuple(
            (Pose2D(o.pose.x + vx * k * dt, o.pose.y + vy * k * dt, heading), speed) for k in range(n + 1)
        )
        entries.append((o.id, ((Trajectory(world.timestamp, dt, samples), 1.0),)))
    return PredictionSet(tuple(entries))


class SpeedProfile:
    """Piecewise-constant-acceleration longitudinal profile starting at v0."""

    def __init__(self, v0: float, phases: Sequence[tuple[float, float]]) -> None:
        self.v0 = v0
        self.phases = [(d, a) for d, a in phases if d > 0]

    def at(self, tau: float) -> tuple[float, float]:
        s, v, rem = 0.0, self.v0, tau
        for dur, a in self.phases:
            step = min(dur, rem)
            s += v * step + 0.5 * a * step * step
            v = max(0.0, v + a * step)
            rem -= step
            if rem <= 0:
                return s, v
        return s + v * rem, v

    def at_many(self, taus: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised :meth:`at` over non-negative times."""
        rem = np.asarray(taus, dtype=float).copy()
        s = np.zeros_like(rem)
        v = np.full_like(rem, self.v0)
        for dur, a in self.phases:
            step = np.minimum(dur, rem)
            s += v * step + 0.5 * a * step * step
            v = np.maximum(0.0, v + a * step)
            rem -= step
        return s + v * rem, v


def speed_profile(v0: float, vt: float, accel: float, decel: float, max_decel: float, stop: float) -> SpeedProfile:
    """Trapezoidal approach to ``vt`` with a comfortable stop after ``stop`` metres."""
    if math.isinf(stop):
        if v0 < vt:
            return SpeedProfile(v0, [((vt - v0) / accel, accel)])
        if v0 > vt:
            return SpeedProfile(v0, [((v0 - vt) / decel, -decel)])
        return SpeedProfile(v0, [])
    if stop <= 0:
        return SpeedProfile(v0, [(v0 / max_decel, -max_decel)] if v0 > 0 else [])
    if v0 * v0 / (2 * decel) >= stop:
        a = min(v0 * v0 / (2 * stop), max_decel)
        return SpeedProfile(v0, [(v0 / a, -a)])
    if v0 > vt:
        d1 = (v0 * v0 - vt * vt) / (2 * decel)
        cruise = stop - d1 - vt * vt / (2 * decel)
        return SpeedProfile(v0, [((v0 - vt) / decel, -decel), (cruise / vt, 0.0), (vt / decel, -decel)])
    vp = math.sqrt((stop + v0 * v0 / (2 * accel)) / (1 / (2 * accel) + 1 / (2 * decel)))
    if vp >= vt:
        d1 = (vt * vt - v0 * v0) / (2 * accel)
        cruise = stop - d1 - vt * vt / (2 * decel)
        return SpeedProfile(v0, [((vt - v0) / accel, accel), (cruise / vt, 0.0), (vt / decel, -decel)])
    return SpeedProfile(v0, [((vp - v0) / accel, accel), (vp / decel, -decel)])


def assess_rules(world: WorldModel, route: Route) -> RuleAssessment:
    tr = world.traffic
    red = False
    if tr.light_state == LightState.RED and tr.stop_line is not None:
        s_line = route.crossing_s(*tr.stop_line)
        if s_line is not None:
            s0, _ = route.project(world.ego.pose.x, world.ego.pose.y)
            red = s_line >= s0 + world.ego.length / 2
    over = tr.speed_limit > 0 and world.ego.speed > tr.speed_limit + 1e-9
    return RuleAssessment(red_light_ahead=red, speed_limit_exceeded=over)


def _object_stop_distance(
    obj: ObjectState,
    modes: Sequence[tuple[Trajectory, float]],
    route: Route,
    s0: float,
    half_len: float,
    cfg: PlannerConfig,
    times: Sequence[float],
) -> float:
    best = math.inf
    paths: list[Optional[Trajectory]] = [tr for tr, p in modes if p > 0] or [None]
    for tr in paths:
        for t in times:
            if tr is None:
                pose = obj.pose
            else:
                k = min(int(round((t - tr.t0) / tr.dt)), len(tr.samples) - 1)
                pose = tr.samples[max(k, 0)][0]
            proj = [route.project(x, y) for x, y in OrientedRect(pose, obj.dims).corners()]
            smin = min(s for s, _ in proj)
            smax = max(s for s, _ in proj)
            emin = min(e for _, e in proj)
            emax = max(e for _, e in proj)
            if smax <= s0 - half_len:
                if tr is None:
                    break
                continue
            if emax >= -cfg.corridor_halfwidth and emin <= cfg.corridor_halfwidth:
                best = min(best, smin - s0 - half_len - cfg.stop_margin)
                break
            if tr is None:
                break
    return best


def plan(
    world: WorldModel,
    preds: PredictionSet,
    route: Route,
    cfg: PlannerConfig,
    flags: InjectionFlags = InjectionFlags(),
    rules: Optional[RuleAssessment] = None,
    horizon: float = 5.0,
    dt: float = 0.1,
) -> Trajectory:
    """Route-following plan with a comfortable stop before corridor intrusions."""
    ego = world.ego
    v0 = ego.speed
    s0, e0 = route.project(ego.pose.x, ego.pose.y)
    half_len = ego.length / 2
    n = int(round(horizon / dt))
    times = [world.timestamp + k * dt for k in range(n + 1)]

    target = cfg.target_speed
    limit = world.traffic.speed_limit
    if limit > 0 and not flags.ignore_rules:
        target = min(target, limit)
    stop = math.inf
    if not flags.suppress_stop:
        for o in world.objects:
            stop = min(stop, _object_stop_distance(o, preds.get(o.id), route, s0, half_len, cfg, times))
    if rules is None:
        rules = assess_rules(world, route)
    if rules.red_light_ahead and not flags.ignore_rules and world.traffic.stop_line is not None:
        s_line = route.crossing_s(*world.traffic.stop_line)
        if s_line is not None:
            stop = min(stop, s_line - s0 - half_len - cfg.stop_line_margin)
    prof = speed_profile(v0, target, cfg.accel, cfg.comfortable_decel, cfg.max_decel, stop)

    s_arr, v_arr = prof.at_many(dt * np.arange(1, n + 1))
    if cfg.lateral_blend > 0:
        lat = e0 * np.maximum(0.0, 1.0 - s_arr / cfg.lateral_blend)
    else:
        lat = np.zeros(n)
    xy = np.vstack([(ego.pose.x, ego.pose.y), route.offset_points(s0 + s_arr, lat)])
    d = np.diff(xy, axis=0)
    moving = np.hypot(d[:, 0], d[:, 1]) >= 1e-6
    ang = np.arctan2(d[:, 1], d[:, 0])
    # stationary steps keep the previous heading
    last = np.maximum.accumulate(np.where(moving, np.arange(n), -1))
    headings = np.where(last >= 0, ang[np.maximum(last, 0)], ego.pose.heading)
    samples = [(ego.pose, v0)]
    samples += [(Pose2D(x, y, h), v) for (x, y), h, v in zip(xy[1:].tolist(), headings.tolist(), v_arr.tolist())]
    return Trajectory(world.timestamp, dt, tuple(samples))


def _shift_route(route: Route, offset: tuple[float, float]) -> Route:
    if offset == (0.0, 0.0):
        return route
    dx, dy = offset
    return Route([(x + dx, y + dy) for x, y in route.points])


def channel_tick(
    truth: WorldModel,
    cfg: ChannelConfig,
    route: Route,
    t: float,
    seed: int = 0,
    horizon: float = 5.0,
    dt: float = 0.1,
) -> ChannelState:
    """perceive, inject, predict and plan for one channel at one tick."""
    world = perceive(truth, cfg.capability)
    world, flags = inject_world(world, cfg.oi_schedule, t, seed, cfg.rng_stream_id, strict=False)
    own_route = _shift_route(route, flags.route_offset)
    rules = assess_rules(world, own_route)
    if cfg.capability.has_prediction:
        preds = predict(world, horizon, dt, flags.wrong_predictions)
    else:
        preds = PredictionSet()
    traj = plan(world, preds, own_route, cfg.planner, flags, rules, horizon, dt)
    traj = inject_plan(traj, flags)
    return ChannelState(
        channel_id=cfg.channel_id,
        world=world,
        predictions=preds,
        plan=traj,
        rule_assessment=rules,
        fault_ok=cfg.fault_ok_at(t),
        odd_ok=flags.odd_ok,
        active_ois=flags.active_ois,
        misclassifications=flags.misclassifications,
    )


# --- JSON ---------------------------------------------------------------

_CAP_KEYS = ("detection_range", "fov", "detects", "has_prediction", "reads_traffic_lights", "preference_weight")
_PLANNER_KEYS = tuple(PlannerConfig.__dataclass_fields__)
_ENTRY_KEYS = ("oi_id", "target", "start_t", "duration", "params")
_RANDOM_KEYS = ("window", "fi_probability", "oi_ids", "params", "start", "end")
_CHANNEL_KEYS = (
    "channel_id", "name", "capability", "planner", "oi_schedule", "long_threshold",
    "rng_stream_id", "fault_windows", "random_schedule",
)


def _params(d: Any, path: str) -> tuple[tuple[str, float], ...]:
    d = sch.require_mapping(d, path)
    return tuple(sorted((k, sch.as_number(v, f"{path}.{k}")) for k, v in d.items()))


def capability_from_dict(d: Any, path: str) -> CapabilityProfile:
    d = sch.require_mapping(d, path)
    sch.check_keys(d, _CAP_KEYS, path)
    detects = sch.get_list(d, "detects", path, [c.value for c in ObjectClass])
    try:
        classes = frozenset(ObjectClass(c) for c in detects)
    except ValueError as exc:
        raise SchemaError(f"{path}.detects", str(exc)) from None
    try:
        return CapabilityProfile(
            detection_range=sch.get_number(d, "detection_range", path, 100.0),
            fov=sch.get_number(d, "fov", path, 2 * math.pi),
            detects=classes,
            has_prediction=sch.get_bool(d, "has_prediction", path, True),
            reads_traffic_lights=sch.get_bool(d, "reads_traffic_lights", path, True),
            preference_weight=sch.get_number(d, "preference_weight", path, 1.0),
        )
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None


def capability_to_dict(c: CapabilityProfile) -> dict:
    return {
        "detection_range": c.detection_range,
        "fov": c.fov,
        "detects": [k.value for k in _CLASS_ORDER if k in c.detects],
        "has_prediction": c.has_prediction,
        "reads_traffic_lights": c.reads_traffic_lights,
        "preference_weight": c.preference_weight,
    }


def _entry_from_dict(d: Any, path: str) -> OiEntry:
    d = sch.require_mapping(d, path)
    sch.check_keys(d, _ENTRY_KEYS, path, required=("oi_id", "start_t", "duration"))
    oi = sch.get_int(d, "oi_id", path)
    if not 1 <= oi <= 16:
        raise SchemaError(f"{path}.oi_id", f"must be in 1..16, got {oi}")
    dur_raw = d["duration"]
    if dur_raw == "persistent":
        dur = math.inf
    else:
        dur = sch.positive(sch.as_number(dur_raw, f"{path}.duration"), f"{path}.duration")
    try:
        return OiEntry(
            oi,
            sch.get_str(d, "target", path, _DEFAULT_TARGET[oi]),
            sch.positive(sch.get_number(d, "start_t", path), f"{path}.start_t", strict=False),
            dur,
            _params(d.get("params", {}), f"{path}.params"),
        )
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None


def _entry_to_dict(e: OiEntry) -> dict:
    out: dict[str, Any] = {
        "oi_id": e.oi_id,
        "target": str(e.target),
        "start_t": e.start_t,
        "duration": "persistent" if math.isinf(e.duration) else e.duration,
    }
    if e.params:
        out["params"] = dict(e.params)
    return out


def channel_from_dict(d: Any, path: str) -> ChannelConfig:
    d = sch.require_mapping(d, path)
    sch.check_keys(d, _CHANNEL_KEYS, path, required=("channel_id",))
    cid = sch.get_int(d, "channel_id", path)
    if cid < 0:
        raise SchemaError(f"{path}.channel_id", "must be >= 0")
    cap = capability_from_dict(d.get("capability", {}), f"{path}.capability")
    pd = sch.require_mapping(d.get("planner", {}), f"{path}.planner")
    sch.check_keys(pd, _PLANNER_KEYS, f"{path}.planner")
    try:
        planner = PlannerConfig(**{k: sch.as_number(v, f"{path}.planner.{k}") for k, v in pd.items()})
    except ValueError as exc:
        raise SchemaError(f"{path}.planner", str(exc)) from None
    entries = tuple(
        _entry_from_dict(e, f"{path}.oi_schedule[{i}]")
        for i, e in enumerate(sch.get_list(d, "oi_schedule", path, []))
    )
    threshold = sch.positive(sch.get_number(d, "long_threshold", path, 5.0), f"{path}.long_threshold")
    try:
        sched = OiSchedule(entries, threshold)
    except ValueError as exc:
        raise SchemaError(f"{path}.oi_schedule", str(exc)) from None
    windows = []
    for i, w in enumerate(sch.get_list(d, "fault_windows", path, [])):
        s, dur = sch.as_point(w, f"{path}.fault_windows[{i}]")
        sch.positive(dur, f"{path}.fault_windows[{i}][1]")
        windows.append((s, dur))
    rs = None
    if "random_schedule" in d:
        rs = _random_from_dict(d["random_schedule"], f"{path}.random_schedule")
    return ChannelConfig(
        channel_id=cid,
        capability=cap,
        oi_schedule=sched,
        planner=planner,
        rng_stream_id=sch.get_int(d, "rng_stream_id", path, cid),
        name=sch.get_str(d, "name", path, ""),
        fault_windows=tuple(windows),
        random_schedule=rs,
    )


def _random_from_dict(d: Any, path: str) -> RandomSchedule:
    d = sch.require_mapping(d, path)
    sch.check_keys(d, _RANDOM_KEYS, path, required=("window", "fi_probability", "oi_ids"))
    ids = []
    for i, v in enumerate(sch.get_list(d, "oi_ids", path)):
        if isinstance(v, bool) or not isinstance(v, int) or not 1 <= v <= 16:
            raise SchemaError(f"{path}.oi_ids[{i}]", f"must be an OI id in 1..16, got {v!r}")
        ids.append(v)
    params = []
    for k, v in sch.require_mapping(d.get("params", {}), f"{path}.params").items():
        try:
            oi = int(k)
        except ValueError:
            raise SchemaError(f"{path}.params.{k}", "keys must be OI ids") from None
        params.append((oi, _params(v, f"{path}.params.{k}")))
    end = d.get("end")
    try:
        return RandomSchedule(
            window=sch.get_number(d, "window", path),
            fi_probability=sch.in_unit(sch.get_number(d, "fi_probability", path), f"{path}.fi_probability"),
            oi_ids=tuple(ids),
            params=tuple(sorted(params)),
            start=sch.get_number(d, "start", path, 0.0),
            end=None if end is None else sch.as_number(end, f"{path}.end"),
        )
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None


def channel_to_dict(c: ChannelConfig) -> dict:
    out: dict[str, Any] = {
        "channel_id": c.channel_id,
        "name": c.name,
        "capability": capability_to_dict(c.capability),
        "planner": {k: getattr(c.planner, k) for k in _PLANNER_KEYS},
        "oi_schedule": [_entry_to_dict(e) for e in c.oi_schedule.entries],
        "long_threshold": c.oi_schedule.long_threshold,
        "rng_stream_id": c.rng_stream_id,
        "fault_windows": [list(w) for w in c.fault_windows],
    }
    if c.random_schedule is not None:
        rs = c.random_schedule
        out["random_schedule"] = {
            "window": rs.window,
            "fi_probability": rs.fi_probability,
            "oi_ids": list(rs.oi_ids),
            "params": {str(k): dict(p) for k, p in rs.params},
            "start": rs.start,
        }
        if rs.end is not None:
            out["random_schedule"]["end"] = rs.end
    return out
