"""Scenario documents and deterministic ground-truth scene evolution."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import numpy as np

from . import _schema as sch
from .channel import ChannelConfig, channel_from_dict, channel_to_dict
from .cross import AnalysisConfig
from .errors import ParseError, SchemaError, UnknownScenario
from .fusion import ArbiterConfig, FusionConfig
from .geometry import OrientedRect, Route, point_in_polygon, rects_intersect
from .types import (
    LightState,
    ObjectClass,
    ObjectState,
    Point,
    Pose2D,
    Traffic,
    Trajectory,
    WorldModel,
    normalize_angle,
    pose_at,
)

BUILTIN_NAMES = (
    "cyclist_crossing",
    "front_vehicle_left_turn",
    "pedestrian_t_intersection",
    "table3_timeline",
    "random_crossing",
)


@dataclass(frozen=True)
class EgoMode:
    kind: str = "closed_loop"  # or "open_loop"
    acceleration: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("closed_loop", "open_loop"):
            raise ValueError(f"unknown ego mode {self.kind!r}")


@dataclass(frozen=True)
class ActorScript:
    template: ObjectState
    motion: str = "constant_velocity"  # or "waypoints"
    waypoints: tuple[tuple[float, Pose2D], ...] = ()
    spawn_t: float = 0.0
    despawn_t: float = math.inf

    def __post_init__(self) -> None:
        if self.motion not in ("constant_velocity", "waypoints"):
            raise ValueError(f"unknown motion {self.motion!r}")
        if not self.spawn_t < self.despawn_t:
            raise ValueError(f"spawn_t {self.spawn_t} must be < despawn_t {self.despawn_t}")
        if self.motion == "waypoints":
            if not self.waypoints:
                raise ValueError("waypoint motion needs at least one waypoint")
            ts = [t for t, _ in self.waypoints]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError("waypoint times must be strictly increasing")

    def active(self, t: float) -> bool:
        return self.spawn_t - 1e-9 <= t < self.despawn_t - 1e-9

    def state_at(self, t: float) -> ObjectState:
        tpl = self.template
        if self.motion == "constant_velocity":
            dt = t - self.spawn_t
            vx, vy = tpl.velocity
            return replace(tpl, pose=tpl.pose.moved(vx * dt, vy * dt))
        wps = self.waypoints
        if t <= wps[0][0]:
            return replace(tpl, pose=wps[0][1], velocity=(0.0, 0.0))
        if t >= wps[-1][0]:
            return replace(tpl, pose=wps[-1][1], velocity=(0.0, 0.0))
        for (ta, pa), (tb, pb) in zip(wps, wps[1:]):
            if ta <= t <= tb:
                f = (t - ta) / (tb - ta)
                dh = normalize_angle(pb.heading - pa.heading)
                pose = Pose2D(pa.x + f * (pb.x - pa.x), pa.y + f * (pb.y - pa.y), pa.heading + f * dh)
                vel = ((pb.x - pa.x) / (tb - ta), (pb.y - pa.y) / (tb - ta))
                return replace(tpl, pose=pose, velocity=vel)
        raise AssertionError("unreachable")


@dataclass(frozen=True)
class RandomTraffic:
    """Seeded crossing traffic: actors cross the route laterally at random places."""

    count: int = 4
    x_range: tuple[float, float] = (20.0, 150.0)
    speed_range: tuple[float, float] = (1.0, 6.0)
    spawn_range: tuple[float, float] = (0.0, 20.0)
    lateral_start: float = 12.0
    classes: tuple[ObjectClass, ...] = (ObjectClass.PEDESTRIAN, ObjectClass.CYCLIST, ObjectClass.VEHICLE)
    id_base: int = 100

    def generate(self, seed: int) -> tuple[ActorScript, ...]:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 0xC0FFEE]))
        out = []
        dims = {
            ObjectClass.PEDESTRIAN: (0.6, 0.6),
            ObjectClass.CYCLIST: (1.8, 0.6),
            ObjectClass.VEHICLE: (4.5, 2.0),
            ObjectClass.TRUCK: (10.0, 2.5),
            ObjectClass.UNKNOWN: (1.0, 1.0),
        }
        for i in range(self.count):
            x = rng.uniform(*self.x_range)
            speed = rng.uniform(*self.speed_range)
            spawn = rng.uniform(*self.spawn_range)
            side = 1.0 if rng.random() < 0.5 else -1.0
            cls_ = self.classes[int(rng.integers(len(self.classes)))]
            heading = -side * math.pi / 2
            tpl = ObjectState(
                self.id_base + i,
                cls_,
                Pose2D(x, side * self.lateral_start, heading),
                dims[cls_],
                (0.0, -side * speed),
            )
            out.append(ActorScript(tpl, spawn_t=round(spawn, 3), despawn_t=round(spawn + 2 * self.lateral_start / speed, 3)))
        return tuple(out)


@dataclass(frozen=True)
class Scenario:
    name: str
    ego_init: ObjectState
    route: tuple[Point, ...]
    drivable_space: tuple[Point, ...]
    duration: float = 30.0
    tick_dt: float = 0.1
    ego_mode: EgoMode = EgoMode()
    actors: tuple[ActorScript, ...] = ()
    light_schedule: tuple[tuple[float, LightState], ...] = ()
    seed: int = 0
    speed_limit: float = 0.0
    stop_line: Optional[tuple[Point, Point]] = None
    channels: tuple[ChannelConfig, ...] = ()
    fusion: FusionConfig = FusionConfig()
    arbiter: ArbiterConfig = ArbiterConfig()
    analysis: AnalysisConfig = AnalysisConfig()
    halt_on_collision: bool = False
    random_traffic: Optional[RandomTraffic] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "route", tuple((float(x), float(y)) for x, y in self.route))
        object.__setattr__(self, "drivable_space", tuple((float(x), float(y)) for x, y in self.drivable_space))
        object.__setattr__(self, "actors", tuple(self.actors))
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(
            self, "light_schedule", tuple(sorted((float(t), LightState(s)) for t, s in self.light_schedule))
        )
        if not self.tick_dt > 0:
            raise ValueError("tick_dt must be > 0")
        if not self.duration >= self.tick_dt:
            raise ValueError("duration must be >= tick_dt")
        if len(self.route) < 2:
            raise ValueError("route needs at least 2 points")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        ids = [c.channel_id for c in self.channels]
        if len(set(ids)) != len(ids):
            raise ValueError("channel ids must be unique")

    @cached_property
    def all_actors(self) -> tuple[ActorScript, ...]:
        extra = self.random_traffic.generate(self.seed) if self.random_traffic else ()
        return self.actors + extra

    @cached_property
    def route_obj(self) -> Route:
        return Route(self.route)

    @property
    def n_ticks(self) -> int:
        return int(math.floor(self.duration / self.tick_dt + 1e-9))

    def tick_time(self, k: int) -> float:
        return round(k * self.tick_dt, 9)

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=int(seed))

    def light_at(self, t: float) -> LightState:
        state = LightState.NONE
        for ts, s in self.light_schedule:
            if ts <= t + 1e-9:
                state = s
            else:
                break
        return state


@dataclass(frozen=True)
class HazardEvent:
    t: float
    kind: str  # "collision" or "off_drivable_space"
    participants: tuple[int, ...]


@dataclass(frozen=True)
class ControlCommand:
    acceleration: float = 0.0
    curvature: float = 0.0


@dataclass(frozen=True)
class SceneState:
    t: float
    tick: int
    ego: ObjectState
    scenario: Scenario = field(compare=False, repr=False)

    @property
    def ego_speed(self) -> float:
        return self.ego.speed


def initial_state(scenario: Scenario) -> SceneState:
    return SceneState(0.0, 0, scenario.ego_init, scenario)


def follow_command(ego: ObjectState, plan: Trajectory, dt: float) -> ControlCommand:
    """Acceleration and curvature that land the unicycle on the plan one tick ahead."""
    t = min(plan.t0 + dt, plan.t_end)
    target, v_target = pose_at(plan, t)
    v = ego.speed
    accel = (v_target - v) / dt
    dh = normalize_angle(target.heading - ego.pose.heading)
    kappa = dh / (v * dt) if v > 1e-6 else 0.0
    return ControlCommand(accel, kappa)


def step(state: SceneState, dt: float, command: Union[ControlCommand, Trajectory, None] = None) -> SceneState:
    """Advance the scene one tick with forward-Euler unicycle kinematics."""
    sc = state.scenario
    if abs(dt - sc.tick_dt) > 1e-12:
        raise ValueError(f"dt {dt} differs from scenario tick_dt {sc.tick_dt}")
    if command is None:
        command = ControlCommand()
    elif isinstance(command, Trajectory):
        command = follow_command(state.ego, command, dt)
    ego = state.ego
    v = ego.speed
    th = ego.pose.heading
    x = ego.pose.x + v * math.cos(th) * dt
    y = ego.pose.y + v * math.sin(th) * dt
    th_new = th + v * command.curvature * dt
    v_new = max(0.0, v + command.acceleration * dt)
    pose = Pose2D(x, y, th_new)
    vel = (v_new * math.cos(pose.heading), v_new * math.sin(pose.heading))
    tick = state.tick + 1
    return SceneState(sc.tick_time(tick), tick, replace(ego, pose=pose, velocity=vel), sc)


def ground_truth_view(state: SceneState) -> WorldModel:
    sc = state.scenario
    objs = tuple(sorted((a.state_at(state.t) for a in sc.all_actors if a.active(state.t)), key=lambda o: o.id))
    traffic = Traffic(sc.light_at(state.t), sc.speed_limit, sc.stop_line)
    return WorldModel(state.t, state.ego, objs, sc.drivable_space, traffic)


def detect_hazards(state: SceneState, world: Optional[WorldModel] = None) -> list[HazardEvent]:
    world = world or ground_truth_view(state)
    ego = world.ego
    rect = OrientedRect(ego.pose, ego.dims)
    out = []
    for o in world.objects:
        if rects_intersect(rect, OrientedRect(o.pose, o.dims)):
            out.append(HazardEvent(state.t, "collision", (ego.id, o.id)))
    poly = world.drivable_space
    if len(poly) >= 3 and not all(point_in_polygon(c, poly) for c in rect.corners()):
        out.append(HazardEvent(state.t, "off_drivable_space", (ego.id,)))
    return out


# --- documents ----------------------------------------------------------

_TOP_KEYS = (
    "name", "duration", "tick_dt", "ego_init", "ego_mode", "actors", "route", "drivable_space",
    "light_schedule", "seed", "speed_limit", "stop_line", "channels", "fusion", "arbiter",
    "analysis", "halt_on_collision", "random_traffic",
)
_OBJ_KEYS = ("id", "class", "pose", "dims", "velocity")
_ACTOR_KEYS = ("template", "motion", "spawn_t", "despawn_t")
_RANDOM_TRAFFIC_KEYS = tuple(f.name for f in dataclasses.fields(RandomTraffic))


def _pose(v: Any, path: str) -> Pose2D:
    if not isinstance(v, list) or len(v) not in (2, 3):
        raise SchemaError(path, f"expected [x, y, heading], got {v!r}")
    vals = [sch.as_number(c, f"{path}[{i}]") for i, c in enumerate(v)]
    return Pose2D(*vals)


def _object(d: Any, path: str) -> ObjectState:
    d = sch.require_mapping(d, path)
    sch.check_keys(d, _OBJ_KEYS, path, required=("id", "pose"))
    cls_ = sch.get_str(d, "class", path, "vehicle")
    try:
        cls_ = ObjectClass(cls_)
    except ValueError:
        raise SchemaError(f"{path}.class", f"unknown class {cls_!r}") from None
    dims = sch.as_point(d["dims"], f"{path}.dims") if "dims" in d else (4.5, 2.0)
    if not (dims[0] > 0 and dims[1] > 0):
        raise SchemaError(f"{path}.dims", "length and width must be > 0")
    vel = sch.as_point(d["velocity"], f"{path}.velocity") if "velocity" in d else (0.0, 0.0)
    return ObjectState(sch.get_int(d, "id", path), cls_, _pose(d["pose"], f"{path}.pose"), dims, vel)


def _object_to_dict(o: ObjectState) -> dict:
    return {
        "id": o.id,
        "class": o.cls.value,
        "pose": [o.pose.x, o.pose.y, o.pose.heading],
        "dims": list(o.dims),
        "velocity": list(o.velocity),
    }


def _actor(d: Any, path: str) -> ActorScript:
    d = sch.require_mapping(d, path)
    sch.check_keys(d, _ACTOR_KEYS, path, required=("template",))
    tpl = _object(d["template"], f"{path}.template")
    m = d.get("motion", {"kind": "constant_velocity"})
    mpath = f"{path}.motion"
    m = sch.require_mapping(m, mpath)
    sch.check_keys(m, ("kind", "waypoints"), mpath, required=("kind",))
    kind = sch.get_str(m, "kind", mpath)
    wps = []
    for i, w in enumerate(sch.get_list(m, "waypoints", mpath, [])):
        wp = f"{mpath}.waypoints[{i}]"
        if not isinstance(w, list) or len(w) != 4:
            raise SchemaError(wp, "expected [t, x, y, heading]")
        t, x, y, h = (sch.as_number(c, f"{wp}[{j}]") for j, c in enumerate(w))
        wps.append((t, Pose2D(x, y, h)))
    spawn = sch.get_number(d, "spawn_t", path, 0.0)
    despawn = sch.get_number(d, "despawn_t", path, math.inf, allow_inf=True)
    try:
        return ActorScript(tpl, kind, tuple(wps), spawn, despawn)
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None


def _actor_to_dict(a: ActorScript) -> dict:
    out: dict[str, Any] = {"template": _object_to_dict(a.template)}
    if a.motion == "waypoints":
        out["motion"] = {
            "kind": "waypoints",
            "waypoints": [[t, p.x, p.y, p.heading] for t, p in a.waypoints],
        }
    else:
        out["motion"] = {"kind": "constant_velocity"}
    out["spawn_t"] = a.spawn_t
    if not math.isinf(a.despawn_t):
        out["despawn_t"] = a.despawn_t
    return out


def _polyline(v: Any, path: str, min_len: int) -> tuple[Point, ...]:
    if not isinstance(v, list):
        raise SchemaError(path, "expected a list of [x, y] points")
    pts = tuple(sch.as_point(p, f"{path}[{i}]") for i, p in enumerate(v))
    if len(pts) < min_len:
        raise SchemaError(path, f"needs at least {min_len} points, got {len(pts)}")
    return pts


def config_from_dict(cls, d: Any, path: str):
    """Build a flat config dataclass from a JSON object, type-checking each field."""
    d = sch.require_mapping(d, path)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    sch.check_keys(d, fields, path)
    kwargs = {}
    for k, v in d.items():
        default = getattr(cls(), k)
        if isinstance(default, bool):
            kwargs[k] = sch.get_bool(d, k, path)
        elif isinstance(default, str):
            kwargs[k] = sch.get_str(d, k, path)
        elif isinstance(default, int):
            kwargs[k] = sch.get_int(d, k, path)
        else:
            kwargs[k] = sch.get_number(d, k, path)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None


def config_to_dict(cfg) -> dict:
    return {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)}


def _random_traffic(d: Any, path: str) -> RandomTraffic:
    d = sch.require_mapping(d, path)
    sch.check_keys(d, _RANDOM_TRAFFIC_KEYS, path)
    kw: dict[str, Any] = {}
    if "count" in d:
        kw["count"] = sch.get_int(d, "count", path)
        if kw["count"] < 0:
            raise SchemaError(f"{path}.count", "must be >= 0")
    for k in ("x_range", "speed_range", "spawn_range"):
        if k in d:
            lo, hi = sch.as_point(d[k], f"{path}.{k}")
            if hi < lo:
                raise SchemaError(f"{path}.{k}", "range must be [lo, hi] with lo <= hi")
            kw[k] = (lo, hi)
    if "speed_range" in kw and kw["speed_range"][0] <= 0:
        raise SchemaError(f"{path}.speed_range", "speeds must be > 0")
    if "lateral_start" in d:
        kw["lateral_start"] = sch.positive(sch.get_number(d, "lateral_start", path), f"{path}.lateral_start")
    if "id_base" in d:
        kw["id_base"] = sch.get_int(d, "id_base", path)
    if "classes" in d:
        try:
            kw["classes"] = tuple(ObjectClass(c) for c in sch.get_list(d, "classes", path))
        except ValueError as exc:
            raise SchemaError(f"{path}.classes", str(exc)) from None
        if not kw["classes"]:
            raise SchemaError(f"{path}.classes", "needs at least one class")
    return RandomTraffic(**kw)


def _random_traffic_to_dict(r: RandomTraffic) -> dict:
    return {
        "count": r.count,
        "x_range": list(r.x_range),
        "speed_range": list(r.speed_range),
        "spawn_range": list(r.spawn_range),
        "lateral_start": r.lateral_start,
        "classes": [c.value for c in r.classes],
        "id_base": r.id_base,
    }


def load_scenario(source: Union[Mapping[str, Any], str, bytes]) -> Scenario:
    """Validate a scenario document (mapping or JSON text) into a Scenario."""
    if isinstance(source, (str, bytes)):
        try:
            source = json.loads(source)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ParseError(f"malformed scenario JSON: {exc}") from None
    d = sch.require_mapping(source, "")
    sch.check_keys(d, _TOP_KEYS, "", required=("name", "ego_init", "route", "drivable_space"))
    name = sch.get_str(d, "name", "")
    duration = sch.positive(sch.get_number(d, "duration", "", 30.0), "duration")
    tick_dt = sch.positive(sch.get_number(d, "tick_dt", "", 0.1), "tick_dt")
    if duration < tick_dt:
        raise SchemaError("duration", "must be >= tick_dt")
    ego = _object(d["ego_init"], "ego_init")
    mode_raw = d.get("ego_mode", {"kind": "closed_loop"})
    mode_raw = sch.require_mapping(mode_raw, "ego_mode")
    sch.check_keys(mode_raw, ("kind", "acceleration"), "ego_mode", required=("kind",))
    try:
        mode = EgoMode(sch.get_str(mode_raw, "kind", "ego_mode"), sch.get_number(mode_raw, "acceleration", "ego_mode", 0.0))
    except ValueError as exc:
        raise SchemaError("ego_mode.kind", str(exc)) from None
    actors = tuple(_actor(a, f"actors[{i}]") for i, a in enumerate(sch.get_list(d, "actors", "", [])))
    ids = [ego.id]
    for i, a in enumerate(actors):
        if a.template.id in ids:
            raise SchemaError(f"actors[{i}].template.id", f"duplicate object id {a.template.id}")
        ids.append(a.template.id)
    route = _polyline(d["route"], "route", 2)
    try:
        Route(route)
    except ValueError as exc:
        raise SchemaError("route", str(exc)) from None
    poly = _polyline(d["drivable_space"], "drivable_space", 3)
    from .geometry import polygon_area, polygon_is_simple

    if abs(polygon_area(poly)) < 1e-12 or not polygon_is_simple(poly):
        raise SchemaError("drivable_space", "polygon must be simple with non-zero area")
    lights = []
    for i, entry in enumerate(sch.get_list(d, "light_schedule", "", [])):
        p = f"light_schedule[{i}]"
        if not isinstance(entry, list) or len(entry) != 2:
            raise SchemaError(p, "expected [t, state]")
        t = sch.as_number(entry[0], f"{p}[0]")
        try:
            lights.append((t, LightState(entry[1])))
        except ValueError:
            raise SchemaError(f"{p}[1]", f"unknown light state {entry[1]!r}") from None
    seed = sch.get_int(d, "seed", "", 0)
    if not 0 <= seed < 2**64:
        raise SchemaError("seed", "must be a 64-bit unsigned integer")
    stop_line = None
    if d.get("stop_line") is not None:
        line = _polyline(d["stop_line"], "stop_line", 2)
        if len(line) != 2:
            raise SchemaError("stop_line", "expected exactly two points")
        stop_line = (line[0], line[1])
    channels = tuple(channel_from_dict(c, f"channels[{i}]") for i, c in enumerate(sch.get_list(d, "channels", "", [])))
    cids = [c.channel_id for c in channels]
    if len(set(cids)) != len(cids):
        raise SchemaError("channels", "channel ids must be unique")
    return Scenario(
        name=name,
        ego_init=ego,
        route=route,
        drivable_space=poly,
        duration=duration,
        tick_dt=tick_dt,
        ego_mode=mode,
        actors=actors,
        light_schedule=tuple(lights),
        seed=seed,
        speed_limit=sch.positive(sch.get_number(d, "speed_limit", "", 0.0), "speed_limit", strict=False),
        stop_line=stop_line,
        channels=channels,
        fusion=config_from_dict(FusionConfig, d.get("fusion", {}), "fusion"),
        arbiter=config_from_dict(ArbiterConfig, d.get("arbiter", {}), "arbiter"),
        analysis=config_from_dict(AnalysisConfig, d.get("analysis", {}), "analysis"),
        halt_on_collision=sch.get_bool(d, "halt_on_collision", "", False),
        random_traffic=_random_traffic(d["random_traffic"], "random_traffic") if "random_traffic" in d else None,
    )


def load_scenario_file(path: Union[str, Path]) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8: {exc}") from None
    return load_scenario(text)


def dump_scenario(s: Scenario) -> dict:
    """Inverse of load_scenario: a JSON-ready document."""
    out: dict[str, Any] = {
        "name": s.name,
        "duration": s.duration,
        "tick_dt": s.tick_dt,
        "seed": s.seed,
        "ego_init": _object_to_dict(s.ego_init),
        "ego_mode": {"kind": s.ego_mode.kind, "acceleration": s.ego_mode.acceleration},
        "route": [list(p) for p in s.route],
        "drivable_space": [list(p) for p in s.drivable_space],
        "actors": [_actor_to_dict(a) for a in s.actors],
        "light_schedule": [[t, st.value] for t, st in s.light_schedule],
        "speed_limit": s.speed_limit,
        "channels": [channel_to_dict(c) for c in s.channels],
        "fusion": config_to_dict(s.fusion),
        "arbiter": config_to_dict(s.arbiter),
        "analysis": config_to_dict(s.analysis),
        "halt_on_collision": s.halt_on_collision,
    }
    if s.stop_line is not None:
        out["stop_line"] = [list(p) for p in s.stop_line]
    if s.random_traffic is not None:
        out["random_traffic"] = _random_traffic_to_dict(s.random_traffic)
    return out


def builtin_names() -> list[str]:
    root = resources.files("daruma_sim") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def builtin_scenario(name: str, seed: Optional[int] = None) -> Scenario:
    """Load a shipped fixture from the package ``scenarios/`` directory."""
    if not isinstance(name, str) or "/" in name or name not in builtin_names():
        raise UnknownScenario(name)
    text = (resources.files("daruma_sim") / "scenarios" / f"{name}.json").read_text(encoding="utf-8")
    sc = load_scenario(text)
    return sc if seed is None else sc.with_seed(seed)
