"""Cross-channel analysis: overlay, risk matrix, LSIT and similarity."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import MismatchedTimestamps
from .geometry import OrientedRect, points_in_polygon, rects_intersect, segments_intersect
from .types import ChannelState, Pose2D, PredictionSet, Trajectory, WorldModel, pose_at

_T_EPS = 1e-9


@dataclass(frozen=True)
class AnalysisConfig:
    horizon: float = 5.0
    dt: float = 0.1
    r_off: float = 1.0
    r_rule: float = 0.8
    r_threshold: float = 0.5
    assoc_radius: float = 2.0
    d_scale: float = 5.0
    credit_k: int = 3

    def __post_init__(self) -> None:
        if not (self.horizon > 0 and self.dt > 0):
            raise ValueError("analysis horizon and dt must be > 0")
        _check_divides(self.horizon, self.dt)
        for name in ("r_off", "r_rule", "r_threshold"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not (self.assoc_radius > 0 and self.d_scale > 0):
            raise ValueError("assoc_radius and d_scale must be > 0")
        if self.credit_k < 1:
            raise ValueError("credit_k must be >= 1")


@dataclass(frozen=True)
class ConflictEvent:
    t: float  # seconds after plan start
    kind: str  # "collision" or "off_drivable_space"
    object_id: Optional[int] = None
    source_channel: Optional[int] = None
    world_source: Optional[int] = None


@dataclass(frozen=True)
class RiskProfile:
    dt: float
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        for v in self.values:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"risk value {v} outside [0, 1]")

    @property
    def peak(self) -> float:
        return max(self.values, default=0.0)

    def first_at_least(self, threshold: float) -> Optional[float]:
        for k, v in enumerate(self.values):
            if v >= threshold:
                return k * self.dt
        return None


@dataclass(frozen=True)
class RiskMatrix:
    channel_ids: tuple[int, ...]
    cells: tuple[tuple[RiskProfile, ...], ...]

    def __post_init__(self) -> None:
        n = len(self.channel_ids)
        if n < 1 or len(self.cells) != n or any(len(row) != n for row in self.cells):
            raise ValueError("risk matrix must be n x n with n >= 1")

    @property
    def n(self) -> int:
        return len(self.channel_ids)


@dataclass(frozen=True)
class PairMismatch:
    missed_by_j: tuple[int, ...]  # objects of i with no partner in j
    missed_by_i: tuple[int, ...]  # objects of j with no partner in i (ghosts relative to i)
    plan_divergence: float

    @property
    def empty(self) -> bool:
        return not self.missed_by_j and not self.missed_by_i


@dataclass(frozen=True)
class SimilarityReport:
    channel_ids: tuple[int, ...]
    pairwise: tuple[tuple[float, ...], ...]
    mismatches: tuple[tuple[tuple[int, int], PairMismatch], ...] = ()

    def mismatch(self, i: int, j: int) -> Optional[PairMismatch]:
        for key, m in self.mismatches:
            if key == (i, j):
                return m
        return None


def _check_divides(horizon: float, dt: float) -> int:
    n = round(horizon / dt)
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"dt={dt} does not divide horizon={horizon}")
    return int(n)


def _sample_pose(traj: Trajectory, t: float) -> Pose2D:
    """Pose at ``t``, held constant outside the trajectory's span."""
    if t <= traj.t0:
        return traj.samples[0][0]
    if t >= traj.t_end:
        return traj.samples[-1][0]
    u = (t - traj.t0) / traj.dt
    k = round(u)
    if abs(u - k) <= 1e-9:
        return traj.samples[k][0]
    return pose_at(traj, t)[0]


class _PlanFootprints:
    """Ego rectangles of one plan at the analysis sample times, reused across worlds."""

    def __init__(self, plan: Trajectory, ego_dims: tuple[float, float], horizon: float, dt: float) -> None:
        n = _check_divides(horizon, dt)
        n = min(n, int(math.floor(plan.horizon / dt + 1e-9)))
        self.plan = plan
        self.times = [k * dt for k in range(n + 1)]
        self.dims = ego_dims
        if abs(plan.dt - dt) <= 1e-12:
            self.poses = [p for p, _ in plan.samples[: n + 1]]
        else:
            self.poses = [_sample_pose(plan, plan.t0 + tau) for tau in self.times]
        self._rects: dict[int, OrientedRect] = {}
        # same arithmetic as OrientedRect.corners, done column-wise
        x = np.array([p.x for p in self.poses])
        y = np.array([p.y for p in self.poses])
        c = np.array([math.cos(p.heading) for p in self.poses])
        s = np.array([math.sin(p.heading) for p in self.poses])
        hl, hw = ego_dims[0] / 2.0, ego_dims[1] / 2.0
        self.corners = np.stack([
            np.stack([x + c * hl - s * hw, y + s * hl + c * hw], axis=1),
            np.stack([x - c * hl - s * hw, y - s * hl + c * hw], axis=1),
            np.stack([x - c * hl + s * hw, y - s * hl - c * hw], axis=1),
            np.stack([x + c * hl + s * hw, y + s * hl - c * hw], axis=1),
        ], axis=1)
        self.centers = np.stack([x, y], axis=1)
        self.radius = 0.5 * math.hypot(*ego_dims)
        self._off: dict[tuple, list[bool]] = {}

    def rect(self, k: int) -> OrientedRect:
        r = self._rects.get(k)
        if r is None:
            r = self._rects[k] = OrientedRect(self.poses[k], self.dims)
        return r

    def off_flags(self, poly: tuple) -> list[bool]:
        if len(poly) < 3:
            return [False] * len(self.poses)
        if poly not in self._off:
            inside = points_in_polygon(self.corners.reshape(-1, 2), poly).reshape(-1, 4)
            self._off[poly] = (~inside.all(axis=1)).tolist()
        return self._off[poly]


class _Tracks:
    """Object paths of one world/prediction pair as arrays, reused across plans."""

    def __init__(self, world: WorldModel, preds: PredictionSet) -> None:
        self.world = world
        self.items = []
        for o in world.objects:
            modes = []
            for tr, p in preds.get(o.id):
                if p > 0:
                    xy = np.array([(q.x, q.y) for q, _ in tr.samples], dtype=float)
                    modes.append((tr, p, tr.t0 + tr.dt * np.arange(len(xy)), xy))
            self.items.append((o, 0.5 * math.hypot(*o.dims), modes))


def _hit_table(fp: _PlanFootprints, tracks: _Tracks):
    """Per-object hit probability at each sample, plus the off-road flags."""
    t0 = fp.plan.t0
    n = len(fp.times)
    at = t0 + np.asarray(fp.times)
    cx, cy = fp.centers[:, 0], fp.centers[:, 1]
    table: dict[int, np.ndarray] = {}
    for o, r_obj, modes in tracks.items:
        reach = fp.radius + r_obj + 1e-6
        acc = np.zeros(n)
        if not modes:
            static = OrientedRect(o.pose, o.dims)
            for k in np.nonzero(np.hypot(cx - o.pose.x, cy - o.pose.y) <= reach)[0]:
                if rects_intersect(fp.rect(int(k)), static):
                    acc[k] = 1.0
        for tr, p, ts, xy in modes:
            # bounding-circle prefilter before the exact rectangle test
            ox, oy = np.interp(at, ts, xy[:, 0]), np.interp(at, ts, xy[:, 1])
            for k in np.nonzero(np.hypot(cx - ox, cy - oy) <= reach)[0]:
                k = int(k)
                if rects_intersect(fp.rect(k), OrientedRect(_sample_pose(tr, t0 + fp.times[k]), o.dims)):
                    acc[k] += p
        if acc.any():
            table[o.id] = np.minimum(acc, 1.0)
    return table, fp.off_flags(tracks.world.drivable_space)


def _scan(fp: _PlanFootprints, world: WorldModel, preds: PredictionSet):
    """Yield (tau, [(object id, hit probability)], off_drivable) per sample."""
    table, off = _hit_table(fp, _Tracks(world, preds))
    for k, tau in enumerate(fp.times):
        hits = [(oid, float(a[k])) for oid, a in table.items() if a[k] > 0]
        yield tau, hits, off[k]


def geometric_overlay(
    plan: Trajectory,
    ego_dims: tuple[float, float],
    world: WorldModel,
    preds: PredictionSet,
    horizon: float = 5.0,
    dt: float = 0.1,
    source_channel: Optional[int] = None,
    world_source: Optional[int] = None,
) -> list[ConflictEvent]:
    """Sampled collision and off-road events of ``plan`` inside ``world``."""
    events = []
    for tau, hits, off in _scan(_PlanFootprints(plan, ego_dims, horizon, dt), world, preds):
        for oid, _p in sorted(hits):
            events.append(ConflictEvent(tau, "collision", oid, source_channel, world_source))
        if off:
            events.append(ConflictEvent(tau, "off_drivable_space", None, source_channel, world_source))
    return events


def _stop_line_crossing(plan: Trajectory, line, n: int) -> Optional[int]:
    p, q = line
    for k in range(1, min(n, len(plan.samples) - 1) + 1):
        (a, va), (b, vb) = plan.samples[k - 1], plan.samples[k]
        if max(va, vb) <= 0:
            continue
        if segments_intersect((a.x, a.y), (b.x, b.y), p, q):
            return k
    return None


def risk_profile(
    plan_i: Trajectory,
    ego_dims: tuple[float, float],
    state_j: ChannelState,
    horizon: float = 5.0,
    dt: float = 0.1,
    cfg: Optional[AnalysisConfig] = None,
) -> RiskProfile:
    """Collision probability over time of ``plan_i`` inside channel j's view."""
    return _risk(_PlanFootprints(plan_i, ego_dims, horizon, dt), state_j, dt, cfg or AnalysisConfig(horizon=horizon, dt=dt))


def _risk(
    fp: _PlanFootprints, state_j: ChannelState, dt: float, cfg: AnalysisConfig, tracks: Optional[_Tracks] = None
) -> RiskProfile:
    plan_i = fp.plan
    table, off = _hit_table(fp, tracks or _Tracks(state_j.world, state_j.predictions))
    safe = np.ones(len(fp.times))
    for a in table.values():
        safe *= 1.0 - a
    safe[np.asarray(off, dtype=bool)] *= 1.0 - cfg.r_off
    values = np.clip(1.0 - safe, 0.0, 1.0).tolist()
    line = state_j.world.traffic.stop_line
    if state_j.rule_assessment.red_light_ahead and line is not None:
        k0 = _stop_line_crossing(plan_i, line, len(values) - 1)
        if k0 is not None:
            for k in range(k0, len(values)):
                values[k] = max(values[k], cfg.r_rule)
    return RiskProfile(dt, tuple(values))


def risk_matrix(
    states: Sequence[ChannelState],
    ego_dims: tuple[float, float],
    horizon: float = 5.0,
    dt: float = 0.1,
    cfg: Optional[AnalysisConfig] = None,
) -> RiskMatrix:
    if not states:
        raise ValueError("risk_matrix needs at least one channel state")
    t0 = states[0].plan.t0
    for s in states:
        if abs(s.plan.t0 - t0) > _T_EPS:
            raise MismatchedTimestamps(f"plan t0 {s.plan.t0} != {t0}")
    cfg = cfg or AnalysisConfig(horizon=horizon, dt=dt)
    fps = [_PlanFootprints(s.plan, ego_dims, horizon, dt) for s in states]
    tracks = [_Tracks(sj.world, sj.predictions) for sj in states]
    cells = tuple(tuple(_risk(fp, sj, dt, cfg, tr) for sj, tr in zip(states, tracks)) for fp in fps)
    return RiskMatrix(tuple(s.channel_id for s in states), cells)


def _path_length_fn(plan: Trajectory):
    cum = [0.0]
    for (a, _), (b, _) in zip(plan.samples, plan.samples[1:]):
        cum.append(cum[-1] + math.hypot(b.x - a.x, b.y - a.y))

    def at(tau: float) -> tuple[float, float]:
        u = min(max(tau / plan.dt, 0.0), len(plan.samples) - 1.0)
        k = min(int(math.floor(u)), len(plan.samples) - 2)
        f = u - k
        v0, v1 = plan.samples[k][1], plan.samples[k + 1][1]
        return cum[k] + f * (cum[k + 1] - cum[k]), v0 + f * (v1 - v0)

    return at


def last_safe_intervention_time(
    profile: RiskProfile,
    current_speed: float,
    max_decel: float,
    r_threshold: float = 0.5,
    plan: Optional[Trajectory] = None,
) -> float:
    """Latest brake onset (seconds from now) that still stops before the conflict.

    Without ``plan`` the ego is assumed to hold ``current_speed``; with it, the
    plan's own distance and speed profile are used.
    """
    if not max_decel > 0:
        raise ValueError("max_decel must be > 0")
    tc = profile.first_at_least(r_threshold)
    if tc is None:
        return math.inf
    if plan is None:
        return max(0.0, tc - current_speed / (2.0 * max_decel))
    tc = min(tc, plan.horizon)
    at = _path_length_fn(plan)
    d = at(tc)[0]

    def g(tau: float) -> float:
        s, v = at(tau)
        return s + v * v / (2.0 * max_decel)

    if g(0.0) > d:
        return 0.0
    grid = [k * plan.dt for k in range(int(math.floor(tc / plan.dt + 1e-9)) + 1)] + [tc]
    lo = 0.0
    for hi in grid[1:]:
        if hi <= lo:
            continue
        if g(hi) > d:
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if g(mid) > d:
                    hi = mid
                else:
                    lo = mid
            return lo
        lo = hi
    return tc


def _associate(objs_i, objs_j, radius: float) -> list[tuple[int, int]]:
    cands = []
    for a, oa in enumerate(objs_i):
        for b, ob in enumerate(objs_j):
            d = math.hypot(oa.pose.x - ob.pose.x, oa.pose.y - ob.pose.y)
            if d <= radius:
                cands.append((d, a, b))
    cands.sort()
    used_a, used_b, pairs = set(), set(), []
    for _, a, b in cands:
        if a in used_a or b in used_b:
            continue
        used_a.add(a)
        used_b.add(b)
        pairs.append((a, b))
    return pairs


def _xy(traj: Trajectory) -> np.ndarray:
    return np.array([(p.x, p.y) for p, _ in traj.samples], dtype=float)


def plan_divergence(a: Trajectory, b: Trajectory) -> float:
    """Largest distance between the two plans at the first plan's sample times."""
    horizon = min(a.horizon, b.horizon)
    n = int(math.floor(horizon / a.dt + 1e-9)) + 1
    pa = _xy(a)[:n]
    t = np.minimum(a.t0 + a.dt * np.arange(n), b.t_end)
    xb = _xy(b)
    tb = b.t0 + b.dt * np.arange(len(xb))
    dx = pa[:, 0] - np.interp(t, tb, xb[:, 0])
    dy = pa[:, 1] - np.interp(t, tb, xb[:, 1])
    return float(np.hypot(dx, dy).max())


def _canon_less(a: ChannelState, b: ChannelState) -> bool:
    if a.channel_id != b.channel_id:
        return a.channel_id < b.channel_id
    return (repr(a.world.objects), repr(a.plan.samples)) < (repr(b.world.objects), repr(b.plan.samples))


def similarity(
    state_i: ChannelState,
    state_j: ChannelState,
    assoc_radius: float = 2.0,
    d_scale: float = 5.0,
) -> tuple[float, PairMismatch]:
    """Agreement of two channel states in [0, 1] plus what disagreed."""
    if abs(state_i.world.timestamp - state_j.world.timestamp) > _T_EPS:
        raise MismatchedTimestamps(f"{state_i.world.timestamp} != {state_j.world.timestamp}")
    if _canon_less(state_j, state_i):
        score, m = similarity(state_j, state_i, assoc_radius, d_scale)
        return score, PairMismatch(m.missed_by_i, m.missed_by_j, m.plan_divergence)
    oi, oj = state_i.world.objects, state_j.world.objects
    pairs = _associate(oi, oj, assoc_radius)
    ma = {a for a, _ in pairs}
    mb = {b for _, b in pairs}
    frac_i = len(pairs) / len(oi) if oi else 1.0
    frac_j = len(pairs) / len(oj) if oj else 1.0
    if state_i.plan is state_j.plan:
        div = 0.0
    else:
        div = max(plan_divergence(state_i.plan, state_j.plan), plan_divergence(state_j.plan, state_i.plan))
    terms = (frac_i, frac_j, math.exp(-div / d_scale))
    score = 0.0 if min(terms) <= 0 else 3.0 / sum(1.0 / x for x in terms)
    mism = PairMismatch(
        tuple(o.id for a, o in enumerate(oi) if a not in ma),
        tuple(o.id for b, o in enumerate(oj) if b not in mb),
        div,
    )
    return min(1.0, score), mism


def similarity_report(
    states: Sequence[ChannelState],
    assoc_radius: float = 2.0,
    d_scale: float = 5.0,
) -> SimilarityReport:
    n = len(states)
    mat = [[1.0] * n for _ in range(n)]
    mism = []
    for i in range(n):
        for j in range(i + 1, n):
            score, m = similarity(states[i], states[j], assoc_radius, d_scale)
            mat[i][j] = mat[j][i] = score
            mism.append(((i, j), m))
            mism.append(((j, i), PairMismatch(m.missed_by_i, m.missed_by_j, m.plan_divergence)))
    return SimilarityReport(
        tuple(s.channel_id for s in states), tuple(tuple(r) for r in mat), tuple(sorted(mism))
    )


def temporal_credit(history: Sequence[bool], k: int) -> float:
    """Confidence from the trailing run of consecutive matches."""
    if k < 1:
        raise ValueError("K must be >= 1")
    run = 0
    for m in history:
        run = run + 1 if m else 0
    return min(1.0, run / k)
