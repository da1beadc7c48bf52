"""Safety fusion into per-channel scores and the runtime arbiter."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .cross import RiskMatrix, RiskProfile, SimilarityReport, last_safe_intervention_time
from .errors import DimensionMismatch, UnknownCurrentChannel
from .types import CapabilityProfile, ChannelState, ObjectState, Pose2D, Trajectory

SCORE_EPS = 1e-9


@dataclass(frozen=True)
class FusionConfig:
    w_risk: float = 0.6
    w_sim: float = 0.2
    w_pref: float = 0.2
    binary_mode: bool = False
    risk_aggregation: str = "peak"  # or "discounted"
    discount_lambda: float = 0.0  # per second, used when discounted
    score_floor_on_fault: float = 0.0
    max_decel: float = 6.0
    r_threshold: float = 0.5

    def __post_init__(self) -> None:
        ws = (self.w_risk, self.w_sim, self.w_pref)
        if any(w < 0 for w in ws) or abs(sum(ws) - 1.0) > 1e-9:
            raise ValueError(f"fusion weights must be >= 0 and sum to 1, got {ws}")
        if self.risk_aggregation not in ("peak", "discounted"):
            raise ValueError(f"unknown risk_aggregation {self.risk_aggregation!r}")
        if self.risk_aggregation == "discounted" and not self.discount_lambda > 0:
            raise ValueError("discounted aggregation needs discount_lambda > 0")
        if self.score_floor_on_fault != 0.0:
            raise ValueError("score_floor_on_fault must be 0")
        if not self.max_decel > 0:
            raise ValueError("max_decel must be > 0")


@dataclass(frozen=True)
class AggregatedSafetyScore:
    channel_id: int
    score: float
    risk_term: float
    sim_term: float
    pref_term: float
    fault_ok: bool = True
    odd_ok: bool = True
    lsit: float = math.inf

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if not (self.fault_ok and self.odd_ok) and self.score != 0.0:
            raise ValueError("gated channel must score 0")


@dataclass(frozen=True)
class ArbiterConfig:
    min_dwell: float = 1.0
    switch_margin: float = 0.05
    fallback_threshold: float = 0.5
    lsit_guard: float = 0.3

    def __post_init__(self) -> None:
        if self.min_dwell < 0 or self.switch_margin < 0 or self.lsit_guard < 0:
            raise ValueError("min_dwell, switch_margin and lsit_guard must be >= 0")
        if not 0.0 <= self.fallback_threshold <= 1.0:
            raise ValueError("fallback_threshold must lie in [0, 1]")


@dataclass(frozen=True)
class ArbiterDecision:
    action: str  # keep, switch, fallback_mrm
    channel: int  # kept channel, switch target, or the current channel on fallback
    reason: str
    t: float


def _aggregate(profile: RiskProfile, cfg: FusionConfig) -> float:
    if cfg.risk_aggregation == "peak":
        return profile.peak
    return max(
        (r * math.exp(-cfg.discount_lambda * k * profile.dt) for k, r in enumerate(profile.values)),
        default=0.0,
    )


def fuse_scores(
    matrix: RiskMatrix,
    sim: SimilarityReport,
    states: Sequence[ChannelState],
    profiles: Sequence[CapabilityProfile],
    cfg: FusionConfig = FusionConfig(),
) -> list[AggregatedSafetyScore]:
    """Weighted, fault/ODD-gated safety score per channel."""
    n = matrix.n
    if not (len(states) == len(profiles) == n == len(sim.pairwise)):
        raise DimensionMismatch(
            f"matrix n={n}, similarity n={len(sim.pairwise)}, states={len(states)}, profiles={len(profiles)}"
        )
    ids = tuple(s.channel_id for s in states)
    if ids != matrix.channel_ids or ids != sim.channel_ids:
        raise DimensionMismatch("channel ids differ between matrix, similarity and states")
    top_pref = max(p.preference_weight for p in profiles)
    out = []
    for i, st in enumerate(states):
        row = matrix.cells[i]
        risk_term = 1.0 - max(_aggregate(c, cfg) for c in row)
        others = [sim.pairwise[i][j] for j in range(n) if j != i]
        sim_term = sum(others) / len(others) if others else 1.0
        pref_term = profiles[i].preference_weight / top_pref if top_pref > 0 else 0.0
        raw = cfg.w_risk * risk_term + cfg.w_sim * sim_term + cfg.w_pref * pref_term
        raw = min(1.0, max(0.0, raw))
        gate = st.fault_ok and st.odd_ok
        score = (1.0 if raw >= 0.5 else 0.0) if cfg.binary_mode else raw
        if not gate:
            score = cfg.score_floor_on_fault
        speed = st.plan.samples[0][1]
        # LSIT grows with the conflict time, so the earliest conflict in the row decides
        first = [(c.first_at_least(cfg.r_threshold), k) for k, c in enumerate(row)]
        hits = [(tc, k) for tc, k in first if tc is not None]
        if hits:
            lsit = last_safe_intervention_time(row[min(hits)[1]], speed, cfg.max_decel, cfg.r_threshold, plan=st.plan)
        else:
            lsit = math.inf
        out.append(AggregatedSafetyScore(st.channel_id, score, risk_term, sim_term, pref_term, st.fault_ok, st.odd_ok, lsit))
    return out


def best_channel(scores: Sequence[AggregatedSafetyScore]) -> AggregatedSafetyScore:
    """Highest score; near-ties go to higher preference, then lower id."""
    top = max(s.score for s in scores)
    tied = [s for s in scores if s.score >= top - SCORE_EPS]
    return min(tied, key=lambda s: (-s.pref_term, s.channel_id))


def arbitrate(
    scores: Sequence[AggregatedSafetyScore],
    current: int,
    t: float,
    last_switch_t: float,
    cfg: ArbiterConfig = ArbiterConfig(),
) -> ArbiterDecision:
    if not scores:
        raise ValueError("arbitrate needs at least one score")
    by_id = {s.channel_id: s for s in scores}
    if current not in by_id:
        raise UnknownCurrentChannel(f"current channel {current} not among {sorted(by_id)}")
    best = best_channel(scores)
    if best.score < cfg.fallback_threshold:
        return ArbiterDecision("fallback_mrm", current, "no_channel_above_threshold", t)
    if all(s.lsit < cfg.lsit_guard for s in scores):
        return ArbiterDecision("fallback_mrm", current, "all_lsit_below_guard", t)
    cur = by_id[current]
    if best.channel_id == current:
        return ArbiterDecision("keep", current, "current_is_best", t)
    dwell_ok = t - last_switch_t >= cfg.min_dwell - SCORE_EPS
    if not (cur.fault_ok and cur.odd_ok):
        # a gated incumbent must hand over now, margin or not
        if dwell_ok:
            return ArbiterDecision("switch", best.channel_id, "current_gated", t)
        return ArbiterDecision("fallback_mrm", current, "current_gated_dwell", t)
    if best.score - cur.score > cfg.switch_margin:
        if dwell_ok:
            return ArbiterDecision("switch", best.channel_id, "better_channel", t)
        return ArbiterDecision("keep", current, "dwell", t)
    return ArbiterDecision("keep", current, "within_margin", t)


def fallback_plan(
    ego: ObjectState | tuple[Pose2D, float],
    max_decel: float,
    t0: float = 0.0,
    horizon: float = 5.0,
    dt: float = 0.1,
) -> Trajectory:
    """Straight-line constant-deceleration stop along the current heading."""
    if not max_decel > 0:
        raise ValueError("max_decel must be > 0")
    if isinstance(ego, ObjectState):
        pose, v0 = ego.pose, ego.speed
    else:
        pose, v0 = ego
    t_stop = v0 / max_decel
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    samples = []
    for k in range(int(round(horizon / dt)) + 1):
        tau = min(k * dt, t_stop)
        dist = v0 * tau - 0.5 * max_decel * tau * tau
        v = max(0.0, v0 - max_decel * k * dt)
        samples.append((Pose2D(pose.x + c * dist, pose.y + s * dist, pose.heading), v))
    return Trajectory(t0, dt, tuple(samples))

