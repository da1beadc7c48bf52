"""Experiment runner: single runs, Monte Carlo sweeps and baseline comparison."""
from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence, Union

from .channel import channel_tick
from .cross import risk_matrix, similarity_report
from .fusion import arbitrate, fallback_plan, fuse_scores
from .scenario import (
    ControlCommand,
    Scenario,
    detect_hazards,
    dump_scenario,
    ground_truth_view,
    initial_state,
    step,
)
from .types import ObjectState

ENGAGED_ACTIONS = ("keep", "switch")


@dataclass(frozen=True)
class Mode:
    kind: str  # daruma, single, open_loop
    channel: Optional[int] = None

    @classmethod
    def parse(cls, text: Union[str, "Mode"]) -> "Mode":
        if isinstance(text, Mode):
            return text
        t = text.strip().lower()
        if t == "daruma":
            return cls("daruma")
        if t in ("open_loop", "open-loop"):
            return cls("open_loop")
        if t.startswith("single:"):
            try:
                return cls("single", int(t.split(":", 1)[1]))
            except ValueError:
                pass
        raise ValueError(f"unknown mode {text!r}; expected daruma, single:<k> or open-loop")

    def __str__(self) -> str:
        return f"single:{self.channel}" if self.kind == "single" else self.kind


@dataclass(frozen=True)
class TickRecord:
    t: float
    ego_x: float
    ego_y: float
    ego_heading: float
    ego_speed: float
    selected_channel: int
    action: str  # keep, switch, fallback_mrm, disengage
    scores: tuple[float, ...]
    lsits: tuple[float, ...]
    active_ois: tuple[tuple[int, int], ...]  # (channel id, oi id)
    hazards: tuple[tuple[str, tuple[int, ...]], ...]
    objects: tuple[ObjectState, ...] = field(default=(), compare=False, repr=False)
    risk_peaks: tuple[tuple[float, ...], ...] = field(default=(), compare=False, repr=False)
    terms: tuple[tuple[float, float, float], ...] = field(default=(), compare=False, repr=False)
    reason: str = field(default="", compare=False)
    selected_fi_free: bool = field(default=False, compare=False)
    any_fi_free: bool = field(default=False, compare=False)

    @property
    def engaged(self) -> bool:
        return self.action in ENGAGED_ACTIONS


@dataclass(frozen=True)
class RunTrace:
    channel_ids: tuple[int, ...]
    records: tuple[TickRecord, ...]
    metadata: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class Metrics:
    total_ticks: int
    engaged_ticks: int
    fallback_ticks: int
    disengaged_ticks: int
    engaged_fraction: float
    disengagement_count: int
    fallback_count: int
    switch_count: int
    hazard_count: int
    hazard_ticks: int
    oi_histogram: tuple[int, ...]  # slot k-1 counts OI k
    safe_engaged_fraction: float
    fi_free_available_fraction: float

    def to_dict(self) -> dict[str, Any]:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["oi_histogram"] = {str(i + 1): n for i, n in enumerate(self.oi_histogram)}
        return d


def config_hash(scenario: Scenario) -> str:
    doc = json.dumps(dump_scenario(scenario), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(doc.encode("utf-8")).hexdigest()


def _initial_channel(scenario: Scenario, ids: Sequence[int]) -> int:
    chans = [c for c in scenario.channels if c.channel_id in ids]
    return min(chans, key=lambda c: (-c.capability.preference_weight, c.channel_id)).channel_id


def run(scenario: Scenario, mode: Union[str, Mode] = "daruma", seed: Optional[int] = None) -> tuple[RunTrace, Metrics]:
    """Simulate one scenario in the given mode; deterministic per (scenario, seed, mode)."""
    sc = scenario if seed is None else scenario.with_seed(seed)
    mode = Mode.parse(mode)
    if not sc.channels:
        raise ValueError(f"scenario {sc.name!r} defines no channels")
    chans = [c.materialize(sc.seed, sc.duration) for c in sc.channels]
    if mode.kind == "single":
        chans = [c for c in chans if c.channel_id == mode.channel]
        if not chans:
            raise ValueError(f"mode {mode}: no channel {mode.channel} in scenario {sc.name!r}")
    ids = tuple(c.channel_id for c in chans)
    caps = [c.capability for c in chans]
    an = sc.analysis
    route = sc.route_obj
    fixed = ControlCommand(sc.ego_mode.acceleration) if sc.ego_mode.kind == "open_loop" else None
    if mode.kind == "open_loop":
        fixed = ControlCommand(sc.ego_mode.acceleration if sc.ego_mode.kind == "open_loop" else 0.0)

    current = _initial_channel(sc, ids)
    last_switch = -math.inf
    state = initial_state(sc)
    ego_dims = sc.ego_init.dims
    records = []
    for _ in range(sc.n_ticks):
        t = state.t
        truth = ground_truth_view(state)
        hazards = detect_hazards(state, truth)
        states = [channel_tick(truth, c, route, t, sc.seed, an.horizon, an.dt) for c in chans]
        matrix = risk_matrix(states, ego_dims, an.horizon, an.dt, an)
        sim = similarity_report(states, an.assoc_radius, an.d_scale)
        scores = fuse_scores(matrix, sim, states, caps, sc.fusion)
        if mode.kind == "single":
            dec = arbitrate(scores, current, t, last_switch, sc.arbiter)
            st = states[0]
            own_ok = not st.active_ois and st.fault_ok and st.odd_ok
            engaged = own_ok and dec.action != "fallback_mrm"
            action = "keep" if engaged else "disengage"
            reason = dec.reason if own_ok else "own_insufficiency"
        else:
            dec = arbitrate(scores, current, t, last_switch, sc.arbiter)
            if dec.action == "switch":
                current = dec.channel
                last_switch = t
            action, reason = dec.action, dec.reason
            engaged = action in ENGAGED_ACTIONS
        idx = ids.index(current)
        if engaged:
            plan = states[idx].plan
        else:
            plan = fallback_plan(truth.ego, sc.fusion.max_decel, t, an.horizon, an.dt)
        sel = states[idx]
        records.append(
            TickRecord(
                t=t,
                ego_x=state.ego.pose.x,
                ego_y=state.ego.pose.y,
                ego_heading=state.ego.pose.heading,
                ego_speed=state.ego.speed,
                selected_channel=current,
                action=action,
                scores=tuple(s.score for s in scores),
                lsits=tuple(s.lsit for s in scores),
                active_ois=tuple((s.channel_id, oi) for s in states for oi in s.active_ois),
                hazards=tuple((h.kind, h.participants) for h in hazards),
                objects=truth.objects,
                risk_peaks=tuple(tuple(c.peak for c in row) for row in matrix.cells),
                terms=tuple((s.risk_term, s.sim_term, s.pref_term) for s in scores),
                reason=reason,
                selected_fi_free=not sel.active_ois and sel.fault_ok and sel.odd_ok,
                any_fi_free=any(not s.active_ois and s.fault_ok and s.odd_ok for s in states),
            )
        )
        if sc.halt_on_collision and any(h.kind == "collision" for h in hazards):
            break
        state = step(state, sc.tick_dt, fixed if fixed is not None else plan)
    meta = {"scenario": sc.name, "seed": sc.seed, "mode": str(mode), "config_hash": config_hash(sc)}
    trace = RunTrace(ids, tuple(records), meta)
    return trace, compute_metrics(trace)


def _onsets(seq: Sequence[frozenset]) -> int:
    prev: frozenset = frozenset()
    n = 0
    for cur in seq:
        n += len(cur - prev)
        prev = cur
    return n


def compute_metrics(trace: RunTrace) -> Metrics:
    recs = trace.records
    total = len(recs)
    engaged = sum(r.engaged for r in recs)
    fallback = sum(r.action == "fallback_mrm" for r in recs)
    disengaged = sum(r.action == "disengage" for r in recs)
    hist = [0] * 16
    for ch, oi in _onset_pairs([frozenset(r.active_ois) for r in recs]):
        hist[oi - 1] += 1
    safe = sum(r.engaged and r.selected_fi_free for r in recs)
    avail = sum(r.any_fi_free for r in recs)
    return Metrics(
        total_ticks=total,
        engaged_ticks=engaged,
        fallback_ticks=fallback,
        disengaged_ticks=disengaged,
        engaged_fraction=engaged / total if total else 0.0,
        disengagement_count=_onsets([frozenset({0}) if r.action == "disengage" else frozenset() for r in recs]),
        fallback_count=_onsets([frozenset({0}) if r.action == "fallback_mrm" else frozenset() for r in recs]),
        switch_count=sum(r.action == "switch" for r in recs),
        hazard_count=_onsets([frozenset(r.hazards) for r in recs]),
        hazard_ticks=sum(bool(r.hazards) for r in recs),
        oi_histogram=tuple(hist),
        safe_engaged_fraction=safe / total if total else 0.0,
        fi_free_available_fraction=avail / total if total else 0.0,
    )


def _onset_pairs(seq: Sequence[frozenset]):
    prev: frozenset = frozenset()
    for cur in seq:
        yield from sorted(cur - prev)
        prev = cur


# --- sweeps ---------------------------------------------------------------


def thread_count(threads: Optional[int] = None) -> int:
    if threads is None:
        raw = os.environ.get("DARUMA_SIM_THREADS", "0")
        try:
            threads = int(raw)
        except ValueError:
            raise ValueError(f"DARUMA_SIM_THREADS must be an integer, got {raw!r}") from None
    if threads < 0:
        raise ValueError("thread count must be >= 0")
    return threads or (os.cpu_count() or 1)


def _job(args: tuple[Scenario, str, int]) -> dict[str, Any]:
    sc, mode, seed = args
    _, m = run(sc, mode, seed)
    return {"seed": seed, "mode": mode, **m.to_dict()}


def _run_jobs(jobs: list, threads: Optional[int]) -> list[dict[str, Any]]:
    n = min(thread_count(threads), len(jobs))
    if n <= 1:
        return [_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_job, jobs, chunksize=max(1, len(jobs) // (4 * n))))


_SCALAR_KEYS = tuple(k for k in Metrics.__dataclass_fields__ if k != "oi_histogram")


def aggregate(rows: Sequence[dict[str, Any]]) -> dict[str, Any]:
    """Means of every metric across runs (histogram slots included)."""
    n = len(rows)
    out: dict[str, Any] = {"n_runs": n}
    for k in _SCALAR_KEYS:
        out[k] = sum(r[k] for r in rows) / n
    out["oi_histogram"] = {str(i): sum(r["oi_histogram"][str(i)] for r in rows) / n for i in range(1, 17)}
    return out


@dataclass(frozen=True)
class MonteCarloResult:
    mode: str
    aggregate: dict
    per_run: tuple[dict, ...]


def monte_carlo(
    template: Scenario,
    n_runs: int,
    seed0: int = 0,
    mode: Union[str, Mode] = "daruma",
    threads: Optional[int] = None,
) -> MonteCarloResult:
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    m = str(Mode.parse(mode))
    rows = _run_jobs([(template, m, seed0 + i) for i in range(n_runs)], threads)
    return MonteCarloResult(m, aggregate(rows), tuple(rows))


@dataclass(frozen=True)
class ComparisonReport:
    modes: tuple[str, ...]
    aggregates: dict
    rows: tuple[dict, ...]  # one per (seed, mode), seeds shared across modes

    def table(self) -> str:
        cols = ("engaged_fraction", "hazard_count", "disengagement_count", "fallback_count", "switch_count")
        lines = ["mode\t" + "\t".join(cols)]
        for m in self.modes:
            a = self.aggregates[m]
            lines.append(m + "\t" + "\t".join(f"{a[c]:.6g}" for c in cols))
        return "\n".join(lines) + "\n"


def compare(
    template: Scenario,
    n_runs: int,
    seed0: int = 0,
    threads: Optional[int] = None,
) -> ComparisonReport:
    """Daruma against every single-channel baseline on identical seeds."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    modes = ("daruma",) + tuple(f"single:{c.channel_id}" for c in template.channels)
    jobs = [(template, m, seed0 + i) for i in range(n_runs) for m in modes]
    rows = _run_jobs(jobs, threads)
    aggs = {m: aggregate([r for r in rows if r["mode"] == m]) for m in modes}
    return ComparisonReport(modes, aggs, tuple(rows))
