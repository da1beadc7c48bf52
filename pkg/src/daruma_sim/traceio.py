"""CSV/JSON serialization of run traces, metrics and configuration."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import replace
from pathlib import Path
from typing import Optional, Union

from .harness import Metrics, RunTrace, TickRecord
from .scenario import Scenario, dump_scenario


def fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6g}"


def quantize(x: float) -> float:
    return float(fmt(x))


def trace_header(channel_ids) -> list[str]:
    return (
        ["t", "ego_x", "ego_y", "ego_heading", "ego_speed", "selected_channel", "action"]
        + [f"score_{c}" for c in channel_ids]
        + [f"lsit_{c}" for c in channel_ids]
        + ["active_ois", "hazard"]
    )


def _fmt_ois(pairs) -> str:
    return ";".join(f"{c}:{oi}" for c, oi in pairs)


def _parse_ois(text: str) -> tuple[tuple[int, int], ...]:
    if not text:
        return ()
    out = []
    for item in text.split(";"):
        c, oi = item.split(":")
        out.append((int(c), int(oi)))
    return tuple(out)


def _fmt_hazards(hz) -> str:
    return ";".join(f"{kind}:{'-'.join(str(p) for p in parts)}" for kind, parts in hz)


def _parse_hazards(text: str):
    if not text:
        return ()
    out = []
    for item in text.split(";"):
        kind, parts = item.split(":")
        out.append((kind, tuple(int(p) for p in parts.split("-")) if parts else ()))
    return tuple(out)


def write_trace_csv(trace: RunTrace, path: Union[str, Path]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace_header(trace.channel_ids))
        for r in trace.records:
            w.writerow(
                [fmt(r.t), fmt(r.ego_x), fmt(r.ego_y), fmt(r.ego_heading), fmt(r.ego_speed), r.selected_channel, r.action]
                + [fmt(s) for s in r.scores]
                + [fmt(s) for s in r.lsits]
                + [_fmt_ois(r.active_ois), _fmt_hazards(r.hazards)]
            )


def read_trace_csv(path: Union[str, Path], metadata: Optional[dict] = None) -> RunTrace:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    ids = tuple(int(h[len("score_"):]) for h in header if h.startswith("score_"))
    n = len(ids)
    records = []
    for row in rows[1:]:
        scores = tuple(float(v) for v in row[7 : 7 + n])
        lsits = tuple(float(v) for v in row[7 + n : 7 + 2 * n])
        records.append(
            TickRecord(
                t=float(row[0]),
                ego_x=float(row[1]),
                ego_y=float(row[2]),
                ego_heading=float(row[3]),
                ego_speed=float(row[4]),
                selected_channel=int(row[5]),
                action=row[6],
                scores=scores,
                lsits=lsits,
                active_ois=_parse_ois(row[7 + 2 * n]),
                hazards=_parse_hazards(row[8 + 2 * n]),
            )
        )
    return RunTrace(ids, tuple(records), dict(metadata or {}))


def quantize_trace(trace: RunTrace) -> RunTrace:
    """The trace as it looks after a CSV round trip."""
    recs = tuple(
        replace(
            r,
            t=quantize(r.t),
            ego_x=quantize(r.ego_x),
            ego_y=quantize(r.ego_y),
            ego_heading=quantize(r.ego_heading),
            ego_speed=quantize(r.ego_speed),
            scores=tuple(quantize(s) for s in r.scores),
            lsits=tuple(quantize(s) for s in r.lsits),
        )
        for r in trace.records
    )
    return RunTrace(trace.channel_ids, recs, trace.metadata)


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def emit(
    trace: RunTrace,
    metrics: Metrics,
    out_dir: Union[str, Path],
    scenario: Optional[Scenario] = None,
    plot_data: bool = True,
) -> list[Path]:
    """Write trace.csv, metrics.json, config.json and optional plot series."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "trace.csv", out / "metrics.json"]
    write_trace_csv(trace, written[0])
    _dump_json({"metadata": trace.metadata, "metrics": metrics.to_dict()}, written[1])
    if scenario is not None:
        p = out / "config.json"
        _dump_json({"metadata": trace.metadata, "scenario": dump_scenario(scenario)}, p)
        written.append(p)
    if plot_data:
        written += _write_plot_data(trace, out)
    return written


def _write_plot_data(trace: RunTrace, out: Path) -> list[Path]:
    ids = trace.channel_ids
    sp = out / "scores.csv"
    with open(sp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["t"]
        for c in ids:
            head += [f"score_{c}", f"risk_term_{c}", f"sim_term_{c}", f"pref_term_{c}", f"lsit_{c}"]
        w.writerow(head)
        for r in trace.records:
            row = [fmt(r.t)]
            for k in range(len(ids)):
                terms = r.terms[k] if r.terms else (math.nan,) * 3
                row += [fmt(r.scores[k]), *(fmt(x) for x in terms), fmt(r.lsits[k])]
            w.writerow(row)
    rp = out / "risk.csv"
    with open(rp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"peak_{a}_{b}" for a in ids for b in ids])
        for r in trace.records:
            peaks = [fmt(v) for row in r.risk_peaks for v in row] if r.risk_peaks else ["nan"] * len(ids) ** 2
            w.writerow([fmt(r.t)] + peaks)
    return [sp, rp]
