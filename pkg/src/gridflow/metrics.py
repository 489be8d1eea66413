"""Evaluation metrics computed from episode traces.

Per-episode numbers (success, sum-of-costs, makespan, throughput,
coordination) come straight from one trace. Performance is relative: it
needs the best competitor on the same instance, so it is attached across a
set of reports. Scalability compares engine-measured policy latencies at two
agent counts. All ratios are oriented so 1.0 is best.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field as dc_field

from .errors import EmptyGroup, MissingBest, OrderViolation
from .sim import EpisodeTrace, MODE_LIFELONG, MODE_ONESHOT


def performance(
    soc=None,
    soc_best=None,
    solved=None,
    mode: str = MODE_ONESHOT,
    throughput=None,
    throughput_best=None,
) -> float:
    """Relative quality against the best algorithm in the comparison set.

    One-shot: 0 when unsolved, else soc_best / soc (1.0 when both are zero,
    which happens when every agent starts on its goal). Lifelong:
    throughput / throughput_best with the same zero convention.
    """
    if mode == MODE_LIFELONG:
        if throughput_best is None:
            raise MissingBest("throughput_best is required in lifelong mode")
        if throughput_best == 0:
            return 1.0 if throughput == 0 else 0.0
        return throughput / throughput_best
    if not solved:
        return 0.0
    if soc_best is None:
        raise MissingBest("soc_best is required for solved one-shot episodes")
    if soc == 0 and soc_best == 0:
        return 1.0
    return soc_best / soc


def coordination(num_collisions: int, num_agents: int, episode_length: int) -> float:
    """1 - collisions / (agents * steps), clamped into [0, 1]."""
    if num_collisions < 0 or num_agents < 0 or episode_length < 0:
        raise ValueError("coordination inputs must be non-negative")
    denom = num_agents * episode_length
    if denom == 0:
        return 1.0
    value = 1.0 - num_collisions / denom
    return max(0.0, min(1.0, value))


def scalability(runtime_1: float, agents_1: int, runtime_2: float, agents_2: int) -> float:
    """Runtime ratio over agent-count ratio for agents_1 < agents_2.

    Constant runtime across agent counts scores agents_2/agents_1 (> 1);
    runtime growing linearly with agents scores exactly 1.0.
    """
    if agents_1 >= agents_2:
        raise OrderViolation(f"need agents_1 < agents_2, got {agents_1} vs {agents_2}")
    if runtime_1 <= 0 or runtime_2 <= 0:
        raise ValueError("runtimes must be positive")
    return (runtime_1 / runtime_2) / (agents_1 / agents_2)


def pathfinding(single_agent_soc, optimal_soc, found: bool) -> float:
    """Single-agent optimality ratio, 1.0 when the path is shortest possible."""
    if not found:
        return 0.0
    if single_agent_soc == 0 and optimal_soc == 0:
        return 1.0
    return optimal_soc / single_agent_soc


@dataclass
class MetricReport:
    instance_id: str
    mode: str
    num_agents: int
    steps: int
    csr: float | None = None
    soc: int | None = None
    makespan: int | None = None
    throughput: float | None = None
    collisions: int = 0
    invalid_actions: int = 0
    coordination: float = 1.0
    performance: float | None = None
    mean_latency_ms: float = 0.0
    extra: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "instance_id": self.instance_id,
            "mode": self.mode,
            "num_agents": self.num_agents,
            "steps": self.steps,
            "csr": self.csr,
            "soc": self.soc,
            "makespan": self.makespan,
            "throughput": self.throughput,
            "collisions": self.collisions,
            "invalid_actions": self.invalid_actions,
            "coordination": self.coordination,
            "performance": self.performance,
            "mean_latency_ms": self.mean_latency_ms,
        }
        out.update(self.extra)
        return out


def episode_metrics(trace: EpisodeTrace) -> MetricReport:
    """One trace in, one report out. Performance stays None until attached."""
    header, result = trace.header, trace.result
    return MetricReport(
        instance_id=header["instance_id"],
        mode=header["mode"],
        num_agents=header["num_agents"],
        steps=result["steps"],
        csr=result.get("csr"),
        soc=result.get("soc"),
        makespan=result.get("makespan"),
        throughput=result.get("throughput"),
        collisions=result["collisions"],
        invalid_actions=result["invalid_actions"],
        coordination=coordination(
            result["collisions"], header["num_agents"], result["steps"]
        ),
        mean_latency_ms=result.get("mean_latency_ms", 0.0),
    )


def attach_performance(reports: list[MetricReport]) -> None:
    """Fill in performance across reports of the same instance.

    The best SoC (or throughput) is taken over this very set, so the report
    set defines the comparison pool. Groups by instance id.
    """
    groups: dict = {}
    for r in reports:
        groups.setdefault(r.instance_id, []).append(r)
    for group in groups.values():
        lifelong = [r for r in group if r.mode == MODE_LIFELONG]
        oneshot = [r for r in group if r.mode != MODE_LIFELONG]
        if lifelong:
            best = max(r.throughput or 0.0 for r in lifelong)
            for r in lifelong:
                r.performance = performance(
                    mode=MODE_LIFELONG, throughput=r.throughput or 0.0, throughput_best=best
                )
        solved = [r for r in oneshot if r.csr]
        if oneshot:
            best_soc = min(r.soc for r in solved) if solved else None
            for r in oneshot:
                if not r.csr:
                    r.performance = 0.0
                else:
                    r.performance = performance(r.soc, best_soc, solved=True)


_DATASET_ID = re.compile(r"^(?P<map>.+)-a\d+-c\d+$")


def _map_label(instance_id: str) -> str:
    m = _DATASET_ID.match(instance_id)
    return m.group("map") if m else instance_id


AGGREGATE_COLUMNS = (
    "map",
    "num_agents",
    "episodes",
    "csr",
    "mean_soc",
    "mean_makespan",
    "mean_throughput",
    "mean_coordination",
    "mean_performance",
    "mean_collisions",
)


def aggregate(reports: list[MetricReport]) -> list[dict]:
    """Summary rows per (map label, agent count), sorted by key.

    Instance ids of the form "<map>-a<agents>-c<k>" group by their map stem;
    anything else groups by the full id. Means of soc and makespan cover
    solved episodes only and are None when nothing solved.
    """
    if not reports:
        raise EmptyGroup("no reports to aggregate")
    groups: dict = {}
    for r in reports:
        groups.setdefault((_map_label(r.instance_id), r.num_agents), []).append(r)
    rows = []
    for (label, n_agents), group in sorted(groups.items()):
        solved = [r for r in group if r.csr]
        lifelong = [r for r in group if r.throughput is not None]
        scored = [r for r in group if r.performance is not None]
        rows.append(
            {
                "map": label,
                "num_agents": n_agents,
                "episodes": len(group),
                "csr": _mean([r.csr for r in group if r.csr is not None]),
                "mean_soc": _mean([r.soc for r in solved]),
                "mean_makespan": _mean([r.makespan for r in solved]),
                "mean_throughput": _mean([r.throughput for r in lifelong]),
                "mean_coordination": _mean([r.coordination for r in group]),
                "mean_performance": _mean([r.performance for r in scored]),
                "mean_collisions": _mean([float(r.collisions) for r in group]),
            }
        )
    return rows


def _mean(values):
    values = [v for v in values if v is not None]
    if not values:
        return None
    return sum(values) / len(values)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=AGGREGATE_COLUMNS)
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in AGGREGATE_COLUMNS})
    return buf.getvalue()


def rows_to_json(rows: list[dict]) -> str:
    return json.dumps(rows, indent=2, sort_keys=True) + "\n"
