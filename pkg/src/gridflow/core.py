"""Multi-agent pathfinding instances, solutions, collisions, and validation.

An instance is a grid plus N distinct starts and N distinct goals. A solution
stores one path per agent; after its recorded arrival time an agent rests at
its goal forever, so positions past the end of a path extend with the final
vertex. Two agents collide by occupying one cell at the same timestep (vertex
collision) or by traversing one edge in opposite directions (edge collision).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import (
    CellOnObstacle,
    DuplicateEndpoint,
    GoalOnObstacle,
    LengthMismatch,
    MalformedLine,
)
from .grid import Cell, DistanceField, GridMap, bfs_distance


@dataclass(eq=False)
class Instance:
    grid: GridMap
    starts: list[Cell]
    goals: list[Cell]
    id: str = ""

    def __post_init__(self):
        self.starts = [tuple(s) for s in self.starts]
        self.goals = [tuple(g) for g in self.goals]
        if len(self.starts) != len(self.goals):
            raise LengthMismatch(f"{len(self.starts)} starts vs {len(self.goals)} goals")
        for s in self.starts:
            if not self.grid.is_free(s):
                raise CellOnObstacle(f"start {s} is not a free cell")
        for g in self.goals:
            if not self.grid.is_free(g):
                raise GoalOnObstacle(f"goal {g} is not a free cell")
        if len(set(self.starts)) != len(self.starts):
            raise DuplicateEndpoint("starts are not pairwise distinct")
        if len(set(self.goals)) != len(self.goals):
            raise DuplicateEndpoint("goals are not pairwise distinct")

    @property
    def num_agents(self) -> int:
        return len(self.starts)

    def distance_fields(self) -> list[DistanceField]:
        """One BFS distance-to-goal field per agent, in agent order."""
        cache: dict[Cell, DistanceField] = {}
        out = []
        for g in self.goals:
            if g not in cache:
                cache[g] = bfs_distance(self.grid, g)
            out.append(cache[g])
        return out


def _arrival_time(path: list[Cell]) -> int:
    """Earliest index from which the path stays at its final vertex."""
    last = path[-1]
    t = len(path) - 1
    while t > 0 and path[t - 1] == last:
        t -= 1
    return t


@dataclass(eq=False)
class Solution:
    """Agent paths plus arrival times (first timestep of the permanent stay)."""

    paths: list[list[Cell]]
    arrival: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.paths = [[tuple(v) for v in path] for path in self.paths]
        for i, path in enumerate(self.paths):
            if not path:
                raise LengthMismatch(f"path {i} is empty")
        if not self.arrival:
            self.arrival = [_arrival_time(p) for p in self.paths]

    @property
    def num_agents(self) -> int:
        return len(self.paths)

    def position_at(self, agent: int, t: int) -> Cell:
        path = self.paths[agent]
        return path[t] if t < len(path) else path[-1]

    def positions_at(self, t: int) -> list[Cell]:
        return [self.position_at(i, t) for i in range(self.num_agents)]

    def to_json(self, instance_id: str = "") -> str:
        return json.dumps(
            {"instance_id": instance_id, "paths": [[[r, c] for r, c in p] for p in self.paths]}
        )

    @classmethod
    def from_json(cls, text: str) -> "Solution":
        obj = json.loads(text)
        return cls(paths=[[(r, c) for r, c in path] for path in obj["paths"]])


def soc(solution: Solution) -> int:
    """Sum of costs (flowtime): total of all agents' arrival times."""
    return sum(solution.arrival)


def makespan(solution: Solution) -> int:
    """Latest agent arrival time."""
    return max(solution.arrival)


@dataclass(frozen=True)
class Collision:
    kind: str  # "vertex" or "edge"
    agents: tuple[int, int]  # i < j
    t: int
    location: object  # cell for vertex, (cell, cell) for edge

    def to_dict(self) -> dict:
        loc = self.location
        if self.kind == "edge":
            loc = [list(loc[0]), list(loc[1])]
        else:
            loc = list(loc)
        return {"kind": self.kind, "agents": list(self.agents), "t": self.t, "location": loc}


def detect_collisions(instance, positions_t, positions_t1, t: int = 0) -> list[Collision]:
    """All vertex and edge collisions in the joint move positions_t -> positions_t1.

    Vertex collisions are stamped with the arrival timestep t+1; edge
    collisions with the departure timestep t. Every unordered pair appears at
    most once per kind.
    """
    n = instance.num_agents if hasattr(instance, "num_agents") else len(positions_t)
    if len(positions_t) != n or len(positions_t1) != n:
        raise LengthMismatch(
            f"expected {n} positions, got {len(positions_t)} / {len(positions_t1)}"
        )
    out: list[Collision] = []

    by_cell: dict[Cell, list[int]] = {}
    for i, cell in enumerate(positions_t1):
        by_cell.setdefault(cell, []).append(i)
    for cell, members in by_cell.items():
        if len(members) > 1:
            for a in range(len(members)):
                for b in range(a + 1, len(members)):
                    out.append(Collision("vertex", (members[a], members[b]), t + 1, cell))

    by_move: dict[tuple[Cell, Cell], list[int]] = {}
    for i, (u, v) in enumerate(zip(positions_t, positions_t1)):
        if u != v:
            by_move.setdefault((u, v), []).append(i)
    for (u, v), movers in by_move.items():
        for j in by_move.get((v, u), ()):
            for i in movers:
                if i < j:
                    out.append(Collision("edge", (i, j), t, (u, v)))
    return out


@dataclass
class ValidationReport:
    ok: bool
    violations: list[dict]

    def to_json(self) -> str:
        return json.dumps({"ok": self.ok, "violations": self.violations})


def validate(instance: Instance, solution: Solution) -> ValidationReport:
    """Check endpoints, per-step connectivity, and collision-freeness.

    Nothing is raised; every defect becomes one violation record.
    """
    violations: list[dict] = []

    def flag(kind, detail, **extra):
        violations.append({"kind": kind, "detail": detail, **extra})

    if solution.num_agents != instance.num_agents:
        flag(
            "path_count",
            f"{solution.num_agents} paths for {instance.num_agents} agents",
        )
        return ValidationReport(False, violations)

    grid = instance.grid
    for i, path in enumerate(solution.paths):
        if path[0] != instance.starts[i]:
            flag("bad_start", f"agent {i} starts at {path[0]}, expected {instance.starts[i]}", agent=i)
        if path[-1] != instance.goals[i]:
            flag("bad_goal", f"agent {i} ends at {path[-1]}, expected {instance.goals[i]}", agent=i)
        for t, v in enumerate(path):
            if not grid.is_free(v):
                flag("blocked_cell", f"agent {i} occupies non-free cell {v} at t={t}", agent=i, t=t)
        for t in range(len(path) - 1):
            (r0, c0), (r1, c1) = path[t], path[t + 1]
            if abs(r1 - r0) + abs(c1 - c0) > 1:
                flag(
                    "bad_move",
                    f"agent {i} jumps {path[t]} -> {path[t + 1]} at t={t}",
                    agent=i,
                    t=t,
                )

    horizon = max(len(p) for p in solution.paths) - 1
    prev = solution.positions_at(0)
    for t in range(horizon):
        cur = solution.positions_at(t + 1)
        for col in detect_collisions(instance, prev, cur, t):
            record = col.to_dict()
            record["collision_kind"] = record.pop("kind")
            flag("collision", f"{col.kind} collision between agents {col.agents}", **record)
        prev = cur
    # t = 0 vertex overlaps (starts are distinct per Instance, but the paths
    # themselves may disagree with the instance).
    start_positions = solution.positions_at(0)
    seen: dict[Cell, int] = {}
    for i, cell in enumerate(start_positions):
        if cell in seen:
            flag(
                "collision",
                f"vertex collision between agents {(seen[cell], i)}",
                kind_detail="vertex",
                agents=[seen[cell], i],
                t=0,
                location=list(cell),
            )
        else:
            seen[cell] = i

    return ValidationReport(not violations, violations)


def parse_scen(text: str) -> list[tuple[Cell, Cell]]:
    """Parse MovingAI .scen text into (start, goal) cell pairs.

    Columns are bucket, map, width, height, sx, sy, gx, gy, optimal; x is the
    column index and y the row, so cells come back as (sy, sx) and (gy, gx).
    """
    pairs: list[tuple[Cell, Cell]] = []
    for idx, line in enumerate(text.splitlines()):
        stripped = line.strip()
        if not stripped or stripped.lower().startswith("version"):
            continue
        parts = stripped.split("\t")
        if len(parts) == 1:
            parts = stripped.split()
        if len(parts) != 9:
            raise MalformedLine(idx, line, f"expected 9 columns, got {len(parts)}")
        try:
            sx, sy, gx, gy = (int(p) for p in parts[4:8])
        except ValueError as e:
            raise MalformedLine(idx, line, str(e)) from None
        pairs.append(((sy, sx), (gy, gx)))
    return pairs


def render_scen(pairs, map_name: str = "map", width: int = 0, height: int = 0) -> str:
    """Render (start, goal) pairs as MovingAI .scen text; inverse of parse_scen."""
    lines = ["version 1"]
    for (sr, sc), (gr, gc) in pairs:
        lines.append(f"0\t{map_name}\t{width}\t{height}\t{sc}\t{sr}\t{gc}\t{gr}\t0")
    return "\n".join(lines) + "\n"
