"""Reference solvers: prioritized space-time A* and a one-step PIBT rule.

solve_prioritized plans agents one at a time against a reservation table of
the paths already committed, restarting with a reshuffled priority order when
some agent cannot be routed. It is deliberately suboptimal but fast, and
every solution it declares is collision-free and validator-clean.

solve_pibt_step computes a single collision-free joint action by priority
inheritance with backtracking: each agent greedily chases its goal distance,
and when it wants a cell occupied by an undecided agent, that agent must move
first or the candidate is abandoned.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass
from heapq import heappop, heappush

from .core import Instance, Solution
from .errors import ExpertTimeout, Unsolvable
from .grid import ACTION_DELTAS, CellAction, action_between

_MOVE_ORDER = (
    (int(CellAction.WAIT), 0, 0),
    (int(CellAction.UP), -1, 0),
    (int(CellAction.DOWN), 1, 0),
    (int(CellAction.LEFT), 0, -1),
    (int(CellAction.RIGHT), 0, 1),
)

_INF = 1 << 30


@dataclass
class ExpertConfig:
    timeout_ms: int = 30_000
    max_restarts: int = 50
    seed: int = 0


def _neighbor_table(grid):
    """For each free cell index: tuple of (action_id, neighbor_index), wait first."""
    w = grid.width
    cells = grid.cells
    table: list[tuple] = [()] * (grid.height * w)
    for r in range(grid.height):
        for c in range(grid.width):
            if cells[r, c]:
                continue
            entries = []
            for action, dr, dc in _MOVE_ORDER:
                nr, nc = r + dr, c + dc
                if 0 <= nr < grid.height and 0 <= nc < w and not cells[nr, nc]:
                    entries.append((action, nr * w + nc))
            table[r * w + c] = tuple(entries)
    return table


def solve_prioritized(instance: Instance, config: ExpertConfig | None = None) -> Solution:
    """Plan all agents sequentially; restart with new priorities on failure.

    Raises ExpertTimeout when the wall-clock budget runs out and
    Unsolvable(agent, restarts) when every priority order failed.
    """
    config = config or ExpertConfig()
    grid = instance.grid
    n_agents = instance.num_agents
    w = grid.width
    n_cells = grid.height * w
    nbrs = _neighbor_table(grid)

    dist_fields = instance.distance_fields()
    dists = [f.dist.ravel().tolist() for f in dist_fields]
    starts = [r * w + c for r, c in instance.starts]
    goals = [r * w + c for r, c in instance.goals]
    for i in range(n_agents):
        if dists[i][starts[i]] < 0:
            raise Unsolvable(i, 0)

    max_bfs = max(max(d) for d in dists)
    horizon = 4 * (grid.height + grid.width) + max_bfs
    t_span = horizon + 2

    deadline = None
    if config.timeout_ms is not None:
        deadline = time.monotonic() + config.timeout_ms / 1000.0

    rng = random.Random(config.seed)
    # First attempt: longest shortest-path first; restarts reshuffle.
    base_order = sorted(range(n_agents), key=lambda i: (-dists[i][starts[i]], i))

    last_failed = -1
    for restart in range(config.max_restarts + 1):
        if restart == 0:
            order = base_order
        else:
            order = list(range(n_agents))
            rng.shuffle(order)
        paths = _plan_order(
            order, starts, goals, dists, nbrs, n_cells, t_span, horizon, deadline
        )
        if isinstance(paths, int):
            last_failed = paths
            if deadline is not None and time.monotonic() > deadline:
                raise ExpertTimeout(f"expert timed out after {restart + 1} attempts")
            continue
        out = []
        for idx in paths:
            out.append([(v // w, v % w) for v in idx])
        return Solution(out)
    raise Unsolvable(last_failed, config.max_restarts)


def _plan_order(order, starts, goals, dists, nbrs, n_cells, t_span, horizon, deadline):
    """Plan agents in the given order. Returns paths (agent-indexed) or the
    id of the first agent that could not be routed."""
    vtx: set[int] = set()  # cell * t_span + t
    edges: set[int] = set()  # (u * n_cells + v) * t_span + t  (depart u at t)
    target_from = [_INF] * n_cells  # cell blocked forever from this time
    last_vtx = [-1] * n_cells  # latest vertex reservation per cell
    paths: list[list[int] | None] = [None] * len(order)

    for agent in order:
        path = _space_time_astar(
            starts[agent],
            goals[agent],
            dists[agent],
            nbrs,
            vtx,
            edges,
            target_from,
            last_vtx[goals[agent]] + 1,
            n_cells,
            t_span,
            horizon,
            deadline,
        )
        if path is None:
            return agent
        for t, v in enumerate(path):
            vtx.add(v * t_span + t)
            if t > last_vtx[v]:
                last_vtx[v] = t
        for t in range(len(path) - 1):
            u, v = path[t], path[t + 1]
            if u != v:
                edges.add((u * n_cells + v) * t_span + t)
        target_from[goals[agent]] = len(path) - 1
        paths[agent] = path
    return paths


def _space_time_astar(
    start,
    goal,
    dist,
    nbrs,
    vtx,
    edges,
    target_from,
    goal_clear_time,
    n_cells,
    t_span,
    horizon,
    deadline,
):
    """A* over (cell, timestep). Arrival at the goal counts only from
    goal_clear_time onward, after which resting there is safe forever."""
    h0 = dist[start]
    open_heap = [(h0, h0, 0, 0, start, 0)]
    parents = {start * t_span + 0: -1}
    seq = 1
    expansions = 0
    while open_heap:
        f, h, _, _, cell, t = heappop(open_heap)
        if cell == goal and t >= goal_clear_time:
            out = []
            key = cell * t_span + t
            while key != -1:
                out.append(key // t_span)
                key = parents[key]
            out.reverse()
            return out
        expansions += 1
        if deadline is not None and expansions % 4096 == 0 and time.monotonic() > deadline:
            return None
        nt = t + 1
        if nt > horizon:
            continue
        for action, nbr in nbrs[cell]:
            if dist[nbr] < 0:
                continue
            if nt >= target_from[nbr]:
                continue
            key = nbr * t_span + nt
            if key in parents:
                continue
            if key in vtx:
                continue
            if nbr != cell and (nbr * n_cells + cell) * t_span + t in edges:
                continue
            parents[key] = cell * t_span + t
            hn = dist[nbr]
            heappush(open_heap, (nt + hn, hn, action, seq, nbr, nt))
            seq += 1
    return None


def solve_pibt_step(
    instance, current_positions, priorities, distance_fields, rng=None
) -> list[CellAction]:
    """One collision-free joint action via priority inheritance.

    Agents are decided from highest priority down. Each tries its candidate
    cells ordered by goal distance; ties break by action id, or randomly when
    an rng is given (random tie-breaking lets repeated calls escape the
    shoving cycles that a fixed order can fall into). Claiming a cell
    occupied by an undecided agent forces that agent to decide first, and if
    it cannot escape, the candidate is abandoned. The joint step never
    collides.
    """
    grid = instance.grid
    n = len(current_positions)
    undecided = (-1, -1)
    next_pos: list = [undecided] * n
    occupied_now = {tuple(p): i for i, p in enumerate(current_positions)}
    occupied_nxt: dict = {}

    def dist_of(i, cell):
        d = distance_fields[i].at(cell)
        return d if d >= 0 else _INF

    def decide(i) -> bool:
        here = tuple(current_positions[i])
        candidates = [(CellAction.WAIT, here)]
        for action in (CellAction.UP, CellAction.DOWN, CellAction.LEFT, CellAction.RIGHT):
            dr, dc = ACTION_DELTAS[action]
            dest = (here[0] + dr, here[1] + dc)
            if grid.is_free(dest):
                candidates.append((action, dest))
        if rng is None:
            candidates.sort(key=lambda ad: (dist_of(i, ad[1]), int(ad[0])))
        else:
            candidates.sort(key=lambda ad: (dist_of(i, ad[1]), rng.random()))
        for _, dest in candidates:
            if dest in occupied_nxt:
                continue
            j = occupied_now.get(dest)
            if j is not None and j != i and next_pos[j] == here:
                continue  # would swap along the edge
            next_pos[i] = dest
            occupied_nxt[dest] = i
            if j is not None and j != i and next_pos[j] == undecided and not decide(j):
                continue  # j is boxed in; it has force-claimed its own cell
            return True
        # Boxed in: claim the current cell (overwrites a parent's tentative hold).
        next_pos[i] = here
        occupied_nxt[here] = i
        return False

    for i in sorted(range(n), key=lambda i: (-priorities[i], i)):
        if next_pos[i] == undecided:
            decide(i)

    return [action_between(tuple(p), next_pos[i]) for i, p in enumerate(current_positions)]
