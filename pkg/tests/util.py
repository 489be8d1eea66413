"""Shared helpers for generating random test instances."""

import numpy as np

from gridflow.core import Instance
from gridflow.grid import GridMap, bfs_distance


def random_connected_instance(seed, height=16, width=16, density=0.2, num_agents=8):
    """Random obstacle grid plus agents whose goals are reachable.

    Retries placement until every start can reach its goal, so the instance
    is always solvable for each agent in isolation.
    """
    rng = np.random.default_rng(seed)
    for _ in range(200):
        cells = rng.random((height, width)) < density
        grid = GridMap(height, width, cells)
        free = grid.free_cells()
        if len(free) < 2 * num_agents:
            continue
        idx = rng.choice(len(free), size=2 * num_agents, replace=False)
        starts = [free[i] for i in idx[:num_agents]]
        goals = [free[i] for i in idx[num_agents:]]
        fields = {}
        ok = True
        for s, g in zip(starts, goals):
            if g not in fields:
                fields[g] = bfs_distance(grid, g)
            if fields[g].at(s) < 0:
                ok = False
                break
        if ok:
            return Instance(grid, starts, goals, id=f"rand-{seed}")
    raise RuntimeError(f"could not build a solvable instance for seed {seed}")
