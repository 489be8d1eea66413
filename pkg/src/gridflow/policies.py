"""Built-in policies that speak the step protocol at the dict level.

Each policy is constructed empty, configured by an init message, and then
answers obs messages with act messages. They are usable in-process (the
episode runner calls them directly) or over stdio via gridflow.policy_host.
"""

from __future__ import annotations

import random

from . import protocol
from .core import Instance
from .errors import ExpertFailure, UnreachableCell
from .expert import ExpertConfig, solve_pibt_step, solve_prioritized
from .features import TieBreakRng, gradient_at
from .fields import FREE, fields_from_solution
from .grid import ACTION_DELTAS, CellAction, MOVE_ACTIONS, bfs_distance


class BasePolicy:
    """Shared init handling: parse the map and remember episode settings."""

    needs_features = False

    def __init__(self):
        self.grid = None
        self.mode = "mapf"
        self.num_agents = 0
        self.seed = 0
        self._fields = {}

    def on_init(self, init: dict) -> dict:
        self.grid = protocol.map_from_string(init["map"], init["height"], init["width"])
        self.mode = init.get("mode", "mapf")
        self.num_agents = init["num_agents"]
        self.seed = init.get("seed", 0)
        return {"type": "ready", "features": self.needs_features}

    def on_obs(self, obs: dict) -> dict:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def distance_field(self, goal):
        field = self._fields.get(goal)
        if field is None:
            field = bfs_distance(self.grid, goal)
            self._fields[goal] = field
        return field

    @staticmethod
    def unpack(obs: dict):
        agents = obs["agents"]
        positions = [(a["r"], a["c"]) for a in agents]
        goals = [(a["gr"], a["gc"]) for a in agents]
        return obs["t"], positions, goals


class ExpertReplayPolicy(BasePolicy):
    """Plans once with the expert and replays the action fields.

    Replans from the current state whenever goals change (lifelong mode) or
    execution drifts off the predicted positions.
    """

    def __init__(self, timeout_ms: int = 30_000, max_restarts: int = 50):
        super().__init__()
        self.timeout_ms = timeout_ms
        self.max_restarts = max_restarts
        self._plan_fields = []
        self._plan_step = 0
        self._expect = None
        self._goals = None

    def _replan(self, positions, goals) -> None:
        inst = Instance(self.grid, positions, goals, id="replay")
        cfg = ExpertConfig(
            timeout_ms=self.timeout_ms, max_restarts=self.max_restarts, seed=self.seed
        )
        sol = solve_prioritized(inst, cfg)
        self._plan_fields = fields_from_solution(inst, sol)
        self._plan_step = 0
        self._expect = list(positions)
        self._goals = list(goals)

    def on_obs(self, obs: dict) -> dict:
        t, positions, goals = self.unpack(obs)
        stale = (
            self._expect is None
            or positions != self._expect
            or goals != self._goals
            or self._plan_step > len(self._plan_fields)
        )
        if stale:
            try:
                self._replan(positions, goals)
            except ExpertFailure:
                return {"type": "act", "t": t, "actions": [0] * self.num_agents}
        if self._plan_step >= len(self._plan_fields):
            return {"type": "act", "t": t, "actions": [0] * self.num_agents}
        field = self._plan_fields[self._plan_step]
        self._plan_step += 1
        expect = []
        for p in positions:
            a = field.action_at(p)
            d = ACTION_DELTAS[CellAction(a if a != FREE else 0)]
            expect.append((p[0] + d[0], p[1] + d[1]))
        self._expect = expect
        return {"type": "act", "t": t, "field": field.to_flat()}


class GreedyGradientPolicy(BasePolicy):
    """Each agent independently follows its goal gradient.

    No coordination at all: collisions are the engine's problem. Diagonal
    gradients resolve to the vertical move (the smaller action id).
    """

    def on_obs(self, obs: dict) -> dict:
        t, positions, goals = self.unpack(obs)
        rng = TieBreakRng(self.seed, "greedy", t)
        actions = []
        for p, g in zip(positions, goals):
            field = self.distance_field(g)
            try:
                dx, dy = gradient_at(field, p, rng)
            except UnreachableCell:
                actions.append(0)
                continue
            if dy < 0:
                actions.append(int(CellAction.UP))
            elif dy > 0:
                actions.append(int(CellAction.DOWN))
            elif dx < 0:
                actions.append(int(CellAction.LEFT))
            elif dx > 0:
                actions.append(int(CellAction.RIGHT))
            else:
                actions.append(int(CellAction.WAIT))
        return {"type": "act", "t": t, "actions": actions}


class PibtStepPolicy(BasePolicy):
    """One-step rule-based coordination with rotating priorities.

    An agent's priority grows with the number of steps since it last sat on
    its goal, so starved agents eventually win conflicts.
    """

    def __init__(self):
        super().__init__()
        self._hunger = None
        self._rng = None

    def on_init(self, init: dict) -> dict:
        ready = super().on_init(init)
        self._rng = random.Random(self.seed)
        return ready

    def on_obs(self, obs: dict) -> dict:
        t, positions, goals = self.unpack(obs)
        n = len(positions)
        if self._hunger is None or len(self._hunger) != n:
            self._hunger = [0] * n
        for i, (p, g) in enumerate(zip(positions, goals)):
            self._hunger[i] = 0 if p == g else self._hunger[i] + 1
        priorities = [h + (n - i) / (n + 1) for i, h in enumerate(self._hunger)]
        inst = Instance(self.grid, positions, goals, id="pibt")
        fields = [self.distance_field(g) for g in goals]
        step = solve_pibt_step(inst, positions, priorities, fields, rng=self._rng)
        return {"type": "act", "t": t, "actions": [int(a) for a in step]}


class RandomValidPolicy(BasePolicy):
    """Uniform random over the legal moves at each cell, seeded."""

    def __init__(self):
        super().__init__()
        self._rng = None

    def on_init(self, init: dict) -> dict:
        ready = super().on_init(init)
        self._rng = random.Random(self.seed)
        return ready

    def on_obs(self, obs: dict) -> dict:
        t, positions, _ = self.unpack(obs)
        actions = []
        for p in positions:
            legal = [int(CellAction.WAIT)]
            for a in MOVE_ACTIONS:
                d = ACTION_DELTAS[a]
                q = (p[0] + d[0], p[1] + d[1])
                if self.grid.in_bounds(q) and self.grid.is_free(q):
                    legal.append(int(a))
            actions.append(self._rng.choice(legal))
        return {"type": "act", "t": t, "actions": actions}


BUILTIN_POLICIES = {
    "expert_replay": ExpertReplayPolicy,
    "greedy_gradient": GreedyGradientPolicy,
    "pibt_step": PibtStepPolicy,
    "random_valid": RandomValidPolicy,
}


def make_builtin(name: str) -> BasePolicy:
    try:
        cls = BUILTIN_POLICIES[name]
    except KeyError:
        raise ValueError(
            f"unknown builtin policy {name!r}; available: {sorted(BUILTIN_POLICIES)}"
        ) from None
    return cls()
