"""Closed-loop episode execution against step-protocol policies.

run_episode drives one instance: init/ready handshake, then an obs/act
exchange per step, applying each joint action with the configured collision
mode. One-shot episodes end when every agent sits on its goal or the step
budget runs out. Lifelong episodes always run the full budget; reaching a
goal scores a completion and the engine assigns a fresh goal on the spot.

Policies run in-process (InProcessPolicy wraps a BasePolicy) or as a
subprocess speaking newline-delimited JSON on its standard streams
(SubprocessPolicy), with a per-message timeout.
"""

from __future__ import annotations

import json
import os
import random
import select as _select
import shlex
import subprocess
import sys
import time
from dataclasses import dataclass, field as dc_field

from . import protocol
from .core import Instance, Solution, makespan, soc, validate
from .dataset import ACTION_ENCODING, derive_seed
from .errors import PolicyTimeout, ProtocolViolation
from .features import CHANNELS, NUM_CHANNELS, TieBreakRng, build_features
from .fields import STRICT, TOLERANT, ActionField, FREE, apply_field
from .grid import CellAction, bfs_distance, connected_components
from .policies import BasePolicy, make_builtin

MODE_ONESHOT = "mapf"
MODE_LIFELONG = "lmapf"


@dataclass
class EpisodeConfig:
    mode: str = MODE_ONESHOT
    max_steps: int | None = None  # default 4 * (height + width)
    collision_mode: str = STRICT
    select: str = "argmax"
    seed: int = 0
    lmapf_seed: int | None = None  # default derived from seed
    normalize_indices: bool = False
    policy_timeout_ms: int = 60_000


@dataclass
class StepRecord:
    t: int
    actions: list[int]  # per-agent received action ids
    positions: list  # per-agent (r, c) after the step
    goals: list  # per-agent goals after the step (lifelong goals move)
    collisions: list  # collision dicts for this step
    invalid: int
    latency_ms: float
    completions: list = dc_field(default_factory=list)  # lifelong: agent ids scored

    def to_dict(self) -> dict:
        return {
            "type": "step",
            "t": self.t,
            "actions": self.actions,
            "positions": [list(p) for p in self.positions],
            "goals": [list(g) for g in self.goals],
            "collisions": self.collisions,
            "invalid": self.invalid,
            "latency_ms": self.latency_ms,
            "completions": self.completions,
        }


@dataclass
class EpisodeTrace:
    header: dict
    steps: list[StepRecord]
    result: dict

    def write(self, path) -> None:
        with open(path, "w") as f:
            f.write(json.dumps(self.header, sort_keys=True) + "\n")
            for s in self.steps:
                f.write(json.dumps(s.to_dict(), sort_keys=True) + "\n")
            f.write(json.dumps(self.result, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "EpisodeTrace":
        header = None
        steps = []
        result = None
        with open(path) as f:
            for line in f:
                if not line.strip():
                    continue
                obj = json.loads(line)
                kind = obj.get("type")
                if kind == "header":
                    header = obj
                elif kind == "step":
                    steps.append(
                        StepRecord(
                            t=obj["t"],
                            actions=obj["actions"],
                            positions=[tuple(p) for p in obj["positions"]],
                            goals=[tuple(g) for g in obj["goals"]],
                            collisions=obj["collisions"],
                            invalid=obj["invalid"],
                            latency_ms=obj["latency_ms"],
                            completions=obj.get("completions", []),
                        )
                    )
                elif kind == "result":
                    result = obj
        if header is None or result is None:
            raise ValueError(f"trace {path} is missing header or result line")
        return cls(header, steps, result)


class InProcessPolicy:
    """Adapter running a BasePolicy in the engine process."""

    def __init__(self, policy: BasePolicy):
        self.policy = policy

    def start(self, init: dict) -> dict:
        return self.policy.on_init(init)

    def step(self, obs: dict) -> dict:
        return self.policy.on_obs(obs)

    def close(self) -> None:
        self.policy.close()


class SubprocessPolicy:
    """Adapter for a policy process speaking the protocol on stdio."""

    def __init__(self, argv, timeout_ms: int = 60_000):
        if isinstance(argv, str):
            argv = shlex.split(argv)
        self.argv = list(argv)
        self.timeout_ms = timeout_ms
        self.proc = None
        self._buf = b""

    def start(self, init: dict) -> dict:
        self.proc = subprocess.Popen(
            self.argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=None,
            text=False,
        )
        return self._exchange(init)

    def step(self, obs: dict) -> dict:
        return self._exchange(obs)

    def _exchange(self, msg: dict) -> dict:
        try:
            self.proc.stdin.write((json.dumps(msg, separators=(",", ":")) + "\n").encode())
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError):
            raise ProtocolViolation("policy process closed its stdin pipe") from None
        line = self._read_line()
        try:
            return json.loads(line)
        except json.JSONDecodeError as e:
            raise ProtocolViolation(f"policy wrote bad JSON: {e}") from None

    def _read_line(self) -> bytes:
        fd = self.proc.stdout.fileno()
        deadline = time.monotonic() + self.timeout_ms / 1000.0
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise PolicyTimeout(f"no reply within {self.timeout_ms} ms")
            ready, _, _ = _select.select([fd], [], [], remaining)
            if not ready:
                raise PolicyTimeout(f"no reply within {self.timeout_ms} ms")
            chunk = os.read(fd, 65536)
            if not chunk:
                raise ProtocolViolation("policy process closed its stdout")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def close(self) -> None:
        if self.proc is None:
            return
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()
        self.proc = None


def make_policy(spec: str, timeout_ms: int = 60_000):
    """Resolve a policy address: "builtin:<name>" or a shell command line."""
    if spec.startswith("builtin:"):
        return InProcessPolicy(make_builtin(spec[len("builtin:"):]))
    return SubprocessPolicy(spec, timeout_ms)


def builtin_subprocess_argv(name: str) -> list[str]:
    """Argv that serves a built-in policy over stdio, for wire-level runs."""
    return [sys.executable, "-m", "gridflow.policy_host", name]


def run_episode(instance: Instance, policy, config: EpisodeConfig | None = None) -> EpisodeTrace:
    """Execute one episode and return its full trace.

    The policy object must expose start/step/close (InProcessPolicy or
    SubprocessPolicy). The trace is self-contained: it embeds the map, the
    endpoints, every step, and the summary line.
    """
    config = config or EpisodeConfig()
    if config.mode not in (MODE_ONESHOT, MODE_LIFELONG):
        raise ValueError(f"unknown mode {config.mode!r}")
    if config.collision_mode not in (STRICT, TOLERANT):
        raise ValueError(f"unknown collision mode {config.collision_mode!r}")
    grid = instance.grid
    n_agents = instance.num_agents
    max_steps = config.max_steps
    if max_steps is None:
        max_steps = 4 * (grid.height + grid.width)

    init = protocol.init_message(
        mode=config.mode,
        grid=grid,
        num_agents=n_agents,
        k=NUM_CHANNELS,
        channel_order=CHANNELS,
        action_encoding=ACTION_ENCODING,
        select=config.select,
        seed=config.seed,
        max_steps=max_steps,
        normalize_indices=config.normalize_indices,
    )
    send_features = protocol.parse_ready(policy.start(init))

    positions = list(instance.starts)
    goals = list(instance.goals)
    dist_cache = {}

    def field_for(goal):
        f = dist_cache.get(goal)
        if f is None:
            f = bfs_distance(grid, goal)
            dist_cache[goal] = f
        return f

    lmapf_seed = config.lmapf_seed
    if lmapf_seed is None:
        lmapf_seed = derive_seed(config.seed, "lmapf-goals", instance.id)
    goal_rng = random.Random(lmapf_seed)
    labels = connected_components(grid) if config.mode == MODE_LIFELONG else None
    free_cells = grid.free_cells() if config.mode == MODE_LIFELONG else None
    parked = [False] * n_agents  # at goal with no fresh goal available

    paths = [[p] for p in positions]
    steps: list[StepRecord] = []
    solved = positions == goals
    total_completions = 0

    t = 0
    while t < max_steps and not (config.mode == MODE_ONESHOT and solved):
        features_b64 = None
        if send_features:
            rng = TieBreakRng(config.seed, instance.id, t)
            tensor = build_features(
                grid,
                positions,
                goals,
                [field_for(g) for g in goals],
                rng,
                normalize_indices=config.normalize_indices,
            )
            features_b64 = protocol.encode_features(tensor.data)
        obs = protocol.obs_message(t, positions, goals, features_b64)

        t0 = time.perf_counter()
        reply = policy.step(obs)
        latency_ms = (time.perf_counter() - t0) * 1000.0

        kind, values = protocol.parse_act(reply, t, grid.height, grid.width, n_agents)
        if kind == "field":
            act_field = ActionField.from_flat(grid.height, grid.width, values, t)
        else:
            arr = [FREE] * (grid.height * grid.width)
            for p, a in zip(positions, values):
                arr[p[0] * grid.width + p[1]] = a
            act_field = ActionField.from_flat(grid.height, grid.width, arr, t)
        received = [act_field.action_at(p) for p in positions]
        received = [a if a != FREE else int(CellAction.WAIT) for a in received]

        positions, collisions, invalid = apply_field(
            grid, positions, act_field, config.collision_mode
        )
        for i, p in enumerate(positions):
            paths[i].append(p)

        completions = []
        if config.mode == MODE_LIFELONG:
            for i in range(n_agents):
                if positions[i] != goals[i]:
                    parked[i] = False
                elif not parked[i]:
                    completions.append(i)
            total_completions += len(completions)
            for i in completions:
                fresh = _fresh_goal(goal_rng, free_cells, labels, positions, goals, i)
                parked[i] = fresh == goals[i]
                goals[i] = fresh

        steps.append(
            StepRecord(
                t=t,
                actions=received,
                positions=list(positions),
                goals=list(goals),
                collisions=[c.to_dict() for c in collisions],
                invalid=invalid,
                latency_ms=round(latency_ms, 3),
                completions=completions,
            )
        )
        t += 1
        if config.mode == MODE_ONESHOT:
            solved = positions == goals

    policy.close()

    total_collisions = sum(len(s.collisions) for s in steps)
    total_invalid = sum(s.invalid for s in steps)
    mean_latency = (
        round(sum(s.latency_ms for s in steps) / len(steps), 3) if steps else 0.0
    )
    result = {
        "type": "result",
        "steps": len(steps),
        "collisions": total_collisions,
        "invalid_actions": total_invalid,
        "mean_latency_ms": mean_latency,
    }
    if config.mode == MODE_ONESHOT:
        result["solved"] = bool(solved)
        result["csr"] = 1.0 if solved else 0.0
        if solved:
            sol = Solution([paths[i] for i in range(n_agents)])
            report = validate(instance, sol)
            result["soc"] = soc(sol)
            result["makespan"] = makespan(sol)
            result["validation_ok"] = report.ok
        else:
            result["soc"] = None
            result["makespan"] = None
    else:
        result["completions"] = total_completions
        result["throughput"] = total_completions / max_steps if max_steps else 0.0

    header = {
        "type": "header",
        "instance_id": instance.id,
        "mode": config.mode,
        "collision_mode": config.collision_mode,
        "height": grid.height,
        "width": grid.width,
        "map": protocol.map_to_string(grid),
        "num_agents": n_agents,
        "starts": [list(p) for p in instance.starts],
        "goals": [list(g) for g in instance.goals],
        "max_steps": max_steps,
        "select": config.select,
        "seed": config.seed,
    }
    return EpisodeTrace(header, steps, result)


def _fresh_goal(rng, free_cells, labels, positions, goals, agent):
    """Lifelong reassignment: a uniform free cell in the agent's component,
    distinct from every current goal and from the agent's own cell. Keeps the
    old goal when the map is too crowded to offer one."""
    comp = labels[positions[agent]]
    taken = set(goals[:agent] + goals[agent + 1:])
    candidates = [
        c
        for c in free_cells
        if labels[c] == comp and c not in taken and c != positions[agent]
    ]
    if not candidates:
        return goals[agent]
    return candidates[rng.randrange(len(candidates))]
