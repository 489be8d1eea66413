"""Built-in policy behavior and protocol conformance."""

import itertools
import random

import pytest

from gridflow.dataset import ACTION_ENCODING
from gridflow.features import CHANNELS, NUM_CHANNELS
from gridflow.grid import ACTION_DELTAS, CellAction, bfs_distance, parse_map
from gridflow.policies import BUILTIN_POLICIES, make_builtin
from gridflow import protocol

OPEN = parse_map("4 4\n....\n....\n....\n....")
MAZE = parse_map("5 6\n......\n.##.#.\n....#.\n.#....\n......")


def make_init(grid, num_agents, mode="mapf", seed=0):
    return protocol.init_message(
        mode=mode,
        grid=grid,
        num_agents=num_agents,
        k=NUM_CHANNELS,
        channel_order=CHANNELS,
        action_encoding=ACTION_ENCODING,
        seed=seed,
        max_steps=4 * (grid.height + grid.width),
    )


def random_state(grid, num_agents, rng):
    """Collision-free positions plus pairwise-distinct reachable goals."""
    free = grid.free_cells()
    positions = rng.sample(free, num_agents)
    while True:
        goals = rng.sample(free, num_agents)
        if all(bfs_distance(grid, g).at(p) >= 0 for p, g in zip(positions, goals)):
            return positions, goals


def make_obs(t, positions, goals):
    return protocol.obs_message(t, positions, goals)


class TestConformance:
    """Every builtin answers schema-valid messages for any reachable state."""

    @pytest.mark.parametrize("name", sorted(BUILTIN_POLICIES))
    def test_ready_reply_schema(self, name):
        policy = make_builtin(name)
        ready = policy.on_init(make_init(MAZE, 3))
        assert protocol.parse_ready(ready) in (True, False)

    @pytest.mark.parametrize("name", sorted(BUILTIN_POLICIES))
    def test_fifty_fuzzed_observations(self, name):
        rng = random.Random(hash(name) & 0xFFFF)
        policy = make_builtin(name)
        policy.on_init(make_init(MAZE, 3, seed=5))
        for t in range(50):
            positions, goals = random_state(MAZE, 3, rng)
            reply = policy.on_obs(make_obs(t, positions, goals))
            kind, values = protocol.parse_act(reply, t, MAZE.height, MAZE.width, 3)
            assert kind in ("field", "actions")

    @pytest.mark.parametrize("name", sorted(BUILTIN_POLICIES))
    def test_unknown_builtin_rejected(self, name):
        with pytest.raises(ValueError):
            make_builtin(name + "-nope")


class TestRandomValid:
    def test_never_proposes_wall_or_edge_move(self):
        rng = random.Random(11)
        policy = make_builtin("random_valid")
        policy.on_init(make_init(MAZE, 4, seed=3))
        for t in range(300):
            positions, goals = random_state(MAZE, 4, rng)
            reply = policy.on_obs(make_obs(t, positions, goals))
            for p, a in zip(positions, reply["actions"]):
                dr, dc = ACTION_DELTAS[CellAction(a)]
                dest = (p[0] + dr, p[1] + dc)
                assert MAZE.in_bounds(dest) and MAZE.is_free(dest)

    def test_seed_determinism(self):
        outs = []
        for _ in range(2):
            policy = make_builtin("random_valid")
            policy.on_init(make_init(MAZE, 3, seed=42))
            rng = random.Random(7)
            replies = []
            for t in range(20):
                positions, goals = random_state(MAZE, 3, rng)
                replies.append(policy.on_obs(make_obs(t, positions, goals))["actions"])
            outs.append(replies)
        assert outs[0] == outs[1]

    def test_different_seeds_differ(self):
        replies = {}
        for seed in (1, 2):
            policy = make_builtin("random_valid")
            policy.on_init(make_init(OPEN, 2, seed=seed))
            acts = []
            for t in range(10):
                acts.append(policy.on_obs(make_obs(t, [(1, 1), (2, 2)], [(0, 0), (3, 3)]))["actions"])
            replies[seed] = acts
        assert replies[1] != replies[2]


class TestGreedyGradient:
    def test_single_agent_descends_distance(self):
        policy = make_builtin("greedy_gradient")
        policy.on_init(make_init(MAZE, 1))
        goal = (4, 5)
        field = bfs_distance(MAZE, goal)
        pos = (0, 0)
        for t in range(60):
            if pos == goal:
                break
            reply = policy.on_obs(make_obs(t, [pos], [goal]))
            a = reply["actions"][0]
            dr, dc = ACTION_DELTAS[CellAction(a)]
            nxt = (pos[0] + dr, pos[1] + dc)
            assert field.at(nxt) == field.at(pos) - 1
            pos = nxt
        assert pos == goal

    def test_waits_at_goal(self):
        policy = make_builtin("greedy_gradient")
        policy.on_init(make_init(OPEN, 1))
        reply = policy.on_obs(make_obs(0, [(2, 2)], [(2, 2)]))
        assert reply["actions"] == [int(CellAction.WAIT)]

    def test_unreachable_goal_waits(self):
        boxed = parse_map("3 3\n.#.\n###\n...")
        policy = make_builtin("greedy_gradient")
        policy.on_init(make_init(boxed, 1))
        reply = policy.on_obs(make_obs(0, [(0, 0)], [(2, 2)]))
        assert reply["actions"] == [int(CellAction.WAIT)]


class TestExpertReplay:
    def test_emits_full_fields(self):
        policy = make_builtin("expert_replay")
        policy.on_init(make_init(OPEN, 2, seed=1))
        reply = policy.on_obs(make_obs(0, [(0, 0), (3, 3)], [(0, 3), (3, 0)]))
        kind, values = protocol.parse_act(reply, 0, 4, 4, 2)
        assert kind == "field"
        occupied = [v for v in values if v != 255]
        assert len(occupied) == 2

    def test_replans_on_goal_change(self):
        policy = make_builtin("expert_replay")
        policy.on_init(make_init(OPEN, 1, seed=1))
        r0 = policy.on_obs(make_obs(0, [(0, 0)], [(0, 3)]))
        _, v0 = protocol.parse_act(r0, 0, 4, 4, 1)
        assert v0[0] == int(CellAction.RIGHT)
        r1 = policy.on_obs(make_obs(1, [(0, 1)], [(3, 1)]))
        _, v1 = protocol.parse_act(r1, 1, 4, 4, 1)
        assert v1[0 * 4 + 1] == int(CellAction.DOWN)

    def test_unsolvable_degrades_to_wait(self):
        corridor = parse_map("1 2\n..")
        policy = make_builtin("expert_replay")
        policy.on_init(make_init(corridor, 2, seed=0))
        reply = policy.on_obs(make_obs(0, [(0, 0), (0, 1)], [(0, 1), (0, 0)]))
        assert reply.get("actions") == [0, 0]


class TestPibtStep:
    def test_two_agents_head_on_no_collision(self):
        corridor = parse_map("2 5\n.....\n.....")
        policy = make_builtin("pibt_step")
        policy.on_init(make_init(corridor, 2, seed=0))
        positions = [(0, 0), (0, 4)]
        goals = [(0, 4), (0, 0)]
        reply = policy.on_obs(make_obs(0, positions, goals))
        kind, values = protocol.parse_act(reply, 0, 2, 5, 2)
        nxt = []
        for p, a in zip(positions, values):
            dr, dc = ACTION_DELTAS[CellAction(a)]
            nxt.append((p[0] + dr, p[1] + dc))
        assert len(set(nxt)) == 2

    def test_suite_of_random_states_yields_legal_moves(self):
        rng = random.Random(5)
        policy = make_builtin("pibt_step")
        policy.on_init(make_init(MAZE, 4, seed=2))
        for t in range(100):
            positions, goals = random_state(MAZE, 4, rng)
            reply = policy.on_obs(make_obs(t, positions, goals))
            nxt = []
            for p, a in zip(positions, reply["actions"]):
                dr, dc = ACTION_DELTAS[CellAction(a)]
                dest = (p[0] + dr, p[1] + dc)
                assert MAZE.is_free(dest)
                nxt.append(dest)
            assert len(set(nxt)) == len(nxt)
            for i, j in itertools.combinations(range(4), 2):
                assert not (nxt[i] == positions[j] and nxt[j] == positions[i])
