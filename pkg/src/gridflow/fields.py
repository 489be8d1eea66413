"""Per-timestep action fields and their equivalence with agent paths.

A plan can be stored as one grid per timestep where each agent-occupied cell
carries the action its agent takes next and every other cell is Free. Playing
those grids forward reproduces the original paths exactly, and that round
trip is the representation's defining property.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Collision, Instance, Solution, detect_collisions, makespan
from .errors import AgentNotAtGoal, CollisionAt, DimensionMismatch, InvalidSolution
from .grid import ACTION_DELTAS, Cell, CellAction, GridMap

FREE = int(CellAction.FREE)

STRICT = "strict"
TOLERANT = "tolerant"


@dataclass(eq=False)
class ActionField:
    height: int
    width: int
    actions: np.ndarray  # uint8, FREE on unoccupied cells
    t: int = 0

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=np.uint8).reshape(self.height, self.width)

    def action_at(self, cell: Cell) -> int:
        return int(self.actions[cell])

    def to_flat(self) -> list[int]:
        return [int(v) for v in self.actions.ravel()]

    @classmethod
    def from_flat(cls, height: int, width: int, values, t: int = 0) -> "ActionField":
        arr = np.asarray(list(values), dtype=np.uint8)
        if arr.size != height * width:
            raise DimensionMismatch(f"expected {height * width} actions, got {arr.size}")
        return cls(height, width, arr.reshape(height, width), t)


def fields_from_solution(instance: Instance, solution: Solution) -> list[ActionField]:
    """One field per timestep in [0, makespan); resting agents keep Wait."""
    if solution.num_agents != instance.num_agents:
        raise InvalidSolution(
            f"{solution.num_agents} paths for {instance.num_agents} agents"
        )
    horizon = makespan(solution)
    fields = []
    for t in range(horizon):
        actions = np.full((instance.grid.height, instance.grid.width), FREE, dtype=np.uint8)
        for i in range(solution.num_agents):
            here = solution.position_at(i, t)
            there = solution.position_at(i, t + 1)
            if actions[here] != FREE:
                raise InvalidSolution(f"two agents share cell {here} at t={t}")
            try:
                actions[here] = int(_action_for(here, there))
            except ValueError as e:
                raise InvalidSolution(str(e)) from None
        fields.append(ActionField(instance.grid.height, instance.grid.width, actions, t))
    return fields


def _action_for(a: Cell, b: Cell) -> CellAction:
    delta = (b[0] - a[0], b[1] - a[1])
    for action, d in ACTION_DELTAS.items():
        if d == delta:
            return action
    raise ValueError(f"non-adjacent transition {a} -> {b}")


def apply_field(
    grid: GridMap,
    positions: list[Cell],
    field: ActionField,
    mode: str = STRICT,
) -> tuple[list[Cell], list[Collision], int]:
    """Advance all agents one step by the actions stored at their cells.

    Free at an occupied cell and moves into walls or out of bounds are
    invalid: they resolve to Wait and are counted. Strict mode rejects the
    whole step when the proposal collides (positions come back unchanged with
    the collisions). Tolerant mode cancels both participants of every
    collision and re-checks until the step is clean, reporting only the
    collisions of the original proposal.
    """
    if mode not in (STRICT, TOLERANT):
        raise ValueError(f"unknown mode {mode!r}")
    if (field.height, field.width) != (grid.height, grid.width):
        raise DimensionMismatch(
            f"field is {field.height}x{field.width}, map is {grid.height}x{grid.width}"
        )
    positions = [tuple(p) for p in positions]
    invalid = 0
    proposed: list[Cell] = []
    for p in positions:
        a = int(field.actions[p])
        if a == FREE:
            invalid += 1
            proposed.append(p)
            continue
        dr, dc = ACTION_DELTAS[CellAction(a)]
        dest = (p[0] + dr, p[1] + dc)
        if dest != p and not grid.is_free(dest):
            invalid += 1
            proposed.append(p)
        else:
            proposed.append(dest)

    original = detect_collisions(None, positions, proposed, field.t)
    if mode == STRICT:
        if original:
            return list(positions), original, invalid
        return proposed, [], invalid

    # Tolerant: cancel both participants until no collisions remain. Every
    # collision involves at least one still-moving agent, so the moving set
    # strictly shrinks and the loop terminates.
    current = list(proposed)
    cols = original
    while cols:
        for col in cols:
            for agent in col.agents:
                current[agent] = positions[agent]
        cols = detect_collisions(None, positions, current, field.t)
    return current, original, invalid


def apply_fields(instance: Instance, fields: list[ActionField]) -> Solution:
    """Play fields forward from the starts; strict the whole way.

    Raises CollisionAt on the first colliding step and AgentNotAtGoal if the
    final configuration misses any goal. Paths come back full-length (one
    vertex per field plus the start).
    """
    positions = list(instance.starts)
    paths = [[p] for p in positions]
    for field in fields:
        positions, cols, _ = apply_field(instance.grid, positions, field, STRICT)
        if cols:
            raise CollisionAt(field.t, cols)
        for i, p in enumerate(positions):
            paths[i].append(p)
    for i, (p, g) in enumerate(zip(positions, instance.goals)):
        if p != g:
            raise AgentNotAtGoal(i, p, g)
    return Solution(paths)


def extend_paths(paths: list[list[Cell]], horizon: int) -> list[list[Cell]]:
    """Pad every path to horizon+1 vertices by repeating its last vertex."""
    return [list(p) + [p[-1]] * (horizon + 1 - len(p)) for p in paths]
