"""Model input tensors: map, agent indices, cost-to-goal, and its gradients.

The per-axis gradient at a cell compares the goal distance of the two
neighbors along that axis with the cell's own. A neighbor through a wall or
off the map counts as infinitely far. When exactly one side is closer the
gradient points there; when neither is, it is zero; when both are, the sign
is drawn from a seeded counter-based generator so identical inputs always
produce identical tensors.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .core import detect_collisions
from .errors import (
    InvalidTransition,
    LengthMismatch,
    MissingDistanceField,
    UnreachableCell,
)
from .grid import ACTION_DELTAS, Cell, CellAction, DistanceField, GridMap

CHANNELS = ("map", "current", "goal", "cost_to_goal", "grad_x", "grad_y")
NUM_CHANNELS = len(CHANNELS)
MASK = int(CellAction.FREE)

_INF = float("inf")


class TieBreakRng:
    """Deterministic ±1 source keyed by (seed, instance id, timestep).

    Each query hashes its cell and axis under that key, so a rebuilt dataset
    reproduces every tie-break bit regardless of query order.
    """

    def __init__(self, seed: int = 0, instance_id: str = "", t: int = 0):
        key_material = f"{seed}:{instance_id}:{t}".encode()
        self._key = hashlib.blake2b(key_material, digest_size=32).digest()

    def pm1(self, cell: Cell, axis: str) -> int:
        msg = f"{cell[0]}:{cell[1]}:{axis}".encode()
        digest = hashlib.blake2b(msg, key=self._key, digest_size=1).digest()
        return 1 if digest[0] & 1 else -1


def _delta(field: DistanceField, cell: Cell, dr: int, dc: int) -> float:
    """Distance change toward a neighbor; walls and off-map count as +inf."""
    r, c = cell[0] + dr, cell[1] + dc
    h, w = field.dist.shape
    if not (0 <= r < h and 0 <= c < w):
        return _INF
    d = int(field.dist[r, c])
    if d < 0:
        return _INF
    return float(d - field.at(cell))


def gradient_at(
    field: DistanceField,
    cell: Cell,
    rng: TieBreakRng | None = None,
) -> tuple[int, int]:
    """(dx, dy) per the four-case rule; +1 means right (resp. down) is closer."""
    if field.at(cell) < 0:
        raise UnreachableCell(f"cell {cell} cannot reach goal {field.goal}")
    rng = rng or TieBreakRng()

    d_left = _delta(field, cell, 0, -1)
    d_right = _delta(field, cell, 0, 1)
    if d_left >= 0 and d_right >= 0:
        dx = 0
    elif d_left >= 0:
        dx = 1
    elif d_right >= 0:
        dx = -1
    else:
        dx = rng.pm1(cell, "x")

    d_up = _delta(field, cell, -1, 0)
    d_down = _delta(field, cell, 1, 0)
    if d_up >= 0 and d_down >= 0:
        dy = 0
    elif d_up >= 0:
        dy = 1
    elif d_down >= 0:
        dy = -1
    else:
        dy = rng.pm1(cell, "y")

    return dx, dy


@dataclass(eq=False)
class FeatureTensor:
    height: int
    width: int
    data: np.ndarray  # float32, shape (height, width, NUM_CHANNELS)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32).reshape(
            self.height, self.width, NUM_CHANNELS
        )

    @property
    def k(self) -> int:
        return NUM_CHANNELS

    def channel(self, name: str) -> np.ndarray:
        return self.data[:, :, CHANNELS.index(name)]


def build_features(
    grid: GridMap,
    current_positions: list[Cell],
    goals: list[Cell],
    distance_fields: list[DistanceField],
    rng: TieBreakRng | None = None,
    normalize_indices: bool = False,
) -> FeatureTensor:
    """Assemble the (n, m, 6) input tensor for one timestep.

    Agent indices are written 1-based into the current and goal channels.
    Cost-to-goal (scaled by 1/(n+m)) and the two gradient channels are
    written only at agent-occupied cells.
    """
    n_agents = len(current_positions)
    if len(goals) != n_agents:
        raise LengthMismatch(f"{n_agents} positions vs {len(goals)} goals")
    if len(distance_fields) != n_agents or any(f is None for f in distance_fields):
        raise MissingDistanceField(
            f"need {n_agents} distance fields, got {len(distance_fields)}"
        )
    rng = rng or TieBreakRng()
    n, m = grid.height, grid.width
    data = np.zeros((n, m, NUM_CHANNELS), dtype=np.float32)
    data[:, :, 0] = grid.cells
    scale = 1.0 / n_agents if normalize_indices else 1.0
    norm = float(n + m)
    for i, (pos, goal) in enumerate(zip(current_positions, goals)):
        pos, goal = tuple(pos), tuple(goal)
        idx = (i + 1) * scale
        data[pos[0], pos[1], 1] = idx
        data[goal[0], goal[1], 2] = idx
        d = distance_fields[i].at(pos)
        if d < 0:
            raise UnreachableCell(f"agent {i} at {pos} cannot reach {goal}")
        data[pos[0], pos[1], 3] = d / norm
        dx, dy = gradient_at(distance_fields[i], pos, rng)
        data[pos[0], pos[1], 4] = dx
        data[pos[0], pos[1], 5] = dy
    return FeatureTensor(n, m, data)


@dataclass(eq=False)
class LabelField:
    height: int
    width: int
    labels: np.ndarray  # uint8, MASK on unoccupied cells

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8).reshape(self.height, self.width)


def build_label(
    grid: GridMap,
    current_positions: list[Cell],
    next_positions: list[Cell],
) -> LabelField:
    """Per-cell action labels for one expert transition; MASK elsewhere."""
    if len(current_positions) != len(next_positions):
        raise InvalidTransition(
            f"{len(current_positions)} current vs {len(next_positions)} next positions"
        )
    labels = np.full((grid.height, grid.width), MASK, dtype=np.uint8)
    for here, there in zip(current_positions, next_positions):
        here, there = tuple(here), tuple(there)
        if not grid.is_free(there):
            raise InvalidTransition(f"move into non-free cell {there}")
        delta = (there[0] - here[0], there[1] - here[1])
        action = None
        for act, d in ACTION_DELTAS.items():
            if d == delta:
                action = act
                break
        if action is None:
            raise InvalidTransition(f"non-adjacent transition {here} -> {there}")
        if labels[here] != MASK:
            raise InvalidTransition(f"two agents share cell {here}")
        labels[here] = int(action)
    if detect_collisions(None, list(map(tuple, current_positions)), list(map(tuple, next_positions))):
        raise InvalidTransition("transition collides")
    return LabelField(grid.height, grid.width, labels)


@dataclass(frozen=True)
class PadRecord:
    height: int
    width: int


def pad_to_valid(x, multiple: int = 16, fill=1):
    """Pad bottom/right so both dims divide `multiple`; returns (padded, record).

    Feature tensors get 1 in the map channel and 0 elsewhere; 2D arrays get
    `fill`. The record holds the original shape for exact crop-back.
    """
    if multiple < 1:
        raise ValueError("multiple must be >= 1")

    def target(v):
        return ((v + multiple - 1) // multiple) * multiple

    if isinstance(x, FeatureTensor):
        n, m = x.height, x.width
        tn, tm = target(n), target(m)
        if (tn, tm) == (n, m):
            return FeatureTensor(n, m, x.data.copy()), PadRecord(n, m)
        data = np.zeros((tn, tm, NUM_CHANNELS), dtype=np.float32)
        data[:, :, 0] = 1.0
        data[:n, :m, :] = x.data
        return FeatureTensor(tn, tm, data), PadRecord(n, m)

    if isinstance(x, GridMap):
        n, m = x.height, x.width
        tn, tm = target(n), target(m)
        cells = np.ones((tn, tm), dtype=bool)
        cells[:n, :m] = x.cells
        return GridMap(tn, tm, cells), PadRecord(n, m)

    arr = np.asarray(x)
    if arr.ndim != 2:
        raise ValueError("expected a FeatureTensor, GridMap, or 2D array")
    n, m = arr.shape
    tn, tm = target(n), target(m)
    out = np.full((tn, tm), fill, dtype=arr.dtype)
    out[:n, :m] = arr
    return out, PadRecord(n, m)


def crop_to_original(x, record: PadRecord):
    """Undo pad_to_valid on an array or tensor of the padded shape."""
    if isinstance(x, FeatureTensor):
        return FeatureTensor(record.height, record.width, x.data[: record.height, : record.width, :])
    arr = np.asarray(x)
    return arr[: record.height, : record.width]
