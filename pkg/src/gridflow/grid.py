"""Obstacle grids, map file formats, and shortest-path distance fields.

Coordinates are (row, col), zero-based, row 0 at the top; "up" decreases the
row index. Agents move in four directions plus wait-in-place, so every cell
has at most five outgoing actions.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import CellOnObstacle, DimensionMismatch, GoalOnObstacle, UnknownGlyph

Cell = tuple[int, int]

# Distance value for cells that cannot reach the goal (and for obstacles).
UNREACHABLE = -1


class CellAction(IntEnum):
    """Per-cell action ids. FREE marks unoccupied cells in an action field."""

    WAIT = 0
    UP = 1
    DOWN = 2
    LEFT = 3
    RIGHT = 4
    FREE = 255


# Row/col deltas for the five movement actions, indexed by action id.
ACTION_DELTAS: dict[CellAction, Cell] = {
    CellAction.WAIT: (0, 0),
    CellAction.UP: (-1, 0),
    CellAction.DOWN: (1, 0),
    CellAction.LEFT: (0, -1),
    CellAction.RIGHT: (0, 1),
}

MOVE_ACTIONS = (CellAction.UP, CellAction.DOWN, CellAction.LEFT, CellAction.RIGHT)


def action_between(a: Cell, b: Cell) -> CellAction:
    """The action that moves from cell a to adjacent (or equal) cell b."""
    delta = (b[0] - a[0], b[1] - a[1])
    for action, d in ACTION_DELTAS.items():
        if d == delta:
            return action
    raise ValueError(f"cells {a} and {b} are not adjacent")


@dataclass(eq=False)
class GridMap:
    """Static obstacle grid; cells[r, c] is True for non-traversable cells."""

    height: int
    width: int
    cells: np.ndarray

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=bool).reshape(self.height, self.width)
        self.cells.setflags(write=False)

    def __eq__(self, other):
        return (
            isinstance(other, GridMap)
            and self.height == other.height
            and self.width == other.width
            and np.array_equal(self.cells, other.cells)
        )

    def in_bounds(self, cell: Cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and not self.cells[cell]

    def free_cells(self) -> list[Cell]:
        rs, cs = np.nonzero(~self.cells)
        return [(int(r), int(c)) for r, c in zip(rs, cs)]

    @property
    def obstacle_fraction(self) -> float:
        return float(self.cells.mean())


def parse_map(text: str | bytes) -> GridMap:
    """Parse a map in MovingAI .map format or the compact "H W" format.

    MovingAI: "type octile" / "height H" / "width W" / "map" header, then H
    rows of W glyphs ('.' free, '@'/'T'/'O' obstacle). Compact: a first line
    "H W" followed by H rows of '.'/'#'.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    lines = text.splitlines()
    lines = [ln.rstrip("\r") for ln in lines]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise DimensionMismatch("empty map text")

    first = lines[0].strip().lower()
    if first.startswith("type"):
        return _parse_movingai(lines)
    return _parse_compact(lines)


def _parse_movingai(lines: list[str]) -> GridMap:
    height = width = None
    i = 1
    while i < len(lines):
        token = lines[i].strip().lower()
        if token == "map":
            i += 1
            break
        parts = token.split()
        if len(parts) == 2 and parts[0] == "height":
            height = int(parts[1])
        elif len(parts) == 2 and parts[0] == "width":
            width = int(parts[1])
        else:
            raise DimensionMismatch(f"unexpected header line {lines[i]!r}")
        i += 1
    if height is None or width is None:
        raise DimensionMismatch("missing height/width header")
    rows = lines[i:]
    if len(rows) != height:
        raise DimensionMismatch(f"header says {height} rows, found {len(rows)}")
    return _rows_to_grid(rows, height, width, free=".", obstacle="@TO")


def _parse_compact(lines: list[str]) -> GridMap:
    parts = lines[0].split()
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise DimensionMismatch(f"bad compact header {lines[0]!r}")
    height, width = int(parts[0]), int(parts[1])
    rows = lines[1:]
    if len(rows) != height:
        raise DimensionMismatch(f"header says {height} rows, found {len(rows)}")
    return _rows_to_grid(rows, height, width, free=".", obstacle="#")


def _rows_to_grid(rows, height, width, free, obstacle) -> GridMap:
    cells = np.zeros((height, width), dtype=bool)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise DimensionMismatch(f"row {r} has {len(row)} cols, header says {width}")
        for c, glyph in enumerate(row):
            if glyph in obstacle:
                cells[r, c] = True
            elif glyph not in free:
                raise UnknownGlyph(glyph, r, c)
    return GridMap(height, width, cells)


def render_map(grid: GridMap) -> str:
    """Render a grid in MovingAI .map format; parse_map(render_map(g)) == g."""
    rows = ["".join("@" if grid.cells[r, c] else "." for c in range(grid.width)) for r in range(grid.height)]
    return f"type octile\nheight {grid.height}\nwidth {grid.width}\nmap\n" + "\n".join(rows) + "\n"


def neighbors(grid: GridMap, cell: Cell) -> set[tuple[CellAction, Cell]]:
    """All (action, destination) pairs available at a free cell.

    Wait is always included; each move is included iff the destination is
    in-bounds and free.
    """
    if not grid.is_free(cell):
        raise CellOnObstacle(f"cell {cell} is not free")
    out = {(CellAction.WAIT, cell)}
    r, c = cell
    for action in MOVE_ACTIONS:
        dr, dc = ACTION_DELTAS[action]
        dest = (r + dr, c + dc)
        if grid.is_free(dest):
            out.add((action, dest))
    return out


@dataclass(eq=False)
class DistanceField:
    """Exact 4-connected move counts from every cell to one goal cell."""

    goal: Cell
    dist: np.ndarray

    def __post_init__(self):
        self.dist = np.asarray(self.dist, dtype=np.int32)
        self.dist.setflags(write=False)

    def at(self, cell: Cell) -> int:
        return int(self.dist[cell])


def bfs_distance(grid: GridMap, goal: Cell) -> DistanceField:
    """Breadth-first distance-to-goal field; UNREACHABLE where no path exists."""
    if not grid.is_free(goal):
        raise GoalOnObstacle(f"goal {goal} is not a free cell")
    dist = np.full((grid.height, grid.width), UNREACHABLE, dtype=np.int32)
    dist[goal] = 0
    queue = deque([goal])
    cells = grid.cells
    h, w = grid.height, grid.width
    while queue:
        r, c = queue.popleft()
        d = dist[r, c] + 1
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < h and 0 <= nc < w and not cells[nr, nc] and dist[nr, nc] == UNREACHABLE:
                dist[nr, nc] = d
                queue.append((nr, nc))
    return DistanceField(goal, dist)


def connected_components(grid: GridMap) -> np.ndarray:
    """Label free cells by connected component (obstacles get -1)."""
    labels = np.full((grid.height, grid.width), -1, dtype=np.int32)
    next_label = 0
    for r in range(grid.height):
        for c in range(grid.width):
            if grid.cells[r, c] or labels[r, c] >= 0:
                continue
            queue = deque([(r, c)])
            labels[r, c] = next_label
            while queue:
                cr, cc = queue.popleft()
                for nr, nc in ((cr - 1, cc), (cr + 1, cc), (cr, cc - 1), (cr, cc + 1)):
                    if (
                        0 <= nr < grid.height
                        and 0 <= nc < grid.width
                        and not grid.cells[nr, nc]
                        and labels[nr, nc] < 0
                    ):
                        labels[nr, nc] = next_label
                        queue.append((nr, nc))
            next_label += 1
    return labels


def is_connected(grid: GridMap) -> bool:
    """True iff all free cells belong to one connected component."""
    labels = connected_components(grid)
    free = labels[~grid.cells]
    return free.size == 0 or int(free.max()) == 0
