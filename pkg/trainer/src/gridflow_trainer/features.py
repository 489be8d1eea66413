"""Offline mirror of the engine's feature construction.

Serving never uses this: the policy negotiates engine-built features at init
time, which rules out cross-implementation drift in production. The mirror
exists so unit tests can rebuild samples from a dataset's own map/scen/
solution files and compare them byte for byte against samples.bin, proving
the documented recipe (including the keyed tie-break hash) is the whole
truth.

Everything here works from the published file formats; nothing imports the
engine.
"""

import hashlib
from collections import deque

import numpy as np

CHANNELS = ("map", "current", "goal", "cost_to_goal", "grad_x", "grad_y")
MASK = 255
_WALL_GLYPHS = frozenset("#@T")
_INF = float("inf")


def parse_map_text(text: str) -> np.ndarray:
    """MovingAI .map text to a boolean wall matrix (True = obstacle)."""
    lines = [line.rstrip("\n") for line in text.splitlines()]
    height = width = None
    row_start = 0
    for i, line in enumerate(lines):
        token = line.strip().lower()
        if token.startswith("height"):
            height = int(token.split()[1])
        elif token.startswith("width"):
            width = int(token.split()[1])
        elif token == "map":
            row_start = i + 1
            break
        elif height is None and all(part.isdigit() for part in token.split()) and len(token.split()) == 2:
            height, width = (int(v) for v in token.split())
            row_start = i + 1
            break
    if height is None or width is None:
        raise ValueError("map header missing dimensions")
    rows = [line for line in lines[row_start:] if line.strip()][:height]
    walls = np.zeros((height, width), dtype=bool)
    for r, line in enumerate(rows):
        for c in range(width):
            walls[r, c] = line[c] in _WALL_GLYPHS
    return walls


def parse_scen_text(text: str):
    """(start, goal) cell pairs from .scen text; columns are x then y."""
    pairs = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.lower().startswith("version"):
            continue
        parts = line.split("\t")
        _, _, _, _, sx, sy, gx, gy = parts[:8]
        pairs.append(((int(sy), int(sx)), (int(gy), int(gx))))
    return pairs


def bfs_distance(walls: np.ndarray, goal) -> np.ndarray:
    """Move counts from every cell to the goal; -1 where unreachable."""
    h, w = walls.shape
    dist = np.full((h, w), -1, dtype=np.int32)
    if walls[goal]:
        return dist
    dist[goal] = 0
    queue = deque([goal])
    while queue:
        r, c = queue.popleft()
        d = dist[r, c] + 1
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < h and 0 <= nc < w and not walls[nr, nc] and dist[nr, nc] == -1:
                dist[nr, nc] = d
                queue.append((nr, nc))
    return dist


def tie_pm1(seed: int, instance_id: str, t: int, cell, axis: str) -> int:
    """The documented keyed coin: blake2b of the cell under an episode key."""
    key = hashlib.blake2b(f"{seed}:{instance_id}:{t}".encode(), digest_size=32).digest()
    digest = hashlib.blake2b(
        f"{cell[0]}:{cell[1]}:{axis}".encode(), key=key, digest_size=1
    ).digest()
    return 1 if digest[0] & 1 else -1


def _delta(dist: np.ndarray, cell, dr: int, dc: int) -> float:
    r, c = cell[0] + dr, cell[1] + dc
    h, w = dist.shape
    if not (0 <= r < h and 0 <= c < w) or dist[r, c] < 0:
        return _INF
    return float(dist[r, c] - dist[cell])


def gradient(dist: np.ndarray, cell, seed: int, instance_id: str, t: int):
    """(dx, dy) per the four-case rule; +1 means right (resp. down) is closer."""

    def axis_sign(lo, hi, axis):
        if lo >= 0 and hi >= 0:
            return 0
        if lo >= 0:
            return 1
        if hi >= 0:
            return -1
        return tie_pm1(seed, instance_id, t, cell, axis)

    dx = axis_sign(_delta(dist, cell, 0, -1), _delta(dist, cell, 0, 1), "x")
    dy = axis_sign(_delta(dist, cell, -1, 0), _delta(dist, cell, 1, 0), "y")
    return dx, dy


def build_features(
    walls: np.ndarray,
    positions,
    goals,
    distance_fields,
    seed: int,
    instance_id: str,
    t: int,
    normalize_indices: bool = False,
) -> np.ndarray:
    """The (n, m, 6) input tensor, matching the engine's output bit for bit."""
    n, m = walls.shape
    data = np.zeros((n, m, len(CHANNELS)), dtype=np.float32)
    data[:, :, 0] = walls
    scale = 1.0 / len(positions) if normalize_indices else 1.0
    norm = float(n + m)
    for i, (pos, goal) in enumerate(zip(positions, goals)):
        idx = (i + 1) * scale
        data[pos[0], pos[1], 1] = idx
        data[goal[0], goal[1], 2] = idx
        dist = distance_fields[i]
        data[pos[0], pos[1], 3] = int(dist[pos]) / norm
        dx, dy = gradient(dist, pos, seed, instance_id, t)
        data[pos[0], pos[1], 4] = dx
        data[pos[0], pos[1], 5] = dy
    return data


_DELTA_TO_NAME = {(0, 0): "wait", (-1, 0): "up", (1, 0): "down", (0, -1): "left", (0, 1): "right"}


def build_labels(walls: np.ndarray, positions, next_positions, action_encoding) -> np.ndarray:
    """Per-cell action labels for one transition; the mask value elsewhere."""
    labels = np.full(walls.shape, MASK, dtype=np.uint8)
    for here, there in zip(positions, next_positions):
        delta = (there[0] - here[0], there[1] - here[1])
        labels[here] = action_encoding[_DELTA_TO_NAME[delta]]
    return labels


def positions_at(paths, t: int):
    """Joint position at time t, with early arrivals resting on their goals."""
    return [tuple(path[min(t, len(path) - 1)]) for path in paths]
