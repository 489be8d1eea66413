"""The newline-delimited JSON step protocol between engine and policies.

One episode is one conversation: the engine sends an init object, the policy
answers ready (declaring whether it wants feature tensors), then each step is
one obs message answered by one act message. Actions travel either as a full
row-major field (one id per grid cell) or as a per-agent list; a message
carrying both is resolved in favor of the field.
"""

from __future__ import annotations

import base64
import json

import numpy as np

from .errors import ProtocolViolation
from .grid import GridMap

PROTOCOL_VERSION = 1

FIELD_VALUES = frozenset((0, 1, 2, 3, 4, 255))
AGENT_ACTIONS = frozenset((0, 1, 2, 3, 4))


def map_to_string(grid: GridMap) -> str:
    """Row-major '.'/'#' encoding, height*width characters."""
    return "".join(
        "#" if grid.cells[r, c] else "."
        for r in range(grid.height)
        for c in range(grid.width)
    )


def map_from_string(s: str, height: int, width: int) -> GridMap:
    if len(s) != height * width:
        raise ProtocolViolation(f"map string has {len(s)} chars for {height}x{width}")
    cells = np.zeros((height, width), dtype=bool)
    for i, ch in enumerate(s):
        if ch == "#":
            cells[i // width, i % width] = True
        elif ch != ".":
            raise ProtocolViolation(f"bad map glyph {ch!r} at offset {i}")
    return GridMap(height, width, cells)


def init_message(
    mode: str,
    grid: GridMap,
    num_agents: int,
    k: int,
    channel_order,
    action_encoding,
    select: str = "argmax",
    seed: int = 0,
    max_steps: int = 0,
    normalize_indices: bool = False,
) -> dict:
    return {
        "type": "init",
        "protocol": PROTOCOL_VERSION,
        "mode": mode,
        "height": grid.height,
        "width": grid.width,
        "map": map_to_string(grid),
        "num_agents": num_agents,
        "k": k,
        "channel_order": list(channel_order),
        "action_encoding": dict(action_encoding),
        "select": select,
        "seed": seed,
        "max_steps": max_steps,
        "normalize_indices": normalize_indices,
    }


def obs_message(t: int, positions, goals, features_b64: str | None = None) -> dict:
    msg = {
        "type": "obs",
        "t": t,
        "agents": [
            {"id": i, "r": p[0], "c": p[1], "gr": g[0], "gc": g[1]}
            for i, (p, g) in enumerate(zip(positions, goals))
        ],
    }
    if features_b64 is not None:
        msg["features"] = features_b64
    return msg


def encode_features(data: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(data, dtype="<f4").tobytes()).decode("ascii")


def decode_features(b64: str, height: int, width: int, k: int) -> np.ndarray:
    raw = base64.b64decode(b64)
    expected = 4 * height * width * k
    if len(raw) != expected:
        raise ProtocolViolation(f"features blob is {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f4").reshape(height, width, k)


def parse_ready(obj) -> bool:
    """Validate a ready reply; returns whether the policy wants features."""
    if not isinstance(obj, dict) or obj.get("type") != "ready":
        raise ProtocolViolation(f"expected ready message, got {obj!r}")
    return bool(obj.get("features", False))


def parse_act(obj, t: int, height: int, width: int, num_agents: int):
    """Validate an act message. Returns ("field", values) or ("actions", values)."""
    if not isinstance(obj, dict) or obj.get("type") != "act":
        raise ProtocolViolation(f"expected act message, got type {obj.get('type')!r}")
    if obj.get("t") != t:
        raise ProtocolViolation(f"act for t={obj.get('t')}, expected t={t}")
    if "field" in obj:
        values = obj["field"]
        if not isinstance(values, list) or len(values) != height * width:
            raise ProtocolViolation(
                f"field must hold {height * width} ints, got {len(values) if isinstance(values, list) else type(values).__name__}"
            )
        bad = [v for v in values if not isinstance(v, int) or v not in FIELD_VALUES]
        if bad:
            raise ProtocolViolation(f"field contains invalid action ids {sorted(set(bad))[:5]}")
        return "field", values
    if "actions" in obj:
        values = obj["actions"]
        if not isinstance(values, list) or len(values) != num_agents:
            raise ProtocolViolation(
                f"actions must hold {num_agents} ints, got {len(values) if isinstance(values, list) else type(values).__name__}"
            )
        bad = [v for v in values if not isinstance(v, int) or v not in AGENT_ACTIONS]
        if bad:
            raise ProtocolViolation(f"actions contain invalid ids {sorted(set(bad))[:5]}")
        return "actions", values
    raise ProtocolViolation("act message carries neither field nor actions")


def write_message(stream, obj) -> None:
    stream.write(json.dumps(obj, separators=(",", ":")) + "\n")
    stream.flush()


def read_message(stream) -> dict:
    line = stream.readline()
    if not line:
        raise ProtocolViolation("peer closed the stream")
    try:
        return json.loads(line)
    except json.JSONDecodeError as e:
        raise ProtocolViolation(f"bad JSON line: {e}") from None
