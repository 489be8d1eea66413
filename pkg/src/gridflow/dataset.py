"""Maze and scenario generation plus supervised dataset export.

A dataset is a directory: meta.json describes everything needed to rebuild
the tensors bit-for-bit (action encoding, channel order, seeds, per-scenario
status), samples.bin is a little-endian stream of records

    [u32 record_len][u16 n][u16 m][u16 k][f32 features n*m*k][u8 labels n*m]

where record_len counts the bytes after the length field itself. Features are
row-major channel-last float32; labels use 255 for unoccupied (masked) cells.
The same recipe and seed always produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import random
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Instance, Solution, makespan, render_scen, soc
from .errors import ExpertFailure, ExpertFailureRateExceeded, TooManyAgents
from .expert import ExpertConfig, solve_prioritized
from .features import CHANNELS, TieBreakRng, build_features, build_label
from .grid import GridMap, connected_components, render_map

FORMAT_VERSION = 1

ACTION_ENCODING = {"wait": 0, "up": 1, "down": 2, "left": 3, "right": 4, "free": 255}

_HEADER = struct.Struct("<IHHH")


def derive_seed(*parts) -> int:
    """Stable 63-bit sub-seed from any mix of ints and strings."""
    material = ":".join(str(p) for p in parts).encode()
    digest = hashlib.blake2b(material, digest_size=8).digest()
    return int.from_bytes(digest, "little") & (2**63 - 1)


def generate_maze(height: int, width: int, wall_density: float, braid: float, seed: int) -> GridMap:
    """Carve a connected maze, open loops, then thin walls toward a target.

    wall_density scales the carved maze's own obstacle fraction (1 keeps the
    full maze, 0 strips it near-open); braid is the probability of opening
    each dead end. All free cells stay mutually reachable throughout.
    """
    if height < 4 or width < 4:
        raise ValueError("maze dimensions must be at least 4x4")
    rng = random.Random(seed)
    cells = np.ones((height, width), dtype=bool)

    # Recursive backtracker over the lattice of cells at even coordinates.
    lh, lw = (height + 1) // 2, (width + 1) // 2
    visited = [[False] * lw for _ in range(lh)]
    stack = [(0, 0)]
    visited[0][0] = True
    cells[0, 0] = False
    while stack:
        i, j = stack[-1]
        options = []
        for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            ni, nj = i + di, j + dj
            if 0 <= ni < lh and 0 <= nj < lw and not visited[ni][nj]:
                options.append((ni, nj))
        if not options:
            stack.pop()
            continue
        ni, nj = rng.choice(options)
        visited[ni][nj] = True
        cells[2 * ni, 2 * nj] = False
        cells[i + ni, j + nj] = False  # the wall between, at the midpoint
        stack.append((ni, nj))

    def free_neighbors(r, c):
        out = []
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < height and 0 <= nc < width and not cells[nr, nc]:
                out.append((nr, nc))
        return out

    # Braiding: knock a wall out of each dead end with probability `braid`.
    if braid > 0:
        for r in range(height):
            for c in range(width):
                if cells[r, c] or len(free_neighbors(r, c)) != 1:
                    continue
                if rng.random() >= braid:
                    continue
                walls = []
                for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                    if 0 <= nr < height and 0 <= nc < width and cells[nr, nc]:
                        # Opening helps only if the wall touches other free space.
                        if any(
                            (ar, ac) != (r, c)
                            for ar, ac in free_neighbors(nr, nc)
                        ):
                            walls.append((nr, nc))
                if walls:
                    cells[rng.choice(walls)] = False

    # Density pass: remove walls adjacent to free space until close to the
    # target fraction. Each removal attaches a new cell to the existing
    # component, so connectivity is preserved by construction.
    target = wall_density * float(cells.mean())
    while float(cells.mean()) > target + 0.05:
        candidates = [
            (r, c)
            for r in range(height)
            for c in range(width)
            if cells[r, c] and free_neighbors(r, c)
        ]
        if not candidates:
            break
        removals = max(1, int(len(candidates) * 0.25))
        rng.shuffle(candidates)
        for r, c in candidates[:removals]:
            cells[r, c] = False
            if float(cells.mean()) <= target + 0.05:
                break

    return GridMap(height, width, cells)


def generate_scenario(grid: GridMap, num_agents: int, seed: int, map_name: str = "map") -> Instance:
    """Uniform starts and goals without replacement; goals stay reachable."""
    free = grid.free_cells()
    if num_agents > len(free):
        raise TooManyAgents(f"{num_agents} agents for {len(free)} free cells")
    labels = connected_components(grid)
    rng = random.Random(seed)
    for _ in range(50):
        starts = rng.sample(free, num_agents)
        taken: set = set()
        goals = []
        ok = True
        for s in starts:
            component = labels[s]
            candidates = [c for c in free if labels[c] == component and c not in taken]
            if not candidates:
                ok = False
                break
            g = rng.choice(candidates)
            taken.add(g)
            goals.append(g)
        if ok:
            return Instance(
                grid, starts, goals, id=f"{map_name}-a{num_agents}-s{seed}"
            )
    raise TooManyAgents(
        f"could not place {num_agents} reachable goals on this map"
    )


def write_sample(out, features: np.ndarray, labels: np.ndarray) -> None:
    """Append one record to a binary stream."""
    n, m, k = features.shape
    feat = np.ascontiguousarray(features, dtype="<f4").tobytes()
    lab = np.ascontiguousarray(labels, dtype=np.uint8).tobytes()
    body = struct.pack("<HHH", n, m, k) + feat + lab
    out.write(struct.pack("<I", len(body)))
    out.write(body)


def iter_samples(path):
    """Yield (features, labels) pairs from a samples.bin file."""
    with open(path, "rb") as f:
        while True:
            head = f.read(4)
            if not head:
                return
            (length,) = struct.unpack("<I", head)
            body = f.read(length)
            if len(body) != length:
                raise ValueError("truncated record")
            n, m, k = struct.unpack("<HHH", body[:6])
            feat_bytes = 4 * n * m * k
            features = np.frombuffer(body[6 : 6 + feat_bytes], dtype="<f4").reshape(n, m, k)
            labels = np.frombuffer(body[6 + feat_bytes :], dtype=np.uint8).reshape(n, m)
            yield features, labels


@dataclass
class MapRecipe:
    count: int = 10
    height: int = 16
    width: int = 16
    density: float = 0.5
    braid: float = 0.3


@dataclass
class DatasetRecipe:
    name: str = "desk"
    seed: int = 0
    maps: MapRecipe = field(default_factory=MapRecipe)
    scenarios: list[dict] = field(
        default_factory=lambda: [
            {"count": 2, "agents": 4},
            {"count": 2, "agents": 8},
            {"count": 2, "agents": 12},
        ]
    )
    expert: dict = field(default_factory=lambda: {"timeout_ms": 2000, "max_restarts": 20})
    max_failure_rate: float = 0.5
    normalize_indices: bool = False

    @classmethod
    def from_dict(cls, obj: dict) -> "DatasetRecipe":
        maps = MapRecipe(**obj.get("maps", {}))
        kwargs = {k: v for k, v in obj.items() if k != "maps"}
        return cls(maps=maps, **kwargs)


def build_dataset(recipe: DatasetRecipe, out_dir) -> dict:
    """Generate maps and scenarios, solve them, and export supervised samples.

    Writes maps/, scens/, samples.bin, and meta.json under out_dir. Expert
    failures are recorded per scenario; if their rate exceeds the recipe's
    threshold the build aborts without writing meta.json.
    """
    out = Path(out_dir)
    (out / "maps").mkdir(parents=True, exist_ok=True)
    (out / "scens").mkdir(parents=True, exist_ok=True)

    expert_cfg = ExpertConfig(**recipe.expert)
    maps_meta = []
    grids = []
    for mi in range(recipe.maps.count):
        seed = derive_seed(recipe.seed, "map", mi)
        grid = generate_maze(
            recipe.maps.height, recipe.maps.width, recipe.maps.density, recipe.maps.braid, seed
        )
        name = f"maze-{mi:03d}"
        (out / "maps" / f"{name}.map").write_text(render_map(grid))
        grids.append((name, grid))
        maps_meta.append(
            {
                "name": name,
                "file": f"maps/{name}.map",
                "height": grid.height,
                "width": grid.width,
                "seed": seed,
                "obstacle_fraction": round(grid.obstacle_fraction, 4),
            }
        )

    scenario_meta = []
    failures = 0
    total = 0
    sample_count = 0
    blobs = []
    for mi, (map_name, grid) in enumerate(grids):
        for si, spec in enumerate(recipe.scenarios):
            for ci in range(spec["count"]):
                total += 1
                seed = derive_seed(recipe.seed, "scen", mi, si, ci)
                inst = generate_scenario(grid, spec["agents"], seed, map_name)
                inst_id = f"{map_name}-a{spec['agents']}-c{ci}"
                inst.id = inst_id
                (out / "scens" / f"{inst_id}.scen").write_text(
                    render_scen(
                        list(zip(inst.starts, inst.goals)),
                        f"{map_name}.map",
                        grid.width,
                        grid.height,
                    )
                )
                record = {
                    "instance_id": inst_id,
                    "map": map_name,
                    "scen_file": f"scens/{inst_id}.scen",
                    "agents": spec["agents"],
                    "seed": seed,
                }
                try:
                    sol = solve_prioritized(inst, expert_cfg)
                except ExpertFailure as e:
                    failures += 1
                    record.update(status="expert_failure", reason=str(e), samples=0)
                    scenario_meta.append(record)
                    continue
                blob, emitted = _emit_scenario(recipe, grid, inst, sol)
                blobs.append(blob)
                sample_count += emitted
                record.update(
                    status="ok", samples=emitted, soc=soc(sol), makespan=makespan(sol)
                )
                scenario_meta.append(record)

    if total and failures / total > recipe.max_failure_rate:
        raise ExpertFailureRateExceeded(
            f"{failures}/{total} scenarios failed (limit {recipe.max_failure_rate:.0%})"
        )

    samples_path = out / "samples.bin"
    with open(samples_path, "wb") as f:
        for blob in blobs:
            f.write(blob)
    sha = hashlib.sha256(samples_path.read_bytes()).hexdigest()

    meta = {
        "format_version": FORMAT_VERSION,
        "name": recipe.name,
        "seed": recipe.seed,
        "action_encoding": ACTION_ENCODING,
        "channel_order": list(CHANNELS),
        "k": len(CHANNELS),
        "normalization": {
            "cost_to_goal_divisor": "height+width",
            "indices_normalized": recipe.normalize_indices,
        },
        "expert": recipe.expert,
        "recipe": {
            "maps": vars(recipe.maps),
            "scenarios": recipe.scenarios,
            "max_failure_rate": recipe.max_failure_rate,
        },
        "maps": maps_meta,
        "scenarios": scenario_meta,
        "sample_count": sample_count,
        "scenario_failures": failures,
        "samples_sha256": sha,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta


def _emit_scenario(recipe, grid, inst, sol) -> tuple[bytes, int]:
    """Binary records for every timestep of one solved scenario."""
    import io

    dist_fields = inst.distance_fields()
    horizon = makespan(sol)
    buf = io.BytesIO()
    for t in range(horizon):
        rng = TieBreakRng(recipe.seed, inst.id, t)
        tensor = build_features(
            grid,
            sol.positions_at(t),
            inst.goals,
            dist_fields,
            rng,
            normalize_indices=recipe.normalize_indices,
        )
        label = build_label(grid, sol.positions_at(t), sol.positions_at(t + 1))
        write_sample(buf, tensor.data, label.labels)
    return buf.getvalue(), horizon


def load_meta(dataset_dir) -> dict:
    with open(Path(dataset_dir) / "meta.json", "r", encoding="utf-8") as f:
        return json.load(f)
