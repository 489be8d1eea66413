"""gridflow: centralized multi-agent grid pathfinding engine."""

from .core import (
    Collision,
    Instance,
    Solution,
    ValidationReport,
    detect_collisions,
    makespan,
    parse_scen,
    render_scen,
    soc,
    validate,
)
from .dataset import (
    DatasetRecipe,
    MapRecipe,
    build_dataset,
    derive_seed,
    generate_maze,
    generate_scenario,
    iter_samples,
    load_meta,
)
from .errors import GridflowError
from .expert import ExpertConfig, solve_pibt_step, solve_prioritized
from .features import (
    CHANNELS,
    MASK,
    NUM_CHANNELS,
    FeatureTensor,
    LabelField,
    TieBreakRng,
    build_features,
    build_label,
    crop_to_original,
    gradient_at,
    pad_to_valid,
)
from .fields import (
    FREE,
    STRICT,
    TOLERANT,
    ActionField,
    apply_field,
    apply_fields,
    extend_paths,
    fields_from_solution,
)
from .grid import (
    ACTION_DELTAS,
    UNREACHABLE,
    Cell,
    CellAction,
    DistanceField,
    GridMap,
    bfs_distance,
    neighbors,
    parse_map,
    render_map,
)
from .metrics import (
    MetricReport,
    aggregate,
    attach_performance,
    coordination,
    episode_metrics,
    pathfinding,
    performance,
    scalability,
)
from .sim import (
    EpisodeConfig,
    EpisodeTrace,
    InProcessPolicy,
    StepRecord,
    SubprocessPolicy,
    make_policy,
    run_episode,
)

__version__ = "0.1.0"
