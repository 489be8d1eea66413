"""Shared fixtures: real datasets built through the engine CLI.

Everything the trainer consumes is produced by the engine's public command
line, never by importing it, so these tests double as a consumer check of the
published interfaces.
"""

import json
import subprocess
import sys

import pytest

ENGINE = [sys.executable, "-m", "gridflow.cli"]


def run_engine(*args, check=True):
    proc = subprocess.run(
        ENGINE + [str(a) for a in args], capture_output=True, text=True
    )
    if check and proc.returncode != 0:
        raise RuntimeError(f"engine {args[0]} failed: {proc.stderr}")
    return proc


def export_dataset(out_dir, recipe: dict):
    recipe_path = out_dir.parent / f"{out_dir.name}-recipe.json"
    recipe_path.write_text(json.dumps(recipe))
    run_engine("export-dataset", "--recipe", recipe_path, "--out-dir", out_dir)
    return out_dir


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Two maps, one 4-agent and one 8-agent scenario each."""
    out = tmp_path_factory.mktemp("datasets") / "tiny"
    return export_dataset(
        out,
        {
            "name": "tiny",
            "seed": 11,
            "maps": {"count": 2, "height": 16, "width": 16, "density": 0.5},
            "scenarios": [{"count": 1, "agents": 4}, {"count": 1, "agents": 8}],
        },
    )


@pytest.fixture(scope="session")
def overfit_dataset(tmp_path_factory):
    """A single 8-agent 16x16 scenario, the memorization target."""
    out = tmp_path_factory.mktemp("datasets") / "overfit"
    return export_dataset(
        out,
        {
            "name": "overfit",
            "seed": 21,
            "maps": {"count": 1, "height": 16, "width": 16, "density": 0.5},
            "scenarios": [{"count": 1, "agents": 8}],
        },
    )


@pytest.fixture(scope="session")
def overfit_ckpt(overfit_dataset, tmp_path_factory):
    from gridflow_trainer import TrainConfig, save_checkpoint, train

    config = TrainConfig(
        epochs=400, batch_size=64, lr=3e-4, base_channels=16, stop_at_accuracy=1.0
    )
    checkpoint, log = train(overfit_dataset, config)
    assert log[-1]["masked_accuracy"] == 1.0, "memorization never converged"
    path = tmp_path_factory.mktemp("ckpts") / "overfit.pt"
    save_checkpoint(checkpoint, path)
    return path


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    """Ten mazes, three 4-agent and three 8-agent scenarios each."""
    out = tmp_path_factory.mktemp("datasets") / "toy"
    return export_dataset(
        out,
        {
            "name": "toy",
            "seed": 33,
            "maps": {"count": 10, "height": 16, "width": 16, "density": 0.5},
            "scenarios": [{"count": 3, "agents": 4}, {"count": 3, "agents": 8}],
        },
    )


@pytest.fixture(scope="session")
def toy_ckpt(toy_dataset, tmp_path_factory):
    from gridflow_trainer import TrainConfig, save_checkpoint, train

    config = TrainConfig(epochs=150, batch_size=256, lr=3e-4, base_channels=16)
    checkpoint, _ = train(toy_dataset, config)
    path = tmp_path_factory.mktemp("ckpts") / "toy.pt"
    save_checkpoint(checkpoint, path)
    return path
