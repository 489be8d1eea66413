"""Supervised training on exported datasets.

Masked cross-entropy over the five action classes: cells labeled with the
mask value carry no loss and no gradient. Checkpoints embed the dataset meta
(channel order, action encoding, normalization) so a served policy can
verify it is being fed what the weights were trained on.
"""

import argparse
import json
import random
import sys
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader

from .data import MASK, DatasetError, MetaMismatch, SampleDataset, read_meta
from .unet import UNet, UNetSpec, count_parameters

CHECKPOINT_FORMAT = 1

_META_CONTRACT = ("k", "channel_order", "action_encoding", "normalization")


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 256
    lr: float = 1e-4
    weight_decay: float = 1e-3
    betas: tuple = (0.9, 0.999)
    seed: int = 0
    levels: int = 5
    base_channels: int = 64
    stop_at_accuracy: float | None = None
    device: str = "cpu"


def _seed_all(seed: int):
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def _contract(meta: dict) -> dict:
    return {key: meta.get(key) for key in _META_CONTRACT}


def train(dataset_dir, config: TrainConfig | None = None, resume_from=None):
    """Fit the model and return (checkpoint dict, log). Pure function of its seeds."""
    config = config or TrainConfig()
    meta = read_meta(dataset_dir)
    spec = UNetSpec(
        levels=config.levels,
        base_channels=config.base_channels,
        in_channels=meta["k"],
        out_channels=len([a for a in meta["action_encoding"].values() if a != MASK]),
    )
    _seed_all(config.seed)
    model = UNet(spec).to(config.device)
    if resume_from is not None:
        previous = torch.load(resume_from, map_location=config.device, weights_only=False)
        if _contract(previous["meta"]) != _contract(meta):
            raise MetaMismatch(
                "checkpoint was trained on a different feature contract: "
                f"{_contract(previous['meta'])} vs {_contract(meta)}"
            )
        model.load_state_dict(previous["state_dict"])

    dataset = SampleDataset(dataset_dir, multiple=spec.multiple)
    loader = DataLoader(
        dataset,
        batch_size=config.batch_size,
        shuffle=True,
        generator=torch.Generator().manual_seed(config.seed),
    )
    optimizer = torch.optim.AdamW(
        model.parameters(),
        lr=config.lr,
        betas=tuple(config.betas),
        weight_decay=config.weight_decay,
    )
    loss_fn = nn.CrossEntropyLoss(ignore_index=MASK)

    log = []
    model.train()
    for epoch in range(config.epochs):
        total_loss = 0.0
        correct = 0
        scored = 0
        for x, y in loader:
            x, y = x.to(config.device), y.to(config.device)
            optimizer.zero_grad()
            logits = model(x)
            loss = loss_fn(logits, y)
            loss.backward()
            optimizer.step()
            live = y != MASK
            batch_scored = int(live.sum())
            total_loss += loss.detach().item() * batch_scored
            correct += int((logits.argmax(dim=1)[live] == y[live]).sum())
            scored += batch_scored
        entry = {
            "epoch": epoch,
            "loss": total_loss / max(scored, 1),
            "masked_accuracy": correct / max(scored, 1),
        }
        log.append(entry)
        if config.stop_at_accuracy is not None and entry["masked_accuracy"] >= config.stop_at_accuracy:
            break

    checkpoint = {
        "format": CHECKPOINT_FORMAT,
        "model": asdict(spec),
        "state_dict": model.state_dict(),
        "meta": meta,
        "train_config": asdict(config),
        "parameters": count_parameters(model),
        "log": log,
    }
    return checkpoint, log


def save_checkpoint(checkpoint: dict, path):
    torch.save(checkpoint, path)


def load_checkpoint(path, device="cpu"):
    """Rebuild the model from a checkpoint; returns (model, checkpoint dict)."""
    checkpoint = torch.load(path, map_location=device, weights_only=False)
    spec = UNetSpec(**checkpoint["model"])
    model = UNet(spec).to(device)
    model.load_state_dict(checkpoint["state_dict"])
    model.eval()
    return model, checkpoint


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gridflow-train")
    parser.add_argument("dataset", help="dataset directory (meta.json + samples.bin)")
    parser.add_argument("--out", required=True, help="checkpoint path")
    parser.add_argument("--epochs", type=int, default=50)
    parser.add_argument("--batch-size", type=int, default=256)
    parser.add_argument("--lr", type=float, default=1e-4)
    parser.add_argument("--weight-decay", type=float, default=1e-3)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--levels", type=int, default=5)
    parser.add_argument("--base-channels", type=int, default=64)
    parser.add_argument("--stop-at-accuracy", type=float, default=None)
    parser.add_argument("--resume-from", default=None)
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args(argv)

    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        weight_decay=args.weight_decay,
        seed=args.seed,
        levels=args.levels,
        base_channels=args.base_channels,
        stop_at_accuracy=args.stop_at_accuracy,
        device=args.device,
    )
    try:
        checkpoint, log = train(args.dataset, config, resume_from=args.resume_from)
    except (DatasetError, MetaMismatch, OSError) as e:
        print(json.dumps({"error": type(e).__name__, "detail": str(e)}), file=sys.stderr)
        return 1
    save_checkpoint(checkpoint, args.out)
    for entry in log:
        print(json.dumps(entry))
    print(
        json.dumps(
            {
                "out": args.out,
                "parameters": checkpoint["parameters"],
                "final_loss": log[-1]["loss"] if log else None,
                "final_masked_accuracy": log[-1]["masked_accuracy"] if log else None,
            }
        )
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
