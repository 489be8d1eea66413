"""Serve a checkpoint as a step-protocol policy.

Reads newline-delimited JSON on stdin, writes replies on stdout: init is
answered with a ready message that requests engine-built features, then every
obs gets one act message carrying a full per-cell action field. The engine
applies the field at agent cells; everything else is advisory.
"""

import argparse
import base64
import json
import sys

import numpy as np
import torch

from .data import MetaMismatch
from .train import load_checkpoint


def _pad(features: np.ndarray, multiple: int) -> np.ndarray:
    n, m, _ = features.shape
    pn = (multiple - n % multiple) % multiple
    pm = (multiple - m % multiple) % multiple
    if pn == 0 and pm == 0:
        return features
    features = np.pad(features, ((0, pn), (0, pm), (0, 0)))
    features[n:, :, 0] = 1.0
    features[:, m:, 0] = 1.0
    return features


class PolicyServer:
    def __init__(self, checkpoint_path, select=None, device="cpu"):
        self.model, self.checkpoint = load_checkpoint(checkpoint_path, device)
        self.meta = self.checkpoint["meta"]
        self.select_override = select
        self.device = device
        self.select = "argmax"
        self.height = self.width = 0
        self.generator = None

    def on_init(self, msg: dict) -> dict:
        meta = self.meta
        if msg.get("k") != meta["k"]:
            raise MetaMismatch(f"init k={msg.get('k')}, checkpoint k={meta['k']}")
        if list(msg.get("channel_order", [])) != list(meta["channel_order"]):
            raise MetaMismatch("channel order differs from training meta")
        if dict(msg.get("action_encoding", {})) != dict(meta["action_encoding"]):
            raise MetaMismatch("action encoding differs from training meta")
        if bool(msg.get("normalize_indices", False)) != bool(
            meta["normalization"]["indices_normalized"]
        ):
            raise MetaMismatch("index normalization differs from training meta")
        self.height = int(msg["height"])
        self.width = int(msg["width"])
        self.select = self.select_override or msg.get("select", "argmax")
        self.generator = torch.Generator().manual_seed(int(msg.get("seed", 0)))
        return {"type": "ready", "features": True}

    def on_obs(self, msg: dict) -> dict:
        if "features" not in msg:
            raise MetaMismatch("obs carries no features despite negotiation")
        raw = base64.b64decode(msg["features"])
        k = self.meta["k"]
        features = (
            np.frombuffer(raw, dtype="<f4")
            .reshape(self.height, self.width, k)
            .copy()
        )
        padded = _pad(features, self.model.spec.multiple)
        x = torch.from_numpy(np.ascontiguousarray(padded.transpose(2, 0, 1)))[None]
        with torch.no_grad():
            logits = self.model(x.to(self.device))[0]
        logits = logits[:, : self.height, : self.width]
        if self.select == "sample":
            probs = torch.softmax(logits.reshape(logits.shape[0], -1).T, dim=1)
            cells = torch.multinomial(probs, 1, generator=self.generator).squeeze(1)
        else:
            cells = logits.argmax(dim=0).reshape(-1)
        return {"type": "act", "t": msg["t"], "field": [int(v) for v in cells]}


def serve(checkpoint_path, select=None, stdin=None, stdout=None, device="cpu") -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    server = PolicyServer(checkpoint_path, select=select, device=device)

    def reply(obj):
        stdout.write(json.dumps(obj) + "\n")
        stdout.flush()

    line = stdin.readline()
    if not line:
        return 0
    init = json.loads(line)
    if init.get("type") != "init":
        print(f"expected init, got {init.get('type')!r}", file=sys.stderr)
        return 1
    reply(server.on_init(init))
    for line in stdin:
        if not line.strip():
            continue
        msg = json.loads(line)
        if msg.get("type") != "obs":
            break
        reply(server.on_obs(msg))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gridflow-serve")
    parser.add_argument("checkpoint")
    parser.add_argument("--select", choices=("argmax", "sample"), default=None,
                        help="override the episode's selection mode")
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args(argv)
    try:
        return serve(args.checkpoint, select=args.select, device=args.device)
    except (MetaMismatch, OSError, ValueError) as e:
        print(json.dumps({"error": type(e).__name__, "detail": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
