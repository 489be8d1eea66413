"""Readers for exported dataset directories.

A dataset directory holds meta.json plus samples.bin, a stream of
back-to-back records:

    [u32 record_len][u16 n][u16 m][u16 k][f32 features n*m*k][u8 labels n*m]

little-endian throughout, record_len counting the bytes after the length
field. This module reads that format directly from its published description
and never imports the engine.
"""

import json
import struct
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import Dataset

MASK = 255

_LEN = struct.Struct("<I")
_DIMS = struct.Struct("<HHH")


class DatasetError(Exception):
    pass


class MetaMismatch(Exception):
    """Checkpoint and dataset disagree about the feature contract."""


def read_meta(dataset_dir) -> dict:
    path = Path(dataset_dir) / "meta.json"
    if not path.exists():
        raise DatasetError(f"no meta.json under {dataset_dir}")
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def iter_records(path):
    """Yield (features, labels) arrays for every record in a samples.bin."""
    with open(path, "rb") as f:
        while True:
            head = f.read(_LEN.size)
            if not head:
                return
            if len(head) < _LEN.size:
                raise DatasetError("truncated record length")
            (length,) = _LEN.unpack(head)
            body = f.read(length)
            if len(body) < length:
                raise DatasetError("truncated record body")
            n, m, k = _DIMS.unpack(body[: _DIMS.size])
            feat_bytes = n * m * k * 4
            expected = _DIMS.size + feat_bytes + n * m
            if length != expected:
                raise DatasetError(f"record_len {length} != {expected} for dims {(n, m, k)}")
            features = np.frombuffer(
                body, dtype="<f4", count=n * m * k, offset=_DIMS.size
            ).reshape(n, m, k)
            labels = np.frombuffer(
                body, dtype=np.uint8, count=n * m, offset=_DIMS.size + feat_bytes
            ).reshape(n, m)
            yield features, labels


def pad_sample(features: np.ndarray, labels: np.ndarray, multiple: int):
    """Pad bottom/right to the next multiple with obstacle semantics.

    The map channel (index 0) gets 1.0 in the padding, every other channel 0,
    and labels get the mask value, so padded cells neither look free nor
    contribute loss.
    """
    n, m, _ = features.shape
    pn = (multiple - n % multiple) % multiple
    pm = (multiple - m % multiple) % multiple
    if pn == 0 and pm == 0:
        return features, labels
    features = np.pad(features, ((0, pn), (0, pm), (0, 0)))
    features[n:, :, 0] = 1.0
    features[:, m:, 0] = 1.0
    labels = np.pad(labels, ((0, pn), (0, pm)), constant_values=MASK)
    return features, labels


class SampleDataset(Dataset):
    """All records of a dataset directory, in memory, ready for a DataLoader.

    Samples come back as (features CxHxW float32, labels HxW int64), padded
    so the model's pooling stack divides the sides evenly.
    """

    def __init__(self, dataset_dir, multiple: int = 16):
        self.meta = read_meta(dataset_dir)
        self.multiple = multiple
        self.samples = []
        for features, labels in iter_records(Path(dataset_dir) / "samples.bin"):
            features, labels = pad_sample(features.copy(), labels.copy(), multiple)
            x = torch.from_numpy(np.ascontiguousarray(features.transpose(2, 0, 1)))
            y = torch.from_numpy(labels.astype(np.int64))
            self.samples.append((x, y))
        if len(self.samples) != self.meta.get("sample_count", len(self.samples)):
            raise DatasetError(
                f"samples.bin holds {len(self.samples)} records, "
                f"meta says {self.meta['sample_count']}"
            )
        shapes = {tuple(x.shape) for x, _ in self.samples}
        if len(shapes) > 1:
            raise DatasetError(f"mixed padded shapes {sorted(shapes)}; batching needs one")

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, i):
        return self.samples[i]
