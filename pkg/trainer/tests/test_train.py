import json

import pytest
import torch
from torch import nn

from gridflow_trainer import (
    MetaMismatch,
    SampleDataset,
    TrainConfig,
    UNet,
    UNetSpec,
    count_parameters,
    load_checkpoint,
    save_checkpoint,
    train,
)
from gridflow_trainer.data import MASK
from gridflow_trainer.train import main as train_main

FAST = TrainConfig(epochs=2, batch_size=64, base_channels=16)


@pytest.fixture(scope="module")
def batch(tiny_dataset):
    ds = SampleDataset(tiny_dataset)
    x = torch.stack([ds[i][0] for i in range(4)])
    y = torch.stack([ds[i][1] for i in range(4)])
    assert (y == MASK).any(), "need masked cells to make the test meaningful"
    return x, y


class TestMaskedLoss:
    def test_masked_cells_get_exactly_zero_gradient(self, batch):
        x, y = batch
        torch.manual_seed(0)
        model = UNet(UNetSpec(base_channels=16))
        logits = model(x)
        logits.retain_grad()
        nn.CrossEntropyLoss(ignore_index=MASK)(logits, y).backward()
        masked = (y == MASK).unsqueeze(1).expand_as(logits)
        assert (logits.grad[masked] == 0).all()
        assert logits.grad[~masked].abs().sum() > 0

    def test_loss_ignores_logits_at_masked_cells(self, batch):
        x, y = batch
        torch.manual_seed(0)
        model = UNet(UNetSpec(base_channels=16)).eval()
        with torch.no_grad():
            logits = model(x)
            loss_fn = nn.CrossEntropyLoss(ignore_index=MASK)
            baseline = loss_fn(logits, y)
            noise = torch.randn_like(logits) * (y == MASK).unsqueeze(1)
            assert torch.equal(loss_fn(logits + noise, y), baseline)


class TestTrainLoop:
    def test_same_seed_same_weights(self, tiny_dataset):
        first, _ = train(tiny_dataset, FAST)
        second, _ = train(tiny_dataset, FAST)
        for key, value in first["state_dict"].items():
            assert torch.equal(value, second["state_dict"][key]), key

    def test_log_tracks_epochs_and_improves(self, overfit_ckpt):
        _, checkpoint = load_checkpoint(overfit_ckpt)
        log = checkpoint["log"]
        assert [entry["epoch"] for entry in log] == list(range(len(log)))
        assert log[-1]["masked_accuracy"] == 1.0
        assert log[-1]["loss"] < log[0]["loss"]

    def test_early_stop_cuts_the_schedule_short(self, overfit_ckpt):
        _, checkpoint = load_checkpoint(overfit_ckpt)
        assert len(checkpoint["log"]) < checkpoint["train_config"]["epochs"]

    def test_model_dimensions_come_from_the_dataset_meta(self, overfit_ckpt):
        model, checkpoint = load_checkpoint(overfit_ckpt)
        meta = checkpoint["meta"]
        assert model.spec.in_channels == meta["k"]
        assert model.spec.out_channels == 5
        assert checkpoint["parameters"] == count_parameters(model)
        assert not model.training, "loaded checkpoints must come back in eval mode"


class TestResume:
    def test_resume_continues_from_saved_weights(self, tiny_dataset, tmp_path):
        checkpoint, _ = train(tiny_dataset, FAST)
        path = tmp_path / "warm.pt"
        save_checkpoint(checkpoint, path)
        resumed, log = train(
            tiny_dataset, TrainConfig(epochs=1, batch_size=64, base_channels=16), resume_from=path
        )
        assert len(log) == 1
        assert log[0]["loss"] < checkpoint["log"][0]["loss"]

    def test_contract_drift_is_refused(self, tiny_dataset, tmp_path):
        checkpoint, _ = train(tiny_dataset, TrainConfig(epochs=1, batch_size=64, base_channels=16))
        checkpoint["meta"]["channel_order"] = list(reversed(checkpoint["meta"]["channel_order"]))
        path = tmp_path / "drifted.pt"
        save_checkpoint(checkpoint, path)
        with pytest.raises(MetaMismatch):
            train(tiny_dataset, FAST, resume_from=path)


class TestCli:
    def test_main_trains_saves_and_reports(self, tiny_dataset, tmp_path, capsys):
        out = tmp_path / "cli.pt"
        rc = train_main(
            [
                str(tiny_dataset),
                "--out", str(out),
                "--epochs", "1",
                "--batch-size", "64",
                "--base-channels", "16",
            ]
        )
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        summary = json.loads(lines[-1])
        assert summary["parameters"] > 0
        assert summary["final_masked_accuracy"] is not None
        model, _ = load_checkpoint(out)
        assert model.spec.base_channels == 16

    def test_missing_dataset_reports_a_clean_error(self, tmp_path, capsys):
        rc = train_main([str(tmp_path / "void"), "--out", str(tmp_path / "x.pt")])
        assert rc == 1
        err = json.loads(capsys.readouterr().err)
        assert "error" in err
