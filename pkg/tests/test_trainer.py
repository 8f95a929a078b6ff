import json

import numpy as np
import pytest

from symbreak.nn import ModelConfig
from symbreak.taskgen import EQUIVARIANT, INVARIANT, TaskSpec
from symbreak.trainer import (
    RunReport,
    TrainConfig,
    comparable_json,
    prepare_task,
    pretrain_finetune,
    resolve_epochs,
    resolve_loss,
    resolve_records,
    train_multitask,
    train_single,
)

SMALL_MODEL = ModelConfig(hidden=32, layers=2, heads=2, attn_dim=16)
INTERSECT = TaskSpec("intersect", 10, 7, EQUIVARIANT)
CYCLIC = TaskSpec("cyclicsum", 10, 7, EQUIVARIANT)
PALIN = TaskSpec("palindrome", 10, 7, EQUIVARIANT)


def quick_cfg(**kw):
    base = dict(seed=1, records=240, epochs=2)
    base.update(kw)
    return TrainConfig(**base)


class TestResolvers:
    def test_epoch_defaults(self):
        assert resolve_epochs(TrainConfig(), EQUIVARIANT) == 40
        assert resolve_epochs(TrainConfig(), INVARIANT) == 80
        assert resolve_epochs(TrainConfig(epochs=7), INVARIANT) == 7

    def test_unit_sizes(self):
        assert resolve_records(TrainConfig(), EQUIVARIANT) == 2500
        assert resolve_records(TrainConfig(), INVARIANT) == 8000
        assert resolve_records(TrainConfig(units=0.2), EQUIVARIANT) == 500
        assert resolve_records(TrainConfig(records=123, units=2.0), EQUIVARIANT) == 123

    def test_loss_resolution(self):
        assert resolve_loss(TrainConfig(), INTERSECT) == "ce"
        inv = TaskSpec("intersect", 10, 7, INVARIANT)
        assert resolve_loss(TrainConfig(), inv) == "l1"
        sign = TaskSpec("signofpermutation", 7, 7, INVARIANT)
        assert resolve_loss(TrainConfig(), sign) == "bce"
        assert resolve_loss(TrainConfig(loss="weighted_l1"), inv) == "weighted_l1"

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(lr=-1)
        with pytest.raises(ValueError):
            TrainConfig(test_fraction=1.5)
        with pytest.raises(ValueError):
            TrainConfig(loss="huber")


class TestSplit:
    def test_disjoint_and_sized(self):
        td = prepare_task(INTERSECT, "Intersect(10)", quick_cfg())
        train, test = set(td.train_idx.tolist()), set(td.test_idx.tolist())
        assert not (train & test)
        assert len(train | test) == 240
        assert len(test) == round(240 * 0.2)

    def test_same_seed_same_split(self):
        a = prepare_task(INTERSECT, "Intersect(10)", quick_cfg())
        b = prepare_task(INTERSECT, "Intersect(10)", quick_cfg())
        assert np.array_equal(a.train_idx, b.train_idx)
        assert np.array_equal(a.test_idx, b.test_idx)

    def test_weighted_l1_scale_from_train_split(self):
        inv = TaskSpec("intersect", 10, 7, INVARIANT)
        td = prepare_task(inv, "Intersect(10)", quick_cfg(loss="weighted_l1"))
        assert td.scale == float(np.abs(td.inv[td.train_idx]).max())
        assert td.eval_loss_kind == "l1"


class TestTrainSingle:
    def test_report_shape_and_determinism(self):
        model, rep = train_single(INTERSECT, "Intersect(10)", quick_cfg(), SMALL_MODEL)
        assert len(rep.train_loss) == 2 and len(rep.test_loss) == 2
        assert len(rep.epoch_seconds) == 2
        assert rep.per_task["intersect"]["test_acc"]
        _, rep2 = train_single(INTERSECT, "Intersect(10)", quick_cfg(), SMALL_MODEL)
        assert comparable_json(rep.to_json()) == comparable_json(rep2.to_json())

    def test_different_seed_differs(self):
        _, a = train_single(INTERSECT, "Intersect(10)", quick_cfg(), SMALL_MODEL)
        _, b = train_single(INTERSECT, "Intersect(10)", quick_cfg(seed=2), SMALL_MODEL)
        assert comparable_json(a.to_json()) != comparable_json(b.to_json())

    def test_training_reduces_loss(self):
        cfg = quick_cfg(records=600, epochs=6)
        _, rep = train_single(INTERSECT, "Intersect(10)", cfg, SMALL_MODEL)
        assert rep.train_loss[-1] < rep.train_loss[0]

    def test_trained_model_still_equivariant(self):
        from symbreak.verify import check_equivariance

        model, _ = train_single(INTERSECT, "Intersect(10)", quick_cfg(), SMALL_MODEL)
        td = prepare_task(INTERSECT, "Intersect(10)", quick_cfg())
        report = check_equivariance(
            model, td.a2, "Intersect(10)", n_samples=50, tol=1e-4, task="intersect"
        )
        assert report.passed

    def test_invariant_mode_uses_onehot_and_l1(self):
        inv = TaskSpec("intersect", 10, 7, INVARIANT)
        model, rep = train_single(inv, "Intersect(10)", quick_cfg(), SMALL_MODEL)
        assert model.cfg.token_mode == "onehot"
        assert "backbone/input/w" in model.params
        assert rep.config["tasks"]["intersect"]["train_loss"] == "l1"

    def test_json_round_trip(self):
        _, rep = train_single(INTERSECT, "Intersect(10)", quick_cfg(), SMALL_MODEL)
        again = RunReport.from_json(rep.to_json())
        assert again.to_json() == rep.to_json()

    def test_curves_csv(self):
        _, rep = train_single(INTERSECT, "Intersect(10)", quick_cfg(), SMALL_MODEL)
        lines = rep.curves_csv().strip().split("\n")
        assert lines[0] == "epoch,split,task,value"
        assert len(lines) == 1 + 3 * 2  # train/test/test_acc x 2 epochs


class TestMultitask:
    def test_per_task_curves_and_determinism(self):
        tasks = [(INTERSECT, "Intersect(10)"), (CYCLIC, "C(10)"), (PALIN, "Rev(10)")]
        model, rep = train_multitask(tasks, quick_cfg(records=150), SMALL_MODEL)
        assert set(rep.per_task) == {"intersect", "cyclicsum", "palindrome"}
        for curves in rep.per_task.values():
            assert len(curves["test"]) == 2
        # shared trunk, task-specific tables
        assert "backbone/l0/w_src" in model.params
        assert "token:intersect/table" in model.params
        assert "token:cyclicsum/table" in model.params
        assert "edge:palindrome/table" in model.params
        _, rep2 = train_multitask(tasks, quick_cfg(records=150), SMALL_MODEL)
        assert comparable_json(rep.to_json()) == comparable_json(rep2.to_json())

    def test_requires_shared_length(self):
        short = TaskSpec("palindrome", 6, 7, EQUIVARIANT)
        with pytest.raises(ValueError, match="sequence length"):
            train_multitask(
                [(INTERSECT, "Intersect(10)"), (short, "Rev(6)")],
                quick_cfg(),
                SMALL_MODEL,
            )

    def test_epoch_work_grows_with_task_count(self):
        cfg = quick_cfg(records=200, epochs=2)
        _, one = train_multitask([(INTERSECT, "Intersect(10)")], cfg, SMALL_MODEL)
        _, three = train_multitask(
            [(INTERSECT, "Intersect(10)"), (CYCLIC, "C(10)"), (PALIN, "Rev(10)")],
            cfg,
            SMALL_MODEL,
        )
        # pooled data means more steps per epoch, hence more wall-clock
        assert np.mean(three.epoch_seconds) > np.mean(one.epoch_seconds)


class TestTransfer:
    def test_arms_share_target_split_and_shapes(self):
        cfg = quick_cfg(records=None, target_units=0.02, pretrain_units=0.02)
        out = pretrain_finetune(
            [(CYCLIC, "C(10)"), (PALIN, "Rev(10)")], (INTERSECT, "Intersect(10)"), cfg,
            SMALL_MODEL,
        )
        scratch, fine = out["scratch"], out["finetuned"]
        assert scratch.config["tasks"]["intersect"] == fine.config["tasks"]["intersect"]
        assert len(scratch.test_loss) == len(fine.test_loss) == 2
        assert out["pretrain"].config["tasks"].keys() == {"cyclicsum", "palindrome"}

    def test_zero_pretrain_epochs_reduces_to_scratch(self):
        cfg = quick_cfg(
            records=None,
            target_units=0.02,
            pretrain_units=0.02,
            pretrain_epochs=0,
            backbone_lr_scale=1.0,
        )
        out = pretrain_finetune(
            [(CYCLIC, "C(10)"), (PALIN, "Rev(10)")], (INTERSECT, "Intersect(10)"), cfg,
            SMALL_MODEL,
        )
        a = json.loads(out["scratch"].to_json())
        b = json.loads(out["finetuned"].to_json())
        assert a["train_loss"] == b["train_loss"]
        assert a["test_loss"] == b["test_loss"]

    def test_finetune_lr_map_targets_trunk(self):
        cfg = quick_cfg(records=None, target_units=0.02, pretrain_units=0.02)
        out = pretrain_finetune(
            [(CYCLIC, "C(10)")], (INTERSECT, "Intersect(10)"), cfg, SMALL_MODEL
        )
        lr_map = out["finetuned"].config["lr_map"]
        assert lr_map and all(
            k.startswith(("backbone/", "head/")) for k in lr_map
        )
        assert all(v == pytest.approx(0.001) for v in lr_map.values())
        assert out["pretrain"].config["lr_map"] == {}

    def test_mode_mismatch_rejected(self):
        inv = TaskSpec("palindrome", 10, 7, INVARIANT)
        with pytest.raises(ValueError, match="label mode"):
            pretrain_finetune([(inv, "Rev(10)")], (INTERSECT, "Intersect(10)"),
                              quick_cfg(), SMALL_MODEL)
