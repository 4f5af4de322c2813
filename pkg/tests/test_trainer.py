import numpy as np
import pytest
import torch

from hyperdf import trainer as trainer_module
from hyperdf.checkpoint import checkpoint_load
from hyperdf.encoder import build_model
from hyperdf.errors import ClassMissing, NonFiniteLoss
from hyperdf.hypersphere import FeatureBatch, is_unit
from hyperdf.losses import LossBreakdown
from hyperdf.schedule import ScheduleState, lr_at
from hyperdf.schemas import LossWeights
from hyperdf.trainer import TrainingLog, extend_batch_slerp, plan_extension, train


def _batch(labels, dim=8, seed=0) -> FeatureBatch:
    gen = torch.Generator().manual_seed(seed)
    x = torch.randn(len(labels), dim, generator=gen, dtype=torch.float64)
    return FeatureBatch(features=x / x.norm(dim=-1, keepdim=True), labels=torch.tensor(labels))


def _model(config):
    return build_model(config.encoder, config.policy, config.seed, l2_normalize=config.l2_normalize)


def _angle(a, b):
    return torch.arccos((a * b).sum(-1).clamp(-1.0, 1.0))


class TestBatchExtension:
    def test_small_example(self):
        batch = _batch([0, 0, 0, 1])
        out = extend_batch_slerp(batch, 8, torch.Generator().manual_seed(0))
        assert len(out) == 8
        assert torch.equal(out.features[:4], batch.features)
        assert out.labels.tolist() == [0, 0, 0, 1, 0, 0, 0, 1]
        assert is_unit(out.features)

    def test_proportional_allocation(self):
        labels = [0] * 77 + [1] * 51
        out = extend_batch_slerp(_batch(labels), 1024, torch.Generator().manual_seed(1))
        synthetic = out.labels[128:]
        assert int((synthetic == 0).sum()) == 77 * 7
        assert int((synthetic == 1).sum()) == 51 * 7

    def test_synthetic_rows_lie_between_same_class_partners(self):
        batch = _batch([0, 1, 0, 1, 1, 0], dim=16)
        plan = plan_extension(batch.labels, 24, torch.Generator().manual_seed(2))
        assert torch.equal(batch.labels[plan.sources], batch.labels[plan.partners])
        assert bool((plan.sources != plan.partners).all())
        assert bool(((plan.t >= 0) & (plan.t < 1)).all())
        out = trainer_module.apply_extension(batch, plan)
        src, dst, syn = batch.features[plan.sources], batch.features[plan.partners], out.features[6:]
        np.testing.assert_allclose(
            (_angle(src, syn) + _angle(syn, dst)).numpy(), _angle(src, dst).numpy(), atol=1e-6
        )

    def test_same_generator_same_plan(self):
        labels = torch.tensor([0, 1, 1, 0, 1])
        a = plan_extension(labels, 20, torch.Generator().manual_seed(9))
        b = plan_extension(labels, 20, torch.Generator().manual_seed(9))
        assert torch.equal(a.sources, b.sources) and torch.equal(a.partners, b.partners) and torch.equal(a.t, b.t)

    def test_single_member_class_copies_itself(self):
        batch = _batch([0, 0, 0, 1])
        out = extend_batch_slerp(batch, 8, torch.Generator().manual_seed(0))
        np.testing.assert_allclose(out.features[-1].numpy(), batch.features[3].numpy(), atol=1e-12)

    @pytest.mark.parametrize("labels", [[1, 1, 1], [0, 0, 0, 0]])
    def test_missing_class_raises(self, labels):
        with pytest.raises(ClassMissing):
            extend_batch_slerp(_batch(labels), 2 * len(labels), torch.Generator().manual_seed(0))

    def test_single_class_when_no_class_required(self):
        plan = plan_extension(torch.tensor([1, 1, 1]), 6, torch.Generator(), required_classes=())
        assert len(plan.sources) == 3

    def test_target_smaller_than_batch(self):
        with pytest.raises(ValueError):
            plan_extension(torch.tensor([0, 1, 0]), 2, torch.Generator())


class TestTrain:
    def test_smoke_run_writes_artifacts(self, synth_splits, tiny_config, tmp_path):
        model = _model(tiny_config)
        frozen = {k: v.detach().clone() for k, v in model.named_parameters() if not v.requires_grad}
        result = train(model, synth_splits["train"], synth_splits["val"], tiny_config, output_dir=tmp_path)

        for name in ("train_log.jsonl", "best.ckpt", "last.ckpt", "param_audit.tsv"):
            assert (tmp_path / name).exists(), name
        log = TrainingLog.read(tmp_path / "train_log.jsonl")
        assert log.records[0]["kind"] == "header"
        assert len(log.steps) == result.steps == 6
        assert len(log.epochs) == tiny_config.total_epochs

        spe = log.records[0]["steps_per_epoch"]
        for record in log.steps:
            state = ScheduleState(record["step"], spe, tiny_config.cycle_length_epochs)
            assert record["lr"] == lr_at(state, tiny_config)
            assert record["synthetic"] in (0, 36)
            assert np.isfinite(record["total"])

        assert any(record["synthetic"] == 36 for record in log.steps)
        assert result.best_val_auroc == max(h["val_auroc"] for h in result.history)
        for name, param in result.model.named_parameters():
            if name in frozen:
                assert torch.equal(param.detach(), frozen[name]), name
        assert not result.model.training

    def test_same_seed_same_run(self, synth_splits, tiny_config):
        runs = [train(_model(tiny_config), synth_splits["train"], synth_splits["val"], tiny_config) for _ in range(2)]
        losses = [[r["total"] for r in run.log.steps] for run in runs]
        assert losses[0] == losses[1]
        assert runs[0].best_val_auroc == runs[1].best_val_auroc
        a, b = (run.model.state_dict() for run in runs)
        assert all(torch.equal(a[k], b[k]) for k in a)

    def test_without_extension_or_l2(self, synth_splits, tiny_config):
        config = tiny_config.model_copy(
            update={
                "l2_normalize": False,
                "slerp_extension": False,
                "loss_weights": LossWeights(alpha=0.0, beta=0.0),
                "max_steps": 2,
            }
        )
        model = build_model(config.encoder, config.policy, 0, l2_normalize=False)
        result = train(model, synth_splits["train"], synth_splits["val"], config)
        assert all(r["synthetic"] == 0 and r["align"] == 0.0 for r in result.log.steps)

    def test_resume_matches_uninterrupted_run(self, synth_splits, tiny_config, tmp_path):
        k = 4
        full = tiny_config.model_copy(update={"max_steps": k + 1})
        first = tiny_config.model_copy(update={"max_steps": k})

        train(_model(full), synth_splits["train"], synth_splits["val"], full, output_dir=tmp_path / "full")
        train(_model(first), synth_splits["train"], synth_splits["val"], first, output_dir=tmp_path / "part")
        resumed = train(
            _model(full), synth_splits["train"], synth_splits["val"], full,
            output_dir=tmp_path / "part", resume=tmp_path / "part" / "last.ckpt",
        )

        assert resumed.steps == k + 1
        a = checkpoint_load(tmp_path / "full" / "last.ckpt").model.state_dict()
        b = checkpoint_load(tmp_path / "part" / "last.ckpt").model.state_dict()
        for name in a:
            torch.testing.assert_close(a[name], b[name], rtol=0, atol=1e-6)

    def test_nonfinite_loss_aborts_with_dump(self, synth_splits, tiny_config, tmp_path, monkeypatch):
        def _nan_objective(logits, features, labels, config):
            nan = torch.tensor(float("nan"), dtype=torch.float64)
            return LossBreakdown(total=nan, cross_entropy=float("nan"), align=0.0, uniform=0.0)

        monkeypatch.setattr(trainer_module, "objective", _nan_objective)
        with pytest.raises(NonFiniteLoss):
            train(_model(tiny_config), synth_splits["train"], synth_splits["val"], tiny_config, output_dir=tmp_path)
        assert (tmp_path / "nonfinite_step0.pt").exists()

    def test_single_class_batch_trains_without_extension(self, synth_splits, tiny_config, monkeypatch, caplog):
        def _missing(labels, size, generator, **_):
            raise ClassMissing("batch has no samples of class 0")

        monkeypatch.setattr(trainer_module, "plan_extension", _missing)
        config = tiny_config.model_copy(update={"max_steps": 2})
        result = train(_model(config), synth_splits["train"], synth_splits["val"], config)
        assert [r["synthetic"] for r in result.log.steps] == [0, 0]
        assert "no slerp extension" in caplog.text

    def test_empty_training_manifest(self, synth_splits, tiny_config):
        empty = synth_splits["train"].model_copy(update={"records": []})
        with pytest.raises(ValueError):
            train(_model(tiny_config), empty, synth_splits["val"], tiny_config)
