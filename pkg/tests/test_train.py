import dataclasses
import json
import math

import numpy as np
import pytest
import torch

from mmfas.afa_net import MODALITIES, init_model
from mmfas.dataset_io import SyntheticSpec, collate, synthesize
from mmfas.losses import sr_loss
from mmfas.train import (NonFiniteGradientError, TrainConfig, augment, compute_loss, evaluate_model, lr_schedule,
                         render_difference, sgd_step, train, visualize_mfam)

SMALL = dict(branch_channels=(8, 8, 8), sr_channels=8, trunk_channels=(8, 8), fc_hidden=8)


@pytest.fixture(scope="module")
def samples():
    return synthesize(SyntheticSpec(n_live=8, n_spoof=8, seed=0))


class TestSchedule:
    def test_endpoints_and_midpoint(self):
        cfg = TrainConfig(steps_per_cycle=100, cycles=3)
        assert lr_schedule(0, cfg) == 0.1
        assert lr_schedule(50, cfg) == pytest.approx(0.05, abs=1e-12)
        assert lr_schedule(100, cfg) == 0.1 and lr_schedule(200, cfg) == 0.1
        assert lr_schedule(99, cfg) == pytest.approx(0.1 * (1 + math.cos(math.pi * 0.99)) / 2, abs=1e-15)
        assert lr_schedule(99, cfg) < 1e-4

    def test_lr_min(self):
        cfg = TrainConfig(lr_min=0.01, steps_per_cycle=10)
        assert lr_schedule(5, cfg) == pytest.approx(0.055, abs=1e-12)
        assert all(0.01 <= lr_schedule(s, cfg) <= 0.1 for s in range(40))

    def test_negative_step(self):
        with pytest.raises(ValueError):
            lr_schedule(-1, TrainConfig())


class TestConfig:
    def test_invalid(self):
        for bad in (dict(steps_per_cycle=0), dict(momentum=1.0), dict(modal_erase_prob=1.5), dict(lr_min=1.0)):
            with pytest.raises(ValueError):
                TrainConfig(**bad)

    def test_toml_roundtrip(self, tmp_path):
        (tmp_path / "cfg.toml").write_text("batch_size = 8\ncycles = 2\nbranch_channels = [8, 8, 8]\nflip = false\n")
        cfg = TrainConfig.from_toml(tmp_path / "cfg.toml")
        assert cfg.batch_size == 8 and cfg.branch_channels == (8, 8, 8) and cfg.flip is False
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg
        (tmp_path / "bad.toml").write_text("learning_rate = 0.1\n")
        with pytest.raises(ValueError):
            TrainConfig.from_toml(tmp_path / "bad.toml")


class TestAugment:
    def test_all_off_is_identity(self, samples):
        cfg = TrainConfig().without_augmentation()
        out = augment(samples[0], np.random.default_rng(0), cfg)
        for key in ("rgb", "depth", "ir", "rgb_gt", "depth_gt", "ir_gt"):
            assert np.array_equal(getattr(out, key), getattr(samples[0], key))
        assert out.erased is None

    def test_flip_is_consistent(self, samples):
        cfg = dataclasses.replace(TrainConfig().without_augmentation(), flip=True)
        s = samples[3]
        flipped = None
        for seed in range(20):
            out = augment(s, np.random.default_rng(seed), cfg)
            if not np.array_equal(out.depth, s.depth):
                flipped = out
                break
        assert flipped is not None
        for key in ("rgb", "depth", "ir", "rgb_gt", "depth_gt", "ir_gt"):
            assert np.array_equal(getattr(flipped, key), getattr(s, key)[:, ::-1])

    def test_seeded_determinism(self, samples):
        cfg = TrainConfig()
        a = [augment(s, np.random.default_rng([1, i]), cfg) for i, s in enumerate(samples)]
        b = [augment(s, np.random.default_rng([1, i]), cfg) for i, s in enumerate(samples)]
        for x, y in zip(a, b):
            assert x.erased == y.erased
            assert all(np.array_equal(getattr(x, k), getattr(y, k)) for k in ("rgb", "depth_gt"))

    def test_geometry_hits_gt_too(self, samples):
        cfg = dataclasses.replace(TrainConfig().without_augmentation(), rotation_deg=15.0)
        out = augment(samples[0], np.random.default_rng(4), cfg)
        assert not np.array_equal(out.depth_gt, samples[0].depth_gt)
        assert out.depth_gt.shape == samples[0].depth_gt.shape

    def test_modal_erase(self, samples):
        cfg = dataclasses.replace(TrainConfig().without_augmentation(), modal_erase_prob=1.0)
        seen = set()
        for seed in range(30):
            out = augment(samples[1], np.random.default_rng(seed), cfg)
            seen.add(out.erased)
            assert not getattr(out, out.erased).any()
            others = [m for m in MODALITIES if m != out.erased]
            assert all(np.array_equal(getattr(out, m), getattr(samples[1], m)) for m in others)
            # ground truth stays; its loss is masked instead
            assert np.array_equal(getattr(out, out.erased + "_gt"), getattr(samples[1], out.erased + "_gt"))
        assert seen == set(MODALITIES)

    def test_erased_modality_gets_no_sr_gradient(self, samples):
        cfg = dataclasses.replace(TrainConfig().without_augmentation(), modal_erase_prob=1.0)
        erased = augment(samples[0], np.random.default_rng(0), cfg)
        batch = collate([erased, samples[1]])
        m = MODALITIES.index(erased.erased)
        preds = [torch.rand_like(batch[k + "_gt"], requires_grad=True) for k in MODALITIES]
        sr_loss(preds, [batch[k + "_gt"] for k in MODALITIES], [batch[k + "_mask"] for k in MODALITIES]).backward()
        assert torch.all(preds[m].grad[0] == 0)
        assert torch.any(preds[m].grad[1] != 0)


class TestSgdStep:
    def _scalar(self, w=1.0):
        return {"w": torch.tensor([w], dtype=torch.float64)}

    def test_vanilla(self):
        cfg = TrainConfig(momentum=0.0, weight_decay=0.0)
        p = self._scalar()
        lr = sgd_step(p, {"w": torch.tensor([0.5], dtype=torch.float64)}, {}, cfg, 0)
        assert lr == 0.1 and float(p["w"]) == 1.0 - 0.1 * 0.5

    def test_two_step_momentum_trace(self):
        cfg = TrainConfig(momentum=0.9, weight_decay=0.0, lr_min=0.1)
        p, v = self._scalar(), {}
        g = {"w": torch.tensor([0.5], dtype=torch.float64)}
        sgd_step(p, g, v, cfg, 0)
        assert float(v["w"]) == 0.5 and float(p["w"]) == pytest.approx(0.95, abs=1e-15)
        sgd_step(p, g, v, cfg, 1)
        assert float(v["w"]) == pytest.approx(0.9 * 0.5 + 0.5, abs=1e-15)
        assert float(p["w"]) == pytest.approx(0.95 - 0.1 * 0.95, abs=1e-15)

    def test_weight_decay_shrinks(self):
        cfg = TrainConfig(weight_decay=0.0005, momentum=0.9, lr_min=0.1)
        p, v, trace = self._scalar(2.0), {}, []
        for step in range(20):
            sgd_step(p, {"w": torch.zeros(1, dtype=torch.float64)}, v, cfg, step)
            trace.append(float(p["w"]))
        assert all(0 < b < a for a, b in zip([2.0] + trace, trace))

    def test_non_finite_names_parameter(self):
        p = {"branches.rgb.fc.weight": torch.ones(2)}
        with pytest.raises(NonFiniteGradientError, match="branches.rgb.fc.weight"):
            sgd_step(p, {"branches.rgb.fc.weight": torch.tensor([1.0, float("nan")])}, {}, TrainConfig(), 3)
        assert torch.equal(p["branches.rgb.fc.weight"], torch.ones(2))


class TestTrain:
    def test_log_records_follow_schedule(self, samples, tmp_path):
        cfg = TrainConfig(batch_size=4, cycles=2, steps_per_cycle=3, **SMALL)
        res = train(cfg, samples, out_dir=tmp_path)
        assert [r["step"] for r in res.log] == list(range(6))
        assert all(r["lr"] == lr_schedule(r["step"], cfg) for r in res.log)
        lines = [json.loads(x) for x in (tmp_path / "train_log.jsonl").read_text().splitlines()]
        assert set(lines[0]) == {"step", "lr", "loss_c", "loss_s", "loss", "wall_time"}
        assert sorted(p.name for p in tmp_path.glob("*.ckpt")) == ["cycle_001.ckpt", "cycle_002.ckpt", "final.ckpt"]

    def test_periodic_eval(self, samples):
        cfg = TrainConfig(batch_size=4, cycles=1, steps_per_cycle=4, eval_every=2, **SMALL)
        evals = [r for r in train(cfg, samples).log if "eval" in r]
        assert [r["step"] for r in evals] == [1, 3]
        assert "acer" in evals[0]["eval"]

    def test_resume_mid_cycle_reproduces_trace(self, samples, tmp_path):
        cfg = TrainConfig(batch_size=4, cycles=2, steps_per_cycle=5, **SMALL)
        full = train(cfg, samples, out_dir=tmp_path / "full")
        part = train(cfg, samples, out_dir=tmp_path / "part", max_steps=7)
        assert part.checkpoint.name == "last.ckpt"
        rest = train(cfg, samples, out_dir=tmp_path / "part", resume=part.checkpoint)
        trace = [r["loss"] for r in part.log + rest.log]
        assert trace == [r["loss"] for r in full.log]
        a = evaluate_model(full.model, samples)[0]
        b = evaluate_model(rest.model, samples)[0]
        assert np.array_equal(a, b)

    def test_errors_before_step_zero(self, samples):
        with pytest.raises(ValueError, match="both"):
            train(TrainConfig(**SMALL), [s for s in samples if s.label == 1])
        with pytest.raises(ValueError, match="in_resolution"):
            train(TrainConfig(in_resolution=16, **SMALL), samples)

    def test_sr_loss_reaches_mfam_tail(self, samples):
        cfg = TrainConfig(**SMALL)
        model = init_model(cfg.model_config(), 0).train()
        losses, _, _ = compute_loss(model, collate(samples[:4]), cfg.alpha)
        tail = [p for n, p in model.named_parameters() if ".feature_augment.tail." in n]
        grads = torch.autograd.grad(cfg.alpha * losses.sr, tail)
        assert sum(float(g.norm()) for g in grads) > 0

    def test_fixed_batch_loss_non_increasing(self):
        """Full-batch, no augmentation: loss trace non-increasing over 50 steps in >= 9 of 10 seeds."""
        good = 0
        for seed in range(10):
            data = synthesize(SyntheticSpec(n_live=8, n_spoof=8, seed=seed))
            cfg = TrainConfig(batch_size=16, cycles=1, steps_per_cycle=50, seed=seed, **SMALL).without_augmentation()
            losses = [r["loss"] for r in train(cfg, data).log]
            good += all(b <= a for a, b in zip(losses, losses[1:]))
        assert good >= 9


class TestVisualize:
    def test_zero_head_gives_negated_bilinear(self, samples):
        model = init_model(TrainConfig(**SMALL).model_config(), 0)
        with torch.no_grad():
            for m in MODALITIES:
                head = model.branches[m].feature_augment.tail.to_image
                head.weight.zero_()
                head.bias.zero_()
        out = visualize_mfam(model, samples[0])
        for m in MODALITIES:
            assert np.allclose(out[m]["diff_raw"], -out[m]["bilinear"].astype(float), atol=0.5)
            assert np.array_equal(out[m]["diff"], render_difference(out[m]["diff_raw"]))
            assert np.all(out[m]["sr"] == 0)
        assert out["rgb"]["bilinear"].shape == (16, 16, 3) and out["ir"]["diff"].shape == (16, 16)

    def test_identical_is_mid_gray(self):
        assert np.all(render_difference(np.zeros((16, 16))) == 128)
        d = render_difference(np.array([[-2.0, 0.0, 2.0]]))
        assert d.tolist() == [[1, 128, 255]]

    def test_random_model_stats_finite(self, samples):
        out = visualize_mfam(init_model(TrainConfig(**SMALL).model_config(), 3), samples[5])
        for m in MODALITIES:
            assert math.isfinite(out[m]["mean_abs_diff"]) and out[m]["diff"].dtype == np.uint8
