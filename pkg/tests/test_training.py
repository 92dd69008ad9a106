"""training: 설정, 손실, 그래디언트, 학습 단계, Trainer 로그/체크포인트/재시작"""

import json
import math
import warnings

import numpy as np
import pytest
import torch

from conftest import random_rays
from hybridfield.errors import ConfigError, DataError, NumericError
from hybridfield.field import init_field
from hybridfield.renderer import composite_render
from hybridfield.sampler import sample_rays
from hybridfield.training import (
    LOG_FIELDS,
    TrainConfig,
    Trainer,
    build_optimizer,
    color_loss,
    format_log_line,
    opacity_loss,
    train_step,
)


def tiny_train_config(**kwargs) -> TrainConfig:
    base = dict(
        batch_rays=16, iterations=6, lr_grid=0.02, lr_decoder=1e-3, lambda_reg=0.01, seed=0,
        deterministic=False, log_every=2, eval_every=0, checkpoint_every=3,
        components=2, decoder_width=8, decoder_depth=1, view_octaves=1,
        density_bias_init=0.0, init_std=0.5, dtype="float64",
        n_fg_init=4, n_fg_final=4, m_bg_init=4, m_bg_final=4,
        res_fg_init=[4, 4, 4], res_fg_final=[4, 4, 4],
        res_bg_init=[4, 4, 4], res_bg_final=[4, 4, 4], milestones=[],
    )
    base.update(kwargs)
    return TrainConfig(**base)


def random_targets(n: int, seed: int = 0) -> torch.Tensor:
    return torch.rand(n, 3, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)


class TestTrainConfig:

    def test_defaults_valid(self):
        TrainConfig().validate()

    def test_from_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"iterations": 10, "lambda_reg": 0.0, "t_b": 3.0}), encoding="utf-8")
        config = TrainConfig.from_file(path)
        assert config.iterations == 10
        assert config.lambda_reg == 0.0
        assert config.t_b == 3.0

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"iterations": 10, "learning_rate": 1.0}), encoding="utf-8")
        with pytest.raises(ConfigError, match="learning_rate"):
            TrainConfig.from_file(path)

    def test_not_an_object(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(ConfigError):
            TrainConfig.from_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            TrainConfig.from_file(tmp_path / "nope.json")

    @pytest.mark.parametrize("key,value", [
        ("lambda_reg", -0.1), ("batch_rays", 0), ("boundary_multiplier", 1.0),
        ("t_b", 0.0), ("dtype", "float16"), ("milestones", [5, 3]),
    ])
    def test_invalid_values(self, key, value):
        with pytest.raises(ConfigError):
            TrainConfig.from_dict({key: value})

    @pytest.mark.parametrize("key,value", [
        ("iterations", "10"), ("iterations", 2.5), ("batch_rays", True), ("deterministic", 1),
        ("t_b", "5"), ("dtype", 64), ("res_fg_init", 32), ("milestones", [1000, "2000"]), ("seed", None),
    ])
    def test_wrong_types(self, key, value):
        with pytest.raises(ConfigError, match=key):
            TrainConfig.from_dict({key: value})

    def test_integers_accepted_for_floats(self):
        config = TrainConfig.from_dict({"lambda_reg": 0, "t_b": 4, "boundary_multiplier": None})
        assert isinstance(config.lambda_reg, float)
        assert config.t_b == 4.0
        assert config.boundary_multiplier is None

    def test_round_trip(self):
        config = tiny_train_config()
        assert TrainConfig.from_dict(config.to_dict()) == config


class TestLosses:

    def test_color_loss_examples(self):
        pred = torch.tensor([[1.0, 1.0, 1.0]], dtype=torch.float64)
        target = torch.zeros_like(pred)
        assert float(color_loss(pred, target)) == pytest.approx(3.0)

        pred = torch.tensor([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0]], dtype=torch.float64)
        assert float(color_loss(pred, torch.zeros_like(pred))) == pytest.approx(2.0)

    def test_color_loss_empty_batch(self):
        empty = torch.zeros(0, 3)
        with pytest.raises(DataError):
            color_loss(empty, empty)

    def test_color_loss_shape_mismatch(self):
        with pytest.raises(DataError):
            color_loss(torch.zeros(2, 3), torch.zeros(3, 3))

    def test_color_loss_permutation_invariant(self):
        pred, target = random_targets(20, 1), random_targets(20, 2)
        perm = torch.randperm(20, generator=torch.Generator().manual_seed(3))
        assert float(color_loss(pred[perm], target[perm])) == pytest.approx(float(color_loss(pred, target)), abs=1e-14)

    def test_opacity_loss_mean(self):
        T = torch.tensor([0.5, 0.5], dtype=torch.float64)
        assert float(opacity_loss(T)) == pytest.approx(math.log(2.0))


def batch_loss(field, rays, targets, lambda_reg):
    samples = sample_rays(rays, 4, 4, field.boundary_radius, jitter=True, seed=0, step=0)
    out = composite_render(field, rays, samples)
    return color_loss(out.color, targets) + lambda_reg * opacity_loss(out.fg_transmittance)


def gradients(field, loss):
    field.zero_grad(set_to_none=True)
    loss.backward()
    return [p.grad.detach().clone() for p in field.parameters()]


class TestGradients:

    def test_lambda_zero_matches_color_only(self, tiny_config, frame):
        field = init_field(tiny_config, frame, seed=1)
        rays, targets = random_rays(16, frame.boundary_radius), random_targets(16)

        with_reg = gradients(field, batch_loss(field, rays, targets, 0.0))
        samples = sample_rays(rays, 4, 4, field.boundary_radius, jitter=True, seed=0, step=0)
        plain = gradients(field, color_loss(composite_render(field, rays, samples).color, targets))
        for a, b in zip(with_reg, plain):
            torch.testing.assert_close(a, b, atol=0, rtol=0)

    def test_regularizer_changes_gradient(self, tiny_config, frame):
        field = init_field(tiny_config, frame, seed=1)
        rays, targets = random_rays(16, frame.boundary_radius), random_targets(16)
        a = gradients(field, batch_loss(field, rays, targets, 0.0))
        b = gradients(field, batch_loss(field, rays, targets, 1.0))
        assert not all(torch.equal(x, y) for x, y in zip(a, b))

    def test_finite_difference(self, tiny_config, frame):
        field = init_field(tiny_config, frame, seed=2)
        rays, targets = random_rays(8, frame.boundary_radius, seed=3), random_targets(8, 4)
        analytic = gradients(field, batch_loss(field, rays, targets, 0.01))

        h = 1e-6
        rng = np.random.default_rng(0)
        with torch.no_grad():
            for param, grad in zip(field.parameters(), analytic):
                flat, gflat = param.view(-1), grad.view(-1)
                for i in rng.choice(flat.numel(), size=min(3, flat.numel()), replace=False):
                    original = float(flat[i])
                    flat[i] = original + h
                    plus = float(batch_loss(field, rays, targets, 0.01))
                    flat[i] = original - h
                    minus = float(batch_loss(field, rays, targets, 0.01))
                    flat[i] = original

                    numeric = (plus - minus) / (2 * h)
                    exact = float(gflat[i])
                    assert abs(exact - numeric) <= 1e-5 * max(abs(exact), abs(numeric)) + 1e-8


class TestTrainStep:

    def test_updates_parameters(self, frame):
        config = tiny_train_config()
        field = init_field(config.field_config(), frame, seed=0)
        before = [p.detach().clone() for p in field.parameters()]
        optimizer = build_optimizer(field, config)
        _, stats = train_step(field, optimizer, random_rays(16, 5.0), random_targets(16), 0, config)

        assert set(stats) >= set(LOG_FIELDS) - {"step"}
        assert stats["loss"] == pytest.approx(stats["loss_color"] + 0.01 * stats["loss_opacity"])
        assert any(not torch.equal(a, b) for a, b in zip(before, field.parameters()))

    def test_no_warnings_from_loss_reporting(self, frame):
        config = tiny_train_config()
        field = init_field(config.field_config(), frame, seed=0)
        optimizer = build_optimizer(field, config)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            _, stats = train_step(field, optimizer, random_rays(16, 5.0), random_targets(16), 0, config)
        assert all(isinstance(stats[key], float) for key in ("loss", "loss_color", "loss_opacity"))

    def test_clamped_extremes_ignore_regularizer(self, frame):
        # T 가 1 이면 엔트로피 항의 그래디언트가 0
        results = []
        for lambda_reg in (0.0, 1.0):
            config = tiny_train_config(lambda_reg=lambda_reg, density_bias_init=-40.0)
            field = init_field(config.field_config(), frame, seed=0)
            optimizer = build_optimizer(field, config)
            train_step(field, optimizer, random_rays(16, 5.0), random_targets(16), 0, config)
            results.append([p.detach().clone() for p in field.parameters()])
        for a, b in zip(*results):
            assert torch.equal(a, b)

    def test_nan_target_raises(self, frame):
        config = tiny_train_config()
        field = init_field(config.field_config(), frame, seed=0)
        targets = random_targets(16)
        targets[3, 1] = float("nan")
        with pytest.raises(NumericError) as info:
            train_step(field, build_optimizer(field, config), random_rays(16, 5.0), targets, 7, config)
        assert info.value.step == 7
        assert info.value.exit_code == 4

    def test_milestone_upsamples(self, frame):
        config = tiny_train_config(res_fg_final=[8, 8, 8], res_bg_final=[4, 8, 4], milestones=[1])
        field = init_field(config.field_config(0), frame, seed=0)
        optimizer = build_optimizer(field, config)
        rays, targets = random_rays(16, 5.0), random_targets(16)

        same, stats = train_step(field, optimizer, rays, targets, 0, config)
        assert same is optimizer
        assert stats["res_fg"] == (4, 4, 4)

        new, stats = train_step(field, optimizer, rays, targets, 1, config)
        assert new is not optimizer
        assert field.foreground.resolutions == (8, 8, 8)
        assert field.background.resolutions == (4, 8, 4)
        assert stats["res_fg"] == (8, 8, 8)
        assert {id(p) for group in new.param_groups for p in group["params"]} == {id(p) for p in field.parameters()}

    def test_log_line_format(self):
        stats = {"loss_color": 0.5, "loss_opacity": 0.25, "psnr_train_batch": 12.3456789,
                 "n_fg": 64, "m_bg": 32, "res_fg": (32, 32, 32), "res_bg": (16, 32, 16)}
        line = format_log_line(100, stats)
        assert line.split("\t") == ["100", "5.000000e-01", "2.500000e-01", "12.3457", "64", "32", "32x32x32", "16x32x16"]


class TestTrainer:

    def make_trainer(self, frame, out_dir, **kwargs):
        rays = random_rays(64, frame.boundary_radius, seed=11)
        return Trainer(tiny_train_config(**kwargs), frame, rays, random_targets(64, 12), out_dir)

    def test_log_and_checkpoints(self, frame, tmp_path):
        trainer = self.make_trainer(frame, tmp_path)
        summary = trainer.train()

        assert summary["steps"] == 6
        lines = trainer.log_path.read_text(encoding="utf-8").splitlines()
        assert lines[0].split("\t") == LOG_FIELDS
        assert [line.split("\t")[0] for line in lines[1:]] == ["2", "4", "6"]
        names = sorted(p.name for p in trainer.checkpoint_dir.iterdir())
        assert names == ["final.ckpt", "step_000003.ckpt", "step_000006.ckpt"]

    def test_batch_selection_deterministic(self, frame, tmp_path):
        trainer = self.make_trainer(frame, tmp_path)
        a_rays, a_targets = trainer.sample_batch(4)
        b_rays, b_targets = trainer.sample_batch(4)
        assert torch.equal(a_rays.ray_ids, b_rays.ray_ids)
        assert torch.equal(a_targets, b_targets)
        assert not torch.equal(a_rays.ray_ids, trainer.sample_batch(5)[0].ray_ids)

    def test_resume_matches_uninterrupted(self, frame, tmp_path):
        full = self.make_trainer(frame, tmp_path / "full")
        full.train()

        first = self.make_trainer(frame, tmp_path / "split", iterations=3)
        first.train()
        resumed = self.make_trainer(frame, tmp_path / "split")
        resumed.resume(first.checkpoint_dir / "step_000003.ckpt")
        assert resumed.step == 3
        resumed.train()

        for a, b in zip(full.field.parameters(), resumed.field.parameters()):
            assert torch.equal(a, b)

        full_lines = full.log_path.read_text(encoding="utf-8").splitlines()
        split_lines = resumed.log_path.read_text(encoding="utf-8").splitlines()
        # 재시작 시 저장 시점의 로그 라인(step 2)을 다시 기록
        assert split_lines[1] == split_lines[2] == full_lines[1]
        assert split_lines[3:] == full_lines[2:]

    def test_empty_rays_rejected(self, frame, tmp_path):
        rays = random_rays(4, frame.boundary_radius).index(slice(0, 0))
        with pytest.raises(DataError):
            Trainer(tiny_train_config(), frame, rays, torch.zeros(0, 3, dtype=torch.float64), tmp_path)
