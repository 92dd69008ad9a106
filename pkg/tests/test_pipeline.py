"""pipeline: CLI 종료 코드, 합성 → 학습 → 평가 → 렌더링, 오케스트레이터"""

import json

import numpy as np
import pytest

from hybridfield.errors import DataError
from hybridfield.images import load_depth
from hybridfield.pipeline import PipelineOrchestrator, main

TINY_CONFIG = {
    "iterations": 4, "batch_rays": 64, "log_every": 2, "eval_every": 0, "checkpoint_every": 0,
    "deterministic": False, "dtype": "float64",
    "components": 2, "decoder_width": 8, "decoder_depth": 1, "view_octaves": 1,
    "n_fg_init": 4, "n_fg_final": 4, "m_bg_init": 4, "m_bg_final": 4,
    "res_fg_init": [4, 4, 4], "res_fg_final": [4, 4, 4],
    "res_bg_init": [4, 4, 4], "res_bg_final": [4, 4, 4], "milestones": [],
}


def write_config(path, **overrides):
    data = dict(TINY_CONFIG)
    data.update(overrides)
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


class TestCommandLine:

    def test_boundary(self, capsys):
        assert main(["boundary", "--f", "800", "--b", "0.5", "--d", "4"]) == 0
        assert json.loads(capsys.readouterr().out)["t_b"] == pytest.approx(100.0)

    def test_boundary_zero_disparity(self):
        assert main(["boundary", "--f", "800", "--b", "0.5", "--d", "0"]) == 3

    def test_list_presets(self, capsys):
        assert main(["synth", "--list-presets"]) == 0
        assert capsys.readouterr().out.split() == ["goat-like", "two-object", "haze"]

    def test_unknown_preset_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            main(["synth", "--preset", "castle", "--out", str(tmp_path)])
        assert info.value.code == 2

    def test_synth_requires_out(self):
        assert main(["synth"]) == 2

    def test_missing_manifest(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "nowhere"), "--out", str(tmp_path / "out")]) == 3

    def test_unknown_config_key(self, tmp_path):
        config = write_config(tmp_path / "config.json", warmup=10)
        assert main(["train", "--data", str(tmp_path), "--out", str(tmp_path / "out"),
                     "--config", str(config)]) == 2

    def test_wrongly_typed_config_value(self, tmp_path):
        config = write_config(tmp_path / "config.json", iterations="10")
        assert main(["train", "--data", str(tmp_path), "--out", str(tmp_path / "out"),
                     "--config", str(config)]) == 2

    def test_missing_checkpoint(self, tmp_path):
        assert main(["eval", "--ckpt", str(tmp_path / "none.ckpt"), "--data", str(tmp_path)]) == 3


class TestEndToEnd:

    @pytest.fixture(scope="class")
    def run_dir(self, tmp_path_factory):
        root = tmp_path_factory.mktemp("e2e")
        data, out = root / "data", root / "train"
        assert main(["synth", "--preset", "two-object", "--resolution", "8", "--frequency", "0",
                     "--subdiv", "0", "--out", str(data)]) == 0
        config = write_config(root / "config.json")
        assert main(["train", "--data", str(data), "--out", str(out), "--config", str(config), "--seed", "1"]) == 0
        return root

    def test_training_outputs(self, run_dir):
        out = run_dir / "train"
        assert (out / "checkpoints" / "final.ckpt").exists()
        saved = json.loads((out / "config.json").read_text(encoding="utf-8"))
        assert saved["seed"] == 1
        lines = (out / "train_log.tsv").read_text(encoding="utf-8").splitlines()
        assert [line.split("\t")[0] for line in lines[1:]] == ["2", "4"]

    def test_eval_json(self, run_dir, capsys):
        ckpt = run_dir / "train" / "checkpoints" / "final.ckpt"
        assert main(["eval", "--ckpt", str(ckpt), "--data", str(run_dir / "data")]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["image_count"] == 1
        assert report["step"] == 4
        assert np.isfinite(report["mean_psnr"])
        assert -1.0 <= report["mean_ssim"] <= 1.0

    def test_render_deterministic_with_depth(self, run_dir, tmp_path):
        ckpt = run_dir / "train" / "checkpoints" / "final.ckpt"
        args = ["render", "--ckpt", str(ckpt), "--data", str(run_dir / "data"), "--camera-index", "0"]
        assert main(args + ["--out", str(tmp_path / "a.png"), "--depth", str(tmp_path / "a.fdepth")]) == 0
        assert main(args + ["--out", str(tmp_path / "b.png")]) == 0

        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
        assert (tmp_path / "a.fdepth").read_bytes()[:7] == b"FDEPTH1"
        assert load_depth(tmp_path / "a.fdepth").shape == (8, 8)
        for suffix in ("_preview", "_opacity", "_fg"):
            assert (tmp_path / f"a{suffix}.png").exists()

    def test_render_index_out_of_range(self, run_dir, tmp_path):
        ckpt = run_dir / "train" / "checkpoints" / "final.ckpt"
        assert main(["render", "--ckpt", str(ckpt), "--data", str(run_dir / "data"),
                     "--camera-index", "99", "--out", str(tmp_path / "x.png")]) == 2

    def test_render_from_pose_file(self, run_dir, tmp_path):
        manifest = json.loads((run_dir / "data" / "manifest.json").read_text(encoding="utf-8"))
        pose = dict(manifest["cameras"][2])
        del pose["image"], pose["role"]
        (tmp_path / "pose.json").write_text(json.dumps(pose), encoding="utf-8")

        ckpt = run_dir / "train" / "checkpoints" / "final.ckpt"
        assert main(["render", "--ckpt", str(ckpt), "--pose", str(tmp_path / "pose.json"),
                     "--out", str(tmp_path / "pose.png")]) == 0
        assert main(["render", "--ckpt", str(ckpt), "--data", str(run_dir / "data"),
                     "--camera-index", "2", "--out", str(tmp_path / "index.png")]) == 0
        assert (tmp_path / "pose.png").read_bytes() == (tmp_path / "index.png").read_bytes()

    def test_resume_continues_from_checkpoint(self, run_dir, tmp_path):
        config = write_config(tmp_path / "config.json", iterations=6)
        ckpt = run_dir / "train" / "checkpoints" / "final.ckpt"
        assert main(["train", "--data", str(run_dir / "data"), "--out", str(tmp_path / "out"),
                     "--config", str(config), "--seed", "1", "--resume", str(ckpt)]) == 0
        lines = (tmp_path / "out" / "train_log.tsv").read_text(encoding="utf-8").splitlines()
        assert [line.split("\t")[0] for line in lines[1:]] == ["4", "6"]


class TestOrchestrator:

    def test_run_stage_captures_failure(self, tmp_path):
        orchestrator = PipelineOrchestrator(tmp_path)

        def broken():
            raise DataError("이미지 없음")

        result = orchestrator.run_stage("x", "실패 스테이지", broken)
        assert result["success"] is False
        assert result["exit_code"] == 3
        assert "이미지 없음" in result["error"]

    def test_report_stops_after_failure(self, tmp_path):
        orchestrator = PipelineOrchestrator(tmp_path, mode="quick")
        calls = []

        def broken():
            raise DataError("깨짐")

        orchestrator.stages = [
            ("a", "첫 단계", lambda: calls.append("a") or {"ok": True}),
            ("b", "실패 단계", broken),
            ("c", "건너뜀", lambda: calls.append("c") or {}),
        ]
        report = orchestrator.run_pipeline()

        assert calls == ["a"]
        assert report["pipeline_status"] == "failed"
        assert report["stages_completed"] == 1
        assert report["errors"][0]["stage"] == "b"
        saved = json.loads((tmp_path / "pipeline_report.json").read_text(encoding="utf-8"))
        assert saved["stages"]["a"]["result"] == {"ok": True}

    def test_skip_stages(self, tmp_path):
        orchestrator = PipelineOrchestrator(tmp_path)
        orchestrator.stages = [("a", "A", lambda: {}), ("b", "B", lambda: {})]
        report = orchestrator.run_pipeline(skip_stages=["a"])
        assert list(report["stages"]) == ["b"]
        assert report["pipeline_status"] == "completed"

    def test_quick_mode_overrides(self, tmp_path):
        orchestrator = PipelineOrchestrator(tmp_path, mode="quick", seed=5)
        assert orchestrator.config.iterations == 600
        assert orchestrator.config.seed == 5
