"""
명령행 인터페이스 / 파이프라인 오케스트레이터
- synth: 해석적 프리셋 장면 → 합성 데이터셋
- train: 데이터셋 학습 → 체크포인트 + 학습 로그
- render: 체크포인트 → PNG (+ 전경 깊이 FDEPTH1)
- eval: test 카메라 PSNR / SSIM → 표준출력 JSON
- boundary: 시차로부터 경계 깊이 t_B
- run: synth → train → eval → render 일괄 실행 (리포트 저장)
"""

import argparse
import json
import logging
import time
from dataclasses import replace
from datetime import datetime
from pathlib import Path
from typing import Callable, Dict, List, Optional
import sys

import numpy as np

sys.path.append(str(Path(__file__).parent.parent))
from config import LOG_CONFIG, RIG_CONFIG, RUNS_DIR

from .checkpoint import load_checkpoint
from .dataset import CameraEntry, build_ray_table, load_images, load_manifest, prepare_scene
from .errors import ConfigError, DataError, HybridFieldError
from .field import resolve_dtype
from .geometry import PosedCamera, boundary_from_disparity
from .images import colorize_depth, save_depth, save_png, save_rgb8
from .metrics import EvalReport
from .renderer import render_image
from .sampler import schedule
from .scenes import PRESETS, build_preset, export_dataset, make_rig
from .training import TestView, TrainConfig, Trainer

logger = logging.getLogger(__name__)

# run --mode quick 설정 덮어쓰기
QUICK_OVERRIDES = {
    "iterations": 600,
    "batch_rays": 1024,
    "milestones": [100, 200, 300, 400],
    "log_every": 50,
    "eval_every": 300,
    "checkpoint_every": 300,
}
QUICK_RESOLUTION = 32


# ---------------------------------------------------------------------------
# 명령
# ---------------------------------------------------------------------------

def cmd_synth(preset: str, out_dir: Path, resolution: int = RIG_CONFIG["resolution"], seed: int = 0,
              n_subdiv: int = RIG_CONFIG["n_subdiv"], frequency: Optional[int] = RIG_CONFIG["frequency"],
              hemisphere: bool = RIG_CONFIG["hemisphere"], fov_degrees: float = RIG_CONFIG["fov_degrees"]) -> Dict:
    """프리셋 장면과 리그로 데이터셋 생성 (seed 는 기록만 함: 해석적 장면은 결정적)"""
    scene = build_preset(preset)
    cameras = make_rig(n_subdiv=n_subdiv, radius=RIG_CONFIG["radius"], hemisphere=hemisphere,
                       frequency=frequency, resolution=resolution, fov_degrees=fov_degrees)
    manifest_path = export_dataset(scene, cameras, out_dir)
    return {"preset": preset, "cameras": len(cameras), "resolution": resolution, "seed": seed,
            "manifest": str(manifest_path)}


def cmd_train(data_dir: Path, out_dir: Path, config: TrainConfig, t_b: Optional[float] = None,
              resume: Optional[Path] = None) -> Dict:
    manifest = load_manifest(data_dir)
    t_b = config.t_b if t_b is None else t_b
    cameras, frame = prepare_scene(manifest, boundary_radius=t_b, boundary_multiplier=config.boundary_multiplier)
    logger.info(f"장면: 카메라 {len(cameras)}대, r_rig={frame.rig_radius:.4f}, t_B={frame.boundary_radius:.4f}")

    dtype = resolve_dtype(config.dtype)
    rays, targets = build_ray_table(manifest, cameras, frame, "train", near=config.near,
                                    far=config.far_depth, dtype=dtype)
    test_views = [
        TestView(manifest.cameras[i].image, cameras[i], image)
        for i, image in load_images(manifest, "test")
    ]

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config.json", "w", encoding="utf-8") as f:
        json.dump(config.to_dict(), f, indent=2)

    trainer = Trainer(config, frame, rays, targets, out_dir, test_views)
    if resume:
        trainer.resume(resume)
    return trainer.train()


def _render_counts(payload: Dict):
    """체크포인트 시점의 (n_fg, m_bg, near, far)"""
    config = TrainConfig.from_dict(payload.get("train_config") or {})
    current = schedule(int(payload["step"]), config.schedule_config())
    return current.n_fg, current.m_bg, config.near, config.far_depth


def _to_frame(cam: PosedCamera, field) -> PosedCamera:
    """월드 좌표 카메라 → 학습 좌표계 (무게중심 이동)"""
    return cam.with_center(cam.center - field.frame.world_offset)


def load_pose(path: Path) -> PosedCamera:
    """카메라 JSON (매니페스트 카메라 항목과 같은 필드, image/role 생략 가능)"""
    path = Path(path)
    if not path.exists():
        raise DataError(f"포즈 파일 없음: {path}")
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    data.setdefault("image", "")
    data.setdefault("role", "test")
    return CameraEntry.from_dict(data).to_camera()


def cmd_render(ckpt: Path, out: Path, camera_index: Optional[int] = None, data_dir: Optional[Path] = None,
               pose: Optional[Path] = None, depth: Optional[Path] = None) -> Dict:
    field, payload = load_checkpoint(ckpt)
    n_fg, m_bg, near, far = _render_counts(payload)

    if pose is not None:
        cam = load_pose(pose)
    elif camera_index is not None:
        if data_dir is None:
            raise ConfigError("--camera-index 는 --data 와 함께 사용해야 함")
        manifest = load_manifest(data_dir)
        if not 0 <= camera_index < len(manifest.cameras):
            raise ConfigError(f"카메라 번호 범위 초과: {camera_index} (0..{len(manifest.cameras) - 1})")
        cam = manifest.cameras[camera_index].to_camera()
    else:
        raise ConfigError("--pose 또는 --camera-index 가 필요함")

    rendered = render_image(field, _to_frame(cam, field), n_fg, m_bg, near=near, far=far)
    outputs = {"image": str(save_png(rendered.image, out))}

    if depth is not None:
        depth = Path(depth)
        outputs["depth"] = str(save_depth(rendered.fg_depth, depth))
        outputs["depth_preview"] = str(save_rgb8(colorize_depth(rendered.fg_depth),
                                                  depth.with_name(depth.stem + "_preview.png")))
        outputs["fg_opacity"] = str(save_png(np.repeat(rendered.fg_opacity[..., None], 3, axis=-1),
                                             depth.with_name(depth.stem + "_opacity.png")))
        outputs["fg_image"] = str(save_png(rendered.fg_image, depth.with_name(depth.stem + "_fg.png")))

    logger.info(f"렌더링 저장: {outputs['image']}")
    return outputs


def cmd_eval(ckpt: Path, data_dir: Path) -> Dict:
    field, payload = load_checkpoint(ckpt)
    n_fg, m_bg, near, far = _render_counts(payload)
    manifest = load_manifest(data_dir)

    tests = load_images(manifest, "test")
    if not tests:
        raise DataError("test 카메라 없음")

    report = EvalReport()
    for index, target in tests:
        entry = manifest.cameras[index]
        rendered = render_image(field, _to_frame(entry.to_camera(), field), n_fg, m_bg, near=near, far=far)
        report.add(entry.image, rendered.image, target, fg_transmittance=1.0 - rendered.fg_opacity)

    result = report.to_dict()
    result["step"] = int(payload["step"])
    return result


def cmd_boundary(f: float, b: float, d: float) -> Dict:
    return {"f": f, "b": b, "d": d, "t_b": boundary_from_disparity(f, b, d)}


# ---------------------------------------------------------------------------
# 오케스트레이터
# ---------------------------------------------------------------------------

class PipelineOrchestrator:
    """synth → train → eval → render 파이프라인"""

    def __init__(self, out_dir: Path, preset: str = "two-object", mode: str = "full",
                 config: Optional[TrainConfig] = None, seed: int = 0):
        if mode not in ("full", "quick"):
            raise ConfigError(f"알 수 없는 모드: {mode}")

        self.out_dir = Path(out_dir)
        self.preset = preset
        self.mode = mode
        self.seed = seed
        config = config or TrainConfig()
        if mode == "quick":
            config = replace(config, **QUICK_OVERRIDES)
        self.config = replace(config, seed=seed)
        self.config.validate()

        self.data_dir = self.out_dir / "data"
        self.train_dir = self.out_dir / "train"
        self.stages = [
            ("synth", "합성 데이터셋 생성", self.stage_synth),
            ("train", "필드 학습", self.stage_train),
            ("eval", "test 카메라 평가", self.stage_eval),
            ("render", "test 카메라 렌더링", self.stage_render),
        ]

        self.results = {}
        self.errors = []
        self.start_time = None

    def setup_logging(self) -> Path:
        """<out>/logs/ 에 파일 로그 추가"""
        logs_dir = self.out_dir / "logs"
        logs_dir.mkdir(parents=True, exist_ok=True)
        log_file = logs_dir / f"pipeline_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log"

        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(LOG_CONFIG["format"]))
        logging.getLogger().addHandler(file_handler)
        return log_file

    @property
    def checkpoint_path(self) -> Path:
        return self.train_dir / "checkpoints" / "final.ckpt"

    def stage_synth(self) -> Dict:
        resolution = QUICK_RESOLUTION if self.mode == "quick" else RIG_CONFIG["resolution"]
        return cmd_synth(self.preset, self.data_dir, resolution=resolution, seed=self.seed)

    def stage_train(self) -> Dict:
        return cmd_train(self.data_dir, self.train_dir, self.config)

    def stage_eval(self) -> Dict:
        report = cmd_eval(self.checkpoint_path, self.data_dir)
        with open(self.out_dir / "eval_report.json", "w", encoding="utf-8") as f:
            json.dump(report, f, ensure_ascii=False, indent=2)
        return report

    def stage_render(self) -> Dict:
        manifest = load_manifest(self.data_dir)
        index = manifest.entries("test")[0][0]
        renders = self.out_dir / "renders"
        return cmd_render(self.checkpoint_path, renders / "test.png", camera_index=index,
                          data_dir=self.data_dir, depth=renders / "test_depth.fdepth")

    def run_stage(self, stage_id: str, stage_name: str, action: Callable[[], Dict]) -> Dict:
        """개별 스테이지 실행"""
        logger.info("=" * 50)
        logger.info(f"🚀 스테이지: {stage_name}")
        logger.info("=" * 50)

        stage_start = time.time()
        try:
            result = action()
            return {
                "stage_id": stage_id,
                "stage_name": stage_name,
                "success": True,
                "result": result,
                "elapsed_seconds": round(time.time() - stage_start, 2),
                "error": None,
                "exit_code": 0,
            }
        except HybridFieldError as e:
            logger.error(f"❌ 스테이지 실패: {e}")
            return {
                "stage_id": stage_id,
                "stage_name": stage_name,
                "success": False,
                "result": None,
                "elapsed_seconds": round(time.time() - stage_start, 2),
                "error": str(e),
                "exit_code": e.exit_code,
            }

    def run_pipeline(self, skip_stages: List[str] = None) -> Dict:
        self.start_time = time.time()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        log_file = self.setup_logging()

        logger.info("=" * 50)
        logger.info(f"하이브리드 필드 파이프라인 시작 (프리셋 {self.preset}, 모드 {self.mode})")
        logger.info("=" * 50)
        logger.info(f"로그 파일: {log_file}")

        completed, failed = 0, 0
        for stage_id, stage_name, action in self.stages:
            if skip_stages and stage_id in skip_stages:
                logger.info(f"⏭️ 스킵: {stage_name}")
                continue

            result = self.run_stage(stage_id, stage_name, action)
            self.results[stage_id] = result
            if result["success"]:
                completed += 1
                logger.info(f"✅ 완료 ({result['elapsed_seconds']}초)")
            else:
                failed += 1
                self.errors.append({"stage": stage_id, "error": result["error"], "exit_code": result["exit_code"]})
                # 뒤 스테이지는 앞 결과에 의존
                break

        total_elapsed = time.time() - self.start_time
        report = {
            "pipeline_status": "completed" if failed == 0 else "failed",
            "start_time": datetime.fromtimestamp(self.start_time).strftime("%Y-%m-%d %H:%M:%S"),
            "end_time": datetime.now().strftime("%Y-%m-%d %H:%M:%S"),
            "total_elapsed_seconds": round(total_elapsed, 2),
            "stages_completed": completed,
            "stages_failed": failed,
            "stages": self.results,
            "errors": self.errors,
            "log_file": str(log_file),
        }

        report_path = self.out_dir / "pipeline_report.json"
        with open(report_path, "w", encoding="utf-8") as f:
            json.dump(report, f, ensure_ascii=False, indent=2, default=str)

        logger.info("=" * 50)
        logger.info(f"📊 파이프라인 완료: 성공 {completed}개, 실패 {failed}개, {round(total_elapsed, 1)}초")
        for err in self.errors:
            logger.warning(f"  - [{err['stage']}] {err['error']}")
        logger.info(f"리포트 저장: {report_path}")
        return report


# ---------------------------------------------------------------------------
# main
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridfield", description="전경/배경 하이브리드 래디언스 필드")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="합성 데이터셋 생성")
    synth.add_argument("--preset", choices=PRESETS, default="two-object")
    synth.add_argument("--list-presets", action="store_true", help="프리셋 이름 출력")
    synth.add_argument("--resolution", type=int, default=RIG_CONFIG["resolution"])
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--frequency", type=int, default=RIG_CONFIG["frequency"], help="측지 분할 주파수 (0 = 중점 분할)")
    synth.add_argument("--subdiv", type=int, default=RIG_CONFIG["n_subdiv"])
    synth.add_argument("--full-sphere", action="store_true", help="반구 대신 전체 구 리그")
    synth.add_argument("--fov", type=float, default=RIG_CONFIG["fov_degrees"])
    synth.add_argument("--out", type=Path)

    train = sub.add_parser("train", help="필드 학습")
    train.add_argument("--data", type=Path, required=True)
    train.add_argument("--out", type=Path, required=True)
    train.add_argument("--config", type=Path)
    train.add_argument("--seed", type=int)
    train.add_argument("--t-b", type=float, dest="t_b")
    train.add_argument("--resume", type=Path)

    render = sub.add_parser("render", help="체크포인트 렌더링")
    render.add_argument("--ckpt", type=Path, required=True)
    render.add_argument("--out", type=Path, required=True)
    group = render.add_mutually_exclusive_group(required=True)
    group.add_argument("--camera-index", type=int)
    group.add_argument("--pose", type=Path)
    render.add_argument("--data", type=Path)
    render.add_argument("--depth", type=Path, help="전경 깊이 FDEPTH1 출력 경로")

    evaluate = sub.add_parser("eval", help="test 카메라 평가 (JSON 출력)")
    evaluate.add_argument("--ckpt", type=Path, required=True)
    evaluate.add_argument("--data", type=Path, required=True)

    boundary = sub.add_parser("boundary", help="시차로부터 t_B 계산")
    boundary.add_argument("--f", type=float, required=True, help="초점거리 (픽셀)")
    boundary.add_argument("--b", type=float, required=True, help="기준선 (월드 단위)")
    boundary.add_argument("--d", type=float, required=True, help="최소 시차 (픽셀)")

    run = sub.add_parser("run", help="synth → train → eval → render")
    run.add_argument("--mode", choices=["full", "quick"], default="full")
    run.add_argument("--preset", choices=PRESETS, default="two-object")
    run.add_argument("--out", type=Path, default=RUNS_DIR / "latest")
    run.add_argument("--config", type=Path)
    run.add_argument("--seed", type=int, default=0)

    return parser


def _print_json(data: Dict):
    print(json.dumps(data, ensure_ascii=False, indent=2, default=str))


def dispatch(args: argparse.Namespace) -> int:
    if args.command == "synth":
        if args.list_presets:
            print("\n".join(PRESETS))
            return 0
        if args.out is None:
            raise ConfigError("--out 이 필요함")
        _print_json(cmd_synth(args.preset, args.out, resolution=args.resolution, seed=args.seed,
                              n_subdiv=args.subdiv, frequency=args.frequency or None,
                              hemisphere=not args.full_sphere, fov_degrees=args.fov))

    elif args.command == "train":
        config = TrainConfig.from_file(args.config) if args.config else TrainConfig()
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        summary = cmd_train(args.data, args.out, config, t_b=args.t_b, resume=args.resume)
        logger.info(f"최종 체크포인트: {summary['final_checkpoint']}")

    elif args.command == "render":
        cmd_render(args.ckpt, args.out, camera_index=args.camera_index, data_dir=args.data,
                   pose=args.pose, depth=args.depth)

    elif args.command == "eval":
        _print_json(cmd_eval(args.ckpt, args.data))

    elif args.command == "boundary":
        _print_json(cmd_boundary(args.f, args.b, args.d))

    elif args.command == "run":
        config = TrainConfig.from_file(args.config) if args.config else None
        report = PipelineOrchestrator(args.out, args.preset, args.mode, config, args.seed).run_pipeline()
        if report["errors"]:
            return report["errors"][0]["exit_code"]

    return 0


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=getattr(logging, str(LOG_CONFIG["level"]).upper(), logging.INFO),
        format=LOG_CONFIG["format"],
        datefmt=LOG_CONFIG["date_format"],
    )
    args = build_parser().parse_args(argv)

    try:
        return dispatch(args)
    except HybridFieldError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
