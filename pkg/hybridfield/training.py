"""
학습 모듈
- TrainConfig (평면 JSON 설정 파일, 알 수 없는 키는 오류)
- 색상 MSE 손실 + 전경 투과율 이진 엔트로피 손실
- Adam 업데이트, 마일스톤 격자 업샘플링
- 학습 로그 (탭 구분), 주기적 평가 / 체크포인트, 재시작
"""

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union, get_args, get_origin, get_type_hints
import sys

import numpy as np
import torch

sys.path.append(str(Path(__file__).parent.parent))
from config import FIELD_CONFIG, GEOMETRY_CONFIG, NUM_THREADS, SAMPLER_CONFIG, TRAIN_CONFIG

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, DataError, NumericError
from .field import FieldConfig, HybridField, init_field, resolve_dtype
from .geometry import PosedCamera, RayBundle, SceneFrame
from .metrics import EvalReport, binary_entropy
from .renderer import composite_render, render_image
from .sampler import ScheduleConfig, schedule, sample_rays, validate_schedule

logger = logging.getLogger(__name__)

LOG_FIELDS = ["step", "loss_color", "loss_opacity", "psnr_train_batch", "n_fg", "m_bg", "res_fg", "res_bg"]
ADAM_BETAS = (0.9, 0.99)
ADAM_EPS = 1e-8


def _coerce_field(name: str, value, hint):
    """JSON 값 → 필드 타입 (int 는 float 자리에 허용, bool 은 숫자로 취급하지 않음)"""
    if get_origin(hint) is Union:
        if value is None:
            return None
        inner = [arg for arg in get_args(hint) if arg is not type(None)]
        return _coerce_field(name, value, inner[0])

    if get_origin(hint) is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{name} 는 목록이어야 함: {value!r}")
        (item,) = get_args(hint)
        return [_coerce_field(f"{name}[{i}]", v, item) for i, v in enumerate(value)]

    if isinstance(value, bool) and hint is not bool:
        raise ConfigError(f"{name} 의 타입이 잘못됨: {hint.__name__} 필요, bool {value!r}")
    if hint is float and isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, hint):
        return value
    raise ConfigError(f"{name} 의 타입이 잘못됨: {hint.__name__} 필요, {type(value).__name__} {value!r}")


@dataclass
class TrainConfig:
    """학습 설정 (기본값은 config.py)"""

    batch_rays: int = TRAIN_CONFIG["batch_rays"]
    iterations: int = TRAIN_CONFIG["iterations"]
    lr_grid: float = TRAIN_CONFIG["lr_grid"]
    lr_decoder: float = TRAIN_CONFIG["lr_decoder"]
    lambda_reg: float = TRAIN_CONFIG["lambda_reg"]
    seed: int = TRAIN_CONFIG["seed"]
    deterministic: bool = TRAIN_CONFIG["deterministic"]
    log_every: int = TRAIN_CONFIG["log_every"]
    eval_every: int = TRAIN_CONFIG["eval_every"]
    checkpoint_every: int = TRAIN_CONFIG["checkpoint_every"]

    # 장면 (None 이면 매니페스트 값)
    boundary_multiplier: Optional[float] = None
    t_b: Optional[float] = None
    near: float = GEOMETRY_CONFIG["near"]
    far: Optional[float] = None

    # 필드
    components: int = FIELD_CONFIG["components"]
    decoder_width: int = FIELD_CONFIG["decoder_width"]
    decoder_depth: int = FIELD_CONFIG["decoder_depth"]
    view_octaves: int = FIELD_CONFIG["view_octaves"]
    density_bias_init: float = FIELD_CONFIG["density_bias_init"]
    init_std: float = FIELD_CONFIG["init_std"]
    dtype: str = FIELD_CONFIG["dtype"]

    # coarse-to-fine
    n_fg_init: int = SAMPLER_CONFIG["n_fg_init"]
    n_fg_final: int = SAMPLER_CONFIG["n_fg_final"]
    m_bg_init: int = SAMPLER_CONFIG["m_bg_init"]
    m_bg_final: int = SAMPLER_CONFIG["m_bg_final"]
    res_fg_init: List[int] = field(default_factory=lambda: list(SAMPLER_CONFIG["res_fg_init"]))
    res_fg_final: List[int] = field(default_factory=lambda: list(SAMPLER_CONFIG["res_fg_final"]))
    res_bg_init: List[int] = field(default_factory=lambda: list(SAMPLER_CONFIG["res_bg_init"]))
    res_bg_final: List[int] = field(default_factory=lambda: list(SAMPLER_CONFIG["res_bg_final"]))
    milestones: List[int] = field(default_factory=lambda: list(SAMPLER_CONFIG["milestones"]))

    @classmethod
    def from_dict(cls, data: Dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"알 수 없는 설정 키: {', '.join(unknown)}")
        hints = get_type_hints(cls)
        config = cls(**{key: _coerce_field(key, value, hints[key]) for key, value in data.items()})
        config.validate()
        return config

    @classmethod
    def from_file(cls, path: Path) -> "TrainConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"설정 파일 없음: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"설정 파일 파싱 실패: {path} ({e})") from e
        if not isinstance(data, dict):
            raise ConfigError(f"설정 파일은 평면 JSON 객체여야 함: {path}")
        return cls.from_dict(data)

    def to_dict(self) -> Dict:
        return asdict(self)

    def validate(self):
        if self.batch_rays < 1:
            raise ConfigError(f"batch_rays 는 1 이상이어야 함: {self.batch_rays}")
        if self.iterations < 0:
            raise ConfigError(f"iterations 는 0 이상이어야 함: {self.iterations}")
        if self.lambda_reg < 0:
            raise ConfigError(f"lambda_reg 는 0 이상이어야 함: {self.lambda_reg}")
        if not (self.lr_grid > 0 and self.lr_decoder > 0):
            raise ConfigError("학습률은 양수여야 함")
        if self.seed < 0:
            raise ConfigError(f"seed 는 0 이상이어야 함: {self.seed}")
        for key in ("log_every", "eval_every", "checkpoint_every"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} 는 0 이상이어야 함")
        if self.components < 1:
            raise ConfigError(f"components 는 1 이상이어야 함: {self.components}")
        if self.t_b is not None and self.t_b <= 0:
            raise ConfigError(f"t_b 는 양수여야 함: {self.t_b}")
        if self.boundary_multiplier is not None and self.boundary_multiplier <= 1:
            raise ConfigError(f"boundary_multiplier 는 1 보다 커야 함: {self.boundary_multiplier}")
        resolve_dtype(self.dtype)
        validate_schedule(self.schedule_config())

    @property
    def far_depth(self) -> float:
        return math.inf if self.far is None else float(self.far)

    def schedule_config(self) -> ScheduleConfig:
        return ScheduleConfig(
            n_fg_init=self.n_fg_init,
            n_fg_final=self.n_fg_final,
            m_bg_init=self.m_bg_init,
            m_bg_final=self.m_bg_final,
            res_fg_init=list(self.res_fg_init),
            res_fg_final=list(self.res_fg_final),
            res_bg_init=list(self.res_bg_init),
            res_bg_final=list(self.res_bg_final),
            milestones=list(self.milestones),
        )

    def field_config(self, step: int = 0) -> FieldConfig:
        current = schedule(step, self.schedule_config())
        return FieldConfig(
            res_fg=current.res_fg,
            res_bg=current.res_bg,
            components=self.components,
            decoder_width=self.decoder_width,
            decoder_depth=self.decoder_depth,
            view_octaves=self.view_octaves,
            density_bias_init=self.density_bias_init,
            init_std=self.init_std,
            dtype=self.dtype,
        )


# ---------------------------------------------------------------------------
# 손실
# ---------------------------------------------------------------------------

def color_loss(predicted: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """광선별 제곱 L2 거리의 평균"""
    if predicted.shape != target.shape:
        raise DataError(f"배치 크기 불일치: {tuple(predicted.shape)} vs {tuple(target.shape)}")
    if predicted.shape[0] == 0:
        raise DataError("빈 광선 배치")
    return ((predicted - target) ** 2).sum(dim=-1).mean()


def opacity_loss(T: torch.Tensor) -> torch.Tensor:
    return binary_entropy(T).mean()


# ---------------------------------------------------------------------------
# 최적화
# ---------------------------------------------------------------------------

def build_optimizer(field: HybridField, config: TrainConfig,
                    previous: Optional[torch.optim.Optimizer] = None) -> torch.optim.Optimizer:
    """격자/디코더 별도 학습률의 Adam (previous 가 있으면 디코더 모멘트만 이어받음)"""
    optimizer = torch.optim.Adam(
        [
            {"params": field.grid_parameters(), "lr": config.lr_grid, "name": "grid"},
            {"params": field.decoder_parameters(), "lr": config.lr_decoder, "name": "decoder"},
        ],
        betas=ADAM_BETAS,
        eps=ADAM_EPS,
    )
    if previous is not None:
        for param in field.decoder_parameters():
            if param in previous.state:
                optimizer.state[param] = previous.state[param]
    return optimizer


def train_step(
    field: HybridField,
    optimizer: torch.optim.Optimizer,
    rays: RayBundle,
    targets: torch.Tensor,
    step: int,
    config: TrainConfig,
) -> Tuple[torch.optim.Optimizer, Dict]:
    """한 번의 반복 (필드는 제자리 갱신, 업샘플링 시 새 옵티마이저 반환)"""
    current = schedule(step, config.schedule_config())
    if field.upsample(current.res_fg, current.res_bg):
        optimizer = build_optimizer(field, config, previous=optimizer)

    rays = rays.to(field.dtype)
    targets = targets.to(field.dtype)
    samples = sample_rays(rays, current.n_fg, current.m_bg, field.boundary_radius,
                          jitter=True, seed=config.seed, step=step)
    out = composite_render(field, rays, samples)

    loss_color = color_loss(out.color, targets)
    loss_opacity = opacity_loss(out.fg_transmittance)
    total = loss_color + config.lambda_reg * loss_opacity

    values = {
        "loss": total.detach().item(),
        "loss_color": loss_color.detach().item(),
        "loss_opacity": loss_opacity.detach().item(),
    }
    if not math.isfinite(values["loss"]):
        components = {key: values[key] for key in ("loss_color", "loss_opacity")}
        raise NumericError(f"손실 발산 (step {step}): {components}", step=step, components=components)

    optimizer.zero_grad(set_to_none=True)
    total.backward()
    optimizer.step()

    mse = values["loss_color"] / 3.0
    return optimizer, {
        **values,
        "psnr_train_batch": 99.0 if mse == 0 else min(99.0, 10.0 * math.log10(1.0 / mse)),
        "n_fg": current.n_fg,
        "m_bg": current.m_bg,
        "res_fg": current.res_fg,
        "res_bg": current.res_bg,
    }


def format_log_line(step: int, stats: Dict) -> str:
    values = [
        str(step),
        f"{stats['loss_color']:.6e}",
        f"{stats['loss_opacity']:.6e}",
        f"{stats['psnr_train_batch']:.4f}",
        str(stats["n_fg"]),
        str(stats["m_bg"]),
        "x".join(str(r) for r in stats["res_fg"]),
        "x".join(str(r) for r in stats["res_bg"]),
    ]
    return "\t".join(values)


def configure_torch(deterministic: bool):
    if NUM_THREADS > 0:
        torch.set_num_threads(NUM_THREADS)
    torch.use_deterministic_algorithms(bool(deterministic))


@dataclass
class TestView:
    name: str
    camera: PosedCamera
    image: np.ndarray


class Trainer:
    """학습 루프: 배치 선택 → train_step → 로그 / 평가 / 체크포인트"""

    def __init__(
        self,
        config: TrainConfig,
        frame: SceneFrame,
        rays: RayBundle,
        targets: torch.Tensor,
        out_dir: Path,
        test_views: Optional[List[TestView]] = None,
    ):
        config.validate()
        if len(rays) == 0:
            raise DataError("학습 광선 없음")

        self.config = config
        self.frame = frame
        self.rays = rays
        self.targets = targets
        self.out_dir = Path(out_dir)
        self.test_views = test_views or []

        configure_torch(config.deterministic)
        self.field = init_field(config.field_config(0), frame, seed=config.seed)
        self.optimizer = build_optimizer(self.field, config)
        self.step = 0
        self.last_log = None
        self.history = []

    @property
    def log_path(self) -> Path:
        return self.out_dir / "train_log.tsv"

    @property
    def checkpoint_dir(self) -> Path:
        return self.out_dir / "checkpoints"

    def resume(self, path: Path):
        """체크포인트에서 필드, 옵티마이저, 스텝 복원 후 저장 시점 로그 라인을 다시 기록"""
        field, payload = load_checkpoint(path)
        if field.dtype != resolve_dtype(self.config.dtype):
            raise ConfigError(f"체크포인트 dtype 불일치: {field.dtype}")

        self.field = field
        self.frame = field.frame
        self.optimizer = build_optimizer(field, self.config)
        if payload.get("optimizer") is not None:
            self.optimizer.load_state_dict(payload["optimizer"])
        self.step = int(payload["step"])
        self.last_log = payload.get("last_log")

        if self.last_log:
            self._write_log(self.last_log)
            logger.info(f"재시작 (step {self.step}): {self.last_log}")

    def sample_batch(self, step: int) -> Tuple[RayBundle, torch.Tensor]:
        """(seed, step) 으로 정해지는 복원 추출"""
        rng = np.random.default_rng([self.config.seed, step])
        idx = torch.from_numpy(rng.integers(0, len(self.rays), size=self.config.batch_rays))
        return self.rays.index(idx), self.targets[idx]

    def _write_log(self, line: str):
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        new_file = not self.log_path.exists()
        with open(self.log_path, "a", encoding="utf-8") as f:
            if new_file:
                f.write("\t".join(LOG_FIELDS) + "\n")
            f.write(line + "\n")

    def checkpoint(self, name: str) -> Path:
        return save_checkpoint(
            self.checkpoint_dir / name,
            self.field,
            self.step,
            train_config=self.config.to_dict(),
            optimizer_state=self.optimizer.state_dict(),
            last_log=self.last_log,
        )

    def evaluate(self) -> Dict:
        current = schedule(self.step, self.config.schedule_config())
        report = EvalReport()
        for view in self.test_views:
            rendered = render_image(self.field, view.camera, current.n_fg, current.m_bg,
                                    near=self.config.near, far=self.config.far_depth)
            report.add(view.name, rendered.image, view.image, fg_transmittance=1.0 - rendered.fg_opacity)
        return report.to_dict()

    def train(self) -> Dict:
        config = self.config
        start = time.time()
        logger.info(f"학습 시작: step {self.step} → {config.iterations}, 배치 {config.batch_rays}")

        stats = None
        while self.step < config.iterations:
            rays, targets = self.sample_batch(self.step)
            self.optimizer, stats = train_step(self.field, self.optimizer, rays, targets, self.step, config)
            self.step += 1

            if config.log_every and self.step % config.log_every == 0:
                self.last_log = format_log_line(self.step, stats)
                self._write_log(self.last_log)
                self.history.append(stats)
                logger.info(self.last_log)

            if config.eval_every and self.test_views and self.step % config.eval_every == 0:
                report = self.evaluate()
                logger.info(f"평가 (step {self.step}): PSNR {report['mean_psnr']:.2f} dB, SSIM {report['mean_ssim']:.4f}")

            if config.checkpoint_every and self.step % config.checkpoint_every == 0:
                self.checkpoint(f"step_{self.step:06d}.ckpt")

        final_path = self.checkpoint("final.ckpt")
        summary = {
            "steps": self.step,
            "final_checkpoint": str(final_path),
            "elapsed_seconds": round(time.time() - start, 2),
            "last_stats": stats,
        }
        if self.test_views:
            summary["eval"] = self.evaluate()
        logger.info(f"학습 완료: {self.step} step, {summary['elapsed_seconds']}초")
        return summary
