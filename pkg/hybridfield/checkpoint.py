"""
체크포인트 (HYBRIDFIELD-v1)
- 필드 파라미터, 필드 구성, 장면 좌표계, 학습 설정, 옵티마이저 상태, 마지막 로그 라인
"""

import logging
from dataclasses import asdict
from pathlib import Path
from typing import Dict, Optional
import sys

import torch

sys.path.append(str(Path(__file__).parent.parent))
from config import CHECKPOINT_MAGIC

from .errors import DataError
from .field import FieldConfig, HybridField
from .geometry import SceneFrame

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


def save_checkpoint(
    path: Path,
    field: HybridField,
    step: int,
    train_config: Optional[Dict] = None,
    optimizer_state: Optional[Dict] = None,
    last_log: Optional[str] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    field_config = asdict(field.config)
    field_config["res_fg"] = list(field.foreground.resolutions)
    field_config["res_bg"] = list(field.background.resolutions)

    payload = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "step": int(step),
        "field_config": field_config,
        "frame": field.frame.to_dict(),
        "train_config": dict(train_config or {}),
        "state_dict": field.state_dict(),
        "optimizer": optimizer_state,
        "last_log": last_log,
    }
    torch.save(payload, path)
    logger.debug(f"체크포인트 저장: {path} (step {step})")
    return path


def read_checkpoint(path: Path) -> Dict:
    """매직/버전 확인 후 원본 딕셔너리 반환"""
    path = Path(path)
    if not path.exists():
        raise DataError(f"체크포인트 파일 없음: {path}")

    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise DataError(f"체크포인트 읽기 실패: {path} ({e})") from e

    if not isinstance(payload, dict) or payload.get("magic") != CHECKPOINT_MAGIC:
        raise DataError(f"{CHECKPOINT_MAGIC} 체크포인트가 아님: {path}")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"지원하지 않는 체크포인트 버전: {payload.get('version')}")
    return payload


def load_checkpoint(path: Path):
    """(필드, 원본 딕셔너리)"""
    payload = read_checkpoint(path)

    config = dict(payload["field_config"])
    config["res_fg"] = tuple(config["res_fg"])
    config["res_bg"] = tuple(config["res_bg"])

    field = HybridField(SceneFrame.from_dict(payload["frame"]), FieldConfig(**config))
    field.load_state_dict(payload["state_dict"])

    logger.info(f"체크포인트 로드: {path} (step {payload['step']})")
    return field, payload
