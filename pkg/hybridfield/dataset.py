"""
데이터셋 매니페스트
- manifest.json 로드/저장 (version, rig_radius, boundary_multiplier, cameras)
- 카메라 항목 검증 (에러/경고 목록)
- 학습/평가용 광선 테이블 구성
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple
import sys

import numpy as np
import torch

sys.path.append(str(Path(__file__).parent.parent))
from config import GEOMETRY_CONFIG, MANIFEST_VERSION

from .errors import DataError, GeometryError
from .geometry import CameraModel, PosedCamera, RayBundle, SceneFrame, generate_rays, normalize_scene, rotation_error
from .images import load_png

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
ROLES = ("train", "test")


@dataclass
class CameraEntry:
    """매니페스트의 카메라 한 대"""

    image: str
    role: str
    model: str
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    c2w: List[float]

    @classmethod
    def from_dict(cls, data: Dict) -> "CameraEntry":
        return cls(**{name: data.get(name) for name in cls.__dataclass_fields__})

    def to_dict(self) -> Dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}

    def to_camera(self) -> PosedCamera:
        c2w = np.asarray(self.c2w, dtype=np.float64).reshape(4, 4).copy()
        # 허용오차 1e-4 안쪽의 회전은 SVD 로 직교화
        if rotation_error(c2w[:3, :3]) > GEOMETRY_CONFIG["orthonormal_tol"]:
            u, _, vt = np.linalg.svd(c2w[:3, :3])
            c2w[:3, :3] = u @ vt
        return PosedCamera(
            model=CameraModel(self.model),
            width=int(self.width),
            height=int(self.height),
            fx=float(self.fx),
            fy=float(self.fy),
            cx=float(self.cx),
            cy=float(self.cy),
            c2w=c2w,
        )

    @classmethod
    def from_camera(cls, cam: PosedCamera, image: str, role: str) -> "CameraEntry":
        return cls(
            image=image,
            role=role,
            model=cam.model.value,
            width=int(cam.width),
            height=int(cam.height),
            fx=float(cam.fx),
            fy=float(cam.fy),
            cx=float(cam.cx),
            cy=float(cam.cy),
            c2w=[float(x) for x in cam.c2w.reshape(-1)],
        )


@dataclass
class DatasetManifest:
    version: int = MANIFEST_VERSION
    rig_radius: Optional[float] = None
    boundary_multiplier: float = GEOMETRY_CONFIG["boundary_multiplier"]
    cameras: List[CameraEntry] = field(default_factory=list)
    root: Optional[Path] = None

    def entries(self, role: str) -> List[Tuple[int, CameraEntry]]:
        return [(i, entry) for i, entry in enumerate(self.cameras) if entry.role == role]

    def image_path(self, entry: CameraEntry) -> Path:
        return Path(self.root or ".") / entry.image

    def to_dict(self) -> Dict:
        return {
            "version": self.version,
            "rig_radius": self.rig_radius,
            "boundary_multiplier": self.boundary_multiplier,
            "cameras": [entry.to_dict() for entry in self.cameras],
        }


class ManifestValidator:
    """매니페스트 검증"""

    def __init__(self, tol: float = None):
        self.tol = GEOMETRY_CONFIG["manifest_orthonormal_tol"] if tol is None else tol
        self.validation_errors = []
        self.validation_warnings = []

    def validate_camera(self, entry: Dict, index: int, root: Optional[Path] = None) -> List[str]:
        """카메라 항목 검증"""
        errors = []
        label = f"[camera {index}]"

        image = entry.get("image")
        if not image:
            errors.append(f"{label} 이미지 경로 없음")
        elif root is not None and not (Path(root) / image).exists():
            errors.append(f"{label} 이미지 파일 없음: {Path(root) / image}")

        if entry.get("role") not in ROLES:
            errors.append(f"{label} role 은 train/test 중 하나: {entry.get('role')!r}")

        if entry.get("model") not in [m.value for m in CameraModel]:
            errors.append(f"{label} 지원하지 않는 카메라 모델: {entry.get('model')!r}")

        for key in ("width", "height"):
            value = entry.get(key)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                errors.append(f"{label} {key} 는 양의 정수여야 함: {value!r}")

        for key in ("fx", "fy", "cx", "cy"):
            value = entry.get(key)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                errors.append(f"{label} {key} 가 숫자가 아님: {value!r}")
            elif key in ("fx", "fy") and value <= 0:
                errors.append(f"{label} {key} 는 양수여야 함: {value}")

        c2w = entry.get("c2w")
        if not isinstance(c2w, list) or len(c2w) != 16:
            errors.append(f"{label} c2w 는 16개 실수 (행 우선) 여야 함")
        else:
            matrix = np.asarray(c2w, dtype=np.float64).reshape(4, 4)
            if not np.all(np.isfinite(matrix)):
                errors.append(f"{label} c2w 에 유한하지 않은 값")
            elif rotation_error(matrix[:3, :3]) > self.tol:
                errors.append(f"{label} c2w 회전이 직교행렬이 아님 (허용오차 {self.tol})")

        return errors

    def validate_manifest(self, data: Dict, root: Optional[Path] = None) -> Dict:
        """전체 매니페스트 검증"""
        self.validation_errors = []
        self.validation_warnings = []

        if data.get("version") != MANIFEST_VERSION:
            self.validation_errors.append(f"지원하지 않는 매니페스트 버전: {data.get('version')!r}")

        rig_radius = data.get("rig_radius")
        if rig_radius is not None and not (isinstance(rig_radius, (int, float)) and rig_radius > 0):
            self.validation_errors.append(f"rig_radius 는 양수 또는 null: {rig_radius!r}")

        multiplier = data.get("boundary_multiplier", GEOMETRY_CONFIG["boundary_multiplier"])
        if not (isinstance(multiplier, (int, float)) and multiplier > 1):
            self.validation_errors.append(f"boundary_multiplier 는 1 보다 커야 함: {multiplier!r}")

        cameras = data.get("cameras") or []
        if not cameras:
            self.validation_errors.append("카메라 목록 없음")

        for i, entry in enumerate(cameras):
            self.validation_errors.extend(self.validate_camera(entry, i, root))

        roles = [entry.get("role") for entry in cameras]
        if cameras and "train" not in roles:
            self.validation_errors.append("train 카메라가 1대 이상 필요함")
        if cameras and "test" not in roles:
            self.validation_warnings.append("test 카메라 없음 (평가 불가)")

        return self.get_validation_result()

    def get_validation_result(self) -> Dict:
        return {
            "valid": len(self.validation_errors) == 0,
            "errors": self.validation_errors,
            "warnings": self.validation_warnings,
            "error_count": len(self.validation_errors),
            "warning_count": len(self.validation_warnings),
        }


def load_manifest(data_dir: Path) -> DatasetManifest:
    """<data_dir>/manifest.json 로드 및 검증"""
    data_dir = Path(data_dir)
    path = data_dir / MANIFEST_NAME if data_dir.is_dir() or not data_dir.suffix else data_dir
    if not path.exists():
        raise DataError(f"매니페스트 파일 없음: {path}")

    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"매니페스트 JSON 파싱 실패: {path} ({e})") from e

    result = ManifestValidator().validate_manifest(data, root=path.parent)
    for warning in result["warnings"]:
        logger.warning(f"⚠️ {warning}")
    if not result["valid"]:
        shown = "; ".join(result["errors"][:5])
        raise DataError(f"매니페스트 검증 실패 ({result['error_count']}건): {shown}")

    return DatasetManifest(
        version=data["version"],
        rig_radius=data.get("rig_radius"),
        boundary_multiplier=data.get("boundary_multiplier", GEOMETRY_CONFIG["boundary_multiplier"]),
        cameras=[CameraEntry.from_dict(entry) for entry in data["cameras"]],
        root=path.parent,
    )


def save_manifest(manifest: DatasetManifest, data_dir: Path) -> Path:
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    path = data_dir / MANIFEST_NAME
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest.to_dict(), f, ensure_ascii=False, indent=2)
    return path


def prepare_scene(
    manifest: DatasetManifest,
    boundary_radius: Optional[float] = None,
    boundary_multiplier: Optional[float] = None,
) -> Tuple[List[PosedCamera], SceneFrame]:
    """매니페스트 전체 카메라를 정규화 (순서 유지)

    경계 깊이 우선순위: boundary_radius 인자 > boundary_multiplier 인자 > 매니페스트 값.
    매니페스트에 rig_radius 가 있으면 배수는 그 값에 곱한다.
    """
    cameras = [entry.to_camera() for entry in manifest.cameras]
    multiplier = manifest.boundary_multiplier if boundary_multiplier is None else boundary_multiplier

    if boundary_radius is None and manifest.rig_radius is not None:
        boundary_radius = multiplier * manifest.rig_radius

    try:
        return normalize_scene(cameras, boundary_multiplier=multiplier, boundary_radius=boundary_radius)
    except GeometryError as e:
        raise DataError(f"장면 정규화 실패: {e}") from e


def load_images(manifest: DatasetManifest, role: str) -> List[Tuple[int, np.ndarray]]:
    images = []
    for index, entry in manifest.entries(role):
        image = load_png(manifest.image_path(entry))
        if image.shape[:2] != (entry.height, entry.width):
            raise DataError(
                f"이미지 크기 불일치: {entry.image} {image.shape[1]}x{image.shape[0]} "
                f"(매니페스트 {entry.width}x{entry.height})"
            )
        images.append((index, image))
    return images


def build_ray_table(
    manifest: DatasetManifest,
    cameras: List[PosedCamera],
    frame: SceneFrame,
    role: str = "train",
    near: Optional[float] = None,
    far: float = math.inf,
    dtype: torch.dtype = torch.float64,
) -> Tuple[RayBundle, torch.Tensor]:
    """role 카메라 전체 픽셀의 광선과 목표 색상 (ray id = 전역 픽셀 번호)"""
    bundles, targets = [], []
    offset = 0

    for index, image in load_images(manifest, role):
        cam = cameras[index]
        bundles.append(generate_rays(cam, frame, near=near, far=far, ray_id_offset=offset, dtype=dtype))
        targets.append(torch.tensor(image.reshape(-1, 3), dtype=dtype))
        offset += cam.width * cam.height

    if not bundles:
        raise DataError(f"{role} 카메라 없음")

    rays = RayBundle(**{
        name: torch.cat([getattr(b, name) for b in bundles], dim=0)
        for name in RayBundle.__dataclass_fields__
    })
    logger.info(f"광선 테이블: {role} 카메라 {len(bundles)}대, 광선 {len(rays):,}개")
    return rays, torch.cat(targets, dim=0)
