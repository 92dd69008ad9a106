"""
기하 모듈
- 카메라 (핀홀 / 등거리 어안) 와 광선 생성
- 장면 정규화 (리그 중심 = 원점)
- 전경 (유클리드) / 배경 (구면 역반경) 좌표 변환
- 경계 깊이 t_B 계산 (시차 기반)
"""

import math
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple
import sys

import numpy as np
import torch

sys.path.append(str(Path(__file__).parent.parent))
from config import GEOMETRY_CONFIG

from .errors import GeometryError, InvalidPixelError

logger = logging.getLogger(__name__)


class CameraModel(str, Enum):
    PINHOLE = "pinhole"
    FISHEYE_EQUIDISTANT = "fisheye_equidistant"


class Region(str, Enum):
    FOREGROUND = "foreground"
    BACKGROUND = "background"


def rotation_error(rotation: np.ndarray) -> float:
    """R^T R 와 단위행렬의 최대 편차 (행렬식이 음수면 inf)"""
    rotation = np.asarray(rotation, dtype=np.float64)
    if np.linalg.det(rotation) <= 0:
        return math.inf
    return float(np.abs(rotation.T @ rotation - np.eye(3)).max())


def camera_errors(cam: "PosedCamera", tol: float) -> List[str]:
    """카메라 파라미터 검증 (오류 메시지 목록 반환)"""
    errors = []

    if cam.width < 1 or cam.height < 1:
        errors.append(f"이미지 크기 오류: {cam.width}x{cam.height}")
    if not (cam.fx > 0 and cam.fy > 0):
        errors.append(f"초점거리는 양수여야 함: fx={cam.fx}, fy={cam.fy}")
    if not (0 <= cam.cx < cam.width and 0 <= cam.cy < cam.height):
        errors.append(f"주점이 이미지 밖: cx={cam.cx}, cy={cam.cy}")

    c2w = cam.c2w
    if c2w.shape != (4, 4) or not np.all(np.isfinite(c2w)):
        errors.append("c2w 는 유한한 4x4 행렬이어야 함")
    elif rotation_error(c2w[:3, :3]) > tol:
        errors.append(f"회전 블록이 직교행렬이 아님 (허용오차 {tol})")

    return errors


@dataclass
class PosedCamera:
    """포즈가 주어진 카메라 (c2w: 카메라→월드, 카메라 +z 전방, 이미지 +y 아래)"""

    model: CameraModel
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    c2w: np.ndarray

    def __post_init__(self):
        self.model = CameraModel(self.model)
        self.c2w = np.asarray(self.c2w, dtype=np.float64).reshape(4, 4)
        errors = camera_errors(self, GEOMETRY_CONFIG["orthonormal_tol"])
        if errors:
            raise GeometryError("; ".join(errors))

    @property
    def rotation(self) -> np.ndarray:
        return self.c2w[:3, :3]

    @property
    def center(self) -> np.ndarray:
        return self.c2w[:3, 3]

    def with_center(self, center: Sequence[float]) -> "PosedCamera":
        c2w = self.c2w.copy()
        c2w[:3, 3] = center
        return replace(self, c2w=c2w)


@dataclass
class Ray:
    """단일 광선 (원점, 단위 방향, near / 경계 / far 깊이)"""

    origin: np.ndarray
    direction: np.ndarray
    t_near: float
    t_boundary: float
    t_far: float = math.inf

    def point(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass
class RayBundle:
    """광선 배치 (torch 텐서, 학습/렌더링용)"""

    origins: torch.Tensor       # (N, 3)
    directions: torch.Tensor    # (N, 3)
    t_near: torch.Tensor        # (N,)
    t_boundary: torch.Tensor    # (N,)
    t_far: torch.Tensor         # (N,) +inf 허용
    ray_ids: torch.Tensor       # (N,) 광선별 난수 스트림 식별자

    def __len__(self) -> int:
        return self.origins.shape[0]

    def index(self, idx) -> "RayBundle":
        return RayBundle(
            origins=self.origins[idx],
            directions=self.directions[idx],
            t_near=self.t_near[idx],
            t_boundary=self.t_boundary[idx],
            t_far=self.t_far[idx],
            ray_ids=self.ray_ids[idx],
        )

    def to(self, dtype: torch.dtype) -> "RayBundle":
        return RayBundle(
            origins=self.origins.to(dtype),
            directions=self.directions.to(dtype),
            t_near=self.t_near.to(dtype),
            t_boundary=self.t_boundary.to(dtype),
            t_far=self.t_far.to(dtype),
            ray_ids=self.ray_ids,
        )

    @classmethod
    def from_rays(cls, rays: List[Ray], dtype: torch.dtype = torch.float64) -> "RayBundle":
        return cls(
            origins=torch.tensor(np.stack([r.origin for r in rays]), dtype=dtype),
            directions=torch.tensor(np.stack([r.direction for r in rays]), dtype=dtype),
            t_near=torch.tensor([r.t_near for r in rays], dtype=dtype),
            t_boundary=torch.tensor([r.t_boundary for r in rays], dtype=dtype),
            t_far=torch.tensor([r.t_far for r in rays], dtype=dtype),
            ray_ids=torch.arange(len(rays), dtype=torch.int64),
        )


@dataclass
class SceneFrame:
    """정규화된 장면 좌표계 (리그 중심 = 원점, 경계 구 반지름 t_B)"""

    rig_center: np.ndarray
    rig_radius: float
    boundary_radius: float
    world_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rig_center = np.asarray(self.rig_center, dtype=np.float64)
        self.world_offset = np.asarray(self.world_offset, dtype=np.float64)
        if not (self.boundary_radius > self.rig_radius > 0):
            raise GeometryError(
                f"경계 반지름({self.boundary_radius})은 리그 반지름({self.rig_radius})보다 커야 함"
            )

    def to_dict(self) -> dict:
        return {
            "rig_center": self.rig_center.tolist(),
            "rig_radius": float(self.rig_radius),
            "boundary_radius": float(self.boundary_radius),
            "world_offset": self.world_offset.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneFrame":
        return cls(
            rig_center=data["rig_center"],
            rig_radius=data["rig_radius"],
            boundary_radius=data["boundary_radius"],
            world_offset=data.get("world_offset", [0.0, 0.0, 0.0]),
        )


@dataclass
class WarpedPoint:
    """변환된 점: 전경 (x, y, z) / 배경 (theta, phi, s = t_B / r)"""

    region: Region
    coords: Tuple[float, float, float]


# ---------------------------------------------------------------------------
# 카메라 투영
# ---------------------------------------------------------------------------

def camera_directions(cam: PosedCamera, u, v) -> np.ndarray:
    """연속 픽셀 좌표 (u, v) → 월드 좌표계 단위 방향 (..., 3)"""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    x = (u - cam.cx) / cam.fx
    y = (v - cam.cy) / cam.fy

    if cam.model == CameraModel.PINHOLE:
        local = np.stack([x, y, np.ones_like(x)], axis=-1)
    else:
        theta = np.hypot(x, y)
        if np.any(theta > math.pi):
            raise InvalidPixelError(f"어안 이미지 원 밖의 픽셀 (theta={float(theta.max()):.4f} > pi)")
        safe = np.where(theta > 0, theta, 1.0)
        scale = np.where(theta > 0, np.sin(theta) / safe, 1.0)
        local = np.stack([x * scale, y * scale, np.cos(theta)], axis=-1)

    world = local @ cam.rotation.T
    return world / np.linalg.norm(world, axis=-1, keepdims=True)


def project_directions(cam: PosedCamera, directions) -> Tuple[np.ndarray, np.ndarray]:
    """월드 방향 → 연속 픽셀 좌표 (camera_directions 의 역변환)"""
    local = np.asarray(directions, dtype=np.float64) @ cam.rotation
    dx, dy, dz = local[..., 0], local[..., 1], local[..., 2]

    if cam.model == CameraModel.PINHOLE:
        if np.any(dz <= 0):
            raise GeometryError("핀홀 카메라 뒤쪽 방향은 투영할 수 없음")
        x, y = dx / dz, dy / dz
    else:
        rho = np.hypot(dx, dy)
        theta = np.arctan2(rho, dz)
        safe = np.where(rho > 0, rho, 1.0)
        x = np.where(rho > 0, theta * dx / safe, 0.0)
        y = np.where(rho > 0, theta * dy / safe, 0.0)

    return x * cam.fx + cam.cx, y * cam.fy + cam.cy


def ray_sphere_intersection(ray_origin, direction, radius: float) -> float:
    """구 내부 원점에서 출발한 광선과 반지름 radius 구의 양의 교점 깊이"""
    o = np.asarray(ray_origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    c = float(o @ o) - radius * radius
    if c >= 0:
        raise GeometryError(
            f"광선 원점이 구 밖에 있음 (|o|={math.sqrt(float(o @ o)):.6f} >= {radius}); 장면 정규화 필요"
        )
    b = float(o @ d)
    disc = math.sqrt(b * b - c)
    # 상쇄 오차를 피하는 근의 공식
    return -c / (b + disc) if b >= 0 else disc - b


def intersect_spheres(origins: torch.Tensor, directions: torch.Tensor, radii: torch.Tensor) -> torch.Tensor:
    """배치 버전: 광선 (N, 3) 과 반지름 radii (N,) 또는 (N, S) 의 교점 깊이"""
    b = (origins * directions).sum(-1)
    c = (origins * origins).sum(-1)
    if radii.dim() > b.dim():
        b = b[..., None]
        c = c[..., None]
    cc = c - radii * radii
    disc = torch.sqrt(torch.clamp(b * b - cc, min=0.0))
    denom = torch.where(b >= 0, b + disc, torch.ones_like(b))
    return torch.where(b >= 0, -cc / denom, disc - b)


def pixel_to_ray(
    cam: PosedCamera,
    u: float,
    v: float,
    frame: SceneFrame,
    near: Optional[float] = None,
    far: float = math.inf,
) -> Ray:
    """픽셀 좌표 → 광선 (경계/far 깊이 포함)"""
    if not (0 <= u < cam.width and 0 <= v < cam.height):
        raise InvalidPixelError(f"픽셀 좌표 범위 초과: ({u}, {v})")

    near = GEOMETRY_CONFIG["near"] if near is None else near
    direction = camera_directions(cam, u, v)
    origin = cam.center.copy()
    t_boundary = ray_sphere_intersection(origin, direction, frame.boundary_radius)

    if not near < t_boundary <= far:
        raise GeometryError(f"깊이 범위 오류: near={near}, t_B={t_boundary}, far={far}")

    return Ray(origin=origin, direction=direction, t_near=near, t_boundary=t_boundary, t_far=far)


def pixel_grid(cam: PosedCamera) -> Tuple[np.ndarray, np.ndarray]:
    """픽셀 중심 좌표 (행 우선: v 가 느린 축)"""
    jj, ii = np.meshgrid(np.arange(cam.height), np.arange(cam.width), indexing="ij")
    return ii.reshape(-1) + 0.5, jj.reshape(-1) + 0.5


def generate_rays(
    cam: PosedCamera,
    frame: SceneFrame,
    near: Optional[float] = None,
    far: float = math.inf,
    ray_id_offset: int = 0,
    dtype: torch.dtype = torch.float64,
) -> RayBundle:
    """카메라 전체 픽셀의 광선 배치 생성"""
    near = GEOMETRY_CONFIG["near"] if near is None else near
    u, v = pixel_grid(cam)
    dirs = camera_directions(cam, u, v)
    n = dirs.shape[0]

    origins = torch.tensor(np.broadcast_to(cam.center, (n, 3)).copy(), dtype=torch.float64)
    directions = torch.tensor(dirs, dtype=torch.float64)
    radius = torch.full((n,), float(frame.boundary_radius), dtype=torch.float64)

    if float(cam.center @ cam.center) >= frame.boundary_radius ** 2:
        raise GeometryError("카메라가 경계 구 밖에 있음; 장면 정규화 필요")

    t_boundary = intersect_spheres(origins, directions, radius)
    if float(t_boundary.min()) <= near:
        raise GeometryError(f"near({near}) 가 경계 깊이보다 큼")
    if far < float(t_boundary.max()):
        raise GeometryError(f"far({far}) 가 경계 깊이보다 작음")

    bundle = RayBundle(
        origins=origins,
        directions=directions,
        t_near=torch.full((n,), float(near), dtype=torch.float64),
        t_boundary=t_boundary,
        t_far=torch.full((n,), float(far), dtype=torch.float64),
        ray_ids=torch.arange(ray_id_offset, ray_id_offset + n, dtype=torch.int64),
    )
    return bundle.to(dtype)


# ---------------------------------------------------------------------------
# 좌표 변환
# ---------------------------------------------------------------------------

def warp_point(p, frame: SceneFrame) -> WarpedPoint:
    """점 p → 전경 (x, y, z) 또는 배경 (theta, phi, t_B / r)"""
    p = np.asarray(p, dtype=np.float64)
    r = float(np.linalg.norm(p))

    # 경계 구 위의 점은 전경
    if r <= frame.boundary_radius:
        return WarpedPoint(Region.FOREGROUND, (float(p[0]), float(p[1]), float(p[2])))

    theta = math.acos(min(1.0, max(-1.0, p[2] / r)))
    phi = math.atan2(p[1], p[0]) if (p[0] != 0 or p[1] != 0) else 0.0
    return WarpedPoint(Region.BACKGROUND, (theta, phi, frame.boundary_radius / r))


def unwarp_point(wp: WarpedPoint, frame: SceneFrame) -> np.ndarray:
    """warp_point 의 역변환"""
    if wp.region == Region.FOREGROUND:
        return np.asarray(wp.coords, dtype=np.float64)

    theta, phi, s = wp.coords
    r = frame.boundary_radius / s
    return r * np.array([
        math.sin(theta) * math.cos(phi),
        math.sin(theta) * math.sin(phi),
        math.cos(theta),
    ])


def spherical_coords(points: torch.Tensor, boundary_radius: float, radii: Optional[torch.Tensor] = None) -> torch.Tensor:
    """배치 버전 배경 좌표 (..., 3) = (theta, phi, s)"""
    if radii is None:
        radii = torch.linalg.norm(points, dim=-1)
    x, y, z = points.unbind(-1)
    norm = torch.linalg.norm(points, dim=-1)
    theta = torch.acos(torch.clamp(z / norm, -1.0, 1.0))
    on_axis = (x == 0) & (y == 0)
    phi = torch.where(on_axis, torch.zeros_like(x), torch.atan2(y, x))
    s = boundary_radius / radii
    return torch.stack([theta, phi, s], dim=-1)


def warp_points(points: torch.Tensor, boundary_radius: float) -> Tuple[torch.Tensor, torch.Tensor]:
    """배치 버전 warp_point: (전경 마스크, 좌표)"""
    radii = torch.linalg.norm(points, dim=-1)
    fg = radii <= boundary_radius
    bg_coords = spherical_coords(points, boundary_radius, radii)
    coords = torch.where(fg[..., None], points, bg_coords)
    return fg, coords


def cartesian_from_spherical(coords: torch.Tensor, boundary_radius: float) -> torch.Tensor:
    """배치 버전 unwarp: (theta, phi, s) → (x, y, z)"""
    theta, phi, s = coords.unbind(-1)
    r = boundary_radius / s
    return torch.stack([
        r * torch.sin(theta) * torch.cos(phi),
        r * torch.sin(theta) * torch.sin(phi),
        r * torch.cos(theta),
    ], dim=-1)


# ---------------------------------------------------------------------------
# 경계 깊이 / 장면 정규화
# ---------------------------------------------------------------------------

def boundary_from_disparity(f: float, b: float, d: float) -> float:
    """t_B = f * b / d (초점거리 픽셀, 기준선 월드 단위, 시차 픽셀)"""
    if d <= 0:
        raise GeometryError(f"시차는 양수여야 함 (d={d}); 기본 경계 깊이를 사용하세요")
    if f <= 0 or b <= 0:
        raise GeometryError(f"초점거리와 기준선은 양수여야 함 (f={f}, b={b})")
    return f * b / d


def default_boundary(rig_radius: float, multiplier: Optional[float] = None) -> float:
    """키포인트가 없을 때의 기본 경계 깊이 (배수 * r_rig)"""
    multiplier = GEOMETRY_CONFIG["boundary_multiplier"] if multiplier is None else multiplier
    return multiplier * rig_radius


def normalize_scene(
    cameras: List[PosedCamera],
    boundary_multiplier: Optional[float] = None,
    boundary_radius: Optional[float] = None,
) -> Tuple[List[PosedCamera], SceneFrame]:
    """카메라 중심의 무게중심을 원점으로 이동 (스케일 변경 없음)"""
    if len(cameras) < 2:
        raise GeometryError(f"카메라가 2대 이상 필요함 (현재 {len(cameras)}대)")

    centers = np.stack([cam.center for cam in cameras])
    centroid = centers.mean(axis=0)
    shifted = centers - centroid
    rig_radius = float(np.linalg.norm(shifted, axis=1).max())

    if rig_radius <= 0:
        raise GeometryError("모든 카메라가 한 점에 있음 (rig_radius = 0)")

    normalized = [cam.with_center(center) for cam, center in zip(cameras, shifted)]

    if boundary_radius is None:
        boundary_radius = default_boundary(rig_radius, boundary_multiplier)

    frame = SceneFrame(
        rig_center=np.zeros(3),
        rig_radius=rig_radius,
        boundary_radius=boundary_radius,
        world_offset=centroid,
    )
    logger.debug(f"장면 정규화: r_rig={rig_radius:.4f}, t_B={boundary_radius:.4f}")
    return normalized, frame
