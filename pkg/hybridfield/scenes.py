"""
합성 장면 (검증용)
- 정이십면체 리그 (중점 분할 / 측지 분할), 바깥 방향 카메라
- 해석적 장면: 전경 구, 환경 셸 (체커 / 그라디언트), 선택적 안개
- 구간 경계를 따르는 조밀 적분 기준 렌더러
- 데이터셋 내보내기 (PNG + manifest.json)
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple
import sys

import numpy as np
import torch

sys.path.append(str(Path(__file__).parent.parent))
from config import GEOMETRY_CONFIG, RIG_CONFIG

from .dataset import CameraEntry, DatasetManifest, save_manifest
from .errors import ConfigError, GeometryError
from .geometry import (
    CameraModel,
    PosedCamera,
    RayBundle,
    SceneFrame,
    cartesian_from_spherical,
    generate_rays,
    intersect_spheres,
)
from .images import save_png
from .renderer import quadrature_segment

logger = logging.getLogger(__name__)

ENV_RADIUS_FACTOR = 100.0
SHELL_SIGMA = 1e8
REFERENCE_SAMPLES_PER_UNIT = 1e4
REFERENCE_MAX_PIECE_SAMPLES = 256
# 정사각 어안 이미지의 모서리 theta = (fov / 2) * sqrt(2) 가 pi 를 넘지 않는 최대 시야각
MAX_FISHEYE_FOV_DEGREES = math.degrees(2.0 * math.pi / math.sqrt(2.0))


# ---------------------------------------------------------------------------
# 리그
# ---------------------------------------------------------------------------

def icosahedron() -> Tuple[np.ndarray, np.ndarray]:
    """+z 에 꼭짓점이 있는 단위 정이십면체 (꼭짓점 12, 면 20)"""
    z = 1.0 / math.sqrt(5.0)
    ring = 2.0 / math.sqrt(5.0)
    verts = [[0.0, 0.0, 1.0]]
    verts += [[ring * math.cos(2 * math.pi * k / 5), ring * math.sin(2 * math.pi * k / 5), z] for k in range(5)]
    verts += [[ring * math.cos(2 * math.pi * (k + 0.5) / 5), ring * math.sin(2 * math.pi * (k + 0.5) / 5), -z]
              for k in range(5)]
    verts.append([0.0, 0.0, -1.0])

    faces = []
    for k in range(5):
        u0, u1 = 1 + k, 1 + (k + 1) % 5
        l0, l1 = 6 + k, 6 + (k + 1) % 5
        faces.append((0, u0, u1))
        faces.append((u0, l0, u1))
        faces.append((u1, l0, l1))
        faces.append((11, l1, l0))
    return np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int64)


def weld_vertices(points: np.ndarray, tol: float) -> np.ndarray:
    """tol 이내의 중복 점 제거 (처음 나온 순서 유지)"""
    kept = []
    for p in points:
        if not kept or np.abs(np.asarray(kept) - p).max(axis=1).min() > tol:
            kept.append(p)
    return np.asarray(kept)


def subdivide(verts: np.ndarray, faces: np.ndarray, levels: int) -> Tuple[np.ndarray, np.ndarray]:
    """중점 분할 (공유 모서리 중점은 한 번만 생성)"""
    verts = [v for v in verts]
    for _ in range(levels):
        midpoints: Dict[Tuple[int, int], int] = {}
        new_faces = []

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in midpoints:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                midpoints[key] = len(verts) - 1
            return midpoints[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = np.asarray(new_faces, dtype=np.int64)

    return np.asarray(verts), np.asarray(faces, dtype=np.int64)


def geodesic_vertices(frequency: int, tol: float) -> np.ndarray:
    """주파수 v 측지 분할 꼭짓점 (10 v^2 + 2 개)"""
    verts, faces = icosahedron()
    points = []
    for a, b, c in faces:
        A, B, C = verts[a], verts[b], verts[c]
        for i in range(frequency + 1):
            for j in range(frequency + 1 - i):
                p = A + (B - A) * i / frequency + (C - A) * j / frequency
                points.append(p / np.linalg.norm(p))
    return weld_vertices(np.asarray(points), tol)


def look_outward(center: np.ndarray) -> np.ndarray:
    """중심에서 바깥을 보는 회전 (이미지 위쪽 = 월드 +z 투영, 극점에서는 +y)"""
    forward = center / np.linalg.norm(center)
    up = np.array([0.0, 0.0, 1.0])
    up = up - (up @ forward) * forward
    if np.linalg.norm(up) < 1e-6:
        up = np.array([0.0, 1.0, 0.0]) - forward[1] * forward
    down = -up / np.linalg.norm(up)
    right = np.cross(down, forward)
    return np.stack([right, down, forward], axis=1)


def make_rig(
    n_subdiv: int = RIG_CONFIG["n_subdiv"],
    radius: float = RIG_CONFIG["radius"],
    hemisphere: bool = RIG_CONFIG["hemisphere"],
    frequency: Optional[int] = None,
    resolution: int = RIG_CONFIG["resolution"],
    fov_degrees: float = RIG_CONFIG["fov_degrees"],
    model: CameraModel = CameraModel.FISHEYE_EQUIDISTANT,
) -> List[PosedCamera]:
    """정이십면체 꼭짓점 위의 바깥 방향 카메라

    꼭짓점 수: 중점 분할 12 / 42 / 162 (n_subdiv 0 / 1 / 2), 측지 분할 10 v^2 + 2.
    frequency 가 주어지면 측지 분할을 쓴다 (v3 반구 = 46대).
    """
    if n_subdiv < 0:
        raise ConfigError(f"n_subdiv 는 0 이상이어야 함: {n_subdiv}")
    if frequency is not None and frequency < 1:
        raise ConfigError(f"frequency 는 1 이상이어야 함: {frequency}")
    if not (0 < fov_degrees <= 360):
        raise ConfigError(f"시야각 범위 오류: {fov_degrees}")
    if model == CameraModel.FISHEYE_EQUIDISTANT and fov_degrees > MAX_FISHEYE_FOV_DEGREES:
        raise ConfigError(
            f"어안 시야각이 너무 큼: {fov_degrees} (이미지 모서리가 theta > pi, 최대 {MAX_FISHEYE_FOV_DEGREES:.1f})"
        )

    tol = RIG_CONFIG["weld_tol"]
    if frequency is None:
        verts, _ = subdivide(*icosahedron(), n_subdiv)
        verts = weld_vertices(verts, tol)
    else:
        verts = geodesic_vertices(frequency, tol)

    if hemisphere:
        verts = verts[verts[:, 2] >= -1e-9]

    half_fov = math.radians(fov_degrees) / 2.0
    if model == CameraModel.FISHEYE_EQUIDISTANT:
        focal = (resolution / 2.0) / half_fov
    else:
        focal = (resolution / 2.0) / math.tan(min(half_fov, math.radians(80.0)))

    cameras = []
    for v in verts:
        c2w = np.eye(4)
        c2w[:3, :3] = look_outward(v)
        c2w[:3, 3] = radius * v
        cameras.append(PosedCamera(
            model=model, width=resolution, height=resolution,
            fx=focal, fy=focal, cx=resolution / 2.0, cy=resolution / 2.0, c2w=c2w,
        ))

    logger.debug(f"리그 생성: 카메라 {len(cameras)}대 (반지름 {radius}, 반구={hemisphere})")
    return cameras


def topmost_camera(cameras: Sequence[PosedCamera]) -> int:
    return int(np.argmax([cam.center[2] for cam in cameras]))


# ---------------------------------------------------------------------------
# 해석적 장면
# ---------------------------------------------------------------------------

@dataclass
class SpherePrimitive:
    """상수 밀도 구 (texture > 0 이면 중심에서 멀수록 어두워지는 방사형 색)"""

    center: Tuple[float, float, float]
    radius: float
    sigma: float
    color: Tuple[float, float, float]
    texture: float = 0.0


@dataclass
class Environment:
    kind: str = "checker"          # checker | gradient
    colors: Tuple[Tuple[float, float, float], Tuple[float, float, float]] = (
        (0.85, 0.90, 0.95), (0.25, 0.45, 0.70))
    checks: Tuple[int, int] = (8, 16)

    def color(self, directions: torch.Tensor) -> torch.Tensor:
        """방향 (..., 3) → rgb (..., 3)"""
        d = directions / torch.linalg.norm(directions, dim=-1, keepdim=True)
        theta = torch.acos(torch.clamp(d[..., 2], -1.0, 1.0))
        phi = torch.atan2(d[..., 1], d[..., 0])
        c0 = torch.tensor(self.colors[0], dtype=d.dtype)
        c1 = torch.tensor(self.colors[1], dtype=d.dtype)

        if self.kind == "gradient":
            t = (theta / math.pi)[..., None]
        else:
            i = torch.floor(theta / math.pi * self.checks[0])
            j = torch.floor((phi + math.pi) / (2 * math.pi) * self.checks[1])
            t = torch.remainder(i + j, 2.0)[..., None]
        return c0 * (1.0 - t) + c1 * t


@dataclass
class AnalyticScene:
    name: str
    boundary_radius: float
    spheres: List[SpherePrimitive] = field(default_factory=list)
    environment: Environment = field(default_factory=Environment)
    haze_sigma: float = 0.0
    haze_color: Tuple[float, float, float] = (0.7, 0.75, 0.8)
    env_radius: Optional[float] = None

    def __post_init__(self):
        if self.env_radius is None:
            self.env_radius = ENV_RADIUS_FACTOR * self.boundary_radius
        if self.env_radius <= self.boundary_radius:
            raise GeometryError("환경 셸은 경계 구 밖에 있어야 함")
        for sph in self.spheres:
            dist = float(np.linalg.norm(sph.center))
            inside = dist + sph.radius < self.boundary_radius
            outside = dist - sph.radius > self.boundary_radius and dist + sph.radius < self.env_radius
            if not (inside or outside):
                raise GeometryError(f"구가 경계 r = t_B 에 걸쳐 있음: center={sph.center}, radius={sph.radius}")


def scene_sigma_color(scene: AnalyticScene, points: torch.Tensor, directions: torch.Tensor = None):
    """점 (..., 3) 의 해석적 (sigma, rgb)

    여러 요소가 겹치면 색은 밀도 가중 평균. 환경 셸 (r >= R_env) 은 불투명.
    """
    dtype = points.dtype
    r = torch.linalg.norm(points, dim=-1)
    sigma = torch.zeros_like(r)
    weighted = torch.zeros(points.shape, dtype=dtype)

    for sph in scene.spheres:
        offset = points - torch.tensor(sph.center, dtype=dtype)
        dist = torch.linalg.norm(offset, dim=-1)
        inside = (dist < sph.radius).to(dtype)
        shade = 1.0 - sph.texture * (dist / sph.radius).clamp(max=1.0)
        color = torch.tensor(sph.color, dtype=dtype) * shade[..., None]
        sigma = sigma + sph.sigma * inside
        weighted = weighted + (sph.sigma * inside)[..., None] * color

    if scene.haze_sigma > 0:
        haze = ((r > scene.boundary_radius) & (r < scene.env_radius)).to(dtype) * scene.haze_sigma
        sigma = sigma + haze
        weighted = weighted + haze[..., None] * torch.tensor(scene.haze_color, dtype=dtype)

    shell = r >= scene.env_radius
    shell_sigma = shell.to(dtype) * SHELL_SIGMA
    sigma = sigma + shell_sigma
    env = torch.where(shell[..., None], scene.environment.color(points), torch.zeros_like(points))
    weighted = weighted + shell_sigma[..., None] * env

    color = torch.where(sigma[..., None] > 0, weighted / sigma.clamp_min(torch.finfo(dtype).tiny)[..., None], torch.zeros_like(weighted))
    return sigma, color


def _sphere_hits(origins, directions, center, radius) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """광선과 구의 (진입, 진출, 적중 여부)"""
    oc = origins - torch.tensor(center, dtype=origins.dtype)
    b = (oc * directions).sum(-1)
    c = (oc * oc).sum(-1) - radius * radius
    disc = b * b - c
    hit = disc > 0
    root = torch.sqrt(disc.clamp_min(0.0))
    return -b - root, -b + root, hit


def reference_render(
    scene: AnalyticScene,
    rays: RayBundle,
    samples_per_unit: float = REFERENCE_SAMPLES_PER_UNIT,
    max_piece_samples: int = REFERENCE_MAX_PIECE_SAMPLES,
    chunk: int = 1024,
) -> torch.Tensor:
    """[t_near, R_env] 조밀 알파 합성 + 남은 투과율 * 환경색 (float64, (N, 3))

    구간 경계 (구 진입/진출, t_B, R_env) 사이를 조각별 중점 적분하므로
    상수 밀도 구간에서는 Beer-Lambert 와 정확히 일치한다.
    """
    rays = rays.to(torch.float64)
    outputs = []
    for start in range(0, len(rays), chunk):
        part = rays.index(slice(start, start + chunk))
        outputs.append(_reference_chunk(scene, part, samples_per_unit, max_piece_samples))
    return torch.cat(outputs, dim=0)


def _reference_chunk(scene, rays: RayBundle, samples_per_unit, max_piece_samples) -> torch.Tensor:
    o, d = rays.origins, rays.directions
    n_rays = len(rays)
    t_near = rays.t_near
    t_env = intersect_spheres(o, d, torch.full((n_rays,), scene.env_radius, dtype=torch.float64))
    t_bound = intersect_spheres(o, d, torch.full((n_rays,), scene.boundary_radius, dtype=torch.float64))

    breaks = [t_near, t_bound, t_env]
    for sph in scene.spheres:
        t0, t1, hit = _sphere_hits(o, d, sph.center, sph.radius)
        breaks.append(torch.where(hit, t0, t_near))
        breaks.append(torch.where(hit, t1, t_near))

    bps = torch.stack(breaks, dim=1)
    bps = torch.minimum(torch.maximum(bps, t_near[:, None]), t_env[:, None])
    bps, _ = torch.sort(bps, dim=1)

    lo, hi = bps[:, :-1], bps[:, 1:]
    longest = float((hi - lo).max()) if bps.numel() else 0.0
    n = int(min(max_piece_samples, max(1, math.ceil(longest * samples_per_unit))))

    u = (torch.arange(n, dtype=torch.float64) + 0.5) / n
    t = (lo[..., None] + (hi - lo)[..., None] * u).reshape(n_rays, -1)
    deltas = ((hi - lo) / n)[..., None].expand(-1, -1, n).reshape(n_rays, -1)

    points = o[:, None, :] + t[..., None] * d[:, None, :]
    sigma, color = scene_sigma_color(scene, points, d[:, None, :].expand_as(points))

    contribution, T_out, _ = quadrature_segment(sigma, color, deltas, torch.ones(n_rays, dtype=torch.float64))
    env = scene.environment.color(o + t_env[:, None] * d)
    return contribution + T_out[:, None] * env


class AnalyticField:
    """해석적 장면을 필드 인터페이스 (eval_foreground / eval_background) 로 노출"""

    def __init__(self, scene: AnalyticScene, frame: SceneFrame, dtype: torch.dtype = torch.float64):
        self.scene = scene
        self.frame = frame
        self.dtype = dtype

    @property
    def boundary_radius(self) -> float:
        return float(self.frame.boundary_radius)

    def eval_foreground(self, points, view_dirs):
        return scene_sigma_color(self.scene, points, view_dirs)

    def eval_background(self, coords, view_dirs):
        points = cartesian_from_spherical(coords, self.boundary_radius)
        return scene_sigma_color(self.scene, points, view_dirs)


# ---------------------------------------------------------------------------
# 프리셋
# ---------------------------------------------------------------------------

def build_preset(name: str, rig_radius: float = RIG_CONFIG["radius"],
                 boundary_multiplier: float = GEOMETRY_CONFIG["boundary_multiplier"]) -> AnalyticScene:
    boundary = boundary_multiplier * rig_radius

    if name == "goat-like":
        return AnalyticScene(
            name=name,
            boundary_radius=boundary,
            spheres=[SpherePrimitive((1.6, 0.4, 0.6), 0.7, 40.0, (0.62, 0.45, 0.30), texture=0.3)],
            environment=Environment("checker"),
        )
    if name == "two-object":
        return AnalyticScene(
            name=name,
            boundary_radius=boundary,
            spheres=[
                SpherePrimitive((1.8, -0.6, 0.5), 0.6, 40.0, (0.80, 0.20, 0.15)),
                SpherePrimitive((-1.2, 1.5, 1.0), 0.8, 40.0, (0.20, 0.70, 0.30), texture=0.25),
            ],
            environment=Environment("checker"),
        )
    if name == "haze":
        return AnalyticScene(
            name=name,
            boundary_radius=boundary,
            spheres=[SpherePrimitive((1.5, 1.0, 0.8), 0.6, 40.0, (0.90, 0.80, 0.20))],
            environment=Environment("gradient", colors=((0.95, 0.85, 0.60), (0.20, 0.30, 0.55))),
            haze_sigma=0.004,
        )
    raise ConfigError(f"알 수 없는 프리셋: {name!r} (가능: {', '.join(PRESETS)})")


PRESETS = ("goat-like", "two-object", "haze")


# ---------------------------------------------------------------------------
# 내보내기
# ---------------------------------------------------------------------------

def render_reference_image(scene: AnalyticScene, cam: PosedCamera,
                           samples_per_unit: float = REFERENCE_SAMPLES_PER_UNIT) -> np.ndarray:
    """카메라 한 대의 기준 이미지 (H, W, 3) 선형"""
    rig_radius = max(float(np.linalg.norm(cam.center)), 1e-6)
    frame = SceneFrame(np.zeros(3), rig_radius, scene.boundary_radius)
    rays = generate_rays(cam, frame, near=GEOMETRY_CONFIG["near"])
    colors = reference_render(scene, rays, samples_per_unit=samples_per_unit)
    return colors.clamp(0.0, 1.0).numpy().reshape(cam.height, cam.width, 3)


def export_dataset(
    scene: AnalyticScene,
    cameras: List[PosedCamera],
    out_dir: Path,
    samples_per_unit: float = REFERENCE_SAMPLES_PER_UNIT,
) -> Path:
    """리그 전체를 렌더링해 PNG + manifest.json 저장 (가장 위 카메라가 test)"""
    out_dir = Path(out_dir)
    test_index = topmost_camera(cameras)
    entries = []

    for i, cam in enumerate(cameras):
        image = render_reference_image(scene, cam, samples_per_unit)
        rel = f"images/cam_{i:03d}.png"
        save_png(image, out_dir / rel)
        entries.append(CameraEntry.from_camera(cam, rel, "test" if i == test_index else "train"))
        logger.debug(f"  [{i + 1}/{len(cameras)}] {rel}")

    manifest = DatasetManifest(
        rig_radius=None,
        boundary_multiplier=GEOMETRY_CONFIG["boundary_multiplier"],
        cameras=entries,
    )
    path = save_manifest(manifest, out_dir)
    logger.info(f"데이터셋 내보내기: {len(cameras)}대 ({scene.name}) → {path}")
    return path
