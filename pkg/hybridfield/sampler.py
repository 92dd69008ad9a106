"""
샘플러 모듈
- 전경: 깊이 균등 층화 샘플
- 배경: 역반경 s = t_B / r 균등 층화 샘플 → 구면 교점 깊이
- 광선별 난수 스트림 (seed, step, ray id) 으로 지터 재현
- coarse-to-fine 스케줄 (샘플 수, 격자 해상도)
"""

import bisect
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple
import sys

import numpy as np
import torch

sys.path.append(str(Path(__file__).parent.parent))
from config import SAMPLER_CONFIG

from .errors import ConfigError
from .geometry import RayBundle, intersect_spheres

logger = logging.getLogger(__name__)

STREAM_FOREGROUND = 0
STREAM_BACKGROUND = 1


@dataclass
class ForegroundSamples:
    depths: torch.Tensor   # (N, n) 오름차순
    deltas: torch.Tensor   # (N, n)


@dataclass
class BackgroundSamples:
    s: torch.Tensor        # (N, m) 내림차순 (t_B / r)
    radii: torch.Tensor    # (N, m) 오름차순
    depths: torch.Tensor   # (N, m) 광선 깊이
    deltas: torch.Tensor   # (N, m) 광선 깊이 단위 구간 길이


@dataclass
class SampleBatch:
    foreground: ForegroundSamples
    background: BackgroundSamples
    jittered: bool


@dataclass
class ScheduleConfig:
    n_fg_init: int = SAMPLER_CONFIG["n_fg_init"]
    n_fg_final: int = SAMPLER_CONFIG["n_fg_final"]
    m_bg_init: int = SAMPLER_CONFIG["m_bg_init"]
    m_bg_final: int = SAMPLER_CONFIG["m_bg_final"]
    res_fg_init: List[int] = field(default_factory=lambda: list(SAMPLER_CONFIG["res_fg_init"]))
    res_fg_final: List[int] = field(default_factory=lambda: list(SAMPLER_CONFIG["res_fg_final"]))
    res_bg_init: List[int] = field(default_factory=lambda: list(SAMPLER_CONFIG["res_bg_init"]))
    res_bg_final: List[int] = field(default_factory=lambda: list(SAMPLER_CONFIG["res_bg_final"]))
    milestones: List[int] = field(default_factory=lambda: list(SAMPLER_CONFIG["milestones"]))


@dataclass
class Schedule:
    n_fg: int
    m_bg: int
    res_fg: Tuple[int, int, int]
    res_bg: Tuple[int, int, int]
    level: int


# ---------------------------------------------------------------------------
# 광선별 난수
# ---------------------------------------------------------------------------

def ray_uniforms(seed: int, step: int, ray_ids: torch.Tensor, count: int, stream: int) -> torch.Tensor:
    """(seed, step, stream) 키의 Philox 카운터 스트림에서 ray id 별 [0, 1) 균등난수 (N, count)

    광선마다 카운터 상위 워드를 ray id 로 두므로 배치 구성과 무관하게 같은 값이 나옵니다.
    """
    key = np.random.SeedSequence([seed, step, stream]).generate_state(2, dtype=np.uint64)
    ids = ray_ids.cpu().numpy().astype(np.uint64).reshape(-1)

    u = np.empty((len(ids), count), dtype=np.float64)
    for row, ray_id in enumerate(ids):
        bitgen = np.random.Philox(key=key, counter=[0, 0, 0, int(ray_id)])
        u[row] = np.random.Generator(bitgen).random(count)
    return torch.from_numpy(u)


# ---------------------------------------------------------------------------
# 샘플링
# ---------------------------------------------------------------------------

def sample_foreground(rays: RayBundle, n: int, jitter: bool = False, seed: int = 0, step: int = 0) -> ForegroundSamples:
    """[t_near, t_boundary] 를 n 개 층으로 나누어 층마다 한 점"""
    if n < 1:
        raise ConfigError(f"전경 샘플 수는 1 이상이어야 함 (n={n})")

    dtype = rays.t_near.dtype
    frac = torch.arange(n + 1, dtype=dtype) / n
    span = rays.t_boundary - rays.t_near
    edges = rays.t_near[:, None] + span[:, None] * frac[None, :]
    edges[:, -1] = rays.t_boundary

    lower, upper = edges[:, :-1], edges[:, 1:]
    if jitter:
        u = ray_uniforms(seed, step, rays.ray_ids, n, STREAM_FOREGROUND).to(dtype)
    else:
        u = torch.full_like(lower, 0.5)

    return ForegroundSamples(depths=lower + (upper - lower) * u, deltas=upper - lower)


def sample_background(
    rays: RayBundle,
    m: int,
    boundary_radius: float,
    jitter: bool = False,
    seed: int = 0,
    step: int = 0,
) -> BackgroundSamples:
    """s = t_B / r 공간 (s_far, 1] 을 m 개 층으로 나누어 층마다 한 점"""
    if m < 1:
        raise ConfigError(f"배경 샘플 수는 1 이상이어야 함 (m={m})")

    dtype = rays.t_near.dtype
    unbounded = torch.isinf(rays.t_far)

    far_points = rays.origins + torch.where(unbounded, torch.zeros_like(rays.t_far), rays.t_far)[:, None] * rays.directions
    far_radii = torch.linalg.norm(far_points, dim=-1)
    s_far = torch.where(unbounded, torch.zeros_like(far_radii), boundary_radius / far_radii)

    # s 경계: 1 → s_far (내림차순)
    frac = torch.arange(m + 1, dtype=dtype) / m
    s_edges = 1.0 - (1.0 - s_far)[:, None] * frac[None, :]
    s_edges[:, -1] = s_far

    s_upper, s_lower = s_edges[:, :-1], s_edges[:, 1:]
    mids = 0.5 * (s_upper + s_lower)

    # 무한 far: 가장 안쪽 층의 하한을 층 폭의 절반으로 자름
    s_min = 0.5 * (s_upper[:, -1] - s_lower[:, -1])
    s_lower_eff = s_lower.clone()
    s_lower_eff[:, -1] = torch.where(unbounded, s_min, s_lower[:, -1])

    if jitter:
        u = ray_uniforms(seed, step, rays.ray_ids, m, STREAM_BACKGROUND).to(dtype)
        s = s_upper - (s_upper - s_lower_eff) * u
    else:
        s = mids

    radii = boundary_radius / s
    depths = intersect_spheres(rays.origins, rays.directions, radii)

    edge_s = torch.cat([s_upper[:, :1], s_lower_eff], dim=1)
    edge_depths = intersect_spheres(rays.origins, rays.directions, boundary_radius / edge_s)
    edge_depths[:, 0] = rays.t_boundary
    edge_depths[:, -1] = torch.where(unbounded, edge_depths[:, -1], rays.t_far)

    return BackgroundSamples(s=s, radii=radii, depths=depths, deltas=edge_depths[:, 1:] - edge_depths[:, :-1])


def sample_rays(
    rays: RayBundle,
    n_fg: int,
    m_bg: int,
    boundary_radius: float,
    jitter: bool = False,
    seed: int = 0,
    step: int = 0,
) -> SampleBatch:
    return SampleBatch(
        foreground=sample_foreground(rays, n_fg, jitter, seed, step),
        background=sample_background(rays, m_bg, boundary_radius, jitter, seed, step),
        jittered=jitter,
    )


# ---------------------------------------------------------------------------
# coarse-to-fine 스케줄
# ---------------------------------------------------------------------------

def validate_schedule(config: ScheduleConfig):
    milestones = list(config.milestones)
    if any(b <= a for a, b in zip(milestones, milestones[1:])) or any(m < 0 for m in milestones):
        raise ConfigError(f"milestones 는 오름차순 양수여야 함: {milestones}")

    pairs = [
        ("n_fg", [config.n_fg_init], [config.n_fg_final]),
        ("m_bg", [config.m_bg_init], [config.m_bg_final]),
        ("res_fg", config.res_fg_init, config.res_fg_final),
        ("res_bg", config.res_bg_init, config.res_bg_final),
    ]
    for name, init, final in pairs:
        if len(init) != len(final):
            raise ConfigError(f"{name} 초기/최종 차원 불일치")
        if any(a < 1 or b < a for a, b in zip(init, final)):
            raise ConfigError(f"{name} 는 최종값 >= 초기값 >= 1 이어야 함: {init} → {final}")


def _geometric(start: int, end: int, level: int, total: int) -> int:
    if total == 0 or level >= total:
        return int(end)
    return int(round(start * (end / start) ** (level / total)))


def schedule(step: int, config: ScheduleConfig) -> Schedule:
    """반복 횟수 → (n_fg, m_bg, 전경 해상도, 배경 해상도), 마일스톤마다 기하급수적으로 증가"""
    if step < 0:
        raise ConfigError(f"step 은 0 이상이어야 함 (step={step})")
    validate_schedule(config)

    total = len(config.milestones)
    level = bisect.bisect_right(list(config.milestones), step)

    return Schedule(
        n_fg=_geometric(config.n_fg_init, config.n_fg_final, level, total),
        m_bg=_geometric(config.m_bg_init, config.m_bg_final, level, total),
        res_fg=tuple(_geometric(a, b, level, total) for a, b in zip(config.res_fg_init, config.res_fg_final)),
        res_bg=tuple(_geometric(a, b, level, total) for a, b in zip(config.res_bg_init, config.res_bg_final)),
        level=level,
    )
