"""
렌더러 모듈
- 구간별 알파 합성 (quadrature)
- 전경 투과율 T(r)
- 전경 + 배경 합성 렌더링, 전경 깊이
- 카메라 전체 이미지 렌더링 (평가 모드: 지터 없음)
"""

import math
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple
import sys

import numpy as np
import torch

sys.path.append(str(Path(__file__).parent.parent))
from config import RENDER_CONFIG

from .field import HybridField
from .geometry import PosedCamera, RayBundle, SceneFrame, generate_rays, spherical_coords
from .sampler import ForegroundSamples, SampleBatch, sample_rays

logger = logging.getLogger(__name__)


@dataclass
class RenderOutput:
    """광선별 렌더링 결과"""

    color: torch.Tensor             # (N, 3)
    fg_color: torch.Tensor          # (N, 3) 전경 구간만의 기여
    fg_transmittance: torch.Tensor  # (N,)
    transmittance: torch.Tensor     # (N,) 마지막 샘플 이후 잔여 투과율
    fg_depth: torch.Tensor          # (N,) 전경 가중치 합이 작으면 -1
    fg_weight_sum: torch.Tensor     # (N,)
    bg_weight_sum: torch.Tensor     # (N,)
    fg_weights: torch.Tensor        # (N, n)
    bg_weights: torch.Tensor        # (N, m)

    @property
    def weight_sums(self) -> Tuple[torch.Tensor, torch.Tensor]:
        return self.fg_weight_sum, self.bg_weight_sum


@dataclass
class RenderedImage:
    image: np.ndarray       # (H, W, 3) 선형 [0, 1]
    fg_image: np.ndarray    # (H, W, 3) 전경 기여만
    fg_depth: np.ndarray    # (H, W) 센티널 -1
    fg_opacity: np.ndarray  # (H, W) 1 - T


def quadrature_segment(
    sigmas: torch.Tensor,
    colors: torch.Tensor,
    deltas: torch.Tensor,
    T_in: torch.Tensor,
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """alpha_i = 1 - exp(-sigma_i delta_i), w_i = T alpha_i, T <- T (1 - alpha_i)"""
    tau = sigmas * deltas
    alpha = 1.0 - torch.exp(-tau)

    accum = torch.cumsum(tau, dim=-1)
    exclusive = torch.cat([torch.zeros_like(accum[..., :1]), accum[..., :-1]], dim=-1)
    weights = T_in[..., None] * torch.exp(-exclusive) * alpha

    contribution = (weights[..., None] * colors).sum(dim=-2)
    T_out = T_in * torch.exp(-accum[..., -1])
    return contribution, T_out, weights


def _render_foreground(field: HybridField, rays: RayBundle, fg: ForegroundSamples):
    origins, dirs = rays.origins, rays.directions
    points = origins[:, None, :] + fg.depths[..., None] * dirs[:, None, :]
    view = dirs[:, None, :].expand_as(points)

    sigmas, colors = field.eval_foreground(points, view)
    T_in = torch.ones_like(rays.t_near)
    return quadrature_segment(sigmas, colors, fg.deltas, T_in)


def fg_transmittance(field: HybridField, rays: RayBundle, fg_samples: ForegroundSamples) -> torch.Tensor:
    """전경 구간 투과율 T = prod(1 - alpha_i)"""
    _, T_out, _ = _render_foreground(field, rays, fg_samples)
    return T_out


def composite_render(field: HybridField, rays: RayBundle, samples: SampleBatch) -> RenderOutput:
    """전경 [t_near, t_B] 를 T=1 에서, 배경 [t_B, t_far] 를 전경 T_out 에서 시작해 합성"""
    fg, bg = samples.foreground, samples.background
    c_fg, T_fg, w_fg = _render_foreground(field, rays, fg)

    origins, dirs = rays.origins, rays.directions
    bg_points = origins[:, None, :] + bg.depths[..., None] * dirs[:, None, :]
    coords = spherical_coords(bg_points, field.boundary_radius, radii=bg.radii)
    view = dirs[:, None, :].expand_as(bg_points)

    sig_bg, col_bg = field.eval_background(coords, view)
    c_bg, T_bg, w_bg = quadrature_segment(sig_bg, col_bg, bg.deltas, T_fg)

    fg_sum = w_fg.sum(dim=-1)
    depth = (w_fg * fg.depths).sum(dim=-1) / fg_sum.clamp_min(1e-12)
    fg_depth = torch.where(
        fg_sum >= RENDER_CONFIG["depth_min_weight"],
        depth,
        torch.full_like(depth, RENDER_CONFIG["depth_sentinel"]),
    )

    return RenderOutput(
        color=c_fg + c_bg,
        fg_color=c_fg,
        fg_transmittance=T_fg,
        transmittance=T_bg,
        fg_depth=fg_depth,
        fg_weight_sum=fg_sum,
        bg_weight_sum=w_bg.sum(dim=-1),
        fg_weights=w_fg,
        bg_weights=w_bg,
    )


def render_rays(
    field: HybridField,
    rays: RayBundle,
    n_fg: int,
    m_bg: int,
    jitter: bool = False,
    seed: int = 0,
    step: int = 0,
    chunk: Optional[int] = None,
) -> RenderOutput:
    """광선 배치를 청크 단위로 렌더링 (그래디언트 추적 없음)"""
    chunk = chunk or RENDER_CONFIG["chunk_rays"]
    rays = rays.to(field.dtype)
    outputs = []

    with torch.no_grad():
        for start in range(0, len(rays), chunk):
            part = rays.index(slice(start, start + chunk))
            samples = sample_rays(part, n_fg, m_bg, field.boundary_radius, jitter, seed, step)
            outputs.append(composite_render(field, part, samples))

    return RenderOutput(**{
        name: torch.cat([getattr(o, name) for o in outputs], dim=0)
        for name in RenderOutput.__dataclass_fields__
    })


def render_image(
    field: HybridField,
    cam: PosedCamera,
    n_fg: int,
    m_bg: int,
    frame: Optional[SceneFrame] = None,
    near: Optional[float] = None,
    far: float = math.inf,
    chunk: Optional[int] = None,
) -> RenderedImage:
    """평가 모드 이미지 렌더링 (지터 없음, 결정적)"""
    frame = frame or field.frame
    rays = generate_rays(cam, frame, near=near, far=far, dtype=field.dtype)
    out = render_rays(field, rays, n_fg, m_bg, jitter=False, chunk=chunk)

    shape = (cam.height, cam.width)
    image = out.color.clamp(0.0, 1.0).double().numpy().reshape(*shape, 3)
    fg_image = out.fg_color.clamp(0.0, 1.0).double().numpy().reshape(*shape, 3)
    depth = out.fg_depth.double().numpy().reshape(shape)
    opacity = (1.0 - out.fg_transmittance).double().numpy().reshape(shape)

    logger.debug(f"렌더링 완료: {cam.width}x{cam.height}, n_fg={n_fg}, m_bg={m_bg}")
    return RenderedImage(image=image, fg_image=fg_image, fg_depth=depth, fg_opacity=opacity)
