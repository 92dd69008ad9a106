"""
하이브리드 필드 모듈
- 전경: 유클리드 VM 분해 (XY-Z, XZ-Y, YZ-X 행렬/벡터 쌍)
- 배경: 구면 VM 분해 ((theta, phi) 행렬 x s 벡터)
- 밀도는 softplus(분해 특징 + 바이어스), 색상은 MLP 디코더 (특징 ++ 시선 인코딩)
"""

import math
import logging
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import List, Sequence, Tuple
import sys

import torch
import torch.nn as nn
import torch.nn.functional as F

sys.path.append(str(Path(__file__).parent.parent))
from config import FIELD_CONFIG, SAMPLER_CONFIG

from .errors import ConfigError
from .geometry import SceneFrame

logger = logging.getLogger(__name__)


class FactorLayout(str, Enum):
    EUCLIDEAN_VM = "euclidean_vm"
    SPHERICAL_VM = "spherical_vm"


class FactorGroup(str, Enum):
    DENSITY = "density"
    APPEARANCE = "appearance"


# ((행렬 축 a, 행렬 축 b), 벡터 축 c)
PAIR_AXES = {
    FactorLayout.EUCLIDEAN_VM: (((0, 1), 2), ((0, 2), 1), ((1, 2), 0)),
    FactorLayout.SPHERICAL_VM: (((0, 1), 2),),
}

DTYPES = {"float32": torch.float32, "float64": torch.float64}


def resolve_dtype(name) -> torch.dtype:
    if isinstance(name, torch.dtype):
        return name
    if name not in DTYPES:
        raise ConfigError(f"지원하지 않는 dtype: {name}")
    return DTYPES[name]


def volume_domain(layout: FactorLayout, boundary_radius: float) -> Tuple[List[float], List[float]]:
    """격자가 덮는 좌표 범위 (하한, 상한)"""
    if FactorLayout(layout) == FactorLayout.EUCLIDEAN_VM:
        r = float(boundary_radius)
        return [-r, -r, -r], [r, r, r]
    return [0.0, -math.pi, 0.0], [math.pi, math.pi, 1.0]


class FactoredVolume(nn.Module):
    """행렬-벡터 분해 특징 볼륨"""

    def __init__(
        self,
        layout: FactorLayout,
        components: int,
        resolutions: Sequence[int],
        domain_lo: Sequence[float],
        domain_hi: Sequence[float],
        dtype: torch.dtype = torch.float32,
    ):
        super().__init__()
        self.layout = FactorLayout(layout)
        self.components = int(components)
        self.resolutions = tuple(int(r) for r in resolutions)

        if self.components < 1:
            raise ConfigError(f"성분 수 K 는 1 이상이어야 함 (K={components})")
        if len(self.resolutions) != 3 or min(self.resolutions) < 2:
            raise ConfigError(f"격자 해상도는 축마다 2 이상이어야 함: {self.resolutions}")

        self.register_buffer("domain_lo", torch.tensor(domain_lo, dtype=dtype))
        self.register_buffer("domain_hi", torch.tensor(domain_hi, dtype=dtype))

        self.density_planes = nn.ParameterList()
        self.density_lines = nn.ParameterList()
        self.app_planes = nn.ParameterList()
        self.app_lines = nn.ParameterList()

        res = self.resolutions
        for (a, b), c in self.pairs:
            for planes, lines in ((self.density_planes, self.density_lines), (self.app_planes, self.app_lines)):
                planes.append(nn.Parameter(torch.zeros(1, self.components, res[a], res[b], dtype=dtype)))
                lines.append(nn.Parameter(torch.zeros(1, self.components, res[c], 1, dtype=dtype)))

    @property
    def pairs(self):
        return PAIR_AXES[self.layout]

    @property
    def app_dim(self) -> int:
        """쿼리당 외형 특징 채널 수 (디코더 입력 폭)"""
        return len(self.pairs) * self.components

    def reset_parameters(self, std: float, generator: torch.Generator):
        with torch.no_grad():
            for param in self.parameters():
                param.copy_(torch.randn(param.shape, generator=generator, dtype=param.dtype) * std)

    def normalize(self, coords: torch.Tensor) -> torch.Tensor:
        """좌표 → [-1, 1] (범위 밖은 가장자리로 고정)"""
        scaled = (coords - self.domain_lo) / (self.domain_hi - self.domain_lo) * 2.0 - 1.0
        return torch.clamp(scaled, -1.0, 1.0)

    def _products(self, planes: nn.ParameterList, lines: nn.ParameterList, coords: torch.Tensor) -> torch.Tensor:
        """(N, 쌍 개수, K) 행렬값 * 벡터값"""
        x = self.normalize(coords.reshape(-1, 3))
        n = x.shape[0]
        out = []

        for i, ((a, b), c) in enumerate(self.pairs):
            # grid_sample: grid[..., 0] 는 W(b) 축, grid[..., 1] 은 H(a) 축
            plane_grid = torch.stack([x[:, b], x[:, a]], dim=-1).view(1, n, 1, 2)
            line_grid = torch.stack([torch.zeros_like(x[:, c]), x[:, c]], dim=-1).view(1, n, 1, 2)

            plane_feat = F.grid_sample(
                planes[i], plane_grid, mode="bilinear", padding_mode="border", align_corners=True
            ).view(self.components, n)
            line_feat = F.grid_sample(
                lines[i], line_grid, mode="bilinear", padding_mode="border", align_corners=True
            ).view(self.components, n)

            out.append((plane_feat * line_feat).t())

        return torch.stack(out, dim=1)

    def density_feature(self, coords: torch.Tensor) -> torch.Tensor:
        products = self._products(self.density_planes, self.density_lines, coords)
        return products.sum(dim=(1, 2)).view(coords.shape[:-1])

    def appearance_feature(self, coords: torch.Tensor) -> torch.Tensor:
        products = self._products(self.app_planes, self.app_lines, coords)
        return products.reshape(*coords.shape[:-1], self.app_dim)

    def interpolate(self, coords: torch.Tensor, group: FactorGroup) -> torch.Tensor:
        if FactorGroup(group) == FactorGroup.DENSITY:
            return self.density_feature(coords)
        return self.appearance_feature(coords)


def resample_axis(tensor: torch.Tensor, dim: int, new_size: int) -> torch.Tensor:
    """align_corners 선형 재샘플링 (노드가 겹치는 위치는 값을 정확히 보존)"""
    old_size = tensor.shape[dim]
    if new_size == old_size:
        return tensor.clone()

    dst = torch.arange(new_size, dtype=torch.int64)
    numer = dst * (old_size - 1)
    i0 = numer // (new_size - 1)
    frac = (numer % (new_size - 1)).to(tensor.dtype) / (new_size - 1)
    i1 = torch.clamp(i0 + 1, max=old_size - 1)

    a = tensor.index_select(dim, i0)
    b = tensor.index_select(dim, i1)
    shape = [1] * tensor.dim()
    shape[dim] = new_size
    return a + (b - a) * frac.view(shape)


def upsample_factors(vol: FactoredVolume, new_resolutions: Sequence[int]) -> FactoredVolume:
    """벡터는 선형, 행렬은 쌍선형으로 새 해상도에 재샘플링"""
    new_resolutions = tuple(int(r) for r in new_resolutions)
    if len(new_resolutions) != 3:
        raise ConfigError(f"해상도는 3축이어야 함: {new_resolutions}")
    if any(new < old for new, old in zip(new_resolutions, vol.resolutions)):
        raise ConfigError(f"다운샘플링 불가: {vol.resolutions} → {new_resolutions}")

    new_vol = FactoredVolume(
        vol.layout,
        vol.components,
        new_resolutions,
        vol.domain_lo.tolist(),
        vol.domain_hi.tolist(),
        dtype=vol.domain_lo.dtype,
    )

    with torch.no_grad():
        for i, ((a, b), c) in enumerate(vol.pairs):
            for src_planes, src_lines, dst_planes, dst_lines in (
                (vol.density_planes, vol.density_lines, new_vol.density_planes, new_vol.density_lines),
                (vol.app_planes, vol.app_lines, new_vol.app_planes, new_vol.app_lines),
            ):
                plane = resample_axis(src_planes[i].detach(), 2, new_resolutions[a])
                plane = resample_axis(plane, 3, new_resolutions[b])
                dst_planes[i].copy_(plane)
                dst_lines[i].copy_(resample_axis(src_lines[i].detach(), 2, new_resolutions[c]))

    return new_vol


def encode_directions(directions: torch.Tensor, octaves: int) -> torch.Tensor:
    """시선 방향 사인 인코딩: [d, sin(2^k pi d), cos(2^k pi d)]"""
    parts = [directions]
    for k in range(octaves):
        freq = (2.0 ** k) * math.pi
        parts.append(torch.sin(freq * directions))
        parts.append(torch.cos(freq * directions))
    return torch.cat(parts, dim=-1)


class Decoder(nn.Module):
    """외형 특징 + 시선 → RGB (0, 1)"""

    def __init__(self, feature_dim: int, width: int = 64, depth: int = 2, view_octaves: int = 4,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        if depth < 1 or width < 1:
            raise ConfigError(f"디코더 크기 오류: depth={depth}, width={width}")

        self.feature_dim = feature_dim
        self.view_octaves = view_octaves
        in_dim = feature_dim + 3 + 6 * view_octaves

        layers = [nn.Linear(in_dim, width, dtype=dtype), nn.ReLU()]
        for _ in range(depth - 1):
            layers += [nn.Linear(width, width, dtype=dtype), nn.ReLU()]
        layers.append(nn.Linear(width, 3, dtype=dtype))
        self.net = nn.Sequential(*layers)

    def reset_parameters(self, generator: torch.Generator):
        """fan-in 스케일 균등분포 초기화"""
        with torch.no_grad():
            for layer in self.net:
                if isinstance(layer, nn.Linear):
                    bound = 1.0 / math.sqrt(layer.in_features)
                    layer.weight.uniform_(-bound, bound, generator=generator)
                    layer.bias.uniform_(-bound, bound, generator=generator)

    def forward(self, features: torch.Tensor, view_dirs: torch.Tensor) -> torch.Tensor:
        x = torch.cat([features, encode_directions(view_dirs, self.view_octaves)], dim=-1)
        return torch.sigmoid(self.net(x))


@dataclass
class FieldConfig:
    """필드 구성 (해상도, K, 디코더 크기)"""

    res_fg: Tuple[int, int, int] = tuple(SAMPLER_CONFIG["res_fg_init"])
    res_bg: Tuple[int, int, int] = tuple(SAMPLER_CONFIG["res_bg_init"])
    components: int = FIELD_CONFIG["components"]
    decoder_width: int = FIELD_CONFIG["decoder_width"]
    decoder_depth: int = FIELD_CONFIG["decoder_depth"]
    view_octaves: int = FIELD_CONFIG["view_octaves"]
    density_bias_init: float = FIELD_CONFIG["density_bias_init"]
    init_std: float = FIELD_CONFIG["init_std"]
    dtype: str = FIELD_CONFIG["dtype"]


class HybridField(nn.Module):
    """전경/배경 두 개의 분해 필드와 각자의 디코더"""

    def __init__(self, frame: SceneFrame, config: FieldConfig):
        super().__init__()
        dtype = resolve_dtype(config.dtype)
        self.frame = frame
        self.config = replace(config)
        self.density_bias_init = float(config.density_bias_init)

        fg_lo, fg_hi = volume_domain(FactorLayout.EUCLIDEAN_VM, frame.boundary_radius)
        bg_lo, bg_hi = volume_domain(FactorLayout.SPHERICAL_VM, frame.boundary_radius)

        self.foreground = FactoredVolume(FactorLayout.EUCLIDEAN_VM, config.components, config.res_fg, fg_lo, fg_hi, dtype)
        self.background = FactoredVolume(FactorLayout.SPHERICAL_VM, config.components, config.res_bg, bg_lo, bg_hi, dtype)

        self.fg_decoder = Decoder(self.foreground.app_dim, config.decoder_width, config.decoder_depth,
                                  config.view_octaves, dtype)
        self.bg_decoder = Decoder(self.background.app_dim, config.decoder_width, config.decoder_depth,
                                  config.view_octaves, dtype)

    @property
    def dtype(self) -> torch.dtype:
        return self.foreground.domain_lo.dtype

    @property
    def boundary_radius(self) -> float:
        return float(self.frame.boundary_radius)

    def eval_foreground(self, points: torch.Tensor, view_dirs: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """전경 점 (..., 3) → (sigma, rgb)"""
        sigma = F.softplus(self.foreground.density_feature(points) + self.density_bias_init)
        rgb = self.fg_decoder(self.foreground.appearance_feature(points), view_dirs)
        return sigma, rgb

    def eval_background(self, coords: torch.Tensor, view_dirs: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """배경 좌표 (theta, phi, s) → (sigma, rgb)"""
        sigma = F.softplus(self.background.density_feature(coords) + self.density_bias_init)
        rgb = self.bg_decoder(self.background.appearance_feature(coords), view_dirs)
        return sigma, rgb

    def upsample(self, res_fg: Sequence[int], res_bg: Sequence[int]) -> bool:
        """두 볼륨을 새 해상도로 교체 (변경되면 True)"""
        changed = False
        if tuple(res_fg) != self.foreground.resolutions:
            self.foreground = upsample_factors(self.foreground, res_fg)
            changed = True
        if tuple(res_bg) != self.background.resolutions:
            self.background = upsample_factors(self.background, res_bg)
            changed = True
        if changed:
            self.config.res_fg = tuple(res_fg)
            self.config.res_bg = tuple(res_bg)
            logger.info(f"격자 업샘플링: 전경 {tuple(res_fg)}, 배경 {tuple(res_bg)}")
        return changed

    def grid_parameters(self) -> List[nn.Parameter]:
        return list(self.foreground.parameters()) + list(self.background.parameters())

    def decoder_parameters(self) -> List[nn.Parameter]:
        return list(self.fg_decoder.parameters()) + list(self.bg_decoder.parameters())


def init_field(config: FieldConfig, frame: SceneFrame, seed: int = 0) -> HybridField:
    """시드 고정 초기화: 격자 ~ N(0, init_std / sqrt(K)), 디코더 fan-in 균등분포"""
    if config.components < 1:
        raise ConfigError(f"성분 수 K 는 1 이상이어야 함 (K={config.components})")

    hybrid = HybridField(frame, config)
    generator = torch.Generator().manual_seed(int(seed))
    std = config.init_std / math.sqrt(config.components)

    hybrid.foreground.reset_parameters(std, generator)
    hybrid.background.reset_parameters(std, generator)
    hybrid.fg_decoder.reset_parameters(generator)
    hybrid.bg_decoder.reset_parameters(generator)

    n_params = sum(p.numel() for p in hybrid.parameters())
    logger.debug(f"필드 초기화: 파라미터 {n_params:,}개, K={config.components}, t_B={frame.boundary_radius:.3f}")
    return hybrid
