"""
평가 지표
- PSNR (선형 [0, 1], 동일 이미지는 99 dB 상한)
- SSIM (11x11 가우시안 창, sigma 1.5, k1 0.01, k2 0.03, 동적 범위 1)
- 전경 투과율 이진 엔트로피
"""

import math
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List
import sys

import numpy as np
import torch
import torch.nn.functional as F

sys.path.append(str(Path(__file__).parent.parent))
from config import RENDER_CONFIG

from .errors import DataError

logger = logging.getLogger(__name__)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
ENTROPY_EPS = 1e-6


def _check_pair(img_a: np.ndarray, img_b: np.ndarray):
    if img_a.shape != img_b.shape:
        raise DataError(f"이미지 크기 불일치: {img_a.shape} vs {img_b.shape}")


def psnr(img_a: np.ndarray, img_b: np.ndarray) -> float:
    """10 log10(1 / MSE)"""
    img_a = np.asarray(img_a, dtype=np.float64)
    img_b = np.asarray(img_b, dtype=np.float64)
    _check_pair(img_a, img_b)

    mse = float(np.mean((img_a - img_b) ** 2))
    cap = RENDER_CONFIG["psnr_cap"]
    if mse == 0:
        return cap
    return min(cap, 10.0 * math.log10(1.0 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> torch.Tensor:
    coords = torch.arange(size, dtype=torch.float64) - (size - 1) / 2.0
    g = torch.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim(img_a: np.ndarray, img_b: np.ndarray) -> float:
    """창 단위 SSIM, 채널과 창에 대한 평균 (창은 이미지 안쪽만, 패딩 없음)"""
    img_a = np.asarray(img_a, dtype=np.float64)
    img_b = np.asarray(img_b, dtype=np.float64)
    _check_pair(img_a, img_b)
    if img_a.ndim == 2:
        img_a, img_b = img_a[..., None], img_b[..., None]

    height, width, channels = img_a.shape
    # 작은 이미지는 창을 줄임 (홀수 유지)
    size = min(SSIM_WINDOW, height, width)
    size = size if size % 2 == 1 else size - 1
    window = gaussian_window(size).expand(channels, 1, size, size)

    a = torch.from_numpy(np.ascontiguousarray(img_a.transpose(2, 0, 1)))[None]
    b = torch.from_numpy(np.ascontiguousarray(img_b.transpose(2, 0, 1)))[None]

    def blur(x):
        return F.conv2d(x, window, groups=channels)

    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a ** 2
    var_b = blur(b * b) - mu_b ** 2
    cov = blur(a * b) - mu_a * mu_b

    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    ssim_map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return float(ssim_map.mean())


def binary_entropy(T: torch.Tensor, eps: float = ENTROPY_EPS) -> torch.Tensor:
    """-T log T - (1 - T) log(1 - T), T 와 1 - T 를 각각 [eps, 1 - eps] 로 고정"""
    a = torch.clamp(T, eps, 1.0 - eps)
    b = torch.clamp(1.0 - T, eps, 1.0 - eps)
    return -a * torch.log(a) - b * torch.log(b)


@dataclass
class EvalReport:
    """평가 리포트 (이미지별 값과 평균)"""

    per_image: List[Dict] = field(default_factory=list)

    def add(self, name: str, predicted: np.ndarray, target: np.ndarray, fg_transmittance: np.ndarray = None):
        entry = {"image": name, "psnr": psnr(predicted, target), "ssim": ssim(predicted, target)}
        if fg_transmittance is not None:
            T = torch.as_tensor(np.asarray(fg_transmittance, dtype=np.float64))
            entry["fg_entropy"] = float(binary_entropy(T).mean())
        self.per_image.append(entry)
        logger.info(f"  {name}: PSNR {entry['psnr']:.2f} dB, SSIM {entry['ssim']:.4f}")
        return entry

    def _mean(self, key: str):
        values = [entry[key] for entry in self.per_image if key in entry]
        return float(np.mean(values)) if values else None

    @property
    def psnr(self) -> float:
        return self._mean("psnr")

    @property
    def ssim(self) -> float:
        return self._mean("ssim")

    def to_dict(self) -> Dict:
        report = {
            "per_image": self.per_image,
            "mean_psnr": self.psnr,
            "mean_ssim": self.ssim,
            "image_count": len(self.per_image),
        }
        entropy = self._mean("fg_entropy")
        if entropy is not None:
            report["mean_fg_entropy"] = entropy
        return report
