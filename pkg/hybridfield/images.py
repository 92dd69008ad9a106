"""
이미지 입출력
- 선형 [0, 1] ↔ 8비트 sRGB PNG (Pillow)
- 전경 깊이 FDEPTH1 바이너리 (매직 + 너비 + 높이 + float32)
- 깊이 컬러맵 (matplotlib, 센티널은 예약 색상)
"""

import logging
import struct
from pathlib import Path
import sys

import numpy as np
from matplotlib import colormaps
from PIL import Image

sys.path.append(str(Path(__file__).parent.parent))
from config import DEPTH_MAGIC, RENDER_CONFIG

from .errors import DataError

logger = logging.getLogger(__name__)

_DEPTH_HEADER = struct.Struct("<7sII")


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)


def srgb_to_linear(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.04045, x / 12.92, np.power((x + 0.055) / 1.055, 2.4))


def save_png(image: np.ndarray, path: Path) -> Path:
    """선형 RGB (H, W, 3) → sRGB 8비트 PNG"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    encoded = np.round(linear_to_srgb(np.asarray(image, dtype=np.float64)) * 255.0).astype(np.uint8)
    Image.fromarray(encoded).save(path, format="PNG")
    return path


def save_rgb8(image: np.ndarray, path: Path) -> Path:
    """이미 8비트인 RGB 배열 저장 (깊이 컬러맵 등)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path, format="PNG")
    return path


def load_png(path: Path) -> np.ndarray:
    """sRGB PNG → 선형 RGB float64 (H, W, 3)"""
    path = Path(path)
    if not path.exists():
        raise DataError(f"이미지 파일 없음: {path}")
    with Image.open(path) as img:
        data = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return srgb_to_linear(data)


def save_depth(depth: np.ndarray, path: Path) -> Path:
    """전경 깊이 (H, W) → FDEPTH1 바이너리"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    depth = np.ascontiguousarray(depth, dtype="<f4")
    height, width = depth.shape
    with open(path, "wb") as f:
        f.write(_DEPTH_HEADER.pack(DEPTH_MAGIC, width, height))
        f.write(depth.tobytes())
    return path


def load_depth(path: Path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _DEPTH_HEADER.size:
        raise DataError(f"깊이 파일이 너무 짧음: {path}")

    magic, width, height = _DEPTH_HEADER.unpack_from(raw)
    if magic != DEPTH_MAGIC:
        raise DataError(f"깊이 파일 매직 불일치: {magic!r}")

    data = np.frombuffer(raw, dtype="<f4", offset=_DEPTH_HEADER.size)
    if data.size != width * height:
        raise DataError(f"깊이 데이터 크기 불일치: {data.size} != {width}x{height}")
    return data.reshape(height, width).astype(np.float64)


def colorize_depth(depth: np.ndarray, sentinel: float = None) -> np.ndarray:
    """깊이 → 8비트 컬러 (센티널 픽셀은 예약 색상)"""
    sentinel = RENDER_CONFIG["depth_sentinel"] if sentinel is None else sentinel
    depth = np.asarray(depth, dtype=np.float64)
    valid = depth != sentinel
    out = np.empty(depth.shape + (3,), dtype=np.uint8)
    out[...] = np.asarray(RENDER_CONFIG["sentinel_color"], dtype=np.uint8)

    if np.any(valid):
        lo, hi = depth[valid].min(), depth[valid].max()
        t = (depth[valid] - lo) / (hi - lo) if hi > lo else np.zeros(int(valid.sum()))
        rgb = colormaps[RENDER_CONFIG["depth_colormap"]](t)[:, :3]
        out[valid] = np.round(rgb * 255.0).astype(np.uint8)

    return out
