"""
하이브리드 래디언스 필드 설정
- 경로, 기본 하이퍼파라미터, 로깅 설정
"""

import os
from pathlib import Path

# 프로젝트 경로
BASE_DIR = Path(__file__).parent
RUNS_DIR = BASE_DIR / "runs"

# 환경변수 설정
NUM_THREADS = int(os.getenv("HYBRIDFIELD_THREADS", "0"))  # 0 = torch 기본값

# 파일 포맷
CHECKPOINT_MAGIC = "HYBRIDFIELD-v1"
DEPTH_MAGIC = b"FDEPTH1"
MANIFEST_VERSION = 1

# 장면 정규화 / 광선 설정
GEOMETRY_CONFIG = {
    "near": 0.05,                 # 광선 시작 깊이 (월드 단위)
    "boundary_multiplier": 10.0,  # t_B = 배수 * r_rig
    "orthonormal_tol": 1e-6,
    "manifest_orthonormal_tol": 1e-4,
}

# 필드 (분해 격자 + 디코더)
FIELD_CONFIG = {
    "components": 8,              # K
    "decoder_width": 64,
    "decoder_depth": 2,
    "view_octaves": 4,
    "density_bias_init": -10.0,
    "init_std": 0.1,              # 실제 표준편차 = init_std / sqrt(K)
    "dtype": "float32",
}

# 샘플링 / coarse-to-fine 스케줄
SAMPLER_CONFIG = {
    "n_fg_init": 64,
    "n_fg_final": 128,
    "m_bg_init": 64,
    "m_bg_final": 128,
    "res_fg_init": [32, 32, 32],
    "res_fg_final": [128, 128, 128],
    "res_bg_init": [16, 32, 16],     # (theta, phi, s)
    "res_bg_final": [64, 128, 64],
    "milestones": [2000, 3000, 4000, 5500, 7000],
}

# 학습 설정
TRAIN_CONFIG = {
    "batch_rays": 4096,
    "iterations": 20000,
    "lr_grid": 0.02,
    "lr_decoder": 1e-3,
    "lambda_reg": 0.01,
    "seed": 0,
    "deterministic": True,
    "log_every": 100,
    "eval_every": 1000,
    "checkpoint_every": 1000,
}

# 합성 리그 설정
RIG_CONFIG = {
    "n_subdiv": 1,
    "frequency": 3,               # v3 측지 분할
    "radius": 0.5,                # 1m 지름 반구
    "hemisphere": True,
    "fov_degrees": 180.0,
    "resolution": 64,
    "weld_tol": 1e-9,
}

# 렌더링 설정
RENDER_CONFIG = {
    "chunk_rays": 4096,
    "depth_sentinel": -1.0,
    "depth_min_weight": 1e-4,
    "sentinel_color": [255, 0, 255],
    "depth_colormap": "turbo",    # matplotlib 컬러맵 이름 (가까움 → 멂)
    "psnr_cap": 99.0,
}

# 로깅 설정
LOG_CONFIG = {
    "level": os.getenv("HYBRIDFIELD_LOG_LEVEL", "INFO"),
    "format": "%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    "date_format": "%Y-%m-%d %H:%M:%S"
}
