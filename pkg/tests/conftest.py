"""
공용 fixture
- 저장소 루트를 sys.path 에 추가 (run_pipeline.py 와 같은 방식)
- HYBRIDFIELD_SLOW=1 일 때만 slow 테스트 실행
"""

import os
import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent.parent))

from hybridfield.field import FieldConfig, init_field
from hybridfield.geometry import RayBundle, SceneFrame, intersect_spheres


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 종단 간 학습 (HYBRIDFIELD_SLOW=1 필요)")


def pytest_collection_modifyitems(config, items):
    if os.getenv("HYBRIDFIELD_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="HYBRIDFIELD_SLOW=1 일 때만 실행")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def frame() -> SceneFrame:
    return SceneFrame(rig_center=np.zeros(3), rig_radius=0.5, boundary_radius=5.0)


@pytest.fixture
def tiny_config() -> FieldConfig:
    return FieldConfig(
        res_fg=(4, 4, 4),
        res_bg=(4, 4, 4),
        components=2,
        decoder_width=8,
        decoder_depth=1,
        view_octaves=1,
        density_bias_init=0.0,
        init_std=0.5,
        dtype="float64",
    )


@pytest.fixture
def tiny_field(tiny_config, frame):
    return init_field(tiny_config, frame, seed=0)


def random_rays(n: int, boundary_radius: float, seed: int = 0, origin_scale: float = 0.3,
                far_radius: float = None) -> RayBundle:
    """경계 구 안쪽 원점에서 출발하는 임의 광선 (float64)"""
    gen = torch.Generator().manual_seed(seed)
    origins = (torch.rand(n, 3, generator=gen, dtype=torch.float64) * 2 - 1) * origin_scale
    directions = torch.randn(n, 3, generator=gen, dtype=torch.float64)
    directions = directions / torch.linalg.norm(directions, dim=-1, keepdim=True)

    t_boundary = intersect_spheres(origins, directions, torch.full((n,), boundary_radius, dtype=torch.float64))
    if far_radius is None:
        t_far = torch.full((n,), float("inf"), dtype=torch.float64)
    else:
        t_far = intersect_spheres(origins, directions, torch.full((n,), far_radius, dtype=torch.float64))

    return RayBundle(
        origins=origins,
        directions=directions,
        t_near=torch.full((n,), 0.05, dtype=torch.float64),
        t_boundary=t_boundary,
        t_far=t_far,
        ray_ids=torch.arange(n, dtype=torch.int64),
    )
