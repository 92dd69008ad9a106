"""
전경/배경 하이브리드 래디언스 필드 패키지
"""

from .field import HybridField, FieldConfig, init_field
from .renderer import composite_render, render_image
from .training import TrainConfig, Trainer
from .scenes import AnalyticScene, make_rig, reference_render
from .dataset import DatasetManifest, ManifestValidator
from .pipeline import PipelineOrchestrator, main

__all__ = [
    "HybridField",
    "FieldConfig",
    "init_field",
    "composite_render",
    "render_image",
    "TrainConfig",
    "Trainer",
    "AnalyticScene",
    "make_rig",
    "reference_render",
    "DatasetManifest",
    "ManifestValidator",
    "PipelineOrchestrator",
    "main",
]
