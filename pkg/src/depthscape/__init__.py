"""Depth-conditioned landscape synthesis with spatial latent codes."""

from .conditions import DepthMap, ImageTensor, SegmentationMap, SpatialLatent, validate_pair
from .config import ModelConfig, RunConfig

__all__ = [
    "DepthMap",
    "ImageTensor",
    "SegmentationMap",
    "SpatialLatent",
    "validate_pair",
    "ModelConfig",
    "RunConfig",
]

__version__ = "0.1.0"
