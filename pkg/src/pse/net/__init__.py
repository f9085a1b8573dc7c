"""Audiogram-conditioned enhancement network and its building blocks."""

from .config import ModelConfig, format_variant, parse_variant
from .discriminator import Discriminator
from .network import Enhancer, EnhancerOutput

__all__ = [
    "Discriminator",
    "Enhancer",
    "EnhancerOutput",
    "ModelConfig",
    "format_variant",
    "parse_variant",
]
