"""Personalized speech enhancement: joint denoising and hearing compensation."""

__version__ = "0.1.0"
