"""Amodal segmentation toolkit: occlusion synthesis, box expansion, metrics."""

__version__ = "0.1.0"
