"""Oriented object detection core: quadrilateral geometry, oriented center-ness,
corner-prediction strategies, losses, post-processing and evaluation."""

__version__ = "0.1.0"
