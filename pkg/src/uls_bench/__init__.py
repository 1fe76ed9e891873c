"""Benchmarking and weak-label toolkit for 3D universal lesion segmentation in CT."""

__version__ = "0.1.0"
