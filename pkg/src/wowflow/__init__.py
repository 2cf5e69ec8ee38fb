"""Gradient flows of sliced MMD over mixtures of point clouds."""

__version__ = "0.1.0"
