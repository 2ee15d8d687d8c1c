"""Hierarchical imitation learning with language-derived sub-goal labels on small gridworlds."""

__version__ = "0.1.0"
