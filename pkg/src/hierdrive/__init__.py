"""Hierarchical driving agent with trajectory imagination and attention RL."""

__version__ = "0.1.0"
