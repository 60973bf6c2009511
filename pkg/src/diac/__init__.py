"""Intermittent-aware synthesis and energy-harvesting simulation."""

__version__ = "0.1.0"
