"""Deterministic vehicle-dynamics simulator and feedforward steering benchmark."""

__version__ = "0.1.0"
