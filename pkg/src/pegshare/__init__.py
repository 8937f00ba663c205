"""Demonstration-driven trajectory learning and adaptive shared control
for a simulated bimanual peg-transfer task."""

__version__ = "0.1.0"
