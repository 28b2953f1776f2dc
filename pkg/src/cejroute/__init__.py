"""Selective sexism-detection inference stack.

A calibrated specialist classifier handles the easy cases; low-confidence
instances are escalated to a multi-persona debate (collaborative expert
judgment) whose verdict becomes the final label. The package also ships the
class-imbalance numerics used to train such specialists (effective-number
weighting, class-balanced losses, class-aware batching) as offline
evaluators.
"""

__version__ = "0.1.0"
