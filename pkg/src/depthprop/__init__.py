"""Temporal depth propagation: flow-warped, gate-corrected feature
propagation with keyframe scheduling, consistency losses, and
ego-motion-compensated video depth metrics."""

__version__ = "0.1.0"
