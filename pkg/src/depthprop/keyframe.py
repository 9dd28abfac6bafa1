"""Keyframe scheduling: the flow/coverage trigger heuristic plus a
fixed-interval baseline, and interval statistics over a run."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class KeyframePolicy:
    """Trigger thresholds for re-initializing from the base model.

    The heuristic fires a keyframe when warp coverage drops to
    alpha * decay^t or the normalized mean flow reaches
    beta * decay^t + gamma, t being the frame count since the last
    keyframe. Setting ``fixed_interval`` switches to a fixed cadence
    instead (keyframe whenever t >= interval).
    """

    alpha: float = 0.2
    beta: float = 0.15
    gamma: float = 0.1
    decay: float = 0.9
    fixed_interval: int | None = None

    def __post_init__(self):
        if not (0.0 < self.decay <= 1.0):
            raise ValueError(f"decay must be in (0, 1], got {self.decay}")
        if self.alpha < 0 or self.beta < 0 or self.gamma < 0:
            raise ValueError("alpha, beta, gamma must be >= 0")
        if self.fixed_interval is not None and self.fixed_interval < 1:
            raise ValueError(f"fixed interval must be >= 1, got {self.fixed_interval}")


def should_keyframe(policy: KeyframePolicy, cov: float, flow_norm: float, t: int) -> bool:
    """Decide whether the current frame must be re-initialized.

    Comparisons are inclusive on both trigger conditions.
    """
    if t < 0:
        raise ValueError(f"frames-since-keyframe must be >= 0, got {t}")
    if policy.fixed_interval is not None:
        return t >= policy.fixed_interval
    decayed = policy.decay ** t
    return (cov <= policy.alpha * decayed
            or flow_norm >= policy.beta * decayed + policy.gamma)


@dataclass
class IntervalStats:
    """Histogram of keyframe intervals in seconds.

    ``histogram`` maps bucket start (inclusive, multiples of bucket_width)
    to count. ``mean`` is None when fewer than two events were observed.
    """

    histogram: dict[float, int]
    mean: float | None
    bucket_width: float


def interval_histogram(events: list[int], fps: float,
                       bucket_width: float = 0.1) -> IntervalStats:
    """Bucket the gaps between keyframe timestamps (frame indices) in seconds."""
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    if bucket_width <= 0:
        raise ValueError(f"bucket width must be positive, got {bucket_width}")
    events = list(events)
    if any(b <= a for a, b in zip(events, events[1:])):
        raise ValueError("keyframe timestamps must be strictly increasing")
    if len(events) < 2:
        return IntervalStats(histogram={}, mean=None, bucket_width=bucket_width)
    intervals = np.diff(np.asarray(events, dtype=np.float64)) / fps
    hist: dict[float, int] = {}
    for sec in intervals:
        start = float(np.floor(sec / bucket_width) * bucket_width)
        hist[start] = hist.get(start, 0) + 1
    return IntervalStats(histogram=dict(sorted(hist.items())),
                         mean=float(np.mean(intervals)),
                         bucket_width=bucket_width)
