import numpy as np
import pytest

from depthprop.keyframe import (IntervalStats, KeyframePolicy,
                                interval_histogram, should_keyframe)

DEFAULTS = KeyframePolicy()


def test_static_never_triggers():
    assert should_keyframe(DEFAULTS, cov=1.0, flow_norm=0.0, t=0) is False


def test_coverage_trigger_at_threshold():
    assert should_keyframe(DEFAULTS, cov=0.15, flow_norm=0.0, t=0) is True
    # Inclusive comparison: exactly at the threshold counts.
    assert should_keyframe(DEFAULTS, cov=0.2, flow_norm=0.0, t=0) is True


def test_composite_non_trigger_at_t3():
    # cov threshold 0.2 * 0.9^3 = 0.1458, flow threshold 0.15 * 0.9^3 + 0.1 = 0.20935.
    assert should_keyframe(DEFAULTS, cov=0.5, flow_norm=0.2, t=3) is False


def test_flow_trigger():
    assert should_keyframe(DEFAULTS, cov=1.0, flow_norm=0.30, t=0) is True
    assert should_keyframe(DEFAULTS, cov=1.0, flow_norm=0.25, t=0) is True


def test_monotonicity_random_triples():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        cov = rng.uniform(0.0, 1.0)
        fn = rng.uniform(0.0, 0.6)
        t = int(rng.integers(0, 50))
        fired = should_keyframe(DEFAULTS, cov, fn, t)
        if fired:
            # Decreasing coverage or increasing flow must never undo a trigger.
            assert should_keyframe(DEFAULTS, cov * rng.uniform(0.0, 1.0), fn, t)
            assert should_keyframe(DEFAULTS, cov, fn + rng.uniform(0.0, 0.5), t)


def test_decay_one_is_time_independent():
    policy = KeyframePolicy(decay=1.0)
    rng = np.random.default_rng(1)
    for _ in range(200):
        cov = rng.uniform(0.0, 1.0)
        fn = rng.uniform(0.0, 0.6)
        base = should_keyframe(policy, cov, fn, 0)
        for t in (1, 5, 40):
            assert should_keyframe(policy, cov, fn, t) == base


def test_fixed_interval():
    policy = KeyframePolicy(fixed_interval=1)
    assert should_keyframe(policy, 1.0, 0.0, 0) is False
    for t in range(1, 10):
        assert should_keyframe(policy, 1.0, 0.0, t) is True
    every4 = KeyframePolicy(fixed_interval=4)
    assert [should_keyframe(every4, 1.0, 0.0, t) for t in range(6)] == \
        [False, False, False, False, True, True]


def test_policy_validation():
    with pytest.raises(ValueError):
        KeyframePolicy(decay=0.0)
    with pytest.raises(ValueError):
        KeyframePolicy(alpha=-0.1)
    with pytest.raises(ValueError):
        KeyframePolicy(fixed_interval=0)


def test_interval_histogram_single_bucket():
    stats = interval_histogram([0, 30, 60, 90], fps=30.0)
    assert stats.mean == pytest.approx(1.0)
    assert stats.histogram == {1.0: 3}


def test_interval_histogram_two_events():
    stats = interval_histogram([3, 10], fps=10.0)
    assert sum(stats.histogram.values()) == 1
    assert stats.mean == pytest.approx(0.7)


def test_interval_histogram_too_few_events():
    stats = interval_histogram([5], fps=30.0)
    assert isinstance(stats, IntervalStats)
    assert stats.histogram == {}
    assert stats.mean is None


def test_interval_histogram_rejects_nonincreasing():
    with pytest.raises(ValueError):
        interval_histogram([0, 5, 5], fps=30.0)
