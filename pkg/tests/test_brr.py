"""Benefit-risk scoring and the dynamic threshold."""

import itertools

import pytest

from regflow.brr import (
    BRRDecision,
    Submission,
    ThresholdConfig,
    compute_brr,
    decide,
    update_threshold,
)
from regflow.errors import ArgumentError, DomainError


def sub(safety, effectiveness, compliance, adverse):
    return Submission(
        agent_id="A",
        safety=safety,
        effectiveness=effectiveness,
        compliance=compliance,
        adverse=adverse,
    )


class TestComputeBrr:
    def test_reference_value(self):
        assert compute_brr(sub(8, 7, 9, 4)) == 6.0

    def test_extremes(self):
        assert compute_brr(sub(1, 1, 1, 10)) == 0.3
        assert compute_brr(sub(10, 10, 10, 1)) == 30.0

    def test_full_grid_matches_direct_formula(self):
        for s, e, c, a in itertools.product(range(1, 11), repeat=4):
            assert compute_brr(sub(s, e, c, a)) == (s + e + c) / a

    def test_monotonicity(self):
        base = compute_brr(sub(5, 5, 5, 5))
        assert compute_brr(sub(6, 5, 5, 5)) > base
        assert compute_brr(sub(5, 6, 5, 5)) > base
        assert compute_brr(sub(5, 5, 6, 5)) > base
        assert compute_brr(sub(5, 5, 5, 6)) < base

    def test_out_of_range_scores_rejected(self):
        with pytest.raises(DomainError):
            compute_brr(sub(0, 5, 5, 5))
        with pytest.raises(DomainError):
            compute_brr(sub(5, 11, 5, 5))
        with pytest.raises(DomainError):
            compute_brr(sub(5, 5, 5, 0))

    def test_non_integer_scores_rejected(self):
        with pytest.raises(DomainError):
            compute_brr(sub(5.5, 5, 5, 5))
        with pytest.raises(DomainError):
            compute_brr(sub(True, 5, 5, 5))


class TestDecide:
    def test_boundary_tie_approves(self):
        assert decide(6.0, 6.0).approved is True

    def test_just_below_rejects(self):
        assert decide(5.999, 6.0).approved is False

    def test_clearly_above_approves(self):
        d = decide(30.0, 3.0)
        assert d == BRRDecision(brr=30.0, threshold=3.0, approved=True)

    def test_monotone_in_brr(self):
        threshold = 4.0
        last = False
        for brr in (0.5, 1.0, 3.9999, 4.0, 4.0001, 12.0):
            approved = decide(brr, threshold).approved
            assert approved >= last  # never flips back to rejected
            last = approved

    def test_invalid_inputs_rejected(self):
        with pytest.raises(ArgumentError):
            decide(0.0, 4.0)
        with pytest.raises(ArgumentError):
            decide(4.0, float("inf"))


class TestUpdateThreshold:
    CFG = ThresholdConfig(base=5.0, kappa=0.5, window=3, floor=3.0, ceiling=8.0)

    def test_empty_history_returns_base(self):
        assert update_threshold(self.CFG, []) == 5.0

    def test_kappa_zero_is_constant(self):
        cfg = ThresholdConfig(base=4.0, kappa=0.0, window=5, floor=2.0, ceiling=8.0)
        for history in ([], [30.0], [0.3] * 10, [1.0, 30.0, 2.0]):
            assert update_threshold(cfg, history) == 4.0

    def test_median_tracking_arithmetic(self):
        assert update_threshold(self.CFG, [10.0, 10.0, 10.0]) == 7.5

    def test_window_limits_lookback(self):
        # only the last 3 values count; their median is 2.0
        out = update_threshold(self.CFG, [30.0, 30.0, 2.0, 2.0, 2.0])
        assert out == 5.0 + 0.5 * (2.0 - 5.0)

    def test_even_window_uses_middle_mean(self):
        cfg = ThresholdConfig(base=5.0, kappa=1.0, window=4, floor=0.1, ceiling=30.0)
        assert update_threshold(cfg, [1.0, 2.0, 4.0, 8.0]) == 3.0

    def test_clipping_to_band(self):
        assert update_threshold(self.CFG, [30.0] * 5) == 8.0
        assert update_threshold(self.CFG, [0.3] * 5) == 3.0

    def test_output_always_inside_band(self):
        import random

        rng = random.Random(1)
        for _ in range(200):
            history = [rng.uniform(0.3, 30.0) for _ in range(rng.randint(1, 20))]
            out = update_threshold(self.CFG, history)
            assert 3.0 <= out <= 8.0

    def test_bad_config_rejected(self):
        with pytest.raises(ArgumentError):
            update_threshold(
                ThresholdConfig(base=1.0, kappa=0.5, window=3, floor=3.0, ceiling=8.0), []
            )
        with pytest.raises(ArgumentError):
            update_threshold(
                ThresholdConfig(base=5.0, kappa=1.5, window=3, floor=3.0, ceiling=8.0), []
            )
        with pytest.raises(ArgumentError):
            update_threshold(
                ThresholdConfig(base=5.0, kappa=0.5, window=0, floor=3.0, ceiling=8.0), []
            )
