import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nara import ar
from nara.confidence import (
    ConfParams,
    ThresholdCalibration,
    accept_prefix,
    binary_cross_entropy,
    build_accept_mask,
    calibrate_threshold,
    label_chunk,
    oracle_confidence,
    predict_confidence,
    train_confidence,
)
from nara.numeric import gaussian_log_density
from nara.priors import PriorParams

from conftest import make_rng


def small_ar(seed=0):
    params = ar.ArParams.init(4, 2, make_rng(400 + seed))
    for arr in params.parameters().values():
        arr *= 0.6
    return params


class TestOracleConfidence:
    def test_scores_at_head_means_with_unit_variance(self):
        params = ar.ArParams.zeros(4, 2)  # every head is N(0, 1)
        ctx = [0.3, -0.1]
        drafted = np.zeros(3)  # equal to every head mean
        vec = oracle_confidence(params, None, ctx, np.zeros(3), drafted)
        np.testing.assert_allclose(vec.values, -0.9189385, atol=1e-6)

    def test_moving_toward_mean_never_decreases_score(self):
        params = small_ar(1)
        rng = make_rng(9)
        ctx = rng.normal(size=5)
        priors = rng.normal(size=4)
        state = ar.warmup(params, ctx)
        heads = ar.draft_pass(params, state, priors)
        x = np.array([h.mean for h in heads]) + rng.normal(size=4)
        closer = np.array([h.mean for h in heads]) + 0.5 * (x - np.array([h.mean for h in heads]))
        far_scores = oracle_confidence(params, None, ctx, priors, x).values
        near_scores = oracle_confidence(params, None, ctx, priors, closer).values
        assert np.all(near_scores >= far_scores)

    def test_matches_head_by_head_recomputation(self):
        params = small_ar(2)
        rng = make_rng(10)
        ctx = rng.normal(size=6)
        priors = rng.normal(size=5)
        drafted = rng.normal(size=5)
        vec = oracle_confidence(params, None, ctx, priors, drafted)
        state = ar.warmup(params, ctx)
        heads = ar.draft_pass(params, state, priors)
        expected = [gaussian_log_density(x, h) for x, h in zip(drafted, heads)]
        np.testing.assert_array_equal(vec.values, expected)

    def test_length_mismatch_rejected(self):
        params = small_ar()
        with pytest.raises(ValueError, match="length"):
            oracle_confidence(params, None, [0.1], np.zeros(3), np.zeros(4))


class TestPredictConfidence:
    def test_zero_weights_give_half(self):
        conf = ConfParams.zeros(6, 3)
        vec = predict_confidence(conf, np.ones(6), np.ones(3))
        np.testing.assert_array_equal(vec.values, 0.5)

    def test_deterministic(self, rng):
        conf = ConfParams.init(6, 3, rng)
        w = rng.normal(size=6)
        m = rng.normal(size=3)
        np.testing.assert_array_equal(
            predict_confidence(conf, w, m).values, predict_confidence(conf, w, m).values
        )

    def test_scores_in_open_unit_interval(self, rng):
        conf = ConfParams.init(6, 3, rng)
        for _ in range(20):
            s = predict_confidence(conf, rng.normal(size=6), rng.normal(size=3)).values
            assert np.all(s > 0) and np.all(s < 1)


class TestCalibration:
    def test_running_mean_constant_stream(self):
        cal = ThresholdCalibration(mode="running_mean", kappa=2.5)
        tau = calibrate_threshold(cal, np.full(10, -1.3))
        assert tau == pytest.approx(2.5 * -1.3, abs=1e-12)

    def test_running_mean_streaming_equals_batch(self):
        rng = make_rng(20)
        xs = rng.normal(size=500)
        cal1 = ThresholdCalibration(mode="running_mean")
        for chunk in np.split(xs, 10):
            cal1.update(chunk)
        assert cal1.threshold() == pytest.approx(2.5 * float(np.mean(xs)), rel=1e-12)

    def test_quantile_epsilon_zero_is_minus_inf(self):
        cal = ThresholdCalibration(mode="quantile")
        cal.update(np.arange(200.0))
        assert cal.threshold(0.0) == -math.inf

    def test_quantile_median_matches_sort_oracle(self):
        rng = make_rng(21)
        xs = [gaussian_log_density(float(x), __import__("nara.numeric", fromlist=["GaussianHead"]).GaussianHead(0.0, 0.0)) for x in rng.standard_normal(1000)]
        cal = ThresholdCalibration(mode="quantile")
        cal.update(xs)
        tau = cal.threshold(0.5)
        expected = sorted(xs)[math.floor(0.5 * len(xs))]  # independent sort-based rule
        assert tau == expected

    def test_quantile_needs_hundred_values(self):
        cal = ThresholdCalibration(mode="quantile")
        cal.update(np.arange(99.0))
        with pytest.raises(ValueError, match="at least 100"):
            cal.threshold(0.5)

    def test_empty_stream_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            ThresholdCalibration(mode="running_mean").threshold()

    def test_bad_mode_rejected(self):
        with pytest.raises(ValueError):
            ThresholdCalibration(mode="bogus")


class TestLabelChunk:
    def test_componentwise_indicator(self):
        np.testing.assert_array_equal(label_chunk([-1.0, -3.0, -2.0], -2.0), [True, False, True])

    def test_minus_inf_accepts_all(self):
        assert label_chunk(np.array([-50.0, 0.0, 9.0]), -math.inf).all()

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=20), st.floats(-10, 10))
    @settings(max_examples=60, deadline=None)
    def test_matches_comparison_oracle(self, scores, tau):
        got = label_chunk(scores, tau)
        expected = [s >= tau for s in scores]
        assert list(got) == expected

    def test_flipping_across_tau_flips_exactly_one_label(self):
        scores = np.array([-1.0, -2.0, -3.0])
        base = label_chunk(scores, -2.5)
        moved = scores.copy()
        moved[0] = -9.0
        flipped = label_chunk(moved, -2.5)
        assert (base != flipped).sum() == 1


class TestAcceptPrefix:
    def test_rule_application(self):
        assert accept_prefix([0.9, 0.8, 0.3, 0.7], 0.5) == (3, 2)

    def test_epsilon_zero_accepts_all(self):
        assert accept_prefix([0.9, 0.8, 0.3, 0.7], 0.0) == (5, 4)

    def test_epsilon_one_rejects_all(self):
        assert accept_prefix([0.9, 0.8, 0.3, 0.7], 1.0) == (1, 0)
        # even saturated scores cannot sneak past a full-rejection threshold
        assert accept_prefix([1.0, 1.0], 1.0) == (1, 0)

    @given(
        st.lists(st.floats(0.001, 0.999), min_size=1, max_size=30),
        st.floats(0, 1),
    )
    @settings(max_examples=120, deadline=None)
    def test_mask_is_prefix_and_count_matches(self, scores, eps):
        khat, accepted = accept_prefix(scores, eps)
        assert khat == accepted + 1
        mask = build_accept_mask(scores, eps).mask
        assert mask[:accepted].all() and not mask[accepted:].any()

    @given(st.lists(st.floats(0.001, 0.999), min_size=1, max_size=30))
    @settings(max_examples=60, deadline=None)
    def test_accepted_count_non_increasing_in_epsilon(self, scores):
        counts = [accept_prefix(scores, e)[1] for e in np.linspace(0, 1, 11)]
        assert all(a >= b for a, b in zip(counts, counts[1:]))


class TestTrainConfidence:
    def _setup(self):
        rng = make_rng(33)
        ar_params = ar.ArParams.init(5, 2, rng)
        for arr in ar_params.parameters().values():
            arr *= 0.5
        prior_params = PriorParams.init(8, 4, rng)
        conf = ConfParams.init(8, 4, rng, hidden=8)
        t = np.arange(40.0)
        seqs = [np.sin(2 * math.pi * 0.05 * t + p) for p in (0.0, 1.0, 2.0, 3.0)]
        return ar_params, prior_params, conf, seqs

    def test_freeze_base_and_prior_parameters(self):
        ar_params, prior_params, conf, seqs = self._setup()
        before_ar = {k: v.tobytes() for k, v in ar_params.parameters().items()}
        before_prior = {k: v.tobytes() for k, v in prior_params.parameters().items()}
        cal = ThresholdCalibration(mode="quantile")
        train_confidence(
            conf, ar_params, prior_params, seqs[:3], seqs[3:], cal, make_rng(44),
            epochs=5, positions_per_seq=13,
        )
        assert {k: v.tobytes() for k, v in ar_params.parameters().items()} == before_ar
        assert {k: v.tobytes() for k, v in prior_params.parameters().items()} == before_prior

    def test_training_reduces_bce_from_start(self):
        ar_params, prior_params, conf, seqs = self._setup()
        cal = ThresholdCalibration(mode="quantile")
        log = train_confidence(
            conf, ar_params, prior_params, seqs[:3], seqs[3:], cal, make_rng(44),
            epochs=40, positions_per_seq=13,
        )
        assert log[-1][1] < log[0][1]  # train BCE decreases

    def test_separable_labels_reach_low_bce(self):
        rng = make_rng(55)
        conf = ConfParams.init(4, 2, rng, hidden=8)
        feats = np.concatenate([rng.normal(size=(40, 6)) + 3.0, rng.normal(size=(40, 6)) - 3.0])
        labels = np.zeros((80, 2), dtype=bool)
        labels[:40] = True
        from nara.confidence import _conf_bce_grads, confidence_batch_scores
        from nara.numeric import AdamState, adam_step

        adam = AdamState(lr=0.05)
        params = conf.parameters()
        for _ in range(300):
            _, grads = _conf_bce_grads(conf, feats, labels)
            adam_step(adam, params, grads)
        assert binary_cross_entropy(confidence_batch_scores(conf, feats), labels) < 0.1
