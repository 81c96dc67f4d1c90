"""Subsample schedules, window rules, and the online learners built on them."""

import math

import numpy as np
import pytest

from driftlab import (
    AdaptiveWindowLearner,
    BaselineLearner,
    ConceptPath,
    ConstantWindowLearner,
    DriftSchedule,
    ProductProcess,
    SubsampledErmLearner,
    ThresholdClass,
    ThresholdHypothesis,
    baseline_step,
    best_window,
    concept_path,
    constant_window_size,
    erm_step,
    make_drift_schedule,
    sample_path,
    subsample_schedule,
    subsample_times,
    threshold_erm,
)


class TestSubsampleSchedule:
    def test_worked_example(self):
        assert subsample_schedule(100, 0.0, 1.0) == (8, 27)

    def test_smallest_time(self):
        assert subsample_schedule(2, 0.0, 1.0) == (1, 1)
        assert subsample_schedule(2, 0.5, 3.0) == (1, 1)

    def test_closed_form_scalar(self):
        for t in (10, 57, 300, 4096):
            for alpha in (0.0, 0.25, 0.6):
                for r in (0.5, 1.0, 2.0):
                    k, m = subsample_schedule(t, alpha, r)
                    k_exp = (1 - alpha) * 3.0 / (3.0 + 4.0 * r)
                    m_exp = (1 - alpha) * (3.0 + 2.0 * r) / (3.0 + 4.0 * r)
                    assert k == min(math.ceil(t**k_exp - 1e-9), t - 1)
                    assert m == min(math.ceil(t**m_exp - 1e-9), t - 1)

    def test_vectorized_matches_scalar(self):
        ts = np.arange(2, 500)
        ks, ms = subsample_schedule(ts, 0.25, 2.0)
        for i, t in enumerate(ts):
            k, m = subsample_schedule(int(t), 0.25, 2.0)
            assert ks[i] == k and ms[i] == m

    def test_gap_never_exceeds_window(self):
        ts = np.arange(2, 20_000)
        for alpha in (0.0, 0.25, 0.6):
            for r in (0.5, 1.0, 3.0):
                ks, ms = subsample_schedule(ts, alpha, r)
                assert np.all(ks >= 1)
                assert np.all(ks <= ms)
                assert np.all(ms <= ts - 1)

    def test_validation(self):
        with pytest.raises(ValueError):
            subsample_schedule(1, 0.0, 1.0)
        with pytest.raises(ValueError):
            subsample_schedule(10, 1.0, 1.0)
        with pytest.raises(ValueError):
            subsample_schedule(10, 0.0, 0.0)


class TestSubsampleTimes:
    def test_worked_example(self):
        assert subsample_times(100, 8, 27).tolist() == [92, 84, 76]

    def test_single_point(self):
        assert subsample_times(2, 1, 1).tolist() == [1]

    def test_count_is_window_over_gap(self):
        times = subsample_times(1000, 7, 100)
        assert len(times) == 100 // 7
        assert times.tolist() == [1000 - 7 * s for s in range(1, 15)]
        assert np.all(times >= 1)

    def test_validation(self):
        with pytest.raises(ValueError):
            subsample_times(10, 0, 5)
        with pytest.raises(ValueError):
            subsample_times(10, 6, 5)
        with pytest.raises(ValueError):
            subsample_times(10, 2, 10)


class TestConstantWindow:
    def test_worked_examples(self):
        assert constant_window_size(1, 0.001) == 100
        assert constant_window_size(1, 1.0) == 1
        assert constant_window_size(8, 0.008) == 50

    def test_exact_cube_case(self):
        # 27^(1/3) * (1/27)^(-2/3) = 3 * 9 = 27: ceiling must not round up
        assert constant_window_size(27, 1.0 / 27.0) == 27

    def test_validation(self):
        with pytest.raises(ValueError):
            constant_window_size(0, 0.1)
        with pytest.raises(ValueError):
            constant_window_size(1, 0.0)
        with pytest.raises(ValueError):
            constant_window_size(1, 1.1)


def _best_window_oracle(t: int, schedule: DriftSchedule, d: int) -> int:
    """Plain full scan with the same floating-point operation order."""
    prefix = schedule.prefix_sums()
    s_t = prefix[t]
    best_obj = math.inf
    best_m = 1
    for m in range(1, t):
        obj = (s_t - prefix[t - m]) + math.sqrt(d / m)
        if obj < best_obj:
            best_obj = obj
            best_m = m
    return best_m


class TestBestWindow:
    def test_constant_drift_worked_example(self):
        sched = make_drift_schedule("constant", alpha=0.0, horizon=2000, gamma=0.01)
        for t in (16, 100, 1000, 2000):
            assert best_window(t, sched, 1) == 14

    def test_zero_drift_uses_everything(self):
        sched = DriftSchedule(
            kind="constant", alpha=0.0, deltas=(0.0,) * 50, growth_constant=0.0
        )
        assert best_window(30, sched, 1) == 29
        assert best_window(50, sched, 1) == 49

    def test_saturated_drift_uses_last_point(self):
        sched = DriftSchedule(
            kind="constant", alpha=0.0, deltas=(0.0,) + (1.0,) * 49, growth_constant=1.0
        )
        assert best_window(30, sched, 1) == 1

    def test_matches_plain_scan_oracle(self):
        rng = np.random.default_rng(61)
        schedules = [
            make_drift_schedule("constant", alpha=0.0, horizon=700, gamma=0.01),
            make_drift_schedule("power_step", alpha=0.25, horizon=700),
            make_drift_schedule("power_step", alpha=0.6, horizon=700, c0=0.3),
        ]
        # random dyadic schedules keep every partial sum exact
        for _ in range(3):
            deltas = rng.integers(0, 65, size=700) / 64.0
            deltas[0] = 0.0
            schedules.append(
                DriftSchedule(
                    kind="constant",
                    alpha=0.0,
                    deltas=tuple(float(v) for v in deltas),
                    growth_constant=float(np.max(np.cumsum(deltas))),
                )
            )
        for sched in schedules:
            for t in (2, 3, 17, 128, 511, 700):
                for d in (1, 2, 5):
                    assert best_window(t, sched, d) == _best_window_oracle(t, sched, d)

    def test_exact_tie_prefers_smaller_window(self):
        # d=4: f(1) = 0 + sqrt(4/1) = 2 and f(4) = 1 + sqrt(4/4) = 2 exactly;
        # every other window is strictly worse.
        deltas = (0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0)
        sched = DriftSchedule(kind="constant", alpha=0.0, deltas=deltas, growth_constant=4.0)
        objective = {
            m: (sum(deltas[8 - m : 8]) + math.sqrt(4 / m)) for m in range(1, 8)
        }
        assert objective[1] == objective[4] == 2.0
        assert min(objective.values()) == 2.0
        assert best_window(8, sched, 4) == 1

    def test_strict_minimum_at_larger_window_is_found(self):
        deltas = (0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 63.0 / 64.0, 0.0)
        sched = DriftSchedule(kind="constant", alpha=0.0, deltas=deltas, growth_constant=4.0)
        # f(4) = 63/64 + 1 < 2 = f(1)
        assert best_window(8, sched, 4) == 4

    def test_chunk_boundaries(self):
        # exercise scans longer than one 512-wide chunk
        sched = make_drift_schedule("power_step", alpha=0.6, horizon=3000, c0=0.001)
        assert best_window(3000, sched, 1) == _best_window_oracle(3000, sched, 1)

    def test_validation(self):
        sched = make_drift_schedule("constant", alpha=0.0, horizon=10, gamma=0.1)
        with pytest.raises(ValueError):
            best_window(1, sched, 1)
        with pytest.raises(ValueError):
            best_window(11, sched, 1)


def _random_product_path(horizon: int, seed: int):
    sched = make_drift_schedule("power_step", alpha=0.25, horizon=horizon)
    path = concept_path(sched, eta=0.1, theta0=0.5)
    model = ProductProcess(marginals=path)
    return sched, sample_path(model, horizon, seed)


class TestErmStep:
    def test_matches_manual_gather(self):
        _, path = _random_product_path(100, 3)
        h = erm_step(ThresholdClass(), path, 100, 8, 27)
        pos = np.array([92, 84, 76]) - 1
        theta, _ = threshold_erm(path.xs[pos], path.ys[pos])
        assert isinstance(h, ThresholdHypothesis)
        assert h.theta == theta

    def test_noiseless_erm_localizes_threshold(self):
        # with eta = 0 the ERM threshold lands within the sample gap around
        # theta*, whose expected width is 2/(n+1)
        rng = np.random.default_rng(62)
        n, reps, theta_star = 50, 3000, 0.5
        errors = np.empty(reps)
        for i in range(reps):
            xs = rng.random(n)
            ys = (xs >= theta_star).astype(np.int64)
            theta, errs = threshold_erm(xs, ys)
            assert errs == 0
            errors[i] = abs(theta - theta_star)
        assert float(errors.mean()) <= 2.0 / (n + 1)


class TestLearnerEquivalences:
    def test_subsampled_learner_matches_erm_step(self):
        _, path = _random_product_path(300, 11)
        learner = SubsampledErmLearner(alpha=0.25, r=2.0, function_class=ThresholdClass())
        for t in (2, 10, 100, 300):
            h, gap, window = learner.step_with_windows(path, t)
            k, m = learner.windows(t)
            assert (gap, window) == (k, m)
            expected = erm_step(ThresholdClass(), path, t, k, m)
            assert h.theta == expected.theta

    def test_adaptive_learner_matches_best_window(self):
        sched, path = _random_product_path(300, 12)
        learner = AdaptiveWindowLearner(function_class=ThresholdClass(), schedule=sched)
        for t in (2, 10, 100, 300):
            h, gap, window = learner.step_with_windows(path, t)
            assert gap == 1
            assert window == best_window(t, sched, 1)
            expected = erm_step(ThresholdClass(), path, t, 1, window)
            assert h.theta == expected.theta

    def test_constant_learner_warmup_and_steady(self):
        sched = make_drift_schedule("constant", alpha=0.0, horizon=400, gamma=0.01)
        cpath = concept_path(sched, eta=0.1, theta0=0.5)
        path = sample_path(ProductProcess(marginals=cpath), 400, 13)
        learner = ConstantWindowLearner(function_class=ThresholdClass(), gamma=0.01)
        m_bar = constant_window_size(1, 0.01)
        assert learner.window == m_bar
        for t in range(1, m_bar + 1):
            h, gap, window = learner.step_with_windows(path, t)
            assert (gap, window) == (0, 0)
            assert h.theta == 0.0  # initial hypothesis deployed through warmup
        for t in (m_bar + 1, 200, 400):
            h, gap, window = learner.step_with_windows(path, t)
            assert (gap, window) == (1, m_bar)
            expected = erm_step(ThresholdClass(), path, t, 1, m_bar)
            assert h.theta == expected.theta

    def test_baselines(self):
        _, path = _random_product_path(120, 14)
        full = BaselineLearner(kind="full_history_erm", function_class=ThresholdClass())
        last = BaselineLearner(kind="last_point", function_class=ThresholdClass())
        for t in (2, 50, 120):
            h_full, gap_f, win_f = full.step_with_windows(path, t)
            assert (gap_f, win_f) == (1, t - 1)
            expected = erm_step(ThresholdClass(), path, t, 1, t - 1)
            assert h_full.theta == expected.theta

            h_last, gap_l, win_l = last.step_with_windows(path, t)
            assert (gap_l, win_l) == (1, 1)
            expected_last = erm_step(ThresholdClass(), path, t, 1, 1)
            assert h_last.theta == expected_last.theta

        assert baseline_step("last_point", ThresholdClass(), path, 5).theta == last.step(path, 5).theta

    def test_all_learners_deploy_initial_at_t1(self):
        sched, path = _random_product_path(50, 15)
        learners = [
            SubsampledErmLearner(alpha=0.0, r=1.0, function_class=ThresholdClass()),
            AdaptiveWindowLearner(function_class=ThresholdClass(), schedule=sched),
            ConstantWindowLearner(function_class=ThresholdClass(), gamma=0.05),
            BaselineLearner(kind="full_history_erm", function_class=ThresholdClass()),
            BaselineLearner(kind="last_point", function_class=ThresholdClass()),
        ]
        for learner in learners:
            h, gap, window = learner.step_with_windows(path, 1)
            assert (gap, window) == (0, 0)
            assert h.theta == 0.0

    def test_unknown_baseline_rejected(self):
        with pytest.raises(ValueError, match="unknown baseline"):
            BaselineLearner(kind="mystery", function_class=ThresholdClass())

    def test_step_delegates_to_step_with_windows(self):
        _, path = _random_product_path(60, 16)
        learner = SubsampledErmLearner(alpha=0.25, r=1.0, function_class=ThresholdClass())
        assert learner.step(path, 37).theta == learner.step_with_windows(path, 37)[0].theta
