import numpy as np
import pytest

from emgrasp.errors import DataError, SingularityError
from emgrasp.ggs import GgsConfig, Segmentation, downsample, ggs_segment, objective, segment_cost
from emgrasp.synth import gen_segmented_series
from conftest import trial_from_array


def dense_cost_oracle(data, lam):
    """Independent dense covariance + log-det computation."""
    x = np.asarray(data, dtype=float)
    c, m = x.shape
    mu = x.mean(axis=1)
    cov = np.zeros((c, c))
    for t in range(m):
        d = x[:, t] - mu
        cov += np.outer(d, d)
    cov /= m
    sign, logdet = np.linalg.slogdet(cov + lam * np.eye(c))
    assert sign > 0
    return 0.5 * m * logdet


def exhaustive_optimum(data, lam, min_len):
    """Enumerate every admissible (b1, b2, b3) triple via a full cost table."""
    c, n = data.shape
    cost = np.full((n + 1, n + 1), np.inf)
    starts, ends = [], []
    for a in range(n - 1):
        for b in range(a + 2, n + 1):
            starts.append(a)
            ends.append(b)
    xs = np.asarray(data, dtype=float)
    for a, b in zip(starts, ends):
        cost[a, b] = segment_cost(xs[:, a:b], lam)
    b1 = np.arange(min_len, n - 3 * min_len + 1)
    b2 = np.arange(2 * min_len, n - 2 * min_len + 1)
    b3 = np.arange(3 * min_len, n - min_len + 1)
    total = (
        cost[0, b1][:, None, None]
        + cost[b1[:, None], b2[None, :]][:, :, None]
        + cost[b2[:, None], b3[None, :]][None, :, :]
        + cost[b3, n][None, None, :]
    )
    valid = (
        ((b2[None, :] - b1[:, None]) >= min_len)[:, :, None]
        & ((b3[None, :] - b2[:, None]) >= min_len)[None, :, :]
    )
    total = np.where(valid, total, np.inf)
    return float(total.min())


class TestSegmentCost:
    def test_identical_rows_closed_form(self):
        data = np.tile(np.arange(1.0, 13.0)[:, None], (1, 2))
        assert segment_cost(data, 0.1) == pytest.approx(12 * np.log(0.1), rel=1e-12)

    def test_lambda_zero_short_segment_is_singular(self, rng):
        data = rng.normal(size=(12, 12))
        with pytest.raises(SingularityError, match="lambda"):
            segment_cost(data, 0.0)

    def test_matches_dense_oracle(self, rng):
        data = rng.normal(size=(12, 200))
        got = segment_cost(data, 0.01)
        expected = dense_cost_oracle(data, 0.01)
        assert got == pytest.approx(expected, rel=1e-9)

    def test_segment_too_short(self):
        with pytest.raises(DataError):
            segment_cost(np.zeros((12, 1)), 0.1)


class TestGgsSegment:
    def test_recovers_planted_breakpoints(self):
        cfg = GgsConfig()
        hits = 0
        for i in range(10):
            rng = np.random.default_rng(3000 + i)
            data, true_bps = gen_segmented_series(rng, seg_len_range=(500, 2000))
            seg = ggs_segment(trial_from_array(data, f"t{i}"), cfg)
            if all(abs(a - b) <= 25 for a, b in zip(seg.breakpoints, true_bps)):
                hits += 1
        assert hits >= 9

    def test_cost_trace_non_increasing(self, rng):
        data, _ = gen_segmented_series(np.random.default_rng(77), seg_len_range=(500, 1500))
        seg = ggs_segment(trial_from_array(data), GgsConfig())
        trace = np.asarray(seg.cost_trace)
        assert np.all(np.diff(trace) <= 1e-9)

    def test_matches_exhaustive_on_short_series(self):
        cfg = GgsConfig(downsample_factor=1, min_segment_len=5)
        matches = 0
        for i in range(8):
            rng = np.random.default_rng(8800 + i)
            data, _ = gen_segmented_series(rng, seg_len_range=(8, 15))
            seg = ggs_segment(trial_from_array(data, f"s{i}"), cfg)
            best = exhaustive_optimum(data, cfg.lam, cfg.min_segment_len)
            if abs(seg.objective - best) <= 1e-9 * max(1.0, abs(best)):
                matches += 1
        assert matches >= 7  # flag-level slack for genuine greedy gaps

    def test_trial_too_short_rejected(self):
        cfg = GgsConfig()
        short = trial_from_array(np.abs(np.random.default_rng(0).normal(size=(12, 500))))
        with pytest.raises(DataError, match="too short"):
            ggs_segment(short, cfg)

    def test_deterministic(self):
        data, _ = gen_segmented_series(np.random.default_rng(5), seg_len_range=(500, 1200))
        trial = trial_from_array(data)
        seg1 = ggs_segment(trial, GgsConfig())
        seg2 = ggs_segment(trial, GgsConfig())
        assert seg1.breakpoints == seg2.breakpoints
        assert seg1.objective == seg2.objective

    def test_spans_respect_minimum_length(self):
        cfg = GgsConfig()
        data, _ = gen_segmented_series(np.random.default_rng(9), seg_len_range=(500, 2000))
        seg = ggs_segment(trial_from_array(data), cfg)
        bounds = (0, *seg.breakpoints, seg.n_samples)
        for a, b in zip(bounds[:-1], bounds[1:]):
            assert b - a >= cfg.min_segment_len * cfg.downsample_factor


class TestObjective:
    def _segmented_trial(self):
        data, _ = gen_segmented_series(np.random.default_rng(21), seg_len_range=(600, 1500))
        trial = trial_from_array(data)
        cfg = GgsConfig()
        return trial, cfg, ggs_segment(trial, cfg)

    def test_matches_segmentation_objective(self):
        trial, cfg, seg = self._segmented_trial()
        assert objective(trial, seg.breakpoints, cfg) == pytest.approx(seg.objective, rel=1e-9)

    def test_local_optimality_after_adjustment(self):
        trial, cfg, seg = self._segmented_trial()
        base = objective(trial, seg.breakpoints, cfg)
        step = cfg.downsample_factor  # one downsampled position
        for i in range(3):
            for delta in (-step, step):
                perturbed = list(seg.breakpoints)
                perturbed[i] += delta
                try:
                    assert objective(trial, perturbed, cfg) >= base - 1e-9
                except DataError:
                    pass  # perturbation collided with a neighbor span bound

    def test_constant_offset_invariance(self):
        trial, cfg, seg = self._segmented_trial()
        shifted = trial_from_array(trial.samples + 5.0)
        a = objective(trial, seg.breakpoints, cfg)
        b = objective(shifted, seg.breakpoints, cfg)
        assert b == pytest.approx(a, rel=1e-9)

    def test_ordering_violation_rejected(self):
        trial, cfg, seg = self._segmented_trial()
        b1, b2, b3 = seg.breakpoints
        with pytest.raises(DataError):
            objective(trial, (b2, b1, b3), cfg)


def test_downsample_block_means():
    data = np.arange(32.0).reshape(2, 16)
    down = downsample(data, 4)
    np.testing.assert_allclose(down[0], [1.5, 5.5, 9.5, 13.5])


def test_segmentation_validates_ordering():
    with pytest.raises(DataError):
        Segmentation(
            breakpoints=(100, 100, 200),
            objective=0.0,
            n_samples=6250,
            sample_rate=1562.5,
            downsample_factor=16,
        )
