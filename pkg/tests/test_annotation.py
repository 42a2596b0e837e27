import numpy as np
import pytest

from emgrasp.annotation import (
    Phase,
    TrainingStrategy,
    build_training_set,
    label_windows,
)
from emgrasp.errors import DataError
from emgrasp.ggs import Segmentation
from conftest import trial_from_array

FS = 1562.5


def make_seg(b1, b2, b3, n=6250):
    return Segmentation(
        breakpoints=(b1, b2, b3),
        objective=0.0,
        n_samples=n,
        sample_rate=FS,
        downsample_factor=16,
    )


@pytest.fixture(scope="module")
def labeled():
    r = np.random.default_rng(99)
    trial = trial_from_array(np.abs(r.normal(size=(12, 6250))), "t1")
    seg = make_seg(1600, 3600, 5100)
    return trial, seg, label_windows(trial, seg, gesture=7)


def test_window_count_matches_windowing(labeled):
    _, _, windows = labeled
    assert len(windows) == 93


def test_phase_by_last_sample(labeled):
    trial, seg, windows = labeled
    b1, b2, b3 = seg.breakpoints
    for w, start in zip(windows, (round(i * 62.5) for i in range(len(windows)))):
        last = start + 500 - 1
        if last < b1:
            assert w.phase == Phase.REACH
        elif last < b2:
            assert w.phase == Phase.GRASP
        elif last < b3:
            assert w.phase == Phase.RETURN
        else:
            assert w.phase == Phase.REST


def test_boundary_windows():
    # breakpoints aligned so windows end exactly one sample before / at them
    trial = trial_from_array(np.zeros((12, 6250)), "t")
    seg = make_seg(500, 3600, 5750)
    windows = label_windows(trial, seg, gesture=3)
    # first window covers [0, 500): last sample 499 = b1 - 1 -> reach
    assert windows[0].phase == Phase.REACH
    assert windows[0].label == 3
    # window starting at 5250 covers [5250, 5750): last sample 5749 < b3 -> return
    w_return = [w for w in windows if w.features.end_time_ms == pytest.approx(5750 / FS * 1000)]
    assert w_return and w_return[0].phase == Phase.RETURN
    # any window whose last sample is >= b3 is rest with label 0
    for w in windows:
        if w.phase == Phase.REST:
            assert w.label == 0


def test_straddling_window_takes_last_sample_phase():
    trial = trial_from_array(np.zeros((12, 6250)), "t")
    seg = make_seg(1600, 3600, 5100)
    windows = label_windows(trial, seg, gesture=5)

    def bounds(w):
        end = int(round(w.features.end_time_ms * FS / 1000.0))
        return end - 500, end

    # windows straddling b1=1600 whose last sample lands inside the grasp span
    straddlers = [w for w in windows if bounds(w)[0] < 1600 <= bounds(w)[1] - 1]
    assert straddlers
    assert all(w.phase == Phase.GRASP for w in straddlers)


def test_labels_follow_phase_invariant(labeled):
    _, _, windows = labeled
    for w in windows:
        if w.phase == Phase.REST:
            assert w.label == 0
        else:
            assert w.label == 7


def test_time_offset_relative_to_grasp_onset(labeled):
    _, seg, windows = labeled
    b1_ms = seg.breakpoints[0] / FS * 1000.0
    for w in windows:
        assert w.time_offset_ms == pytest.approx(w.features.end_time_ms - b1_ms)


def test_gesture_out_of_range_rejected(labeled):
    trial, seg, _ = labeled
    for bad in (0, 14, -1):
        with pytest.raises(DataError):
            label_windows(trial, seg, gesture=bad)


class TestBuildTrainingSet:
    def test_grasp_rest_drops_reach(self, labeled):
        _, _, windows = labeled
        X, y = build_training_set(windows, TrainingStrategy.GRASP_REST)
        kept = [w for w in windows if w.phase in (Phase.GRASP, Phase.REST)]
        assert X.shape == (len(kept), 36)
        assert not any(w.phase == Phase.REACH for w in kept)

    def test_reach_grasp_rest_only_drops_return(self, labeled):
        _, _, windows = labeled
        X, _ = build_training_set(windows, TrainingStrategy.REACH_GRASP_REST)
        n_return = sum(1 for w in windows if w.phase == Phase.RETURN)
        assert X.shape[0] == len(windows) - n_return

    @pytest.mark.parametrize("strategy", list(TrainingStrategy))
    def test_return_phase_never_trained(self, labeled, strategy):
        _, _, windows = labeled
        assert Phase.RETURN not in strategy.kept_phases
        kept = [w for w in windows if w.phase in strategy.kept_phases]
        assert all(w.phase != Phase.RETURN for w in kept)

    def test_rows_preserve_input_order(self, labeled):
        _, _, windows = labeled
        X, y = build_training_set(windows, TrainingStrategy.REACH_GRASP_REST)
        kept = [w for w in windows if w.phase in TrainingStrategy.REACH_GRASP_REST.kept_phases]
        np.testing.assert_array_equal(X[0], kept[0].features.values)
        np.testing.assert_array_equal(X[-1], kept[-1].features.values)
        np.testing.assert_array_equal(y, [w.label for w in kept])

    def test_empty_after_filter_rejected(self, labeled):
        _, _, windows = labeled
        only_return = [w for w in windows if w.phase == Phase.RETURN]
        with pytest.raises(DataError):
            build_training_set(only_return, TrainingStrategy.REACH_REST)
