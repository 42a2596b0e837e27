import numpy as np
import pytest

from emgrasp.annotation import TrainingStrategy
from emgrasp.errors import DataError
from emgrasp.evaluation import (
    EvalCurves,
    TrialSeries,
    align_and_average,
    combine_curves,
    compute_d_p,
    compute_t_i,
    confusion_matrix,
    evaluate_sessions,
    make_folds,
    prepare_session_data,
    run_strategy,
)
from emgrasp.extra_trees import TrainConfig
from emgrasp.ggs import Segmentation
from emgrasp.signal_pipeline import EnvelopeTrial
from emgrasp.synth import SynthConfig, gen_envelope_trial, gen_templates

FS = 1562.5


def curves_from(t_ms, p_grasp, p_rest, p_top=None):
    n = len(t_ms)
    zeros = np.zeros(n)
    return EvalCurves(
        t_ms=np.asarray(t_ms, dtype=float),
        p_grasp=np.asarray(p_grasp, dtype=float),
        p_rest=np.asarray(p_rest, dtype=float),
        p_top=np.asarray(p_top, dtype=float) if p_top is not None else zeros,
        acc_grasp=zeros,
        acc_rest=zeros,
        n_trials=np.ones(n, dtype=np.int64),
        n_motion=np.ones(n, dtype=np.int64),
        n_rest=np.ones(n, dtype=np.int64),
    )


def series_from_probs(offsets, probs, gesture, phases=None, trial_id="t", fold=0):
    probs = np.asarray(probs, dtype=float)
    n = probs.shape[0]
    return TrialSeries(
        trial_id=trial_id,
        gesture=gesture,
        fold=fold,
        offsets_ms=np.asarray(offsets, dtype=float),
        probs=probs,
        phases=np.asarray(phases if phases is not None else np.zeros(n), dtype=np.int8),
        return_onset_ms=1000.0,
        rest_onset_ms=2000.0,
        reach_onset_ms=-1000.0,
    )


class TestMakeFolds:
    def test_single_object_exact_cover(self):
        ids = [f"t{i}" for i in range(6)]
        plan = make_folds({1: ids}, seed=3)
        seen = []
        for fold in range(3):
            val = plan.validation_ids(fold)
            assert len(val) == 2
            assert val.isdisjoint(plan.training_ids(fold))
            assert len(plan.training_ids(fold)) == 4
            seen.extend(val)
        assert sorted(seen) == sorted(ids)

    def test_52_objects_train_validation_counts(self):
        grouped = {obj: [f"o{obj}_t{i}" for i in range(6)] for obj in range(1, 53)}
        plan = make_folds(grouped, seed=1)
        for fold in range(3):
            assert len(plan.training_ids(fold)) == 208
            assert len(plan.validation_ids(fold)) == 104

    def test_wrong_trial_count_names_object(self):
        with pytest.raises(DataError, match="object 7"):
            make_folds({7: ["a", "b"]}, seed=0)

    def test_same_seed_same_plan(self):
        grouped = {obj: [f"o{obj}_t{i}" for i in range(6)] for obj in (1, 2, 3)}
        assert make_folds(grouped, 9).pairs == make_folds(grouped, 9).pairs

    def test_different_seed_differs(self):
        grouped = {obj: [f"o{obj}_t{i}" for i in range(6)] for obj in range(1, 9)}
        assert make_folds(grouped, 1).pairs != make_folds(grouped, 2).pairs


class TestComputeTi:
    def test_symmetric_crossing_at_minus_400(self):
        t = np.arange(-800, 1, 40, dtype=float)
        frac = (t - t[0]) / 800.0
        curves = curves_from(t, 0.2 + 0.4 * frac, 0.6 - 0.4 * frac)
        res = compute_t_i(curves)
        assert res.flag == "crossing"
        assert res.t_ms == pytest.approx(-400.0)

    def test_saturated_returns_curve_start(self):
        t = np.arange(-800, 41, 40, dtype=float)
        curves = curves_from(t, np.ones_like(t), np.zeros_like(t))
        res = compute_t_i(curves)
        assert res.flag == "saturated"
        assert res.t_ms == t[0]

    def test_no_crossing_returns_none(self):
        t = np.arange(-800, 41, 40, dtype=float)
        curves = curves_from(t, np.zeros_like(t), np.ones_like(t))
        res = compute_t_i(curves)
        assert res.flag == "none"
        assert res.t_ms is None

    def test_latest_crossing_wins(self):
        t = np.asarray([-160.0, -120.0, -80.0, -40.0, 0.0])
        pg = np.asarray([0.1, 0.6, 0.1, 0.1, 0.6])  # up, down, then up again
        pr = np.asarray([0.5, 0.5, 0.5, 0.5, 0.5])
        res = compute_t_i(curves_from(t, pg, pr))
        assert res.flag == "crossing"
        assert -40.0 < res.t_ms <= 0.0

    def test_curves_not_covering_zero_rejected(self):
        with pytest.raises(DataError):
            compute_t_i(curves_from([40.0, 80.0], [0.1, 0.2], [0.3, 0.4]))


class TestComputeDp:
    def test_peak_margin(self):
        t = np.asarray([-80.0, -40.0, 0.0])
        d_p, t_peak = compute_d_p(curves_from(t, [0.2, 0.9, 0.4], [0, 0, 0], [0.1, 0.05, 0.2]))
        assert d_p == pytest.approx(0.85)
        assert t_peak == -40.0

    def test_constant_curve_peaks_at_earliest_slot(self):
        t = np.asarray([-80.0, -40.0, 0.0])
        d_p, t_peak = compute_d_p(curves_from(t, [0.5, 0.5, 0.5], [0, 0, 0], [0.2, 0.2, 0.2]))
        assert d_p == pytest.approx(0.3)
        assert t_peak == -80.0


class TestAlignAndAverage:
    def _uniformish_series(self, gesture, trial_id, bump=0.0):
        offsets = np.arange(-200.0, 201.0, 40.0)
        probs = np.full((offsets.size, 14), 1.0 / 14)
        probs[:, gesture] += bump
        probs[:, 0] -= bump
        return series_from_probs(offsets, probs, gesture, trial_id=trial_id)

    def test_single_trial_identity(self):
        s = self._uniformish_series(3, "a", bump=0.1)
        curves = align_and_average([s])
        np.testing.assert_allclose(curves.t_ms, s.offsets_ms)
        np.testing.assert_allclose(curves.p_grasp, s.probs[:, 3])
        np.testing.assert_allclose(curves.p_rest, s.probs[:, 0])
        assert np.all(curves.n_trials == 1)

    def test_duplicate_trial_leaves_means_unchanged(self):
        s1 = self._uniformish_series(3, "a", bump=0.1)
        s2 = self._uniformish_series(3, "b", bump=0.1)
        one = align_and_average([s1])
        two = align_and_average([s1, s2])
        np.testing.assert_allclose(two.p_grasp, one.p_grasp)
        np.testing.assert_allclose(two.p_rest, one.p_rest)
        assert np.all(two.n_trials == 2)

    def test_top_competitor_varies_by_slot(self):
        offsets = np.asarray([-40.0, 0.0])
        probs = np.full((2, 14), 0.0)
        probs[0, 5] = 0.7  # top competitor at slot -40 is label 5
        probs[1, 9] = 0.6  # at slot 0 it is label 9
        probs[:, 1] = 0.2
        probs[:, 0] = 0.1
        s = series_from_probs(offsets, probs, gesture=1)
        curves = align_and_average([s])
        np.testing.assert_allclose(curves.p_top, [0.7, 0.6])

    def test_probability_sum_bound(self):
        s1 = self._uniformish_series(2, "a", bump=0.3)
        s2 = self._uniformish_series(7, "b", bump=0.2)
        curves = align_and_average([s1, s2])
        total = curves.p_grasp + curves.p_rest + curves.p_top
        assert np.all(total <= 1.0 + 1e-9)

    def test_accuracies_split_by_phase(self):
        offsets = np.asarray([0.0, 40.0])
        probs = np.zeros((2, 14))
        probs[0, 4] = 1.0  # motion window predicted correctly
        probs[1, 0] = 1.0  # rest window predicted correctly
        s = series_from_probs(offsets, probs, gesture=4, phases=[1, 3])
        curves = align_and_average([s])
        assert curves.acc_grasp[0] == 1.0 and np.isnan(curves.acc_grasp[1])
        assert np.isnan(curves.acc_rest[0]) and curves.acc_rest[1] == 1.0

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            align_and_average([])


class TestConfusion:
    def test_perfect_predictor_identity_rows(self):
        series = []
        for g in range(1, 14):
            probs = np.zeros((5, 14))
            probs[:, g] = 1.0
            series.append(series_from_probs(np.linspace(-400, 0, 5), probs, g, trial_id=f"t{g}"))
        matrix, support = confusion_matrix(series, (-400.0, 0.0))
        assert support[0] == 0
        for g in range(1, 14):
            assert matrix[g, g] == pytest.approx(1.0)
            assert matrix[g].sum() == pytest.approx(1.0)

    def test_uniform_random_rows_near_uniform(self):
        rng = np.random.default_rng(17)
        series = []
        per_trial = 50
        for g in range(1, 14):
            for k in range(45):  # 2250 windows per row
                probs = rng.random((per_trial, 14))
                series.append(
                    series_from_probs(
                        np.linspace(-400, 0, per_trial), probs, g, trial_id=f"t{g}_{k}"
                    )
                )
        matrix, support = confusion_matrix(series, (-400.0, 0.0))
        for g in range(1, 14):
            assert support[g] >= 2000
            np.testing.assert_allclose(matrix[g], 1.0 / 14, atol=0.05)
            assert matrix[g].sum() == pytest.approx(1.0, abs=1e-9)

    def test_empty_interval_rejected(self):
        s = series_from_probs([0.0], np.ones((1, 14)) / 14, 1)
        with pytest.raises(DataError):
            confusion_matrix([s], (100.0, -100.0))


def build_session(seed=5, n_gestures=2, trials_per_object=6, lead_in=True, ramp=True):
    """Small prepared session with ground-truth segmentations."""
    cfg = SynthConfig(
        n_gestures=n_gestures,
        objects_per_gesture=1,
        trials_per_object=trials_per_object,
        pre_shape_ramp=ramp,
    )
    rng = np.random.default_rng(seed)
    templates = gen_templates(cfg, rng)
    envelopes, segments, meta = {}, {}, []
    for obj in range(1, cfg.n_objects + 1):
        gesture = (obj - 1) // cfg.objects_per_gesture + 1
        for idx in range(1, trials_per_object + 1):
            tid = f"obj{obj:02d}_t{idx}"
            trial = gen_envelope_trial(cfg, templates, gesture, rng)
            envelopes[tid] = EnvelopeTrial(samples=trial.envelope, sample_rate=FS, trial_id=tid)
            segments[tid] = Segmentation(
                breakpoints=trial.breakpoints,
                objective=0.0,
                n_samples=cfg.n_samples,
                sample_rate=FS,
                downsample_factor=16,
            )
            meta.append(
                {"trial_id": tid, "object_id": obj, "gesture_label": gesture, "trial_index": idx}
            )
    lead_env = None
    if lead_in:
        lead_env = np.maximum(
            templates.rest_mean[:, None] + rng.normal(0, cfg.noise_sigma, (12, 1600)), 0.0
        )
    return prepare_session_data(
        session_id="s01",
        subject_id="subj01",
        trial_meta=meta,
        envelopes=envelopes,
        segments=segments,
        lead_in_env=lead_env,
    )


@pytest.fixture(scope="module")
def session():
    return build_session()


class TestPrepareSessionData:
    def test_context_windows_are_rest(self, session):
        # a window ending at or before the trial start sits in prepended context
        first = session.trials[0]
        end_ms = first.eval_offsets_ms + first.b1_ms
        assert (end_ms <= 0).any()
        assert np.all(first.eval_phases[end_ms <= 0] == 3)

    def test_evaluation_covers_prepended_context(self, session):
        for rec in session.trials:
            end_ms = rec.eval_offsets_ms + rec.b1_ms
            assert end_ms.min() < 0  # some windows end before the trial starts
            assert (end_ms < 0).sum() >= 5

    def test_training_windows_never_use_context(self, session):
        for rec in session.trials:
            ends = [w.features.end_time_ms for w in rec.labeled]
            assert min(ends) >= 320.0 - 1e-9
            assert len(rec.labeled) == 93

    def test_phase_codes_match_segmentation(self, session):
        rec = session.trials[2]
        end_ms = rec.eval_offsets_ms + rec.b1_ms
        own = end_ms > 320.0 - 1e-9  # windows fully determined by own trial timeline
        codes = rec.eval_phases[own]
        offsets = rec.eval_offsets_ms[own]
        assert np.all(codes[offsets < 0] == 0)  # before grasp onset: reach
        inside_grasp = (offsets > 0) & (offsets < rec.b2_ms - rec.b1_ms - 320)
        assert np.all(codes[inside_grasp] == 1)


class TestRunStrategy:
    def test_training_respects_phase_filter_and_validation_does_not(self, session):
        plan = make_folds(session.trials_by_object(), seed=2)
        run = run_strategy(
            session, TrainingStrategy.REACH_REST, plan, TrainConfig(n_trees=10), seed=2
        )
        for counts in run.train_phase_counts:
            assert counts["grasp"] == 0 and counts["return"] == 0
            assert counts["reach"] > 0 and counts["rest"] > 0
        # every trial validated exactly once, with all phases present
        assert sorted(s.trial_id for s in run.series) == sorted(
            t.trial_id for t in session.trials
        )
        phases = np.concatenate([s.phases for s in run.series])
        assert set(np.unique(phases)) == {0, 1, 2, 3}

    def test_outputs_on_simplex(self, session):
        plan = make_folds(session.trials_by_object(), seed=2)
        run = run_strategy(
            session, TrainingStrategy.REACH_GRASP_REST, plan, TrainConfig(n_trees=10), seed=2
        )
        for s in run.series:
            assert np.all(s.probs >= 0)
            np.testing.assert_allclose(s.probs.sum(axis=1), 1.0, atol=1e-9)

    def test_deterministic_given_seed(self, session):
        plan = make_folds(session.trials_by_object(), seed=4)
        runs = [
            run_strategy(session, TrainingStrategy.GRASP_REST, plan, TrainConfig(n_trees=5), seed=4)
            for _ in range(2)
        ]
        for s1, s2 in zip(runs[0].series, runs[1].series):
            np.testing.assert_array_equal(s1.probs, s2.probs)


class TestEvaluateSessions:
    def test_report_structure_and_metrics(self, session):
        report = evaluate_sessions(
            [session], list(TrainingStrategy), TrainConfig(n_trees=10), seed=6
        )
        assert set(report.strategies) == {s.value for s in TrainingStrategy}
        for result in report.strategies.values():
            m = result.metrics
            assert m.t_i_flag in ("crossing", "saturated", "none")
            assert np.isfinite(m.d_p)
            total = result.curves.p_grasp + result.curves.p_rest + result.curves.p_top
            assert np.all(total <= 1.0 + 1e-9)
            assert set(m.phase_accuracy) == {"reach", "grasp", "return", "rest"}
            assert m.confusion.shape == (14, 14)
            rows = m.confusion.sum(axis=1)
            for g, total_row in enumerate(rows):
                if m.confusion_support[g] > 0:
                    assert total_row == pytest.approx(1.0, abs=1e-9)

    def test_payload_is_json_ready(self, session):
        import json

        report = evaluate_sessions(
            [session], [TrainingStrategy.GRASP_REST], TrainConfig(n_trees=5), seed=6
        )
        payload = report.to_dict()
        text = json.dumps(payload, sort_keys=True)
        assert "grasp_rest" in payload["strategies"]
        assert json.loads(text)["seed"] == 6


def test_two_subject_evaluation_combines_curves():
    sessions = [build_session(seed=5), build_session(seed=6)]
    sessions[1].session_id = "s02"
    sessions[1].subject_id = "subj02"
    report = evaluate_sessions(
        sessions, [TrainingStrategy.GRASP_REST], TrainConfig(n_trees=5), seed=3
    )
    result = report.strategies["grasp_rest"]
    assert set(result.curves_by_subject) == {"subj01", "subj02"}
    assert set(result.metrics_by_subject) == {"subj01", "subj02"}
    assert set(report.fold_plans) == {"s01", "s02"}
    # a slot covered by both subjects averages their values and sums trials
    for i, t in enumerate(result.curves.t_ms):
        hits = [
            (np.flatnonzero(c.t_ms == t), c) for c in result.curves_by_subject.values()
        ]
        present = [(idx[0], c) for idx, c in hits if idx.size]
        expected = np.mean([c.p_grasp[j] for j, c in present])
        assert result.curves.p_grasp[i] == pytest.approx(expected)
        assert result.curves.n_trials[i] == sum(int(c.n_trials[j]) for j, c in present)


def test_combine_curves_unweighted_mean():
    a = curves_from([-40.0, 0.0], [0.2, 0.4], [0.6, 0.4])
    b = curves_from([0.0, 40.0], [0.8, 0.6], [0.2, 0.2])
    combined = combine_curves([a, b])
    np.testing.assert_allclose(combined.t_ms, [-40.0, 0.0, 40.0])
    np.testing.assert_allclose(combined.p_grasp, [0.2, 0.6, 0.6])
    assert combined.n_trials.tolist() == [1, 2, 1]
