"""Folds, strategy runs, time-aligned averaging, and summary metrics.

Validation trials are aligned at grasp onset (first breakpoint, t = 0) and
averaged on a 40 ms grid. Up to 700 ms of resting signal from the end of
the preceding trial (or the session lead-in for the first trial) is
prepended to each validation trial so the rest-to-reach transition is part
of the evaluated timeline. Training never sees prepended context and never
sees returning-phase windows; validation sees every window of all phases.

Reported metrics: the intersection time of the grasp-gesture and
rest-gesture probability curves before t = 0, the margin between the
grasp-gesture probability peak and the simultaneous top competitor, phase
accuracies, and a row-normalized confusion matrix over the pre-shape
interval.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .annotation import (
    LabeledWindow,
    Phase,
    TrainingStrategy,
    build_training_set,
    label_windows,
)
from .errors import DataError
from .extra_trees import NUM_CLASSES, TrainConfig, predict_proba_batch, train
from .features import feature_matrix
from .ggs import Segmentation
from .signal_pipeline import (
    DEFAULT_STEP_MS,
    DEFAULT_WINDOW_MS,
    EnvelopeTrial,
    window_length_samples,
    window_starts,
)
from .util import fmt_sig, round_sig, stable_seed_words

GRID_MS = 40.0
CONTEXT_MS = 700.0
N_FOLDS = 3
TRIALS_PER_OBJECT = 6

# integer phase codes used on the evaluation hot path
PHASE_CODES = {Phase.REACH: 0, Phase.GRASP: 1, Phase.RETURN: 2, Phase.REST: 3}
CODE_NAMES = ("reach", "grasp", "return", "rest")


@dataclass
class FoldPlan:
    """Per object: a seeded permutation of its 6 trials split into 3 pairs.

    Fold i validates on pair i of every object and trains on the other 4
    trials, so across the 3 folds every trial is validated exactly once.
    """

    pairs: Dict[int, List[List[str]]]
    seed: int

    def __post_init__(self):
        for obj, pairs in self.pairs.items():
            ids = [t for pair in pairs for t in pair]
            if len(pairs) != N_FOLDS or any(len(p) != 2 for p in pairs) or len(set(ids)) != 6:
                raise DataError(f"fold plan for object {obj} does not cover 6 trials in 3 pairs")

    def validation_ids(self, fold: int) -> set:
        return {t for pairs in self.pairs.values() for t in pairs[fold]}

    def training_ids(self, fold: int) -> set:
        val = self.validation_ids(fold)
        return {t for pairs in self.pairs.values() for pair in pairs for t in pair} - val

    def to_dict(self) -> dict:
        return {str(obj): self.pairs[obj] for obj in sorted(self.pairs)}


def make_folds(
    trials_by_object: Mapping[int, Sequence[str]], seed: int, scope: str = ""
) -> FoldPlan:
    """Build the 3-fold plan from a seeded per-object permutation.

    scope (e.g. the session id) is mixed into each object's stream so two
    sessions sharing object ids still draw independent permutations.

    Raises:
        DataError: some object does not have exactly 6 trials.
    """
    pairs: Dict[int, List[List[str]]] = {}
    for obj in sorted(trials_by_object):
        ids = list(trials_by_object[obj])
        if len(ids) != TRIALS_PER_OBJECT:
            raise DataError(
                f"object {obj} has {len(ids)} trials; the fold protocol requires exactly "
                f"{TRIALS_PER_OBJECT}"
            )
        rng = np.random.default_rng(
            np.random.SeedSequence(stable_seed_words("folds", seed, scope, obj))
        )
        perm = rng.permutation(TRIALS_PER_OBJECT)
        pairs[int(obj)] = [[ids[perm[2 * i]], ids[perm[2 * i + 1]]] for i in range(N_FOLDS)]
    return FoldPlan(pairs=pairs, seed=seed)


@dataclass
class TrialRecord:
    """One trial prepared for evaluation: training windows plus the
    context-extended validation windows."""

    trial_id: str
    object_id: int
    gesture: int
    trial_index: int
    b1_ms: float
    b2_ms: float
    b3_ms: float
    labeled: List[LabeledWindow] = field(repr=False)
    eval_features: np.ndarray = field(repr=False)
    eval_offsets_ms: np.ndarray = field(repr=False)
    eval_phases: np.ndarray = field(repr=False)  # codes per PHASE_CODES


@dataclass
class SessionData:
    session_id: str
    subject_id: str
    trials: List[TrialRecord]

    def trials_by_object(self) -> Dict[int, List[str]]:
        grouped: Dict[int, List[str]] = defaultdict(list)
        for t in self.trials:
            grouped[t.object_id].append(t.trial_id)
        return dict(grouped)


def _eval_phase_codes(last_samples: np.ndarray, n_ctx: int, seg: Segmentation) -> np.ndarray:
    codes = np.full(last_samples.shape, PHASE_CODES[Phase.REST], dtype=np.int8)
    own = last_samples >= n_ctx
    bounds = np.asarray(seg.breakpoints)
    codes[own] = np.searchsorted(bounds, last_samples[own] - n_ctx, side="right").astype(np.int8)
    return codes


def prepare_session_data(
    session_id: str,
    subject_id: str,
    trial_meta: Sequence[dict],
    envelopes: Mapping[str, EnvelopeTrial],
    segments: Mapping[str, Segmentation],
    lead_in_env: Optional[np.ndarray],
    window_ms: float = DEFAULT_WINDOW_MS,
    step_ms: float = DEFAULT_STEP_MS,
    context_ms: float = CONTEXT_MS,
) -> SessionData:
    """Assemble per-trial training windows and context-extended validation windows.

    trial_meta entries need trial_id, object_id, gesture_label, trial_index
    and must be in session recording order; the predecessor in that order
    donates its trailing rest span (capped at context_ms) as lead-in
    context, the session lead-in recording covering the first trial.
    """
    records: List[TrialRecord] = []
    prev_rest: Optional[np.ndarray] = None
    for meta in trial_meta:
        tid = meta["trial_id"]
        env = envelopes[tid]
        seg = segments[tid]
        fs = env.sample_rate
        n_ctx_cap = int(round(context_ms * fs / 1000.0))

        labeled = label_windows(env, seg, meta["gesture_label"], window_ms, step_ms)

        if prev_rest is not None:
            ctx = prev_rest[:, -n_ctx_cap:]
        elif lead_in_env is not None:
            ctx = lead_in_env[:, -n_ctx_cap:]
        else:
            ctx = np.empty((env.samples.shape[0], 0))
        n_ctx = ctx.shape[1]

        extended = np.concatenate([ctx, env.samples], axis=1)
        length = window_length_samples(window_ms, fs)
        starts = window_starts(extended.shape[1], fs, window_ms, step_ms)
        feats = feature_matrix(extended, starts, length)
        end_ms = (starts + length - n_ctx) * 1000.0 / fs
        b1_ms, b2_ms, b3_ms = seg.breakpoints_ms
        codes = _eval_phase_codes(starts + length - 1, n_ctx, seg)

        records.append(
            TrialRecord(
                trial_id=tid,
                object_id=int(meta["object_id"]),
                gesture=int(meta["gesture_label"]),
                trial_index=int(meta["trial_index"]),
                b1_ms=b1_ms,
                b2_ms=b2_ms,
                b3_ms=b3_ms,
                labeled=labeled,
                eval_features=feats,
                eval_offsets_ms=end_ms - b1_ms,
                eval_phases=codes,
            )
        )
        rest_start = seg.breakpoints[2]
        prev_rest = env.samples[:, rest_start:]
    return SessionData(session_id=session_id, subject_id=subject_id, trials=records)


@dataclass
class TrialSeries:
    """Per-window probabilities for one validation trial, grasp-aligned."""

    trial_id: str
    gesture: int
    fold: int
    offsets_ms: np.ndarray
    probs: np.ndarray  # n x 14
    phases: np.ndarray  # codes per PHASE_CODES
    return_onset_ms: float  # b2 - b1, in offset coordinates
    rest_onset_ms: float  # b3 - b1
    reach_onset_ms: float  # -b1


@dataclass
class StrategyRun:
    strategy: TrainingStrategy
    series: List[TrialSeries]
    train_phase_counts: List[Dict[str, int]]  # one dict per fold
    train_sizes: List[int]


def _derive_train_seed(seed: int, session_id: str, strategy: TrainingStrategy, fold: int) -> int:
    words = stable_seed_words("train", seed, session_id, strategy.value, fold)
    return int.from_bytes(b"".join(w.to_bytes(4, "little") for w in words), "little")


def run_strategy(
    data: SessionData,
    strategy: TrainingStrategy,
    fold_plan: FoldPlan,
    train_cfg: TrainConfig,
    seed: int,
) -> StrategyRun:
    """Train per fold under the strategy's phase filter and score every
    validation window (all four phases plus prepended rest context)."""
    series: List[TrialSeries] = []
    phase_counts: List[Dict[str, int]] = []
    train_sizes: List[int] = []
    for fold in range(N_FOLDS):
        train_ids = fold_plan.training_ids(fold)
        windows = [w for rec in data.trials if rec.trial_id in train_ids for w in rec.labeled]
        kept = [w for w in windows if w.phase in strategy.kept_phases]
        counts = {p.value: 0 for p in Phase}
        for w in kept:
            counts[w.phase.value] += 1
        phase_counts.append(counts)
        X, y = build_training_set(windows, strategy)
        train_sizes.append(int(X.shape[0]))

        cfg = replace(train_cfg, seed=_derive_train_seed(seed, data.session_id, strategy, fold))
        model = train(X, y, cfg)

        val_ids = fold_plan.validation_ids(fold)
        for rec in data.trials:
            if rec.trial_id not in val_ids:
                continue
            probs = predict_proba_batch(model, rec.eval_features)
            series.append(
                TrialSeries(
                    trial_id=rec.trial_id,
                    gesture=rec.gesture,
                    fold=fold,
                    offsets_ms=rec.eval_offsets_ms,
                    probs=probs,
                    phases=rec.eval_phases,
                    return_onset_ms=rec.b2_ms - rec.b1_ms,
                    rest_onset_ms=rec.b3_ms - rec.b1_ms,
                    reach_onset_ms=-rec.b1_ms,
                )
            )
    return StrategyRun(
        strategy=strategy, series=series, train_phase_counts=phase_counts, train_sizes=train_sizes
    )


@dataclass
class EvalCurves:
    """Grid-aligned means. Probabilities are unweighted means over
    contributing trials (per-trial window means first); accuracies are
    window-level fractions within the slot. Slots nobody reaches are
    omitted, so arrays are dense over observed slots only."""

    t_ms: np.ndarray
    p_grasp: np.ndarray
    p_rest: np.ndarray
    p_top: np.ndarray
    acc_grasp: np.ndarray  # nan where a slot has no motion windows
    acc_rest: np.ndarray  # nan where a slot has no rest windows
    n_trials: np.ndarray
    n_motion: np.ndarray
    n_rest: np.ndarray


def align_and_average(series: Sequence[TrialSeries], grid_ms: float = GRID_MS) -> EvalCurves:
    """Map windows to 40 ms slots by rounding their grasp-relative offset.

    Raises:
        DataError: empty input.
    """
    if not series:
        raise DataError("align_and_average: no trial series")
    prob_sums: Dict[int, np.ndarray] = defaultdict(lambda: np.zeros(3))
    trial_counts: Dict[int, int] = defaultdict(int)
    motion = defaultdict(lambda: [0, 0])  # slot -> [correct, total]
    rest = defaultdict(lambda: [0, 0])

    for s in series:
        if s.offsets_ms.size == 0:
            continue
        slots = np.rint(s.offsets_ms / grid_ms).astype(np.int64)
        pg = s.probs[:, s.gesture]
        pr = s.probs[:, 0]
        other = [j for j in range(NUM_CLASSES) if j not in (0, s.gesture)]
        pt = s.probs[:, other].max(axis=1)
        pred = np.argmax(s.probs, axis=1)
        is_motion = s.phases <= 2
        is_rest = ~is_motion

        uniq, inverse = np.unique(slots, return_inverse=True)
        per_slot = np.zeros((uniq.size, 3))
        np.add.at(per_slot, inverse, np.stack([pg, pr, pt], axis=1))
        counts = np.bincount(inverse)
        per_slot /= counts[:, None]
        for k, slot in enumerate(uniq):
            prob_sums[int(slot)] += per_slot[k]
            trial_counts[int(slot)] += 1

        correct_motion = is_motion & (pred == s.gesture)
        correct_rest = is_rest & (pred == 0)
        for slot, m, cm, r, cr in zip(slots, is_motion, correct_motion, is_rest, correct_rest):
            if m:
                motion[int(slot)][0] += int(cm)
                motion[int(slot)][1] += 1
            else:
                rest[int(slot)][0] += int(cr)
                rest[int(slot)][1] += 1

    ordered = sorted(trial_counts)
    t_ms = np.asarray([s * grid_ms for s in ordered])
    n_trials = np.asarray([trial_counts[s] for s in ordered], dtype=np.int64)
    probs = np.stack([prob_sums[s] / trial_counts[s] for s in ordered])
    n_motion = np.asarray([motion[s][1] for s in ordered], dtype=np.int64)
    n_rest = np.asarray([rest[s][1] for s in ordered], dtype=np.int64)
    with np.errstate(invalid="ignore"):
        acc_grasp = np.asarray(
            [motion[s][0] / motion[s][1] if motion[s][1] else np.nan for s in ordered]
        )
        acc_rest = np.asarray([rest[s][0] / rest[s][1] if rest[s][1] else np.nan for s in ordered])
    return EvalCurves(
        t_ms=t_ms,
        p_grasp=probs[:, 0],
        p_rest=probs[:, 1],
        p_top=probs[:, 2],
        acc_grasp=acc_grasp,
        acc_rest=acc_rest,
        n_trials=n_trials,
        n_motion=n_motion,
        n_rest=n_rest,
    )


def combine_curves(per_subject: Sequence[EvalCurves]) -> EvalCurves:
    """Unweighted mean of per-subject curves on the union of their slots."""
    if not per_subject:
        raise DataError("combine_curves: nothing to combine")
    if len(per_subject) == 1:
        return per_subject[0]
    slots = sorted({int(t) for c in per_subject for t in c.t_ms})
    cols = {name: [] for name in ("p_grasp", "p_rest", "p_top", "acc_grasp", "acc_rest")}
    n_trials, n_motion, n_rest = [], [], []
    for slot in slots:
        vals = {name: [] for name in cols}
        nt = nm = nr = 0
        for c in per_subject:
            hit = np.flatnonzero(c.t_ms == slot)
            if hit.size == 0:
                continue
            i = int(hit[0])
            for name in ("p_grasp", "p_rest", "p_top"):
                vals[name].append(getattr(c, name)[i])
            for name in ("acc_grasp", "acc_rest"):
                v = getattr(c, name)[i]
                if np.isfinite(v):
                    vals[name].append(v)
            nt += int(c.n_trials[i])
            nm += int(c.n_motion[i])
            nr += int(c.n_rest[i])
        for name in cols:
            cols[name].append(np.mean(vals[name]) if vals[name] else np.nan)
        n_trials.append(nt)
        n_motion.append(nm)
        n_rest.append(nr)
    return EvalCurves(
        t_ms=np.asarray(slots, dtype=np.float64),
        p_grasp=np.asarray(cols["p_grasp"]),
        p_rest=np.asarray(cols["p_rest"]),
        p_top=np.asarray(cols["p_top"]),
        acc_grasp=np.asarray(cols["acc_grasp"]),
        acc_rest=np.asarray(cols["acc_rest"]),
        n_trials=np.asarray(n_trials, dtype=np.int64),
        n_motion=np.asarray(n_motion, dtype=np.int64),
        n_rest=np.asarray(n_rest, dtype=np.int64),
    )


@dataclass
class TiResult:
    t_ms: Optional[float]
    flag: str  # "crossing", "saturated", or "none"


def compute_t_i(curves: EvalCurves) -> TiResult:
    """Latest pre-zero upward crossing of p_grasp over p_rest.

    The crossing is linearly interpolated between the bracketing grid
    points. If p_grasp never drops below p_rest before t = 0 the curve is
    flagged "saturated" and the curve start is returned; if it never
    reaches p_rest at or before t = 0 the result is flagged "none".

    Raises:
        DataError: curves empty or not covering t <= 0.
    """
    mask = curves.t_ms <= 0
    if curves.t_ms.size == 0 or not mask.any():
        raise DataError("compute_t_i: curves do not cover t <= 0")
    t = curves.t_ms[mask]
    pg = curves.p_grasp[mask]
    pr = curves.p_rest[mask]
    for j in range(t.size - 2, -1, -1):
        if pg[j] < pr[j] and pg[j + 1] >= pr[j + 1]:
            d0 = pr[j] - pg[j]
            d1 = pg[j + 1] - pr[j + 1]
            t_i = t[j] + (t[j + 1] - t[j]) * d0 / (d0 + d1)
            return TiResult(t_ms=float(t_i), flag="crossing")
    if np.all(pg >= pr):
        return TiResult(t_ms=float(t[0]), flag="saturated")
    return TiResult(t_ms=None, flag="none")


def compute_d_p(curves: EvalCurves) -> tuple:
    """(margin, peak time): p_grasp peak minus the simultaneous p_top.

    Ties on the peak go to the earliest slot.
    """
    if curves.t_ms.size == 0:
        raise DataError("compute_d_p: empty curves")
    k = int(np.argmax(curves.p_grasp))  # first maximum = earliest slot
    return float(curves.p_grasp[k] - curves.p_top[k]), float(curves.t_ms[k])


def confusion_matrix(
    series: Sequence[TrialSeries], interval: tuple, grid_ms: float = GRID_MS
) -> tuple:
    """Row-normalized 14x14 confusion over windows whose grid time lies in
    [interval[0], interval[1]].

    Rows are the true trial gesture (row 0 stays empty: no rest-gesture
    trials exist), columns the argmax prediction. Returns (matrix, support)
    where support[i] is the number of windows accumulated into row i; rows
    with zero support are left as zeros rather than normalized.

    Raises:
        DataError: empty interval or no windows inside it.
    """
    t_lo, t_hi = interval
    if t_lo > t_hi:
        raise DataError(f"confusion_matrix: empty interval [{t_lo}, {t_hi}]")
    counts = np.zeros((NUM_CLASSES, NUM_CLASSES))
    for s in series:
        slot_t = np.rint(s.offsets_ms / grid_ms) * grid_ms
        sel = (slot_t >= t_lo) & (slot_t <= t_hi)
        if not sel.any():
            continue
        pred = np.argmax(s.probs[sel], axis=1)
        counts[s.gesture] += np.bincount(pred, minlength=NUM_CLASSES)
    support = counts.sum(axis=1)
    if support.sum() == 0:
        raise DataError("confusion_matrix: no windows inside the interval")
    matrix = np.zeros_like(counts)
    nonzero = support > 0
    matrix[nonzero] = counts[nonzero] / support[nonzero, None]
    return matrix, support.astype(np.int64)


@dataclass
class StrategyMetrics:
    strategy: str
    t_i_ms: Optional[float]
    t_i_flag: str
    d_p: float
    t_peak_ms: float
    peak_phase: str
    phase_accuracy: Dict[str, float]
    return_early_accuracy: float  # first 200 ms of the returning phase
    rest_slot_accuracy: float  # rest-window accuracy over the whole timeline
    confusion: np.ndarray
    confusion_support: np.ndarray

    def to_dict(self) -> dict:
        def num(x):
            if x is None or (isinstance(x, float) and not np.isfinite(x)):
                return None
            return round_sig(float(x))

        return {
            "t_i_ms": num(self.t_i_ms),
            "t_i_flag": self.t_i_flag,
            "d_p": num(self.d_p),
            "t_peak_ms": num(self.t_peak_ms),
            "peak_phase": self.peak_phase,
            "phase_accuracy": {k: num(v) for k, v in self.phase_accuracy.items()},
            "return_early_accuracy": num(self.return_early_accuracy),
            "rest_slot_accuracy": num(self.rest_slot_accuracy),
        }


def _phase_accuracies(series: Sequence[TrialSeries]) -> Dict[str, float]:
    correct = np.zeros(4)
    total = np.zeros(4)
    for s in series:
        pred = np.argmax(s.probs, axis=1)
        target = np.where(s.phases <= 2, s.gesture, 0)
        for code in range(4):
            sel = s.phases == code
            total[code] += sel.sum()
            correct[code] += (pred[sel] == target[sel]).sum()
    with np.errstate(invalid="ignore"):
        acc = np.where(total > 0, correct / np.maximum(total, 1), np.nan)
    return {name: float(acc[code]) for code, name in enumerate(CODE_NAMES)}


def _return_early_accuracy(series: Sequence[TrialSeries], horizon_ms: float = 200.0) -> float:
    correct = 0
    total = 0
    for s in series:
        sel = (s.phases == PHASE_CODES[Phase.RETURN]) & (
            s.offsets_ms <= s.return_onset_ms + horizon_ms
        )
        if not sel.any():
            continue
        pred = np.argmax(s.probs[sel], axis=1)
        correct += int((pred == s.gesture).sum())
        total += int(sel.sum())
    return correct / total if total else float("nan")


def _peak_phase(t_peak_ms: float, series: Sequence[TrialSeries]) -> str:
    reach_on = float(np.mean([s.reach_onset_ms for s in series]))
    return_on = float(np.mean([s.return_onset_ms for s in series]))
    rest_on = float(np.mean([s.rest_onset_ms for s in series]))
    if t_peak_ms < reach_on:
        return "rest"
    if t_peak_ms < 0:
        return "reach"
    if t_peak_ms < return_on:
        return "grasp"
    if t_peak_ms < rest_on:
        return "return"
    return "rest"


def compute_strategy_metrics(run: StrategyRun, curves: EvalCurves) -> StrategyMetrics:
    """Extract the summary metrics of one strategy from its curves and series."""
    ti = compute_t_i(curves)
    d_p, t_peak = compute_d_p(curves)
    rest_total = int(curves.n_rest.sum())
    rest_correct = float(np.nansum(np.where(curves.n_rest > 0, curves.acc_rest, 0.0) * curves.n_rest))
    if ti.flag == "none":
        confusion = np.zeros((NUM_CLASSES, NUM_CLASSES))
        support = np.zeros(NUM_CLASSES, dtype=np.int64)
    else:
        confusion, support = confusion_matrix(run.series, (ti.t_ms, 0.0))
    return StrategyMetrics(
        strategy=run.strategy.value,
        t_i_ms=ti.t_ms,
        t_i_flag=ti.flag,
        d_p=d_p,
        t_peak_ms=t_peak,
        peak_phase=_peak_phase(t_peak, run.series),
        phase_accuracy=_phase_accuracies(run.series),
        return_early_accuracy=_return_early_accuracy(run.series),
        rest_slot_accuracy=rest_correct / rest_total if rest_total else float("nan"),
        confusion=confusion,
        confusion_support=support,
    )


@dataclass
class StrategyResult:
    run_by_session: Dict[str, StrategyRun]
    curves_by_subject: Dict[str, EvalCurves]
    curves: EvalCurves  # combined over subjects
    metrics: StrategyMetrics  # pooled series, combined curves
    metrics_by_subject: Dict[str, StrategyMetrics]


@dataclass
class EvalReport:
    seed: int
    strategies: Dict[str, StrategyResult]
    fold_plans: Dict[str, FoldPlan]

    def to_dict(self) -> dict:
        payload = {
            "seed": self.seed,
            "strategies": {},
            "folds": {sid: plan.to_dict() for sid, plan in self.fold_plans.items()},
        }
        for name, result in sorted(self.strategies.items()):
            runs = result.run_by_session
            payload["strategies"][name] = {
                "combined": result.metrics.to_dict(),
                "per_subject": {
                    sid: m.to_dict() for sid, m in sorted(result.metrics_by_subject.items())
                },
                "train_rows_per_fold": {
                    sid: runs[sid].train_sizes for sid in sorted(runs)
                },
                "train_phase_counts": {
                    sid: runs[sid].train_phase_counts for sid in sorted(runs)
                },
            }
        return payload


def write_curves_csv(path, curves: EvalCurves, meta_line: Optional[str] = None):
    """t_ms,p_grasp,p_rest,p_top,acc_grasp,acc_rest,n_trials rows, floats at
    9 significant digits; undefined accuracies print as nan."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        if meta_line:
            f.write(f"# {meta_line}\n")
        f.write("t_ms,p_grasp,p_rest,p_top,acc_grasp,acc_rest,n_trials\n")
        for i in range(curves.t_ms.size):
            f.write(
                f"{fmt_sig(float(curves.t_ms[i]))},{fmt_sig(float(curves.p_grasp[i]))},"
                f"{fmt_sig(float(curves.p_rest[i]))},{fmt_sig(float(curves.p_top[i]))},"
                f"{fmt_sig(float(curves.acc_grasp[i]))},{fmt_sig(float(curves.acc_rest[i]))},"
                f"{int(curves.n_trials[i])}\n"
            )


def write_confusion_csv(
    path, matrix: np.ndarray, support: np.ndarray, meta_line: Optional[str] = None
):
    """Row-normalized confusion: true_label,pred_00..pred_13,support."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        if meta_line:
            f.write(f"# {meta_line}\n")
        cols = ",".join(f"pred_{j:02d}" for j in range(NUM_CLASSES))
        f.write(f"true_label,{cols},support\n")
        for i in range(NUM_CLASSES):
            row = ",".join(fmt_sig(float(v)) for v in matrix[i])
            f.write(f"{i},{row},{int(support[i])}\n")


def evaluate_sessions(
    sessions: Sequence[SessionData],
    strategies: Sequence[TrainingStrategy],
    train_cfg: TrainConfig,
    seed: int,
) -> EvalReport:
    """Full evaluation: one shared fold plan per session, every strategy run
    against it, per-subject curves combined by unweighted averaging."""
    if not sessions:
        raise DataError("evaluate_sessions: no sessions")
    fold_plans = {
        s.session_id: make_folds(s.trials_by_object(), seed=seed, scope=s.session_id)
        for s in sessions
    }
    results: Dict[str, StrategyResult] = {}
    for strategy in strategies:
        runs: Dict[str, StrategyRun] = {}
        curves_by_subject: Dict[str, EvalCurves] = {}
        metrics_by_subject: Dict[str, StrategyMetrics] = {}
        for data in sessions:
            run = run_strategy(data, strategy, fold_plans[data.session_id], train_cfg, seed)
            runs[data.session_id] = run
            curves = align_and_average(run.series)
            curves_by_subject[data.subject_id] = curves
            metrics_by_subject[data.subject_id] = compute_strategy_metrics(run, curves)
        combined = combine_curves(list(curves_by_subject.values()))
        pooled = StrategyRun(
            strategy=strategy,
            series=[s for run in runs.values() for s in run.series],
            train_phase_counts=[c for run in runs.values() for c in run.train_phase_counts],
            train_sizes=[n for run in runs.values() for n in run.train_sizes],
        )
        results[strategy.value] = StrategyResult(
            run_by_session=runs,
            curves_by_subject=curves_by_subject,
            curves=combined,
            metrics=compute_strategy_metrics(pooled, combined),
            metrics_by_subject=metrics_by_subject,
        )
    return EvalReport(seed=seed, strategies=results, fold_plans=fold_plans)
