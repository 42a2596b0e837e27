"""Phase-tag and label windows, and build strategy-filtered training sets.

A window is assigned the phase containing its last sample (the causal
choice: at runtime only past samples exist). Motion phases carry the
trial's gesture label, rest carries label 0. The returning phase is never
part of any training set; it exists only for evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

from .errors import DataError
from .features import FeatureVector, extract_features
from .ggs import Segmentation
from .signal_pipeline import DEFAULT_STEP_MS, DEFAULT_WINDOW_MS, EnvelopeTrial, window_iter

REST_LABEL = 0
NUM_GESTURES = 13  # motion labels 1..13; label 0 is open palm / rest


class Phase(str, Enum):
    REACH = "reach"
    GRASP = "grasp"
    RETURN = "return"
    REST = "rest"


MOTION_PHASES = (Phase.REACH, Phase.GRASP, Phase.RETURN)


class TrainingStrategy(str, Enum):
    """Which phases feed the classifier; returning is always excluded."""

    REACH_REST = "reach_rest"
    GRASP_REST = "grasp_rest"
    REACH_GRASP_REST = "reach_grasp_rest"

    @property
    def kept_phases(self) -> frozenset:
        return _KEPT[self]


_KEPT = {
    TrainingStrategy.REACH_REST: frozenset({Phase.REACH, Phase.REST}),
    TrainingStrategy.GRASP_REST: frozenset({Phase.GRASP, Phase.REST}),
    TrainingStrategy.REACH_GRASP_REST: frozenset({Phase.REACH, Phase.GRASP, Phase.REST}),
}


@dataclass
class LabeledWindow:
    features: FeatureVector
    label: int
    phase: Phase
    time_offset_ms: float  # window end relative to grasp onset (first breakpoint)
    trial_id: str = ""


def phase_of_last_sample(seg: Segmentation, start: int, length: int) -> Phase:
    return Phase(seg.phase_of_sample(start + length - 1))


def label_windows(
    trial: EnvelopeTrial,
    seg: Segmentation,
    gesture: int,
    window_ms: float = DEFAULT_WINDOW_MS,
    step_ms: float = DEFAULT_STEP_MS,
) -> list[LabeledWindow]:
    """Window a trial and attach phase, label, and grasp-relative timing.

    Raises:
        DataError: gesture outside 1..13 or segmentation/trial mismatch.
    """
    if not (1 <= gesture <= NUM_GESTURES):
        raise DataError(f"gesture label must be in 1..{NUM_GESTURES}, got {gesture}")
    if seg.n_samples != trial.n_samples:
        raise DataError(
            f"segmentation covers {seg.n_samples} samples but trial {trial.trial_id!r} "
            f"has {trial.n_samples}"
        )
    b1_ms = seg.breakpoints_ms[0]
    out = []
    for window in window_iter(trial, window_ms, step_ms):
        phase = phase_of_last_sample(seg, window.start, window.length)
        out.append(
            LabeledWindow(
                features=extract_features(window),
                label=gesture if phase in MOTION_PHASES else REST_LABEL,
                phase=phase,
                time_offset_ms=window.end_time_ms - b1_ms,
                trial_id=trial.trial_id,
            )
        )
    return out


def build_training_set(
    windows: Iterable[LabeledWindow], strategy: TrainingStrategy
) -> tuple:
    """Stack the windows kept by a strategy into (X, y).

    Input order is preserved, so callers passing windows in (trial, window)
    order get deterministic rows. Returning-phase windows are always
    dropped regardless of strategy.

    Raises:
        DataError: nothing survives the phase filter.
    """
    kept = strategy.kept_phases
    rows = [w for w in windows if w.phase in kept]
    if not rows:
        raise DataError(f"no training rows left after phase filter for {strategy.value}")
    X = np.stack([w.features.values for w in rows]).astype(np.float64)
    y = np.asarray([w.label for w in rows], dtype=np.int64)
    return X, y
