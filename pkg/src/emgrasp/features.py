"""Window features: RMS, MAV, and population variance per channel.

A 12-channel window maps to 36 values ordered [RMS ch1..ch12,
MAV ch1..ch12, VAR ch1..ch12]. The ordering is fixed and recorded in
trained-model metadata so serialized models stay portable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .signal_pipeline import NUM_CHANNELS, WindowView

FEATURE_BLOCKS = ("rms", "mav", "var")
NUM_FEATURES = len(FEATURE_BLOCKS) * NUM_CHANNELS


def feature_names(n_channels: int = NUM_CHANNELS) -> list[str]:
    """Names in storage order, e.g. rms_ch01 .. var_ch12."""
    return [f"{block}_ch{c + 1:02d}" for block in FEATURE_BLOCKS for c in range(n_channels)]


@dataclass
class FeatureVector:
    """36-dim feature vector with window end time and trial provenance."""

    values: np.ndarray
    end_time_ms: float
    trial_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)


def _features_from_array(x: np.ndarray) -> np.ndarray:
    # x: channels x T; returns the concatenated [rms, mav, var] blocks.
    mean_sq = np.mean(x * x, axis=-1)
    mean = np.mean(x, axis=-1)
    rms = np.sqrt(mean_sq)
    mav = np.mean(np.abs(x), axis=-1)
    var = np.maximum(mean_sq - mean * mean, 0.0)  # clamp fp negatives of size ~1e-18
    return np.concatenate([rms, mav, var], axis=-1)


def extract_features(window: WindowView) -> FeatureVector:
    """Compute RMS/MAV/VAR per channel over one window.

    VAR is the population variance mean(x^2) - mean(x)^2; this matches the
    identity VAR = RMS^2 - mean^2 exactly, which the tests rely on.

    Raises:
        DataError: window shorter than 2 samples (variance is meaningless).
    """
    if window.length < 2:
        raise DataError(f"extract_features: window length {window.length} < 2")
    x = window.samples
    if not np.all(np.isfinite(x)):
        raise DataError("extract_features: window contains non-finite values")
    return FeatureVector(
        values=_features_from_array(x),
        end_time_ms=window.end_time_ms,
        trial_id=window.trial.trial_id,
    )


def feature_matrix(samples: np.ndarray, starts: np.ndarray, length: int) -> np.ndarray:
    """Vectorized feature extraction for many windows of one signal.

    Equivalent to stacking extract_features over WindowViews with the same
    starts and length (asserted by tests); used on the hot path.

    Args:
        samples: channels x N signal.
        starts: window start indices, shape (n,).
        length: window length in samples (>= 2).

    Returns:
        (n, 36) float64 matrix in [rms, mav, var] block order.
    """
    if length < 2:
        raise DataError(f"feature_matrix: window length {length} < 2")
    samples = np.asarray(samples, dtype=np.float64)
    starts = np.asarray(starts, dtype=np.int64)
    if starts.size == 0:
        return np.empty((0, 3 * samples.shape[0]), dtype=np.float64)
    idx = starts[:, None] + np.arange(length)
    windows = samples[:, idx]  # channels x n x T
    mean_sq = np.mean(windows * windows, axis=2)
    mean = np.mean(windows, axis=2)
    rms = np.sqrt(mean_sq)
    mav = np.mean(np.abs(windows), axis=2)
    var = np.maximum(mean_sq - mean * mean, 0.0)
    return np.concatenate([rms.T, mav.T, var.T], axis=1)
