"""Raw multichannel EMG to MVC-normalized envelopes and sliding windows.

Processing chain: causal Butterworth band-pass, full-wave rectification,
causal low-pass smoothing, per-channel normalization against the maximum
of the MVC envelope, then 320 ms windows advanced every 40 ms.

All filters run causally (single pass, zero initial state) so the same
code path is valid for real-time use. Samples are float64 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
from scipy import signal as sps

from .errors import DataError, DegenerateMvcError, FilterDesignError

NUM_CHANNELS = 12
SAMPLE_RATE_HZ = 1562.5

DEFAULT_BAND_LOW_HZ = 40.0
DEFAULT_BAND_HIGH_HZ = 500.0
DEFAULT_BAND_ORDER = 4
DEFAULT_ENVELOPE_CUTOFF_HZ = 6.0
DEFAULT_ENVELOPE_ORDER = 2
DEFAULT_WINDOW_MS = 320.0
DEFAULT_STEP_MS = 40.0


def _as_float_matrix(samples, name: str) -> np.ndarray:
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"{name}: expected a channels x samples matrix, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name}: samples contain non-finite values")
    return arr


@dataclass
class RawTrial:
    """One recorded trial: channels x samples in millivolts plus metadata."""

    samples: np.ndarray
    sample_rate: float = SAMPLE_RATE_HZ
    gesture: int = 0
    object_id: int = 0
    trial_index: int = 0
    session_id: str = ""
    subject_id: str = ""
    trial_id: str = ""

    def __post_init__(self):
        self.samples = _as_float_matrix(self.samples, "RawTrial")
        if self.samples.shape[0] != NUM_CHANNELS:
            raise DataError(
                f"RawTrial {self.trial_id!r}: expected {NUM_CHANNELS} channels, "
                f"got {self.samples.shape[0]}"
            )
        if self.samples.shape[1] < 1:
            raise DataError(f"RawTrial {self.trial_id!r}: empty trial")
        if self.sample_rate <= 0:
            raise DataError("RawTrial: sample_rate must be positive")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


@dataclass
class MvcRecording:
    """Per-channel maximal-contraction recording used for normalization."""

    samples: np.ndarray
    sample_rate: float = SAMPLE_RATE_HZ

    def __post_init__(self):
        self.samples = _as_float_matrix(self.samples, "MvcRecording")
        if self.samples.shape[0] != NUM_CHANNELS:
            raise DataError(
                f"MvcRecording: expected {NUM_CHANNELS} channels, got {self.samples.shape[0]}"
            )


@dataclass
class FilterCoefficients:
    """Cascaded second-order sections realizing a digital IIR filter."""

    sos: np.ndarray
    order: int
    band_hz: tuple
    sample_rate: float
    kind: str  # "bandpass" or "lowpass"

    def pole_moduli(self) -> np.ndarray:
        """Modulus of every pole, section by section."""
        mods = []
        for section in self.sos:
            poles = np.roots(section[3:6])
            mods.extend(np.abs(poles))
        return np.asarray(mods)


@dataclass
class EnvelopeTrial:
    """Normalized envelope signal: channels x samples, unitless, >= 0."""

    samples: np.ndarray
    sample_rate: float = SAMPLE_RATE_HZ
    trial_id: str = ""
    source_trial: Optional[str] = None

    def __post_init__(self):
        self.samples = _as_float_matrix(self.samples, "EnvelopeTrial")
        if np.any(self.samples < 0):
            raise DataError(f"EnvelopeTrial {self.trial_id!r}: negative envelope values")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


@dataclass
class WindowView:
    """A [start, start+length) slice of an envelope trial.

    end_time_ms is the exclusive window end, (start + length) / rate,
    i.e. the first window of a trial ends at exactly window_ms.
    """

    start: int
    length: int
    end_time_ms: float
    trial: EnvelopeTrial = field(repr=False)

    def __post_init__(self):
        if self.start < 0 or self.start + self.length > self.trial.n_samples:
            raise DataError(
                f"WindowView out of bounds: start={self.start} length={self.length} "
                f"n={self.trial.n_samples}"
            )

    @property
    def samples(self) -> np.ndarray:
        return self.trial.samples[:, self.start : self.start + self.length]


def design_bandpass(
    low_hz: float, high_hz: float, order: int, sample_rate: float
) -> FilterCoefficients:
    """Design a Butterworth band-pass filter as second-order sections.

    `order` is the total order of the band-pass filter (pole count), so it
    must be even; a fourth-order band-pass has two cascaded sections. The
    magnitude response is -3 dB at both band edges.

    Raises:
        FilterDesignError: band edges outside (0, Nyquist) or odd order.
    """
    nyquist = sample_rate / 2.0
    if order < 2 or order % 2 != 0:
        raise FilterDesignError(f"band-pass order must be even and >= 2, got {order}")
    if not (0.0 < low_hz < high_hz < nyquist):
        raise FilterDesignError(
            f"band edges must satisfy 0 < low < high < Nyquist ({nyquist} Hz), "
            f"got low={low_hz} high={high_hz}"
        )
    sos = sps.butter(order // 2, [low_hz, high_hz], btype="bandpass", fs=sample_rate, output="sos")
    coeffs = FilterCoefficients(
        sos=np.asarray(sos, dtype=np.float64),
        order=order,
        band_hz=(low_hz, high_hz),
        sample_rate=sample_rate,
        kind="bandpass",
    )
    if np.any(coeffs.pole_moduli() >= 1.0):
        raise FilterDesignError(
            f"designed band-pass ({low_hz}, {high_hz}) Hz at fs={sample_rate} is unstable"
        )
    return coeffs


def design_lowpass(cutoff_hz: float, order: int, sample_rate: float) -> FilterCoefficients:
    """Design a Butterworth low-pass filter (order = pole count, even)."""
    nyquist = sample_rate / 2.0
    if order < 2 or order % 2 != 0:
        raise FilterDesignError(f"low-pass order must be even and >= 2, got {order}")
    if not (0.0 < cutoff_hz < nyquist):
        raise FilterDesignError(
            f"low-pass cutoff must be in (0, Nyquist={nyquist}), got {cutoff_hz}"
        )
    sos = sps.butter(order, cutoff_hz, btype="lowpass", fs=sample_rate, output="sos")
    coeffs = FilterCoefficients(
        sos=np.asarray(sos, dtype=np.float64),
        order=order,
        band_hz=(0.0, cutoff_hz),
        sample_rate=sample_rate,
        kind="lowpass",
    )
    if np.any(coeffs.pole_moduli() >= 1.0):
        raise FilterDesignError(f"designed low-pass {cutoff_hz} Hz is unstable")
    return coeffs


def apply_filter(coeffs: FilterCoefficients, signal: np.ndarray) -> np.ndarray:
    """Causal single-pass filtering with zero initial state.

    Accepts a 1-D signal or a channels x samples matrix (filtered along the
    last axis). Output has the same shape as the input.
    """
    x = np.asarray(signal, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DataError("apply_filter: input contains non-finite values")
    return sps.sosfilt(coeffs.sos, x, axis=-1)


def envelope(
    signal: np.ndarray,
    sample_rate: float,
    lp_cutoff_hz: float = DEFAULT_ENVELOPE_CUTOFF_HZ,
    order: int = DEFAULT_ENVELOPE_ORDER,
) -> np.ndarray:
    """Linear envelope: full-wave rectify, causal low-pass, clamp at zero.

    The clamp removes small negative excursions caused by filter ringing,
    so the output is usable as a non-negative amplitude contour.
    """
    coeffs = design_lowpass(lp_cutoff_hz, order, sample_rate)
    smoothed = apply_filter(coeffs, np.abs(np.asarray(signal, dtype=np.float64)))
    return np.maximum(smoothed, 0.0)


def mvc_envelope_max(
    mvc: MvcRecording,
    band: FilterCoefficients,
    lp_cutoff_hz: float = DEFAULT_ENVELOPE_CUTOFF_HZ,
    lp_order: int = DEFAULT_ENVELOPE_ORDER,
) -> np.ndarray:
    """Per-channel maximum of the MVC recording's envelope (the normalizer)."""
    env = envelope(apply_filter(band, mvc.samples), mvc.sample_rate, lp_cutoff_hz, lp_order)
    return env.max(axis=1)


def mvc_normalize(
    env: np.ndarray,
    mvc_env_max: np.ndarray,
    sample_rate: float = SAMPLE_RATE_HZ,
    trial_id: str = "",
) -> EnvelopeTrial:
    """Divide each channel by its MVC envelope maximum.

    Values may exceed 1 when the experiment exceeds the MVC effort level;
    they are deliberately not clipped.

    Raises:
        DegenerateMvcError: some channel's normalizer is <= 0 (channel
            numbers in the message are 1-based, matching ch01..ch12).
    """
    env = _as_float_matrix(env, "mvc_normalize")
    scale = np.asarray(mvc_env_max, dtype=np.float64)
    if scale.shape != (env.shape[0],):
        raise DataError(
            f"mvc_normalize: expected {env.shape[0]} per-channel maxima, got shape {scale.shape}"
        )
    bad = np.flatnonzero(scale <= 0.0)
    if bad.size:
        channels = ", ".join(str(c + 1) for c in bad)
        raise DegenerateMvcError(
            f"MVC envelope maximum is not positive on channel {channels}; "
            "cannot normalize against it"
        )
    return EnvelopeTrial(
        samples=env / scale[:, None],
        sample_rate=sample_rate,
        trial_id=trial_id,
    )


def window_length_samples(window_ms: float, sample_rate: float) -> int:
    return int(round(window_ms * sample_rate / 1000.0))


def window_starts(
    n_samples: int,
    sample_rate: float,
    window_ms: float = DEFAULT_WINDOW_MS,
    step_ms: float = DEFAULT_STEP_MS,
) -> np.ndarray:
    """Start indices of all full windows.

    The step at 1562.5 Hz is 62.5 samples, so starts are round(i * step)
    rather than multiples of a fixed integer; this keeps the average
    cadence at exactly step_ms. Consecutive starts differ by 62 or 63.
    """
    if window_ms <= 0 or step_ms <= 0:
        raise DataError("window_ms and step_ms must be positive")
    length = window_length_samples(window_ms, sample_rate)
    step = step_ms * sample_rate / 1000.0
    starts = []
    i = 0
    while True:
        start = round(i * step)
        if start + length > n_samples:
            break
        starts.append(start)
        i += 1
    return np.asarray(starts, dtype=np.int64)


def window_iter(
    trial: EnvelopeTrial,
    window_ms: float = DEFAULT_WINDOW_MS,
    step_ms: float = DEFAULT_STEP_MS,
) -> Iterator[WindowView]:
    """Yield the trial's sliding windows in time order.

    A trial shorter than one window yields nothing (not an error).
    """
    length = window_length_samples(window_ms, trial.sample_rate)
    for start in window_starts(trial.n_samples, trial.sample_rate, window_ms, step_ms):
        yield WindowView(
            start=int(start),
            length=length,
            end_time_ms=(int(start) + length) * 1000.0 / trial.sample_rate,
            trial=trial,
        )
