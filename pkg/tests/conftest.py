import numpy as np
import pytest

from emgrasp.signal_pipeline import SAMPLE_RATE_HZ, EnvelopeTrial, apply_filter


def probe_gain_db(coeffs, freq_hz, sample_rate, seconds=4.0, settle_s=2.0):
    """Steady-state gain of a filter at one frequency via a long sine probe."""
    t = np.arange(int(seconds * sample_rate)) / sample_rate
    y = apply_filter(coeffs, np.sin(2 * np.pi * freq_hz * t))
    tail = y[int(settle_s * sample_rate) :]
    amplitude = np.sqrt(2.0 * np.mean(tail**2))
    return 20.0 * np.log10(amplitude)


def trial_from_array(samples, trial_id="trial", sample_rate=SAMPLE_RATE_HZ):
    return EnvelopeTrial(samples=np.asarray(samples, dtype=float), sample_rate=sample_rate, trial_id=trial_id)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240613)
