"""Seeded synthetic sessions with ground-truth breakpoints.

Trials are built in envelope space: per-gesture grasp-phase mean vectors
with guaranteed pairwise separation, a reach phase that blends from the
rest mean toward the grasp mean (the pre-shape ramp), a mirrored return
phase, and additive Gaussian noise, with 50 ms linear crossfades at the
phase boundaries. The emitted "raw" signal amplitude-modulates band-limited
noise carriers with that envelope, so ingestion exercises the full
filter/rectify/normalize path instead of bypassing it.

Everything is a pure function of (config, rng); the same seed reproduces
sessions byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError
from .signal_pipeline import NUM_CHANNELS, SAMPLE_RATE_HZ, apply_filter, design_bandpass
from . import session_io


@dataclass
class SynthConfig:
    n_gestures: int = 13
    objects_per_gesture: int = 4
    trials_per_object: int = 6
    trial_length_s: float = 4.0
    sample_rate: float = SAMPLE_RATE_HZ
    channels: int = NUM_CHANNELS
    noise_sigma: float = 0.08
    pre_shape_ramp: bool = True
    constant_alpha: float = 0.3  # reach blend level when the ramp is off
    reach_range_s: tuple = (0.8, 1.4)
    grasp_range_s: tuple = (1.0, 1.6)
    return_range_s: tuple = (0.6, 1.2)
    min_rest_s: float = 0.3
    crossfade_ms: float = 50.0
    mean_separation_sigmas: float = 4.0
    rest_level_range: tuple = (0.02, 0.08)
    grasp_level_range: tuple = (0.15, 0.85)
    carrier_band_hz: tuple = (40.0, 500.0)
    carrier_order: int = 4
    lead_in_s: float = 1.0
    mvc_length_s: float = 3.0
    mvc_margin: float = 1.1  # MVC level relative to the session envelope maximum
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma <= 0:
            raise ConfigError("noise_sigma must be > 0")
        if self.n_gestures < 1 or self.objects_per_gesture < 1 or self.trials_per_object < 1:
            raise ConfigError("gesture/object/trial counts must be >= 1")
        shortest = self.reach_range_s[0] + self.grasp_range_s[0] + self.return_range_s[0]
        if shortest + self.min_rest_s > self.trial_length_s:
            raise ConfigError(
                "phase duration ranges cannot fit in the trial with the required rest"
            )

    @property
    def n_samples(self) -> int:
        return int(round(self.trial_length_s * self.sample_rate))

    @property
    def n_objects(self) -> int:
        return self.n_gestures * self.objects_per_gesture


@dataclass
class GestureTemplates:
    """Per-gesture grasp means plus the shared rest mean, in envelope space."""

    rest_mean: np.ndarray  # (channels,)
    grasp_means: np.ndarray  # (n_gestures, channels), row g-1 for gesture g
    ramp: bool
    constant_alpha: float

    def alpha(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        return s if self.ramp else np.full_like(s, self.constant_alpha)

    def reach_mean(self, gesture: int, s: np.ndarray) -> np.ndarray:
        """Mean at reach-time fraction s in [0, 1]: rest blending toward grasp."""
        a = self.alpha(np.clip(s, 0.0, 1.0))
        mu = self.grasp_means[gesture - 1]
        return self.rest_mean[:, None] + a[None, :] * (mu - self.rest_mean)[:, None]

    def return_mean(self, gesture: int, s: np.ndarray) -> np.ndarray:
        """Return mirrors reach reversed: starts grasp-like, decays to rest."""
        return self.reach_mean(gesture, 1.0 - np.asarray(s, dtype=np.float64))


def gen_templates(cfg: SynthConfig, rng: np.random.Generator) -> GestureTemplates:
    """Draw gesture templates with pairwise separation >= k * noise_sigma.

    Separation is enforced between every pair of grasp means and against
    the rest mean, by rejection sampling.

    Raises:
        DataError: separation unattainable at the requested count/scale.
    """
    min_sep = cfg.mean_separation_sigmas * cfg.noise_sigma
    rest = rng.uniform(*cfg.rest_level_range, size=cfg.channels)
    means = []
    attempts_left = 200 * cfg.n_gestures
    while len(means) < cfg.n_gestures:
        if attempts_left == 0:
            raise DataError(
                f"could not draw {cfg.n_gestures} grasp means with separation >= "
                f"{min_sep:.3g} in {cfg.channels} dims; widen grasp_level_range or "
                "lower noise_sigma"
            )
        attempts_left -= 1
        cand = rng.uniform(*cfg.grasp_level_range, size=cfg.channels)
        ok = np.linalg.norm(cand - rest) >= min_sep and all(
            np.linalg.norm(cand - m) >= min_sep for m in means
        )
        if ok:
            means.append(cand)
    return GestureTemplates(
        rest_mean=rest,
        grasp_means=np.stack(means),
        ramp=cfg.pre_shape_ramp,
        constant_alpha=cfg.constant_alpha,
    )


def draw_phase_durations(cfg: SynthConfig, rng: np.random.Generator) -> tuple:
    """(reach, grasp, return, rest) seconds; redrawn until rest >= min_rest_s."""
    while True:
        reach = rng.uniform(*cfg.reach_range_s)
        grasp = rng.uniform(*cfg.grasp_range_s)
        ret = rng.uniform(*cfg.return_range_s)
        rest = cfg.trial_length_s - reach - grasp - ret
        if rest >= cfg.min_rest_s:
            return reach, grasp, ret, rest


def build_template_curve(
    templates: GestureTemplates, gesture: int, breakpoints: tuple, n: int, cfg: SynthConfig
) -> np.ndarray:
    """Noise-free envelope template with crossfaded phase boundaries.

    breakpoints are the three native-sample boundaries; the crossfade blends
    the adjacent phase functions over a crossfade_ms window centered on
    each boundary, so the boundary itself stays the transition midpoint.
    """
    b1, b2, b3 = breakpoints
    t = np.arange(n)

    def reach_fn(tt):
        return templates.reach_mean(gesture, tt / b1)

    def grasp_fn(tt):
        return np.repeat(templates.grasp_means[gesture - 1][:, None], tt.size, axis=1)

    def return_fn(tt):
        return templates.return_mean(gesture, (tt - b2) / (b3 - b2))

    def rest_fn(tt):
        return np.repeat(templates.rest_mean[:, None], tt.size, axis=1)

    curve = np.empty((templates.rest_mean.size, n))
    curve[:, :b1] = reach_fn(t[:b1])
    curve[:, b1:b2] = grasp_fn(t[b1:b2])
    curve[:, b2:b3] = return_fn(t[b2:b3])
    curve[:, b3:] = rest_fn(t[b3:])

    half = int(round(cfg.crossfade_ms * cfg.sample_rate / 1000.0)) // 2
    if half > 0:
        for b, left_fn, right_fn in (
            (b1, reach_fn, grasp_fn),
            (b2, grasp_fn, return_fn),
            (b3, return_fn, rest_fn),
        ):
            lo = max(b - half, 0)
            hi = min(b + half, n)
            tt = t[lo:hi]
            w = (tt - (b - half)) / (2.0 * half)
            curve[:, lo:hi] = (1.0 - w) * left_fn(tt) + w * right_fn(tt)
    return curve


@dataclass
class SynthTrial:
    envelope: np.ndarray  # channels x n, >= 0
    breakpoints: tuple  # native sample indices (crossfade midpoints)
    gesture: int
    durations_s: tuple


def gen_envelope_trial(
    cfg: SynthConfig, templates: GestureTemplates, gesture: int, rng: np.random.Generator
) -> SynthTrial:
    """One envelope-space trial: template plus Gaussian noise, clamped at 0."""
    reach, grasp, ret, rest = draw_phase_durations(cfg, rng)
    fs = cfg.sample_rate
    b1 = int(round(reach * fs))
    b2 = b1 + int(round(grasp * fs))
    b3 = b2 + int(round(ret * fs))
    n = cfg.n_samples
    curve = build_template_curve(templates, gesture, (b1, b2, b3), n, cfg)
    env = np.maximum(curve + rng.normal(0.0, cfg.noise_sigma, size=curve.shape), 0.0)
    return SynthTrial(
        envelope=env, breakpoints=(b1, b2, b3), gesture=gesture, durations_s=(reach, grasp, ret, rest)
    )


def gen_segmented_series(
    rng: np.random.Generator,
    n_segments: int = 4,
    channels: int = NUM_CHANNELS,
    seg_len_range: tuple = (500, 2000),
    separation_sigmas: float = 3.0,
    sigma: float = 0.05,
    level_range: tuple = (0.2, 0.8),
) -> tuple:
    """Piecewise-stationary Gaussian series with sharp boundaries.

    Consecutive segment means are redrawn until they are at least
    separation_sigmas * sigma apart (Euclidean). Used as the ground-truth
    family for segmentation recovery and for the exhaustive-search oracle.

    Returns:
        (data, breakpoints): channels x N array (clamped at 0) and the
        n_segments - 1 true boundary indices.
    """
    lengths = [int(rng.integers(seg_len_range[0], seg_len_range[1] + 1)) for _ in range(n_segments)]
    means = []
    for _ in range(n_segments):
        while True:
            cand = rng.uniform(*level_range, size=channels)
            if not means or np.linalg.norm(cand - means[-1]) >= separation_sigmas * sigma:
                means.append(cand)
                break
    chunks = [
        mean[:, None] + rng.normal(0.0, sigma, size=(channels, m))
        for mean, m in zip(means, lengths)
    ]
    data = np.maximum(np.concatenate(chunks, axis=1), 0.0)
    breakpoints = tuple(np.cumsum(lengths)[:-1].tolist())
    return data, breakpoints


def _carriers(cfg: SynthConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance band-limited noise carriers, one per channel."""
    band = design_bandpass(
        cfg.carrier_band_hz[0], cfg.carrier_band_hz[1], cfg.carrier_order, cfg.sample_rate
    )
    noise = rng.standard_normal((cfg.channels, n))
    filtered = apply_filter(band, noise)
    return filtered / filtered.std(axis=1, keepdims=True)


def gen_session(
    cfg: SynthConfig,
    out_dir: Path | str,
    session_id: str = "s01cw",
    subject_id: str = "synth01",
    direction: str = "cw",
    rng: Optional[np.random.Generator] = None,
    provenance: Optional[dict] = None,
) -> Path:
    """Write one complete session directory and return its path.

    Layout: manifest.json, trials/<trial_id>.csv, mvc.csv, lead_in.csv,
    ground_truth.json. Object object_id uses gesture
    (object_id - 1) // objects_per_gesture + 1; trials appear in the
    manifest in recording order (object by object, trial 1..6).

    provenance (e.g. config hash and seed) is embedded in manifest.json and
    ground_truth.json; the CSVs stay schema-exact and carry none.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    out_dir = Path(out_dir)
    session_dir = out_dir / session_id
    trials_dir = session_dir / "trials"
    trials_dir.mkdir(parents=True, exist_ok=True)

    templates = gen_templates(cfg, rng)
    manifest_trials = []
    truth_trials = {}
    channel_max = np.zeros(cfg.channels)

    for object_id in range(1, cfg.n_objects + 1):
        gesture = (object_id - 1) // cfg.objects_per_gesture + 1
        for trial_index in range(1, cfg.trials_per_object + 1):
            trial = gen_envelope_trial(cfg, templates, gesture, rng)
            carrier = _carriers(cfg, trial.envelope.shape[1], rng)
            raw = trial.envelope * carrier
            trial_id = f"obj{object_id:02d}_t{trial_index}"
            trial_file = f"trials/{trial_id}.csv"
            session_io.write_raw_csv(session_dir / trial_file, raw, cfg.sample_rate)
            manifest_trials.append(
                {
                    "trial_file": trial_file,
                    "object_id": object_id,
                    "gesture_label": gesture,
                    "trial_index": trial_index,
                }
            )
            truth_trials[trial_id] = {
                "breakpoints": list(trial.breakpoints),
                "gesture": gesture,
                "object_id": object_id,
                "trial_index": trial_index,
                "durations_s": [float(d) for d in trial.durations_s],
            }
            channel_max = np.maximum(channel_max, trial.envelope.max(axis=1))

    n_lead = int(round(cfg.lead_in_s * cfg.sample_rate))
    lead_env = np.maximum(
        templates.rest_mean[:, None] + rng.normal(0.0, cfg.noise_sigma, (cfg.channels, n_lead)),
        0.0,
    )
    session_io.write_raw_csv(
        session_dir / "lead_in.csv", lead_env * _carriers(cfg, n_lead, rng), cfg.sample_rate
    )

    n_mvc = int(round(cfg.mvc_length_s * cfg.sample_rate))
    mvc_level = cfg.mvc_margin * channel_max
    session_io.write_raw_csv(
        session_dir / "mvc.csv", mvc_level[:, None] * _carriers(cfg, n_mvc, rng), cfg.sample_rate
    )

    session_io.write_manifest(
        session_dir / "manifest.json",
        subject_id=subject_id,
        session_id=session_id,
        direction=direction,
        sample_rate=cfg.sample_rate,
        trials=manifest_trials,
        provenance=provenance,
    )
    ground_truth = {
        "provenance": provenance or {},
        "session_id": session_id,
        "rest_mean": [float(v) for v in templates.rest_mean],
        "grasp_means": {
            str(g + 1): [float(v) for v in templates.grasp_means[g]]
            for g in range(cfg.n_gestures)
        },
        "pre_shape_ramp": cfg.pre_shape_ramp,
        "noise_sigma": cfg.noise_sigma,
        "trials": truth_trials,
    }
    with open(session_dir / "ground_truth.json", "w") as f:
        json.dump(ground_truth, f, indent=2, sort_keys=True)
    return session_dir
