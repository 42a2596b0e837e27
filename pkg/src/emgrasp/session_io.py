"""On-disk session formats: raw/MVC CSVs, manifests, caches, and dumps.

A session directory contains:
    manifest.json           subject/session metadata and the trial list
    trials/<trial_id>.csv   raw EMG, header t_s,ch01,...,ch12
    mvc.csv                 maximal-contraction recording, same shape
    lead_in.csv             optional resting recording preceding trial 1
    ground_truth.json       synthetic sessions only

Derived artifacts live under the output directory: an envelope cache
(.npz plus a .meta.json carrying cache version and input hashes) and
segments.json. Loaders validate schemas and name the offending file and
field in error messages.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from .errors import DataError
from .ggs import Segmentation
from .signal_pipeline import NUM_CHANNELS, MvcRecording, RawTrial
from .util import combined_hash, file_sha256, fmt_sig, round_sig

RAW_COLUMNS = ["t_s"] + [f"ch{i:02d}" for i in range(1, NUM_CHANNELS + 1)]
ENVELOPE_CACHE_VERSION = 1
SEGMENTS_SCHEMA_VERSION = 1


def write_raw_csv(path: Path | str, samples: np.ndarray, sample_rate: float):
    """Write a channels x N signal as t_s,ch01..ch12 rows."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[0] != NUM_CHANNELS:
        raise DataError(f"write_raw_csv: expected {NUM_CHANNELS} channels, got {samples.shape[0]}")
    n = samples.shape[1]
    data = {"t_s": np.arange(n) / sample_rate}
    for c in range(NUM_CHANNELS):
        data[RAW_COLUMNS[c + 1]] = samples[c]
    pd.DataFrame(data).to_csv(path, index=False, float_format="%.6f")


def read_raw_csv(path: Path | str) -> np.ndarray:
    """Read a raw CSV back into a channels x N float64 matrix."""
    try:
        df = pd.read_csv(path)
    except FileNotFoundError:
        raise DataError(f"{path}: file not found")
    except Exception as exc:  # malformed CSV
        raise DataError(f"{path}: cannot parse CSV ({exc})")
    if list(df.columns) != RAW_COLUMNS:
        raise DataError(
            f"{path}: expected columns {','.join(RAW_COLUMNS)}, got {','.join(df.columns)}"
        )
    if len(df) == 0:
        raise DataError(f"{path}: no samples")
    return df[RAW_COLUMNS[1:]].to_numpy(dtype=np.float64).T


@dataclass
class TrialMeta:
    trial_file: str
    object_id: int
    gesture_label: int
    trial_index: int

    @property
    def trial_id(self) -> str:
        return Path(self.trial_file).stem


@dataclass
class Manifest:
    subject_id: str
    session_id: str
    direction: str
    sample_rate: float
    trials: List[TrialMeta]

    def trial_meta_dicts(self) -> List[dict]:
        return [
            {
                "trial_id": t.trial_id,
                "object_id": t.object_id,
                "gesture_label": t.gesture_label,
                "trial_index": t.trial_index,
            }
            for t in self.trials
        ]


def write_manifest(
    path: Path | str,
    subject_id: str,
    session_id: str,
    direction: str,
    sample_rate: float,
    trials: List[dict],
    provenance: Optional[dict] = None,
):
    payload = {
        "subject_id": subject_id,
        "session_id": session_id,
        "direction": direction,
        "sample_rate": sample_rate,
        "trials": trials,
    }
    if provenance:
        payload["provenance"] = provenance
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)


def load_manifest(session_dir: Path | str) -> Manifest:
    """Load and validate manifest.json, naming any missing field.

    Raises:
        DataError: missing file, missing field, or bad direction value.
    """
    path = Path(session_dir) / "manifest.json"
    if not path.exists():
        raise DataError(f"{path}: manifest not found")
    with open(path) as f:
        payload = json.load(f)
    for fieldname in ("subject_id", "session_id", "direction", "trials"):
        if fieldname not in payload:
            raise DataError(f"{path}: missing field '{fieldname}'")
    if payload["direction"] not in ("cw", "ccw"):
        raise DataError(f"{path}: field 'direction' must be 'cw' or 'ccw'")
    trials = []
    for i, entry in enumerate(payload["trials"]):
        for fieldname in ("trial_file", "object_id", "gesture_label", "trial_index"):
            if fieldname not in entry:
                raise DataError(f"{path}: trials[{i}] missing field '{fieldname}'")
        trials.append(
            TrialMeta(
                trial_file=entry["trial_file"],
                object_id=int(entry["object_id"]),
                gesture_label=int(entry["gesture_label"]),
                trial_index=int(entry["trial_index"]),
            )
        )
    return Manifest(
        subject_id=payload["subject_id"],
        session_id=payload["session_id"],
        direction=payload["direction"],
        sample_rate=float(payload.get("sample_rate", 1562.5)),
        trials=trials,
    )


def load_raw_trial(session_dir: Path | str, meta: TrialMeta, manifest: Manifest) -> RawTrial:
    samples = read_raw_csv(Path(session_dir) / meta.trial_file)
    return RawTrial(
        samples=samples,
        sample_rate=manifest.sample_rate,
        gesture=meta.gesture_label,
        object_id=meta.object_id,
        trial_index=meta.trial_index,
        session_id=manifest.session_id,
        subject_id=manifest.subject_id,
        trial_id=meta.trial_id,
    )


def load_mvc(session_dir: Path | str, sample_rate: float) -> MvcRecording:
    path = Path(session_dir) / "mvc.csv"
    if not path.exists():
        raise DataError(f"{path}: MVC recording not found")
    return MvcRecording(samples=read_raw_csv(path), sample_rate=sample_rate)


def load_lead_in(session_dir: Path | str) -> Optional[np.ndarray]:
    path = Path(session_dir) / "lead_in.csv"
    if not path.exists():
        return None
    return read_raw_csv(path)


def load_ground_truth(session_dir: Path | str) -> dict:
    path = Path(session_dir) / "ground_truth.json"
    if not path.exists():
        raise DataError(f"{path}: ground truth not found")
    with open(path) as f:
        return json.load(f)


def session_input_hash(session_dir: Path | str, manifest: Manifest) -> str:
    """Hash of the manifest plus every referenced input file, in order."""
    session_dir = Path(session_dir)
    parts = [file_sha256(session_dir / "manifest.json")]
    for name in ("mvc.csv", "lead_in.csv"):
        p = session_dir / name
        if p.exists():
            parts.append(file_sha256(p))
    parts.extend(file_sha256(session_dir / t.trial_file) for t in manifest.trials)
    return combined_hash(parts)


def list_sessions(data_dir: Path | str) -> List[Path]:
    """Session directories directly under data_dir (those with a manifest)."""
    root = Path(data_dir)
    if not root.exists():
        raise DataError(f"{root}: data directory not found")
    return sorted(p for p in root.iterdir() if (p / "manifest.json").exists())


def envelope_cache_paths(out_dir: Path | str, session_id: str) -> tuple:
    base = Path(out_dir) / "envelopes"
    return base / f"{session_id}.npz", base / f"{session_id}.meta.json"


def save_envelope_cache(
    out_dir: Path | str,
    session_id: str,
    envelopes: Dict[str, np.ndarray],
    mvc_env_max: np.ndarray,
    lead_in_env: Optional[np.ndarray],
    meta: dict,
):
    npz_path, meta_path = envelope_cache_paths(out_dir, session_id)
    npz_path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {f"trial::{tid}": arr for tid, arr in envelopes.items()}
    arrays["mvc_env_max"] = np.asarray(mvc_env_max)
    if lead_in_env is not None:
        arrays["lead_in"] = np.asarray(lead_in_env)
    np.savez(npz_path, **arrays)
    with open(meta_path, "w") as f:
        json.dump({"cache_version": ENVELOPE_CACHE_VERSION, **meta}, f, indent=2, sort_keys=True)


def load_envelope_cache(out_dir: Path | str, session_id: str) -> tuple:
    """Returns (envelopes, mvc_env_max, lead_in or None, meta).

    Raises:
        DataError: cache missing (run the preprocess stage first) or
            written by an incompatible cache version.
    """
    npz_path, meta_path = envelope_cache_paths(out_dir, session_id)
    if not npz_path.exists() or not meta_path.exists():
        raise DataError(
            f"envelope cache for session '{session_id}' not found at {npz_path}; "
            "run the preprocess stage first"
        )
    with open(meta_path) as f:
        meta = json.load(f)
    if meta.get("cache_version") != ENVELOPE_CACHE_VERSION:
        raise DataError(
            f"{meta_path}: cache_version {meta.get('cache_version')!r} is not "
            f"{ENVELOPE_CACHE_VERSION}; rebuild with the preprocess stage"
        )
    with np.load(npz_path) as payload:
        envelopes = {
            key[len("trial::") :]: payload[key] for key in payload.files if key.startswith("trial::")
        }
        mvc_env_max = payload["mvc_env_max"]
        lead_in = payload["lead_in"] if "lead_in" in payload.files else None
    return envelopes, mvc_env_max, lead_in, meta


def segments_path(out_dir: Path | str, session_id: str) -> Path:
    return Path(out_dir) / "segments" / f"{session_id}.json"


def write_segments(out_dir: Path | str, session_id: str, segs: Dict[str, Segmentation], meta: dict):
    path = segments_path(out_dir, session_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    trials = {}
    for tid in sorted(segs):
        seg = segs[tid]
        b1, b2, b3 = seg.breakpoints
        b1_ms, b2_ms, b3_ms = seg.breakpoints_ms
        trials[tid] = {
            "b1": int(b1),
            "b2": int(b2),
            "b3": int(b3),
            "b1_ms": round_sig(b1_ms),
            "b2_ms": round_sig(b2_ms),
            "b3_ms": round_sig(b3_ms),
            "objective": round_sig(seg.objective),
            "n_samples": seg.n_samples,
            "downsample_factor": seg.downsample_factor,
        }
    payload = {
        "schema_version": SEGMENTS_SCHEMA_VERSION,
        "session_id": session_id,
        **meta,
        "trials": trials,
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)


def load_segments(out_dir: Path | str, session_id: str, sample_rate: float) -> tuple:
    """Returns ({trial_id: Segmentation}, meta).

    Raises:
        DataError: file missing (run the segment stage first) or schema
            version mismatch.
    """
    path = segments_path(out_dir, session_id)
    if not path.exists():
        raise DataError(
            f"segments for session '{session_id}' not found at {path}; run the segment stage first"
        )
    with open(path) as f:
        payload = json.load(f)
    if payload.get("schema_version") != SEGMENTS_SCHEMA_VERSION:
        raise DataError(f"{path}: unsupported schema_version {payload.get('schema_version')!r}")
    segs = {}
    for tid, entry in payload["trials"].items():
        segs[tid] = Segmentation(
            breakpoints=(entry["b1"], entry["b2"], entry["b3"]),
            objective=entry["objective"],
            n_samples=entry["n_samples"],
            sample_rate=sample_rate,
            downsample_factor=entry["downsample_factor"],
        )
    meta = {k: v for k, v in payload.items() if k != "trials"}
    return segs, meta


def write_labeled_windows_csv(path: Path | str, rows, meta_line: Optional[str] = None):
    """Feature dump: trial_id,end_time_ms,f00..f35,label,phase."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["trial_id", "end_time_ms"] + [f"f{i:02d}" for i in range(36)] + ["label", "phase"]
    with open(path, "w") as f:
        if meta_line:
            f.write(f"# {meta_line}\n")
        f.write(",".join(header) + "\n")
        for w in rows:
            feats = ",".join(fmt_sig(v) for v in w.features.values)
            f.write(
                f"{w.trial_id},{fmt_sig(w.features.end_time_ms)},"
                f"{feats},{w.label},{w.phase.value}\n"
            )
