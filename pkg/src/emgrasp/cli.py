"""Command-line pipeline: synth | preprocess | segment | eval | report.

Configuration comes from a single JSON file plus flag overrides (flags
win). Every stage output names the config hash and seed that produced it;
intermediate caches carry the hash of their inputs and of the stage's
parameters and are rebuilt whenever either changes. Exit codes: 0 success,
2 configuration error, 3 data error, 4 internal invariant failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .annotation import TrainingStrategy, label_windows
from .errors import ConfigError, DataError, EmgraspError
from .evaluation import (
    EvalReport,
    SessionData,
    evaluate_sessions,
    prepare_session_data,
    write_confusion_csv,
    write_curves_csv,
)
from .extra_trees import TrainConfig
from .ggs import GgsConfig, ggs_segment
from .signal_pipeline import (
    EnvelopeTrial,
    apply_filter,
    design_bandpass,
    envelope,
    mvc_envelope_max,
    mvc_normalize,
)
from .synth import SynthConfig, gen_session
from . import session_io
from .util import config_hash, file_sha256, stable_seed_words

STRATEGY_FLAGS = {
    "reach": TrainingStrategy.REACH_REST,
    "grasp": TrainingStrategy.GRASP_REST,
    "all3": TrainingStrategy.REACH_GRASP_REST,
}

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


@dataclass
class PipelineParams:
    band_low_hz: float = 40.0
    band_high_hz: float = 500.0
    band_order: int = 4
    envelope_cutoff_hz: float = 6.0
    envelope_order: int = 2
    window_ms: float = 320.0
    step_ms: float = 40.0


@dataclass
class RunConfig:
    data_dir: Path = Path("data")
    out_dir: Path = Path("out")
    seed: Optional[int] = None
    pipeline: PipelineParams = field(default_factory=PipelineParams)
    ggs: GgsConfig = field(default_factory=GgsConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    strategies: List[TrainingStrategy] = field(
        default_factory=lambda: list(STRATEGY_FLAGS.values())
    )
    subjects: Optional[List[str]] = None
    synth: SynthConfig = field(default_factory=SynthConfig)
    synth_sessions: List[dict] = field(
        default_factory=lambda: [
            {"session_id": "s01cw", "subject_id": "synth01", "direction": "cw"}
        ]
    )
    dump_features: bool = False

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("a seed is required for this command (--seed or config 'seed')")
        return self.seed

    def param_dict(self) -> dict:
        """Parameters that define outputs; paths are deliberately excluded."""
        return {
            "seed": self.seed,
            "pipeline": asdict(self.pipeline),
            "ggs": asdict(self.ggs),
            "train": {k: v for k, v in asdict(self.train).items() if k != "seed"},
            "strategies": [s.value for s in self.strategies],
            "subjects": self.subjects,
            "synth": {k: v for k, v in asdict(self.synth).items() if k != "seed"},
            "synth_sessions": self.synth_sessions,
        }

    def full_hash(self) -> str:
        return config_hash(self.param_dict())

    def stage_hash(self, stage: str) -> str:
        params = self.param_dict()
        subset = {
            "synth": {"synth": params["synth"], "sessions": params["synth_sessions"]},
            "preprocess": {"pipeline": params["pipeline"]},
            "segment": {"pipeline": params["pipeline"], "ggs": params["ggs"]},
            "eval": params,
        }[stage]
        return config_hash(subset)


def _build_dataclass(cls, payload: dict, source: str, aliases: Optional[dict] = None):
    aliases = aliases or {}
    known = {f for f in cls.__dataclass_fields__}
    kwargs = {}
    for key, value in payload.items():
        name = aliases.get(key, key)
        if name not in known:
            raise ConfigError(f"{source}: unknown key '{key}'")
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}")


def load_config(path: Optional[str]) -> RunConfig:
    """Parse the JSON config file into a validated RunConfig."""
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p) as f:
            payload = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})")
    if not isinstance(payload, dict):
        raise ConfigError(f"{p}: top level must be an object")

    cfg = RunConfig()
    known_top = {
        "data_dir",
        "out_dir",
        "seed",
        "pipeline",
        "ggs",
        "train",
        "strategies",
        "subjects",
        "synth",
        "synth_sessions",
    }
    for key in payload:
        if key not in known_top:
            raise ConfigError(f"{p}: unknown key '{key}'")
    cfg.data_dir = Path(payload.get("data_dir", cfg.data_dir))
    cfg.out_dir = Path(payload.get("out_dir", cfg.out_dir))
    if "seed" in payload and payload["seed"] is not None:
        cfg.seed = _parse_seed(payload["seed"], str(p))
    if "pipeline" in payload:
        cfg.pipeline = _build_dataclass(PipelineParams, payload["pipeline"], f"{p}: pipeline")
    if "ggs" in payload:
        cfg.ggs = _build_dataclass(GgsConfig, payload["ggs"], f"{p}: ggs", aliases={"lambda": "lam"})
    if "train" in payload:
        cfg.train = _build_dataclass(TrainConfig, payload["train"], f"{p}: train")
    if "strategies" in payload:
        cfg.strategies = [_parse_strategy(s, str(p)) for s in payload["strategies"]]
    if "subjects" in payload:
        cfg.subjects = payload["subjects"]
    if "synth" in payload:
        synth_payload = dict(payload["synth"])
        for tuple_key in (
            "reach_range_s",
            "grasp_range_s",
            "return_range_s",
            "rest_level_range",
            "grasp_level_range",
            "carrier_band_hz",
        ):
            if tuple_key in synth_payload:
                synth_payload[tuple_key] = tuple(synth_payload[tuple_key])
        cfg.synth = _build_dataclass(SynthConfig, synth_payload, f"{p}: synth")
    if "synth_sessions" in payload:
        cfg.synth_sessions = payload["synth_sessions"]
    return cfg


def _parse_seed(value, source: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise ConfigError(f"{source}: seed must be a non-negative integer, got {value!r}")
    return value


def _parse_strategy(value: str, source: str) -> TrainingStrategy:
    if value in STRATEGY_FLAGS:
        return STRATEGY_FLAGS[value]
    try:
        return TrainingStrategy(value)
    except ValueError:
        raise ConfigError(
            f"{source}: unknown strategy {value!r}; use reach, grasp, or all3"
        )


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg.seed = _parse_seed(args.seed, "--seed")
    if getattr(args, "out", None) is not None:
        cfg.out_dir = Path(args.out)
    if getattr(args, "data_dir", None) is not None:
        cfg.data_dir = Path(args.data_dir)
    if getattr(args, "strategy", None):
        cfg.strategies = [_parse_strategy(s, "--strategy") for s in args.strategy]
    if getattr(args, "lam", None) is not None:
        cfg.ggs = _build_dataclass(
            GgsConfig, {**asdict(cfg.ggs), "lam": args.lam}, "--lambda"
        )
    if getattr(args, "window_ms", None) is not None:
        cfg.pipeline.window_ms = args.window_ms
    if getattr(args, "step_ms", None) is not None:
        cfg.pipeline.step_ms = args.step_ms
    if getattr(args, "dump_features", False):
        cfg.dump_features = True
    return cfg


def _seed_meta(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.full_hash(), "seed": cfg.seed}


def cmd_synth(cfg: RunConfig) -> List[Path]:
    """Generate the configured synthetic sessions under data_dir."""
    seed = cfg.require_seed()
    synth_cfg = _build_dataclass(
        SynthConfig, {**{k: v for k, v in asdict(cfg.synth).items() if k != "seed"}, "seed": seed},
        "synth",
    )
    out = []
    for sess in cfg.synth_sessions:
        for fieldname in ("session_id", "subject_id", "direction"):
            if fieldname not in sess:
                raise ConfigError(f"synth_sessions entry missing field '{fieldname}'")
        rng = np.random.default_rng(
            np.random.SeedSequence(stable_seed_words("synth", seed, sess["session_id"]))
        )
        path = gen_session(
            synth_cfg,
            cfg.data_dir,
            session_id=sess["session_id"],
            subject_id=sess["subject_id"],
            direction=sess["direction"],
            rng=rng,
            provenance=_seed_meta(cfg),
        )
        print(f"synth: wrote {path}")
        out.append(path)
    return out


def _selected_sessions(cfg: RunConfig) -> List[Path]:
    sessions = session_io.list_sessions(cfg.data_dir)
    if not sessions:
        raise DataError(f"no sessions with a manifest.json found under {cfg.data_dir}")
    if cfg.subjects is not None:
        keep = []
        for s in sessions:
            manifest = session_io.load_manifest(s)
            if manifest.subject_id in cfg.subjects:
                keep.append(s)
        sessions = keep
        if not sessions:
            raise DataError(f"subject filter {cfg.subjects} matches no session")
    return sessions


def cmd_preprocess(cfg: RunConfig) -> List[Path]:
    """Filter, rectify, smooth, and MVC-normalize every session into a cache."""
    stage_hash = cfg.stage_hash("preprocess")
    written = []
    for session_dir in _selected_sessions(cfg):
        manifest = session_io.load_manifest(session_dir)
        input_hash = session_io.session_input_hash(session_dir, manifest)
        npz_path, meta_path = session_io.envelope_cache_paths(cfg.out_dir, manifest.session_id)
        if npz_path.exists() and meta_path.exists():
            with open(meta_path) as f:
                meta = json.load(f)
            if (
                meta.get("cache_version") == session_io.ENVELOPE_CACHE_VERSION
                and meta.get("input_hash") == input_hash
                and meta.get("stage_config_hash") == stage_hash
            ):
                print(f"preprocess: {manifest.session_id} cache up to date")
                written.append(npz_path)
                continue

        fs = manifest.sample_rate
        band = design_bandpass(
            cfg.pipeline.band_low_hz, cfg.pipeline.band_high_hz, cfg.pipeline.band_order, fs
        )
        mvc = session_io.load_mvc(session_dir, fs)
        env_max = mvc_envelope_max(
            mvc, band, cfg.pipeline.envelope_cutoff_hz, cfg.pipeline.envelope_order
        )
        envelopes: Dict[str, np.ndarray] = {}
        for meta_t in manifest.trials:
            raw = session_io.load_raw_trial(session_dir, meta_t, manifest)
            env = envelope(
                apply_filter(band, raw.samples),
                fs,
                cfg.pipeline.envelope_cutoff_hz,
                cfg.pipeline.envelope_order,
            )
            envelopes[meta_t.trial_id] = mvc_normalize(env, env_max, fs, meta_t.trial_id).samples
        lead_raw = session_io.load_lead_in(session_dir)
        lead_env = None
        if lead_raw is not None:
            lead = envelope(
                apply_filter(band, lead_raw),
                fs,
                cfg.pipeline.envelope_cutoff_hz,
                cfg.pipeline.envelope_order,
            )
            lead_env = mvc_normalize(lead, env_max, fs, "lead_in").samples
        session_io.save_envelope_cache(
            cfg.out_dir,
            manifest.session_id,
            envelopes,
            env_max,
            lead_env,
            meta={
                **_seed_meta(cfg),
                "stage_config_hash": stage_hash,
                "input_hash": input_hash,
                "session_id": manifest.session_id,
                "subject_id": manifest.subject_id,
                "sample_rate": fs,
            },
        )
        print(f"preprocess: wrote envelope cache for {manifest.session_id}")
        written.append(npz_path)
    return written


def cmd_segment(cfg: RunConfig) -> List[Path]:
    """Run the Gaussian segmenter on every cached trial; write segments.json."""
    stage_hash = cfg.stage_hash("segment")
    written = []
    for session_dir in _selected_sessions(cfg):
        manifest = session_io.load_manifest(session_dir)
        sid = manifest.session_id
        envelopes, _, _, cache_meta = session_io.load_envelope_cache(cfg.out_dir, sid)
        npz_path, _ = session_io.envelope_cache_paths(cfg.out_dir, sid)
        input_hash = file_sha256(str(npz_path))[:16]

        seg_file = session_io.segments_path(cfg.out_dir, sid)
        if seg_file.exists():
            with open(seg_file) as f:
                existing = json.load(f)
            if (
                existing.get("stage_config_hash") == stage_hash
                and existing.get("input_hash") == input_hash
            ):
                print(f"segment: {sid} up to date")
                written.append(seg_file)
                continue

        fs = cache_meta["sample_rate"]
        segs = {}
        for meta_t in manifest.trials:
            trial = EnvelopeTrial(
                samples=envelopes[meta_t.trial_id], sample_rate=fs, trial_id=meta_t.trial_id
            )
            segs[meta_t.trial_id] = ggs_segment(trial, cfg.ggs)
        session_io.write_segments(
            cfg.out_dir,
            sid,
            segs,
            meta={**_seed_meta(cfg), "stage_config_hash": stage_hash, "input_hash": input_hash},
        )
        print(f"segment: wrote segments for {sid} ({len(segs)} trials)")
        written.append(seg_file)

        if cfg.dump_features:
            rows = []
            for meta_t in manifest.trials:
                trial = EnvelopeTrial(
                    samples=envelopes[meta_t.trial_id], sample_rate=fs, trial_id=meta_t.trial_id
                )
                rows.extend(
                    label_windows(
                        trial,
                        segs[meta_t.trial_id],
                        meta_t.gesture_label,
                        cfg.pipeline.window_ms,
                        cfg.pipeline.step_ms,
                    )
                )
            dump = Path(cfg.out_dir) / "features" / f"{sid}.csv"
            session_io.write_labeled_windows_csv(
                dump, rows, meta_line=f"config_hash={cfg.full_hash()} seed={cfg.seed}"
            )
            print(f"segment: dumped labeled windows to {dump}")
    return written


def _load_session_data(cfg: RunConfig, session_dir: Path) -> SessionData:
    manifest = session_io.load_manifest(session_dir)
    sid = manifest.session_id
    envelopes_raw, _, lead_env, cache_meta = session_io.load_envelope_cache(cfg.out_dir, sid)
    segs, _ = session_io.load_segments(cfg.out_dir, sid, cache_meta["sample_rate"])
    fs = cache_meta["sample_rate"]
    envelopes = {
        tid: EnvelopeTrial(samples=arr, sample_rate=fs, trial_id=tid)
        for tid, arr in envelopes_raw.items()
    }
    missing = [t.trial_id for t in manifest.trials if t.trial_id not in envelopes]
    if missing:
        raise DataError(f"session {sid}: envelope cache is missing trials {missing[:3]}...")
    missing = [t.trial_id for t in manifest.trials if t.trial_id not in segs]
    if missing:
        raise DataError(f"session {sid}: segments.json is missing trials {missing[:3]}...")
    return prepare_session_data(
        session_id=sid,
        subject_id=manifest.subject_id,
        trial_meta=manifest.trial_meta_dicts(),
        envelopes=envelopes,
        segments=segs,
        lead_in_env=lead_env,
        window_ms=cfg.pipeline.window_ms,
        step_ms=cfg.pipeline.step_ms,
    )


def cmd_eval(cfg: RunConfig) -> EvalReport:
    """Fold, train, and score every strategy; emit curves/metrics/confusion."""
    seed = cfg.require_seed()
    sessions = [_load_session_data(cfg, d) for d in _selected_sessions(cfg)]
    report = evaluate_sessions(sessions, cfg.strategies, cfg.train, seed)

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta_line = f"config_hash={cfg.full_hash()} seed={seed}"
    for name, result in sorted(report.strategies.items()):
        write_curves_csv(out_dir / f"curves_{name}.csv", result.curves, meta_line)
        write_confusion_csv(
            out_dir / f"confusion_{name}.csv",
            result.metrics.confusion,
            result.metrics.confusion_support,
            meta_line,
        )
    payload = {
        "schema_version": 1,
        "config_hash": cfg.full_hash(),
        "stage_config_hash": cfg.stage_hash("eval"),
        **report.to_dict(),
    }
    with open(out_dir / "metrics.json", "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
    print(f"eval: wrote metrics.json and per-strategy curves/confusion under {out_dir}")
    return report


def cmd_report(cfg: RunConfig) -> Path:
    """Render a markdown summary from metrics.json."""
    out_dir = Path(cfg.out_dir)
    metrics_path = out_dir / "metrics.json"
    if not metrics_path.exists():
        raise DataError(f"{metrics_path}: not found; run the eval stage first")
    with open(metrics_path) as f:
        metrics = json.load(f)

    lines = [
        "# Grasp-intent evaluation summary",
        "",
        f"- config_hash: `{metrics.get('config_hash')}`",
        f"- seed: {metrics.get('seed')}",
        "",
        "## Strategy summary",
        "",
        "| Training phases | t_i (ms) | d_p | Prob. peak |",
        "|---|---|---|---|",
    ]
    pretty = {
        "reach_rest": "Reach + Rest",
        "grasp_rest": "Grasp + Rest",
        "reach_grasp_rest": "Reach + Grasp + Rest",
    }
    order = ["reach_rest", "grasp_rest", "reach_grasp_rest"]
    strategies = metrics.get("strategies", {})
    def cell(v, fmt="{:.3f}"):
        return "n/a" if v is None else fmt.format(v)

    for name in [n for n in order if n in strategies] + sorted(
        set(strategies) - set(order)
    ):
        m = strategies[name]["combined"]
        t_i_txt = cell(m["t_i_ms"], "{:.0f}")
        if m["t_i_flag"] != "crossing":
            t_i_txt += f" ({m['t_i_flag']})"
        lines.append(
            f"| {pretty.get(name, name)} | {t_i_txt} | {cell(m['d_p'])} | {m['peak_phase']} |"
        )

    lines += ["", "## Accuracy by movement phase", ""]
    lines.append("| Strategy | reach | grasp | return | rest | return (first 200 ms) |")
    lines.append("|---|---|---|---|---|---|")
    for name in [n for n in order if n in strategies] + sorted(set(strategies) - set(order)):
        m = strategies[name]["combined"]
        acc = m["phase_accuracy"]
        lines.append(
            f"| {pretty.get(name, name)} | {cell(acc['reach'])} | {cell(acc['grasp'])} | "
            f"{cell(acc['return'])} | {cell(acc['rest'])} | {cell(m['return_early_accuracy'])} |"
        )

    lines += [
        "",
        "## Files",
        "",
        "- per-strategy probability/accuracy curves: `curves_<strategy>.csv`",
        "- pre-shape confusion matrices: `confusion_<strategy>.csv`",
        "- full metrics, fold plans, per-subject breakdowns: `metrics.json`",
        "",
    ]
    report_path = out_dir / "report.md"
    report_path.write_text("\n".join(lines))
    print(f"report: wrote {report_path}")
    return report_path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emgrasp",
        description="EMG grasp-intent pipeline: synthetic data, preprocessing, "
        "unsupervised phase segmentation, and time-aligned evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("synth", "generate seeded synthetic sessions"),
        ("preprocess", "build MVC-normalized envelope caches"),
        ("segment", "segment cached trials into movement phases"),
        ("eval", "train per fold/strategy and emit curves and metrics"),
        ("report", "render a markdown summary from metrics.json"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="run seed (overrides config)")
        p.add_argument(
            "--strategy",
            action="append",
            choices=sorted(STRATEGY_FLAGS),
            help="strategy to run (repeatable); default runs all three",
        )
        p.add_argument("--lambda", dest="lam", type=float, help="GGS covariance regularizer")
        p.add_argument("--window-ms", dest="window_ms", type=float, help="window length in ms")
        p.add_argument("--step-ms", dest="step_ms", type=float, help="window step in ms")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--data-dir", dest="data_dir", help="session data directory")
        if name == "segment":
            p.add_argument(
                "--dump-features",
                action="store_true",
                help="also dump labeled windows per session under out/features/",
            )
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "segment": cmd_segment,
    "eval": cmd_eval,
    "report": cmd_report,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = apply_overrides(load_config(args.config), args)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EmgraspError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - map anything unexpected to exit 4
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
