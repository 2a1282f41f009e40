"""Pipeline configuration: one TOML file, one section per stage.

Every constant the pipeline depends on is surfaced here; nothing is
hard-coded in the stages. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cleanse import DEFAULT_NO_FACE_PENALTY, DEFAULT_THRESHOLD, DIRECTIONS
from .cluster import ClusterParams
from .combine import MergeParams
from .errors import ConfigError
from .evalkit import SplitSpec
from .manifest import DEFAULT_MIN_UTT_DURATION_S, QualityPolicy


@dataclass(frozen=True)
class PathsConfig:
    videos: Path
    segments: Path
    audio_emb: Path
    genre_probs: Path
    workdir: Path
    face_emb: Path | None = None


@dataclass(frozen=True)
class CleanseConfig:
    threshold: float = DEFAULT_THRESHOLD
    direction: str = "similarity"
    no_face_penalty: float = DEFAULT_NO_FACE_PENALTY


@dataclass(frozen=True)
class TrialsConfig:
    n_easy_pairs: int = 1000
    n_hard_pairs: int = 1000
    cross_genre_frac: float = 0.2
    hard_neg_percentile: float = 0.95


@dataclass(frozen=True)
class PipelineConfig:
    paths: PathsConfig
    quality: QualityPolicy = field(default_factory=QualityPolicy)
    min_utt_duration_s: float = DEFAULT_MIN_UTT_DURATION_S
    cluster: ClusterParams = field(default_factory=ClusterParams)
    cleanse: CleanseConfig = field(default_factory=CleanseConfig)
    combine: MergeParams = field(default_factory=MergeParams)
    genre_min_conf: float = 0.0
    split: SplitSpec = field(default_factory=SplitSpec)
    trials: TrialsConfig = field(default_factory=TrialsConfig)
    matrix_pairs_per_cell: int = 200
    seed: int = 0
    jobs: int = 1


def _section(data: dict, name: str, allowed: set[str]) -> dict:
    section = data.pop(name, {})
    if not isinstance(section, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"[{name}] has unknown keys: {sorted(unknown)}")
    return section


def _positive_int(section: dict, key: str, default: int, where: str) -> int:
    value = section.get(key, default)
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ConfigError(f"{where}.{key} must be a positive integer, got {value!r}")
    return value


def _fraction(section: dict, key: str, default: float, where: str) -> float:
    value = section.get(key, default)
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not 0.0 <= value <= 1.0:
        raise ConfigError(f"{where}.{key} must be in [0, 1], got {value!r}")
    return float(value)


def load_config(
    path: str | Path,
    *,
    workdir: str | Path | None = None,
    seed: int | None = None,
    jobs: int | None = None,
) -> PipelineConfig:
    """Parse and validate a pipeline config; CLI flags may override basics."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    paths_raw = _section(
        data, "paths", {"videos", "segments", "audio_emb", "face_emb", "genre_probs", "workdir"}
    )
    base = path.parent
    missing = [k for k in ("videos", "segments", "audio_emb", "genre_probs", "workdir") if k not in paths_raw]
    if missing:
        raise ConfigError(f"[paths] missing keys: {missing}")

    def resolve(key: str) -> Path:
        return (base / str(paths_raw[key])).resolve()

    paths = PathsConfig(
        videos=resolve("videos"),
        segments=resolve("segments"),
        audio_emb=resolve("audio_emb"),
        genre_probs=resolve("genre_probs"),
        workdir=Path(workdir).resolve() if workdir is not None else resolve("workdir"),
        face_emb=resolve("face_emb") if "face_emb" in paths_raw else None,
    )
    for label in ("videos", "segments", "audio_emb", "genre_probs"):
        target = getattr(paths, label)
        if not target.is_file():
            raise ConfigError(f"[paths] {label} does not exist: {target}")
    if paths.face_emb is not None and not paths.face_emb.is_file():
        raise ConfigError(f"[paths] face_emb does not exist: {paths.face_emb}")

    quality_raw = _section(data, "quality", {"min_height_px", "min_upload_date"})
    raw_date = quality_raw.get("min_upload_date", "2018-01-01")
    if isinstance(raw_date, date):
        min_date = raw_date
    else:
        try:
            min_date = date.fromisoformat(str(raw_date))
        except ValueError:
            raise ConfigError(f"quality.min_upload_date {raw_date!r} is not ISO-8601") from None
    quality = QualityPolicy(
        min_height_px=_positive_int(quality_raw, "min_height_px", 480, "quality"),
        min_upload_date=min_date,
    )

    segment_raw = _section(data, "segment", {"min_utt_duration_s"})
    min_dur = segment_raw.get("min_utt_duration_s", DEFAULT_MIN_UTT_DURATION_S)
    if not isinstance(min_dur, (int, float)) or isinstance(min_dur, bool) or min_dur < 0:
        raise ConfigError(f"segment.min_utt_duration_s must be >= 0, got {min_dur!r}")

    cluster_raw = _section(data, "cluster", {"eps", "min_pts", "assign_floor"})
    cluster = ClusterParams(
        eps=float(cluster_raw.get("eps", 0.35)),
        min_pts=_positive_int(cluster_raw, "min_pts", 4, "cluster"),
        assign_floor=_fraction(cluster_raw, "assign_floor", 0.5, "cluster"),
    )

    cleanse_raw = _section(data, "cleanse", {"threshold", "direction", "no_face_penalty"})
    direction = cleanse_raw.get("direction", "similarity")
    if direction not in DIRECTIONS:
        raise ConfigError(f"cleanse.direction must be one of {DIRECTIONS}, got {direction!r}")
    threshold = cleanse_raw.get("threshold", DEFAULT_THRESHOLD)
    if not isinstance(threshold, (int, float)) or isinstance(threshold, bool) or not 0.0 < threshold <= 1.0:
        raise ConfigError(f"cleanse.threshold must be in (0, 1], got {threshold!r}")
    cleanse = CleanseConfig(
        threshold=float(threshold),
        direction=direction,
        no_face_penalty=_fraction(cleanse_raw, "no_face_penalty", DEFAULT_NO_FACE_PENALTY, "cleanse"),
    )

    combine_raw = _section(data, "combine", {"audio_threshold", "face_threshold", "require_both"})
    require_both = combine_raw.get("require_both", True)
    if not isinstance(require_both, bool):
        raise ConfigError(f"combine.require_both must be a boolean, got {require_both!r}")
    combine = MergeParams(
        audio_threshold=float(combine_raw.get("audio_threshold", 0.75)),
        face_threshold=float(combine_raw.get("face_threshold", 0.75)),
        require_both=require_both,
    )

    genre_raw = _section(data, "genre", {"min_conf"})
    genre_min_conf = _fraction(genre_raw, "min_conf", 0.0, "genre")

    run_raw = _section(data, "run", {"seed", "jobs"})
    run_seed = run_raw.get("seed", 0)
    if not isinstance(run_seed, int) or isinstance(run_seed, bool) or run_seed < 0:
        raise ConfigError(f"run.seed must be a non-negative integer, got {run_seed!r}")
    if seed is not None:
        run_seed = seed
    run_jobs = _positive_int(run_raw, "jobs", 1, "run")
    if jobs is not None:
        run_jobs = jobs

    split_raw = _section(data, "split", {"test_speaker_count", "seed"})
    split_seed = split_raw.get("seed", run_seed)
    if not isinstance(split_seed, int) or isinstance(split_seed, bool) or split_seed < 0:
        raise ConfigError(f"split.seed must be a non-negative integer, got {split_seed!r}")
    split = SplitSpec(
        test_speaker_count=_positive_int(split_raw, "test_speaker_count", 150, "split"),
        seed=split_seed,
    )

    trials_raw = _section(
        data,
        "trials",
        {"n_easy_pairs", "n_hard_pairs", "cross_genre_frac", "hard_neg_percentile"},
    )
    trials = TrialsConfig(
        n_easy_pairs=_positive_int(trials_raw, "n_easy_pairs", 1000, "trials"),
        n_hard_pairs=_positive_int(trials_raw, "n_hard_pairs", 1000, "trials"),
        cross_genre_frac=_fraction(trials_raw, "cross_genre_frac", 0.2, "trials"),
        hard_neg_percentile=_fraction(trials_raw, "hard_neg_percentile", 0.95, "trials"),
    )

    matrix_raw = _section(data, "genre_matrix", {"n_pairs_per_cell"})
    matrix_pairs = _positive_int(matrix_raw, "n_pairs_per_cell", 200, "genre_matrix")

    if data:
        raise ConfigError(f"unknown top-level sections: {sorted(data)}")

    try:
        return PipelineConfig(
            paths=paths,
            quality=quality,
            min_utt_duration_s=float(min_dur),
            cluster=cluster,
            cleanse=cleanse,
            combine=combine,
            genre_min_conf=genre_min_conf,
            split=split,
            trials=trials,
            matrix_pairs_per_cell=matrix_pairs,
            seed=run_seed,
            jobs=run_jobs,
        )
    except ConfigError:
        raise
