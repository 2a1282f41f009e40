"""Stage orchestration: checksum-stamped, resumable artifacts under a workdir.

Each stage owns one directory ``workdir/<stage>/`` holding its artifacts plus
a stamp recording the SHA-256 of every input, the relevant config slice, and
the hashes of the produced outputs. A stage is skipped when all three match,
so reruns with unchanged inputs are no-ops and any input or parameter change
invalidates exactly the stages downstream of it. Stamps carry no timestamps:
two runs from identical inputs produce byte-identical artifact trees.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import cleanse as cleanse_mod
from . import cluster as cluster_mod
from . import combine as combine_mod
from . import evalkit
from . import genre as genre_mod
from . import manifest as manifest_mod
from .config import PipelineConfig
from .embedding import read_embeddings
from .errors import ConfigError, StageInputError, UnknownVideoError

logger = logging.getLogger("corpusforge")

RUN_STAGES = (
    "filter",
    "segment",
    "cluster",
    "cleanse",
    "combine",
    "genre",
    "stats",
    "split",
    "trials",
)
EXTRA_STAGES = ("score", "eer", "genre-matrix")
ALL_STAGES = RUN_STAGES + EXTRA_STAGES

_STAMP_NAME = ".stamp.json"


@dataclass(frozen=True)
class StageResult:
    name: str
    skipped: bool
    outputs: tuple[Path, ...]


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _artifact(cfg: PipelineConfig, stage: str, name: str) -> Path:
    return cfg.paths.workdir / stage / name


def _check_inputs(stage: str, inputs: dict[str, Path]) -> dict[str, str]:
    hashes = {}
    for label, path in sorted(inputs.items()):
        if not path.is_file():
            raise StageInputError(f"stage {stage!r} needs {label}: {path} does not exist")
        hashes[label] = _sha256(path)
    return hashes


def _up_to_date(stage_dir: Path, input_hashes: dict, config_slice: dict) -> list[Path] | None:
    stamp_path = stage_dir / _STAMP_NAME
    if not stamp_path.is_file():
        return None
    try:
        stamp = json.loads(stamp_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return None
    if stamp.get("inputs") != input_hashes or stamp.get("config") != config_slice:
        return None
    outputs = []
    for name, digest in sorted(stamp.get("outputs", {}).items()):
        path = stage_dir / name
        if not path.is_file() or _sha256(path) != digest:
            return None
        outputs.append(path)
    return outputs


def _write_stamp(stage_dir: Path, input_hashes: dict, config_slice: dict, outputs: list[Path]):
    stamp = {
        "inputs": input_hashes,
        "config": config_slice,
        "outputs": {p.name: _sha256(p) for p in outputs},
    }
    (stage_dir / _STAMP_NAME).write_text(
        json.dumps(stamp, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _run_stage(stage: str, cfg: PipelineConfig, inputs: dict[str, Path], config_slice: dict, produce):
    """Shared skip/produce/stamp skeleton for every stage."""
    stage_dir = cfg.paths.workdir / stage
    stage_dir.mkdir(parents=True, exist_ok=True)
    input_hashes = _check_inputs(stage, inputs)
    cached = _up_to_date(stage_dir, input_hashes, config_slice)
    if cached is not None:
        logger.info("[%s] skipped (up-to-date)", stage)
        return StageResult(stage, True, tuple(cached))
    outputs = produce(stage_dir)
    _write_stamp(stage_dir, input_hashes, config_slice, outputs)
    logger.info("[%s] wrote %s", stage, ", ".join(p.name for p in outputs))
    return StageResult(stage, False, tuple(outputs))


def _face_table(cfg: PipelineConfig):
    if cfg.paths.face_emb is None:
        return None
    return read_embeddings(cfg.paths.face_emb, modality="face")


# --- stage implementations -----------------------------------------------------

def stage_filter(cfg: PipelineConfig) -> StageResult:
    inputs = {"videos": cfg.paths.videos}
    config_slice = {
        "min_height_px": cfg.quality.min_height_px,
        "min_upload_date": cfg.quality.min_upload_date.isoformat(),
    }

    def produce(stage_dir: Path):
        videos = manifest_mod.load_manifest(cfg.paths.videos, "videos")
        kept = manifest_mod.filter_videos(videos, cfg.quality)
        out = stage_dir / "videos.jsonl"
        manifest_mod.write_manifest(out, kept)
        logger.info("[filter] kept %d of %d videos", len(kept), len(videos))
        return [out]

    return _run_stage("filter", cfg, inputs, config_slice, produce)


def stage_segment(cfg: PipelineConfig) -> StageResult:
    inputs = {
        "videos": cfg.paths.videos,
        "filtered_videos": _artifact(cfg, "filter", "videos.jsonl"),
        "segments": cfg.paths.segments,
    }
    config_slice = {"min_utt_duration_s": cfg.min_utt_duration_s}

    def produce(stage_dir: Path):
        all_videos = manifest_mod.load_manifest(cfg.paths.videos, "videos")
        kept_videos = manifest_mod.load_manifest(inputs["filtered_videos"], "videos")
        segments = manifest_mod.load_manifest(cfg.paths.segments, "segments")
        known = {v.video_id for v in all_videos}
        kept_ids = {v.video_id for v in kept_videos}
        for seg in segments:
            if seg.video_id not in known:
                raise UnknownVideoError(seg.video_id)
        # segments of quality-filtered videos are dropped on purpose, not an error
        usable = [s for s in segments if s.video_id in kept_ids]
        utts = manifest_mod.apply_segmentation(kept_videos, usable, cfg.min_utt_duration_s)
        out = stage_dir / "utterances.jsonl"
        manifest_mod.write_manifest(out, utts)
        logger.info(
            "[segment] %d utterances from %d segments (%d on filtered videos)",
            len(utts),
            len(segments),
            len(segments) - len(usable),
        )
        return [out]

    return _run_stage("segment", cfg, inputs, config_slice, produce)


def stage_cluster(cfg: PipelineConfig) -> StageResult:
    inputs = {
        "utterances": _artifact(cfg, "segment", "utterances.jsonl"),
        "audio_emb": cfg.paths.audio_emb,
    }
    config_slice = {
        "eps": cfg.cluster.eps,
        "min_pts": cfg.cluster.min_pts,
        "assign_floor": cfg.cluster.assign_floor,
    }

    def produce(stage_dir: Path):
        utts = manifest_mod.load_manifest(inputs["utterances"], "utterances")
        audio = read_embeddings(cfg.paths.audio_emb, modality="audio")
        by_playlist: dict[str, list] = {}
        for u in utts:
            by_playlist.setdefault(u.playlist_id, []).append(u)
        playlists = sorted(by_playlist)

        def one(playlist_id: str):
            return cluster_mod.cluster_playlist(by_playlist[playlist_id], audio, cfg.cluster)

        if cfg.jobs > 1:
            with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
                per_playlist = list(pool.map(one, playlists))
        else:
            per_playlist = [one(p) for p in playlists]
        clusters = [c for group in per_playlist for c in group]
        out = stage_dir / "clusters.jsonl"
        cluster_mod.write_clusters(out, clusters)
        logger.info("[cluster] %d clusters over %d playlists", len(clusters), len(playlists))
        return [out]

    return _run_stage("cluster", cfg, inputs, config_slice, produce)


def stage_cleanse(cfg: PipelineConfig) -> StageResult:
    inputs = {
        "clusters": _artifact(cfg, "cluster", "clusters.jsonl"),
        "audio_emb": cfg.paths.audio_emb,
    }
    if cfg.paths.face_emb is not None:
        inputs["face_emb"] = cfg.paths.face_emb
    config_slice = {
        "threshold": cfg.cleanse.threshold,
        "direction": cfg.cleanse.direction,
        "no_face_penalty": cfg.cleanse.no_face_penalty,
    }

    def produce(stage_dir: Path):
        audio = read_embeddings(cfg.paths.audio_emb, modality="audio")
        face = _face_table(cfg)
        clusters = cluster_mod.load_clusters(inputs["clusters"], audio)
        # singleton clusters carry no peer evidence and cannot be scored
        scorable = [c for c in clusters if len(c.member_utts) >= 2]

        def one(c):
            return cleanse_mod.cleanse_cluster(
                c,
                audio,
                face,
                cfg.cleanse.threshold,
                no_face_penalty=cfg.cleanse.no_face_penalty,
                direction=cfg.cleanse.direction,
            )

        if cfg.jobs > 1:
            with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
                results = list(pool.map(one, scorable))
        else:
            results = [one(c) for c in scorable]

        survivors = []
        decisions = []
        for c, (kept, cluster_decisions) in zip(scorable, results):
            decisions.extend(cluster_decisions)
            if kept:
                survivors.append(
                    cluster_mod.build_cluster(c.cluster_id, c.playlist_id, sorted(kept), audio)
                )
        out_clusters = stage_dir / "clusters.jsonl"
        out_report = stage_dir / "cleanse_report.jsonl"
        cluster_mod.write_clusters(out_clusters, survivors)
        cleanse_mod.write_cleanse_report(out_report, decisions)
        removed = sum(1 for d in decisions if not d.kept)
        logger.info(
            "[cleanse] %d clusters in, %d out, %d utterances removed",
            len(clusters),
            len(survivors),
            removed,
        )
        return [out_clusters, out_report]

    return _run_stage("cleanse", cfg, inputs, config_slice, produce)


def stage_combine(cfg: PipelineConfig) -> StageResult:
    inputs = {
        "clusters": _artifact(cfg, "cleanse", "clusters.jsonl"),
        "utterances": _artifact(cfg, "segment", "utterances.jsonl"),
        "audio_emb": cfg.paths.audio_emb,
    }
    if cfg.paths.face_emb is not None:
        inputs["face_emb"] = cfg.paths.face_emb
    config_slice = {
        "audio_threshold": cfg.combine.audio_threshold,
        "face_threshold": cfg.combine.face_threshold,
        "require_both": cfg.combine.require_both,
    }

    def produce(stage_dir: Path):
        audio = read_embeddings(cfg.paths.audio_emb, modality="audio")
        face = _face_table(cfg)
        clusters = cluster_mod.load_clusters(inputs["clusters"], audio, face)
        candidates = combine_mod.find_merge_candidates(clusters, cfg.combine)
        identities = combine_mod.merge_speakers(clusters, candidates)
        utts = manifest_mod.load_manifest(inputs["utterances"], "utterances")
        labeled = combine_mod.apply_speaker_labels(utts, identities)
        out_speakers = stage_dir / "speakers.jsonl"
        out_utts = stage_dir / "utterances.jsonl"
        combine_mod.write_speakers(out_speakers, identities)
        manifest_mod.write_manifest(out_utts, labeled)
        logger.info(
            "[combine] %d clusters -> %d speakers via %d candidate pairs",
            len(clusters),
            len(identities),
            len(candidates),
        )
        return [out_speakers, out_utts]

    return _run_stage("combine", cfg, inputs, config_slice, produce)


def stage_genre(cfg: PipelineConfig) -> StageResult:
    inputs = {
        "utterances": _artifact(cfg, "combine", "utterances.jsonl"),
        "genre_probs": cfg.paths.genre_probs,
    }
    config_slice = {"min_conf": cfg.genre_min_conf}

    def produce(stage_dir: Path):
        utts = manifest_mod.load_manifest(inputs["utterances"], "utterances")
        probs = genre_mod.load_genre_probs(cfg.paths.genre_probs)
        labeled = genre_mod.assign_genres(utts, probs, cfg.genre_min_conf)
        out = stage_dir / "utterances.jsonl"
        manifest_mod.write_manifest(out, labeled)
        n_set = sum(1 for u in labeled if u.genre is not None)
        logger.info("[genre] assigned %d of %d utterances", n_set, len(labeled))
        return [out]

    return _run_stage("genre", cfg, inputs, config_slice, produce)


def stage_stats(cfg: PipelineConfig) -> StageResult:
    inputs = {"utterances": _artifact(cfg, "genre", "utterances.jsonl")}

    def produce(stage_dir: Path):
        utts = manifest_mod.load_manifest(inputs["utterances"], "utterances")
        stats = genre_mod.corpus_stats(utts)
        out = stage_dir / "stats.json"
        genre_mod.write_stats(out, stats)
        return [out]

    return _run_stage("stats", cfg, inputs, {}, produce)


def stage_split(cfg: PipelineConfig) -> StageResult:
    inputs = {"utterances": _artifact(cfg, "genre", "utterances.jsonl")}
    config_slice = {
        "test_speaker_count": cfg.split.test_speaker_count,
        "seed": cfg.split.seed,
    }

    def produce(stage_dir: Path):
        utts = manifest_mod.load_manifest(inputs["utterances"], "utterances")
        train, test = evalkit.split_speakers(utts, cfg.split)
        out = stage_dir / "split.json"
        out.write_text(
            json.dumps(
                {"train_speakers": train, "test_speakers": test},
                ensure_ascii=False,
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
        logger.info("[split] %d train / %d test speakers", len(train), len(test))
        return [out]

    return _run_stage("split", cfg, inputs, config_slice, produce)


def _test_pool(cfg: PipelineConfig) -> list:
    utts = manifest_mod.load_manifest(_artifact(cfg, "genre", "utterances.jsonl"), "utterances")
    split = json.loads(_artifact(cfg, "split", "split.json").read_text(encoding="utf-8"))
    test_set = set(split["test_speakers"])
    return [u for u in utts if u.speaker_id in test_set]


def stage_trials(cfg: PipelineConfig) -> StageResult:
    inputs = {
        "utterances": _artifact(cfg, "genre", "utterances.jsonl"),
        "split": _artifact(cfg, "split", "split.json"),
        "audio_emb": cfg.paths.audio_emb,
    }
    config_slice = {
        "n_easy_pairs": cfg.trials.n_easy_pairs,
        "n_hard_pairs": cfg.trials.n_hard_pairs,
        "cross_genre_frac": cfg.trials.cross_genre_frac,
        "hard_neg_percentile": cfg.trials.hard_neg_percentile,
        "seed": cfg.seed,
    }

    def produce(stage_dir: Path):
        pool = _test_pool(cfg)
        audio = read_embeddings(cfg.paths.audio_emb, modality="audio")
        easy = evalkit.generate_easy_trials(pool, cfg.trials.n_easy_pairs, seed=cfg.seed)
        genred = [u for u in pool if u.genre is not None]
        hard = evalkit.generate_hard_trials(
            genred,
            audio,
            cfg.trials.n_hard_pairs,
            cross_genre_frac=cfg.trials.cross_genre_frac,
            hard_neg_percentile=cfg.trials.hard_neg_percentile,
            seed=cfg.seed,
        )
        out_easy = stage_dir / "trials_easy.txt"
        out_hard = stage_dir / "trials_hard.txt"
        evalkit.write_trials(out_easy, easy)
        evalkit.write_trials(out_hard, hard)
        logger.info("[trials] %d easy, %d hard", len(easy), len(hard))
        return [out_easy, out_hard]

    return _run_stage("trials", cfg, inputs, config_slice, produce)


def stage_score(cfg: PipelineConfig) -> StageResult:
    inputs = {
        "trials_easy": _artifact(cfg, "trials", "trials_easy.txt"),
        "trials_hard": _artifact(cfg, "trials", "trials_hard.txt"),
        "audio_emb": cfg.paths.audio_emb,
    }

    def produce(stage_dir: Path):
        audio = read_embeddings(cfg.paths.audio_emb, modality="audio")
        outputs = []
        for suite in ("easy", "hard"):
            trials = evalkit.load_trials(inputs[f"trials_{suite}"])
            scored = evalkit.score_trials(trials, audio)
            out = stage_dir / f"scores_{suite}.txt"
            evalkit.write_scores(out, scored)
            outputs.append(out)
        return outputs

    return _run_stage("score", cfg, inputs, {}, produce)


def stage_eer(cfg: PipelineConfig) -> StageResult:
    inputs = {
        "trials_easy": _artifact(cfg, "trials", "trials_easy.txt"),
        "trials_hard": _artifact(cfg, "trials", "trials_hard.txt"),
        "scores_easy": _artifact(cfg, "score", "scores_easy.txt"),
        "scores_hard": _artifact(cfg, "score", "scores_hard.txt"),
    }

    def produce(stage_dir: Path):
        report = {}
        for suite in ("easy", "hard"):
            trials = evalkit.load_trials(inputs[f"trials_{suite}"])
            scores = evalkit.load_scores(inputs[f"scores_{suite}"])
            scored = []
            for trial in trials:
                key = (trial.enrol_utt, trial.test_utt)
                if key not in scores:
                    raise StageInputError(f"no score for trial pair {key}")
                scored.append((trial, scores[key]))
            result = evalkit.compute_eer(scored)
            report[suite] = {
                "eer": result.eer,
                "eer_percent": result.eer * 100.0,
                "threshold": result.threshold,
            }
            logger.info("[eer] %s: %.2f%%", suite, result.eer * 100.0)
        out = stage_dir / "eer.json"
        out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return [out]

    return _run_stage("eer", cfg, inputs, {}, produce)


def stage_genre_matrix(cfg: PipelineConfig) -> StageResult:
    inputs = {
        "utterances": _artifact(cfg, "genre", "utterances.jsonl"),
        "split": _artifact(cfg, "split", "split.json"),
        "audio_emb": cfg.paths.audio_emb,
    }
    config_slice = {"n_pairs_per_cell": cfg.matrix_pairs_per_cell, "seed": cfg.seed}

    def produce(stage_dir: Path):
        pool = _test_pool(cfg)
        audio = read_embeddings(cfg.paths.audio_emb, modality="audio")
        matrix = evalkit.genre_eer_matrix(pool, audio, cfg.matrix_pairs_per_cell, seed=cfg.seed)
        out = stage_dir / "genre_matrix.json"
        out.write_text(json.dumps(matrix, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return [out]

    return _run_stage("genre-matrix", cfg, inputs, config_slice, produce)


_STAGE_FUNCS = {
    "filter": stage_filter,
    "segment": stage_segment,
    "cluster": stage_cluster,
    "cleanse": stage_cleanse,
    "combine": stage_combine,
    "genre": stage_genre,
    "stats": stage_stats,
    "split": stage_split,
    "trials": stage_trials,
    "score": stage_score,
    "eer": stage_eer,
    "genre-matrix": stage_genre_matrix,
}


def run_stage(cfg: PipelineConfig, name: str) -> StageResult:
    if name not in _STAGE_FUNCS:
        raise ConfigError(f"unknown stage {name!r}; expected one of {ALL_STAGES}")
    return _STAGE_FUNCS[name](cfg)


def run_pipeline(cfg: PipelineConfig, stages: list[str] | None = None) -> list[StageResult]:
    """Run the requested stages (default: the full fixed order)."""
    if stages is None:
        selected = list(RUN_STAGES)
    else:
        unknown = [s for s in stages if s not in _STAGE_FUNCS]
        if unknown:
            raise ConfigError(f"unknown stages {unknown}; expected among {ALL_STAGES}")
        selected = [s for s in ALL_STAGES if s in set(stages)]
    return [run_stage(cfg, name) for name in selected]
