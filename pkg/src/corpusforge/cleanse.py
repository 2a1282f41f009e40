"""Per-utterance cleansing: audio and face cohesion fused by harmonic mean.

An utterance's cohesion in one modality is its mean cosine similarity to all
other scored members of the cluster, clamped to [0, 1]. When both modalities
are available the two cohesions fuse by harmonic mean; an utterance without a
face embedding is judged on audio alone against a raised threshold. Scores are
always computed against the original membership: removals never cascade.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .cluster import SpeakerCluster
from .embedding import EmbeddingTable, unit_rows
from .errors import MissingEmbeddingError, SingletonClusterError

DEFAULT_THRESHOLD = 0.75
DEFAULT_NO_FACE_PENALTY = 0.05
DIRECTIONS = ("similarity", "distance")


@dataclass(frozen=True)
class CleanseDecision:
    utt_id: str
    audio_score: float
    face_score: float | None
    fused: float
    kept: bool
    threshold: float


def fuse_scores(audio: float, face: float) -> float:
    """Harmonic mean 2af/(a+f) of two scores in [0, 1]; 0 when both are 0."""
    if not 0.0 <= audio <= 1.0 or not 0.0 <= face <= 1.0:
        raise ValueError(f"scores must be in [0, 1], got {audio}, {face}")
    total = audio + face
    if total == 0.0:
        return 0.0
    return 2.0 * audio * face / total


def _cohesions(members: tuple[str, ...], table: EmbeddingTable) -> dict[str, float]:
    """Mean pairwise cosine of each member to the rest, clamped to [0, 1]."""
    unit = unit_rows(np.stack([table[m] for m in members]), members)
    sim = unit @ unit.T
    n = len(members)
    scores = (sim.sum(axis=1) - sim.diagonal()) / (n - 1)
    return {m: float(np.clip(scores[i], 0.0, 1.0)) for i, m in enumerate(members)}


def cohesion_score(utt_id: str, cluster: SpeakerCluster, table: EmbeddingTable) -> float:
    """Cohesion of one member against the other members present in the table."""
    if utt_id not in cluster.member_utts:
        raise MissingEmbeddingError(f"{utt_id} is not a member of {cluster.cluster_id}")
    if utt_id not in table:
        raise MissingEmbeddingError(f"{utt_id} missing from {table.modality} table")
    scored = tuple(m for m in cluster.member_utts if m in table)
    if len(scored) < 2:
        raise SingletonClusterError(
            f"{cluster.cluster_id}: fewer than 2 members with {table.modality} embeddings"
        )
    return _cohesions(scored, table)[utt_id]


def cleanse_cluster(
    cluster: SpeakerCluster,
    audio: EmbeddingTable,
    face: EmbeddingTable | None,
    threshold: float = DEFAULT_THRESHOLD,
    *,
    no_face_penalty: float = DEFAULT_NO_FACE_PENALTY,
    direction: str = "similarity",
) -> tuple[set[str], list[CleanseDecision]]:
    """Decide every member of a cluster; returns (kept ids, all decisions).

    The kept set empties if fewer than two members survive (the cluster is
    dropped entirely). Decisions are recorded for every examined member so a
    cleanse report can be emitted without recomputation.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    # canonical member order makes the recorded scores bitwise reproducible
    members = tuple(sorted(cluster.member_utts))
    if len(members) < 2:
        raise SingletonClusterError(f"{cluster.cluster_id} has fewer than 2 members")
    for m in members:
        if m not in audio:
            raise MissingEmbeddingError(f"{m} missing from audio table")

    audio_scores = _cohesions(members, audio)
    face_scores: dict[str, float] = {}
    if face is not None:
        with_face = tuple(m for m in members if m in face)
        if len(with_face) >= 2:
            face_scores = _cohesions(with_face, face)

    decisions: list[CleanseDecision] = []
    kept: set[str] = set()
    for m in members:
        a = audio_scores[m]
        f = face_scores.get(m)
        if f is not None:
            fused = fuse_scores(a, f)
            eff_threshold = threshold
        else:
            fused = a
            eff_threshold = min(threshold + no_face_penalty, 1.0)
        if direction == "similarity":
            keep = fused >= eff_threshold
        else:
            keep = fused <= eff_threshold
        decisions.append(CleanseDecision(m, a, f, fused, keep, eff_threshold))
        if keep:
            kept.add(m)
    if len(kept) < 2:
        kept = set()
    return kept, decisions


def write_cleanse_report(path: str | Path, decisions: list[CleanseDecision]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for d in decisions:
            fh.write(json.dumps(asdict(d), ensure_ascii=False))
            fh.write("\n")
