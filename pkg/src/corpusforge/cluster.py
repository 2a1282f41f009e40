"""Per-playlist speaker clustering over audio embeddings.

Density clustering runs in cosine-distance space (distance = 1 - cosine) with
fully pinned-down semantics so results are reproducible bit-for-bit:

* a core point has at least ``min_pts`` neighbors, itself included, within
  ``eps`` (closed ball);
* clusters are maximal density-connected sets;
* a border point joins the cluster of the first core point that reaches it,
  where points are visited in ascending id order and expansion queues are
  processed first-in-first-out over ascending-id neighbor lists;
* everything else is labeled -1 (noise).

A playlist is clustered in three stages: per-video density clustering, then
density grouping of the per-video cluster centroids across the playlist, then
assignment of every utterance (stage-one noise included) to the nearest
playlist-level centroid, discarding anything below ``assign_floor``.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .embedding import EmbeddingTable, centroid, unit_rows
from .errors import (
    ConfigError,
    EmptyTableError,
    InvariantViolationError,
    MissingEmbeddingError,
)
from .manifest import UtteranceRecord

NOISE = -1


@dataclass(frozen=True)
class ClusterParams:
    eps: float = 0.35
    min_pts: int = 4
    assign_floor: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.eps < 2.0:
            raise ConfigError(f"eps must be in (0, 2), got {self.eps}")
        if self.min_pts < 2:
            raise ConfigError(f"min_pts must be >= 2, got {self.min_pts}")
        if not 0.0 <= self.assign_floor <= 1.0:
            raise ConfigError(f"assign_floor must be in [0, 1], got {self.assign_floor}")


@dataclass(frozen=True, eq=False)
class SpeakerCluster:
    cluster_id: str
    playlist_id: str
    member_utts: tuple[str, ...]
    audio_centroid: np.ndarray
    face_centroid: np.ndarray | None = None


def _dbscan_labels(unit: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Label rows of a unit-normalized matrix; rows are visited in index order."""
    n = unit.shape[0]
    sim = unit @ unit.T
    # 1 - sim <= eps, kept in similarity space to avoid the subtraction
    adjacency = sim >= (1.0 - eps)
    neighbor_lists = [np.flatnonzero(adjacency[i]) for i in range(n)]
    labels = np.full(n, NOISE, dtype=np.int64)
    visited = np.zeros(n, dtype=bool)
    cluster = 0
    for i in range(n):
        if visited[i]:
            continue
        visited[i] = True
        if neighbor_lists[i].shape[0] < min_pts:
            continue  # provisional noise; a later core point may still claim it
        labels[i] = cluster
        queue = deque(int(j) for j in neighbor_lists[i])
        while queue:
            j = queue.popleft()
            if labels[j] == NOISE:
                labels[j] = cluster  # border attachment, first reach wins
            if visited[j]:
                continue
            visited[j] = True
            labels[j] = cluster
            if neighbor_lists[j].shape[0] >= min_pts:
                queue.extend(int(k) for k in neighbor_lists[j])
        cluster += 1
    return labels


def dbscan(table: EmbeddingTable, params: ClusterParams) -> dict[str, int]:
    """Cluster a table in cosine-distance space; returns id -> label (-1 = noise)."""
    if len(table) == 0:
        raise EmptyTableError("dbscan on an empty table")
    unit = unit_rows(table.matrix, table.ids)
    labels = _dbscan_labels(unit, params.eps, params.min_pts)
    return {utt_id: int(label) for utt_id, label in zip(table.ids, labels)}


def build_cluster(
    cluster_id: str,
    playlist_id: str,
    member_utts: tuple[str, ...] | list[str],
    audio: EmbeddingTable,
    face: EmbeddingTable | None = None,
) -> SpeakerCluster:
    """Assemble a cluster with centroids recomputed from its members."""
    members = tuple(sorted(member_utts))
    if not members:
        raise InvariantViolationError(cluster_id, "cluster must have at least one member")
    for utt_id in members:
        if utt_id not in audio:
            raise MissingEmbeddingError(f"{utt_id} missing from audio table")
    audio_centroid = centroid([audio[m] for m in members])
    face_centroid = None
    if face is not None:
        with_face = [m for m in members if m in face]
        if with_face:
            face_centroid = centroid([face[m] for m in with_face])
    return SpeakerCluster(cluster_id, playlist_id, members, audio_centroid, face_centroid)


def cluster_playlist(
    utts: list[UtteranceRecord],
    audio: EmbeddingTable,
    params: ClusterParams,
) -> list[SpeakerCluster]:
    """Group one playlist's utterances into speaker clusters.

    Zero clusters is a legal outcome (everything was noise or fell below the
    assignment floor).
    """
    if not utts:
        return []
    playlists = {u.playlist_id for u in utts}
    if len(playlists) != 1:
        raise InvariantViolationError(
            "<playlist>", f"cluster_playlist got utterances from playlists {sorted(playlists)}"
        )
    playlist_id = utts[0].playlist_id
    for u in utts:
        if u.utt_id not in audio:
            raise MissingEmbeddingError(f"{u.utt_id} missing from audio table")

    # stage 1: per-video clustering, one sub-centroid per non-noise cluster
    by_video: dict[str, list[str]] = {}
    for u in utts:
        by_video.setdefault(u.video_id, []).append(u.utt_id)
    sub_ids: list[str] = []
    sub_vecs: list[np.ndarray] = []
    for video_id in sorted(by_video):
        members = sorted(by_video[video_id])
        sub_table = audio.subset(members)
        labels = _dbscan_labels(unit_rows(sub_table.matrix, sub_table.ids), params.eps, params.min_pts)
        for label in sorted({int(l) for l in labels} - {NOISE}):
            ids = [sub_table.ids[i] for i in np.flatnonzero(labels == label)]
            sub_ids.append(f"{video_id}#{label}")
            sub_vecs.append(centroid([audio[m] for m in ids]))
    if not sub_ids:
        return []

    # stage 2: group sub-centroids across the playlist; min_pts=1 keeps every
    # sub-centroid (each already represents >= min_pts utterances), so this is
    # density-connected merging with no noise
    sub_matrix = np.stack(sub_vecs)
    group_labels = _dbscan_labels(sub_matrix, params.eps, min_pts=1)
    n_groups = int(group_labels.max()) + 1
    group_centroids = [
        centroid([sub_vecs[i] for i in np.flatnonzero(group_labels == g)]) for g in range(n_groups)
    ]

    # stage 3: assign every utterance (stage-1 noise included) to the nearest
    # playlist-level centroid, or discard below the floor
    centroid_matrix = np.stack(group_centroids)
    assigned: dict[int, list[str]] = {g: [] for g in range(n_groups)}
    for u in sorted(utts, key=lambda r: r.utt_id):
        vec = np.asarray(audio[u.utt_id], dtype=np.float64)
        vec = vec / np.linalg.norm(vec)
        sims = centroid_matrix @ vec
        best = int(np.argmax(sims))
        if sims[best] >= params.assign_floor:
            assigned[best].append(u.utt_id)

    clusters: list[SpeakerCluster] = []
    for g in range(n_groups):
        if not assigned[g]:
            continue
        clusters.append(
            build_cluster(f"{playlist_id}#{len(clusters)}", playlist_id, assigned[g], audio)
        )
    return clusters


def with_face_centroid(cluster: SpeakerCluster, face: EmbeddingTable | None) -> SpeakerCluster:
    """Return the cluster with its face centroid recomputed from members."""
    if face is None:
        return replace(cluster, face_centroid=None)
    with_face = [m for m in cluster.member_utts if m in face]
    if not with_face:
        return replace(cluster, face_centroid=None)
    return replace(cluster, face_centroid=centroid([face[m] for m in with_face]))


# --- clusters.jsonl -----------------------------------------------------------

def write_clusters(path: str | Path, clusters: list[SpeakerCluster]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for c in sorted(clusters, key=lambda c: c.cluster_id):
            obj = {
                "cluster_id": c.cluster_id,
                "playlist_id": c.playlist_id,
                "member_utts": list(c.member_utts),
                "size": len(c.member_utts),
            }
            fh.write(json.dumps(obj, ensure_ascii=False))
            fh.write("\n")


def load_clusters(
    path: str | Path,
    audio: EmbeddingTable,
    face: EmbeddingTable | None = None,
) -> list[SpeakerCluster]:
    """Rebuild clusters from clusters.jsonl, recomputing centroids from tables."""
    clusters = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            clusters.append(
                build_cluster(obj["cluster_id"], obj["playlist_id"], obj["member_utts"], audio, face)
            )
    return clusters
