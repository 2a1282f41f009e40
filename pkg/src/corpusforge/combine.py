"""Cross-playlist speaker combination via union-find over merge candidates.

Two clusters from different playlists become merge candidates when their audio
centroids are similar enough and, when both carry face centroids, the face
centroids agree as well. Candidates connect clusters into components; each
component becomes one speaker identity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from .cluster import SpeakerCluster, with_face_centroid
from .embedding import EmbeddingTable, cosine_similarity
from .errors import ConfigError, InvariantViolationError, UnknownClusterError
from .manifest import UtteranceRecord

SPEAKER_ID_WIDTH = 5


@dataclass(frozen=True)
class MergeParams:
    audio_threshold: float = 0.75
    face_threshold: float = 0.75
    require_both: bool = True

    def __post_init__(self):
        # values above 1 are legal sentinels meaning "never merge"
        if self.audio_threshold <= 0 or self.face_threshold <= 0:
            raise ConfigError("merge thresholds must be positive")


@dataclass(frozen=True)
class SpeakerIdentity:
    speaker_id: str
    source_clusters: tuple[str, ...]
    member_utts: tuple[str, ...]


class _UnionFind:
    def __init__(self, keys):
        self.parent = {k: k for k in keys}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # min-root keeps the representative independent of union order
            ra, rb = min(ra, rb), max(ra, rb)
            self.parent[rb] = ra


def find_merge_candidates(
    clusters: list[SpeakerCluster], params: MergeParams
) -> list[tuple[str, str]]:
    """All unordered cross-playlist cluster pairs passing the similarity gates."""
    ordered = sorted(clusters, key=lambda c: c.cluster_id)
    pairs: list[tuple[str, str]] = []
    for i, a in enumerate(ordered):
        for b in ordered[i + 1 :]:
            if a.playlist_id == b.playlist_id:
                continue
            if cosine_similarity(a.audio_centroid, b.audio_centroid) < params.audio_threshold:
                continue
            if a.face_centroid is not None and b.face_centroid is not None:
                if cosine_similarity(a.face_centroid, b.face_centroid) < params.face_threshold:
                    continue
            elif params.require_both:
                continue
            pairs.append((a.cluster_id, b.cluster_id))
    return pairs


def merge_speakers(
    clusters: list[SpeakerCluster], candidates: list[tuple[str, str]]
) -> list[SpeakerIdentity]:
    """Connected components of the candidate graph, one identity per component.

    Identities are numbered in ascending order of their smallest member
    utterance id, which makes the output independent of cluster and candidate
    ordering.
    """
    by_id = {c.cluster_id: c for c in clusters}
    uf = _UnionFind(sorted(by_id))
    for a, b in candidates:
        if a not in by_id:
            raise UnknownClusterError(a)
        if b not in by_id:
            raise UnknownClusterError(b)
        uf.union(a, b)

    components: dict[str, list[str]] = {}
    for cluster_id in sorted(by_id):
        components.setdefault(uf.find(cluster_id), []).append(cluster_id)

    drafts = []
    for member_cluster_ids in components.values():
        utts: list[str] = []
        for cid in member_cluster_ids:
            utts.extend(by_id[cid].member_utts)
        if len(set(utts)) != len(utts):
            raise InvariantViolationError(
                member_cluster_ids[0], "merged clusters share member utterances"
            )
        drafts.append((tuple(sorted(member_cluster_ids)), tuple(sorted(utts))))

    drafts.sort(key=lambda d: d[1][0])
    return [
        SpeakerIdentity(f"spk{i + 1:0{SPEAKER_ID_WIDTH}d}", source, members)
        for i, (source, members) in enumerate(drafts)
    ]


def attach_face_centroids(
    clusters: list[SpeakerCluster], face: EmbeddingTable | None
) -> list[SpeakerCluster]:
    return [with_face_centroid(c, face) for c in clusters]


def apply_speaker_labels(
    utts: list[UtteranceRecord], identities: list[SpeakerIdentity]
) -> list[UtteranceRecord]:
    """Label surviving utterances with their speaker id; drop the rest."""
    speaker_of: dict[str, str] = {}
    for ident in identities:
        for utt_id in ident.member_utts:
            speaker_of[utt_id] = ident.speaker_id
    return [
        replace(u, speaker_id=speaker_of[u.utt_id]) for u in utts if u.utt_id in speaker_of
    ]


def write_speakers(path: str | Path, identities: list[SpeakerIdentity]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for ident in identities:
            obj = {
                "speaker_id": ident.speaker_id,
                "source_clusters": list(ident.source_clusters),
                "n_utts": len(ident.member_utts),
            }
            fh.write(json.dumps(obj, ensure_ascii=False))
            fh.write("\n")
