"""Synthetic geometry and fixture builders shared across the test suite.

Everything is seeded and deterministic. The geometric constructions give hard
guarantees rather than probabilistic ones: points of a planted cluster stay
within a fixed angular cap of their center, so within-cluster and
cross-cluster cosine bounds hold by construction.
"""

from __future__ import annotations

import numpy as np

from corpusforge.embedding import EmbeddingTable
from corpusforge.manifest import UtteranceRecord

GENRE_ORDER = ("spontaneous", "reading", "singing")


def unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def cap_point(rng: np.random.Generator, center: np.ndarray, max_angle_rad: float) -> np.ndarray:
    """Random unit vector at most max_angle_rad away from a unit center."""
    c = unit(np.asarray(center, dtype=float))
    while True:
        g = rng.standard_normal(c.shape[0])
        g -= g.dot(c) * c
        norm = np.linalg.norm(g)
        if norm > 1e-9:
            break
    tangent = g / norm
    theta = rng.uniform(0.0, max_angle_rad)
    return np.cos(theta) * c + np.sin(theta) * tangent


def ring_centers(k: int, dim: int) -> list[np.ndarray]:
    """k unit vectors spread at equal angles in the first coordinate plane."""
    centers = []
    for i in range(k):
        phi = 2.0 * np.pi * i / k
        c = np.zeros(dim)
        c[0], c[1] = np.cos(phi), np.sin(phi)
        centers.append(c)
    return centers


def axis_centers(k: int, dim: int) -> list[np.ndarray]:
    assert k <= dim
    return [np.eye(dim)[i] for i in range(k)]


def planted_partition(
    seed: int = 1234,
    n_per_cluster: int = 200,
    n_noise: int = 30,
    dim: int = 16,
    max_angle_deg: float = 12.0,
) -> tuple[EmbeddingTable, dict[str, int]]:
    """Three spherical-cap clusters (within-cos >= 0.91, cross-cos <= 0.3) plus
    uniform noise; returns the table and ground-truth labels (-1 = noise)."""
    rng = np.random.default_rng(seed)
    angle = np.deg2rad(max_angle_deg)
    centers = ring_centers(3, dim)
    entries: dict[str, np.ndarray] = {}
    truth: dict[str, int] = {}
    for k, center in enumerate(centers):
        for i in range(n_per_cluster):
            name = f"c{k}_{i:04d}"
            entries[name] = cap_point(rng, center, angle)
            truth[name] = k
    for i in range(n_noise):
        name = f"noise_{i:04d}"
        entries[name] = unit(rng.standard_normal(dim))
        truth[name] = -1
    return EmbeddingTable(dim, entries), truth


def isolated_point_table(seed: int = 1234) -> tuple[EmbeddingTable, str]:
    """Planted partition plus one far-away point orthogonal to the cluster plane."""
    table, _ = planted_partition(seed=seed)
    outlier = np.zeros(table.dim)
    outlier[table.dim - 1] = 1.0
    entries = dict(table.items())
    entries["zz_isolated"] = outlier
    return EmbeddingTable(table.dim, entries), "zz_isolated"


def cleanse_fixture(
    seed: int = 77,
    n_inliers: int = 50,
    n_outliers: int = 10,
    dim: int = 16,
) -> tuple[list[str], dict[str, np.ndarray], dict[str, np.ndarray], set[str]]:
    """A contaminated cluster: inliers huddle around one center in both
    modalities, outliers sit near an orthogonal center. Returns (member ids,
    audio vectors, face vectors, outlier ids)."""
    rng = np.random.default_rng(seed)
    angle = np.deg2rad(5.0)
    inlier_audio, outlier_audio = axis_centers(2, dim)
    inlier_face, outlier_face = axis_centers(2, dim // 2)
    audio: dict[str, np.ndarray] = {}
    face: dict[str, np.ndarray] = {}
    outliers: set[str] = set()
    members = []
    for i in range(n_inliers):
        name = f"in_{i:03d}"
        members.append(name)
        audio[name] = cap_point(rng, inlier_audio, angle)
        face[name] = cap_point(rng, inlier_face, angle)
    for i in range(n_outliers):
        name = f"out_{i:03d}"
        members.append(name)
        outliers.add(name)
        audio[name] = cap_point(rng, outlier_audio, angle)
        face[name] = cap_point(rng, outlier_face, angle)
    return members, audio, face, outliers


def trial_pool(
    seed: int = 5,
    n_speakers: int = 10,
    utts_per_speaker: int = 10,
    dim: int = 16,
) -> tuple[list[UtteranceRecord], EmbeddingTable]:
    """Labeled pool for split/trial tests: orthogonal speaker centers, two
    genres per speaker, an embedding per utterance."""
    rng = np.random.default_rng(seed)
    centers = axis_centers(n_speakers, max(dim, n_speakers))
    angle = np.deg2rad(8.0)
    utts: list[UtteranceRecord] = []
    entries: dict[str, np.ndarray] = {}
    for s in range(n_speakers):
        pair = (GENRE_ORDER[s % 3], GENRE_ORDER[(s + 1) % 3])
        for i in range(utts_per_speaker):
            start = 2.0 * i
            utt_id = f"v{s:02d}/{round(start * 1000)}-{round((start + 1.5) * 1000)}"
            utts.append(
                UtteranceRecord(
                    utt_id=utt_id,
                    video_id=f"v{s:02d}",
                    playlist_id=f"pl{s:02d}",
                    start_s=start,
                    end_s=start + 1.5,
                    duration_s=1.5,
                    sample_rate_hz=16000,
                    speaker_id=f"spk{s:03d}",
                    genre=pair[i % 2],
                    genre_conf=0.9,
                )
            )
            entries[utt_id] = cap_point(rng, centers[s], angle)
    return utts, EmbeddingTable(max(dim, n_speakers), entries)


def imposter_pool(seed: int = 11) -> tuple[list[UtteranceRecord], EmbeddingTable, tuple[str, str]]:
    """Trial pool plus one planted cross-speaker pair at cosine ~0.95 against a
    background of near-orthogonal cross-speaker similarities."""
    utts, table = trial_pool(seed=seed, n_speakers=6, utts_per_speaker=5)
    entries = dict(table.items())
    a = utts[0].utt_id  # speaker spk000
    b = next(u.utt_id for u in utts if u.speaker_id == "spk001")
    va = np.asarray(entries[a], dtype=float)
    rng = np.random.default_rng(seed + 1)
    g = rng.standard_normal(va.shape[0])
    g -= g.dot(va) * va / va.dot(va)
    w = unit(g)
    entries[b] = 0.95 * unit(va) + np.sqrt(1 - 0.95**2) * w
    return utts, EmbeddingTable(table.dim, entries, "audio"), (a, b)


def genre_shift_pool(
    seed: int = 23,
    n_speakers: int = 8,
    utts_per_genre: int = 6,
    dim: int = 32,
) -> tuple[list[UtteranceRecord], EmbeddingTable]:
    """Pool where singing embeddings are dominated by per-utterance noise while
    the speech genres stay tight around the speaker centers, mirroring an
    encoder that never saw sung speech."""
    rng = np.random.default_rng(seed)
    centers = axis_centers(n_speakers, dim)
    angle = np.deg2rad(8.0)
    utts: list[UtteranceRecord] = []
    entries: dict[str, np.ndarray] = {}
    counter = 0
    for s in range(n_speakers):
        for genre in GENRE_ORDER:
            for _ in range(utts_per_genre):
                start = 3.0 * counter
                utt_id = f"g{s:02d}/{round(start * 1000)}-{round((start + 2) * 1000)}"
                counter += 1
                utts.append(
                    UtteranceRecord(
                        utt_id=utt_id,
                        video_id=f"g{s:02d}",
                        playlist_id=f"gpl{s:02d}",
                        start_s=start,
                        end_s=start + 2.0,
                        duration_s=2.0,
                        sample_rate_hz=16000,
                        speaker_id=f"spk{s:03d}",
                        genre=genre,
                        genre_conf=0.9,
                    )
                )
                if genre == "singing":
                    vec = unit(0.25 * centers[s] + 0.97 * unit(rng.standard_normal(dim)))
                else:
                    vec = cap_point(rng, centers[s], angle)
                entries[utt_id] = vec
    return utts, EmbeddingTable(dim, entries)


# --- corpus-level statistics fixture --------------------------------------------

# Per-genre utterance counts per duration bucket. Columns sum to the published
# bucket histogram; rows sum to the published per-genre utterance counts.
STATS_BUCKET_COUNTS = {
    "spontaneous": (35788, 77932, 17926, 14658, 4209),
    "reading": (8000, 16000, 4000, 3202, 500),
    "singing": (500, 2000, 1500, 1265, 500),
}
# Exact per-genre totals in seconds (hours * 3600).
STATS_GENRE_SECONDS = {
    "spontaneous": 748_152.0,
    "reading": 150_480.0,
    "singing": 42_876.0,
}
STATS_GENRE_SPEAKERS = {"spontaneous": 1261, "reading": 717, "singing": 545}
_BUCKET_EDGES = ((1.0, 2.0), (2.0, 5.0), (5.0, 10.0), (10.0, 20.0), (20.0, 40.0))


def _genre_speaker_pools() -> dict[str, list[str]]:
    """1,406 speakers assigned to genre subsets so that per-genre distinct
    counts and their 2,523 total match the published distribution."""
    sizes = {
        "spont_only": 511,
        "read_only": 50,
        "sing_only": 28,
        "spont_read": 300,
        "spont_sing": 150,
        "read_sing": 67,
        "all_three": 300,
    }
    pools: dict[str, list[str]] = {}
    cursor = 0
    for name, size in sizes.items():
        pools[name] = [f"s{cursor + i + 1:04d}" for i in range(size)]
        cursor += size
    assert cursor == 1406
    return {
        "spontaneous": pools["spont_only"] + pools["spont_read"] + pools["spont_sing"] + pools["all_three"],
        "reading": pools["read_only"] + pools["spont_read"] + pools["read_sing"] + pools["all_three"],
        "singing": pools["sing_only"] + pools["spont_sing"] + pools["read_sing"] + pools["all_three"],
    }


def stats_fixture_records() -> list[UtteranceRecord]:
    """187,980 utterances reproducing the published duration histogram, genre
    utterance counts, per-genre hours, and speaker-per-genre counts."""
    speaker_pools = _genre_speaker_pools()
    for genre, pool in speaker_pools.items():
        assert len(pool) == STATS_GENRE_SPEAKERS[genre]
    records: list[UtteranceRecord] = []
    seq = 0
    for genre in GENRE_ORDER:
        counts = STATS_BUCKET_COUNTS[genre]
        # put every utterance at its bucket floor, then spread the remaining
        # seconds bucket-by-bucket without leaving the bucket
        remaining = STATS_GENRE_SECONDS[genre] - sum(
            n * lo for n, (lo, _) in zip(counts, _BUCKET_EDGES)
        )
        assert remaining >= 0
        durations = []
        for n, (lo, hi) in zip(counts, _BUCKET_EDGES):
            cap = hi - lo - 1e-3
            take = min(remaining, n * cap)
            durations.append(lo + (take / n if n else 0.0))
            remaining -= take
        assert remaining < 1.0, f"{genre}: {remaining}s left over"
        speakers = speaker_pools[genre]
        spoken = 0
        for n, duration in zip(counts, durations):
            for _ in range(n):
                ms = round(duration * 1000)
                records.append(
                    UtteranceRecord(
                        utt_id=f"sv{seq:06d}/0-{ms}",
                        video_id=f"sv{seq:06d}",
                        playlist_id="stats",
                        start_s=0.0,
                        end_s=duration,
                        duration_s=duration,
                        sample_rate_hz=16000,
                        speaker_id=speakers[spoken % len(speakers)],
                        genre=genre,
                        genre_conf=1.0,
                    )
                )
                seq += 1
                spoken += 1
    assert len(records) == 187_980
    return records
