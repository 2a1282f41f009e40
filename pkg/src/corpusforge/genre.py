"""Genre assignment from classifier probabilities and corpus statistics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

from .errors import (
    DuplicateIdError,
    InvalidDistributionError,
    MalformedLineError,
    MissingProbsError,
)
from .manifest import GENRES, UtteranceRecord

PROB_SUM_TOL = 1e-3
# half-open [lo, hi) buckets; labels match the published convention
DURATION_BUCKETS = (
    ("<2", 0.0, 2.0),
    ("2-5", 2.0, 5.0),
    ("5-10", 5.0, 10.0),
    ("10-20", 10.0, 20.0),
    (">20", 20.0, math.inf),
)


@dataclass(frozen=True)
class GenreProbs:
    utt_id: str
    p_spontaneous: float
    p_reading: float
    p_singing: float

    def __post_init__(self):
        probs = (self.p_spontaneous, self.p_reading, self.p_singing)
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise InvalidDistributionError(f"{self.utt_id}: probabilities outside [0, 1]")
        if abs(sum(probs) - 1.0) > PROB_SUM_TOL:
            raise InvalidDistributionError(f"{self.utt_id}: probabilities sum to {sum(probs)}")


@dataclass(frozen=True)
class BucketStat:
    count: int
    proportion: float


@dataclass(frozen=True)
class GenreRow:
    n_speakers: int
    n_utts: int
    hours: float


@dataclass(frozen=True)
class CorpusTotals:
    n_speakers_sum: int
    n_utts: int
    hours: float


@dataclass(frozen=True)
class CorpusStats:
    duration_buckets: dict[str, BucketStat]
    genre_rows: dict[str, GenreRow]
    totals: CorpusTotals

    def to_json_dict(self) -> dict:
        return {
            "duration_buckets": {
                k: {"count": b.count, "proportion": b.proportion}
                for k, b in self.duration_buckets.items()
            },
            "genre_rows": {
                g: {"n_speakers": r.n_speakers, "n_utts": r.n_utts, "hours": r.hours}
                for g, r in self.genre_rows.items()
            },
            "totals": {
                "n_speakers_sum": self.totals.n_speakers_sum,
                "n_utts": self.totals.n_utts,
                "hours": self.totals.hours,
            },
        }


def load_genre_probs(path: str | Path) -> list[GenreProbs]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    rows: list[GenreProbs] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError:
                raise MalformedLineError(path, line_no, "invalid JSON") from None
            try:
                row = GenreProbs(
                    utt_id=obj["utt_id"],
                    p_spontaneous=float(obj["p_spontaneous"]),
                    p_reading=float(obj["p_reading"]),
                    p_singing=float(obj["p_singing"]),
                )
            except (KeyError, TypeError, ValueError):
                raise MalformedLineError(path, line_no, "missing or malformed field") from None
            if row.utt_id in seen:
                raise DuplicateIdError(f"{path}:{line_no}: duplicate utt_id {row.utt_id!r}")
            seen.add(row.utt_id)
            rows.append(row)
    return rows


def assign_genres(
    utts: list[UtteranceRecord],
    probs: Iterable[GenreProbs],
    min_conf: float = 0.0,
) -> list[UtteranceRecord]:
    """Set genre to the argmax class; ties break spontaneous > reading > singing.

    Utterances whose best probability falls below ``min_conf`` keep their genre
    unset. No other field changes.
    """
    by_id = {p.utt_id: p for p in probs}
    out: list[UtteranceRecord] = []
    for u in utts:
        row = by_id.get(u.utt_id)
        if row is None:
            raise MissingProbsError(u.utt_id)
        ranked = (row.p_spontaneous, row.p_reading, row.p_singing)
        best = max(range(3), key=lambda i: (ranked[i], -i))
        if ranked[best] < min_conf:
            out.append(replace(u, genre=None, genre_conf=None))
        else:
            out.append(replace(u, genre=GENRES[best], genre_conf=ranked[best]))
    return out


def corpus_stats(utts: list[UtteranceRecord]) -> CorpusStats:
    """Duration-bucket histogram plus per-genre speaker/utterance/hour rows.

    The totals row sums the genre rows, so a speaker active in two genres is
    counted once per genre. Utterances without a genre count toward the
    duration buckets only.
    """
    bucket_counts = {label: 0 for label, _, _ in DURATION_BUCKETS}
    for u in utts:
        for label, lo, hi in DURATION_BUCKETS:
            if lo <= u.duration_s < hi:
                bucket_counts[label] += 1
                break
    total = len(utts)
    duration_buckets = {
        label: BucketStat(count, count / total if total else 0.0)
        for label, count in bucket_counts.items()
    }

    genre_speakers: dict[str, set[str]] = {g: set() for g in GENRES}
    genre_counts: dict[str, int] = {g: 0 for g in GENRES}
    genre_seconds: dict[str, float] = {g: 0.0 for g in GENRES}
    for u in utts:
        if u.genre is None:
            continue
        genre_counts[u.genre] += 1
        genre_seconds[u.genre] += u.duration_s
        if u.speaker_id is not None:
            genre_speakers[u.genre].add(u.speaker_id)

    genre_rows = {
        g: GenreRow(len(genre_speakers[g]), genre_counts[g], round(genre_seconds[g] / 3600.0, 2))
        for g in GENRES
        if genre_counts[g] > 0
    }
    totals = CorpusTotals(
        n_speakers_sum=sum(r.n_speakers for r in genre_rows.values()),
        n_utts=sum(r.n_utts for r in genre_rows.values()),
        hours=round(sum(genre_seconds.values()) / 3600.0, 2),
    )
    return CorpusStats(duration_buckets, genre_rows, totals)


def write_stats(path: str | Path, stats: CorpusStats) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(stats.to_json_dict(), fh, ensure_ascii=False, indent=2)
        fh.write("\n")
