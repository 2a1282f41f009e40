"""Verification protocol: speaker-disjoint splits, trial lists, EER, genre matrix.

EER convention, pinned because published numbers vary with it: sweep every
score as a threshold with FAR(t) = fraction of nontargets >= t and FRR(t) =
fraction of targets < t, then take the crossing of FAR and FRR along the
convex frontier of the achievable operating points, linearly interpolating
between adjacent points. Operating points are exact rationals (error counts
over trial counts), so the crossing is computed in exact arithmetic and only
converted to float at the end. The result depends only on score ranks, hence
is invariant under strictly monotone score transforms, and always lands in
[0, 0.5].
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .embedding import EmbeddingTable, cosine_similarity, unit_rows
from .errors import (
    ConfigError,
    DegenerateLabelsError,
    InsufficientGenreCoverageError,
    InsufficientUtterancesError,
    InvariantViolationError,
    MalformedLineError,
    MissingEmbeddingError,
    NoCrossGenreSpeakersError,
    NotEnoughSpeakersError,
)
from .manifest import GENRES, UtteranceRecord

TARGET = "target"
NONTARGET = "nontarget"
TAG_EASY = "easy"
TAG_CROSS_GENRE = "cross_genre_pos"
TAG_HARD_NEG = "hard_neg"


@dataclass(frozen=True)
class SplitSpec:
    test_speaker_count: int = 150
    seed: int = 0

    def __post_init__(self):
        if self.test_speaker_count < 1:
            raise ConfigError("test_speaker_count must be >= 1")


@dataclass(frozen=True)
class TrialPair:
    enrol_utt: str
    test_utt: str
    label: str
    tag: str | None = None

    def __post_init__(self):
        if self.enrol_utt == self.test_utt:
            raise InvariantViolationError(self.enrol_utt, "trial pairs two copies of one utterance")
        if self.label not in (TARGET, NONTARGET):
            raise InvariantViolationError(self.enrol_utt, f"unknown trial label {self.label!r}")


@dataclass(frozen=True)
class EerResult:
    eer: float
    threshold: float


# --- split ----------------------------------------------------------------------

def split_speakers(utts: list[UtteranceRecord], spec: SplitSpec) -> tuple[list[str], list[str]]:
    """Draw the test speakers uniformly without replacement; train is the rest."""
    speaker_set = set()
    for u in utts:
        if u.speaker_id is None:
            raise InvariantViolationError(u.utt_id, "utterance has no speaker_id")
        speaker_set.add(u.speaker_id)
    speakers = sorted(speaker_set)
    if spec.test_speaker_count >= len(speakers):
        raise NotEnoughSpeakersError(
            f"need test_speaker_count < {len(speakers)}, got {spec.test_speaker_count}"
        )
    rng = np.random.default_rng(spec.seed)
    picked = rng.choice(len(speakers), size=spec.test_speaker_count, replace=False)
    test = sorted(speakers[i] for i in picked)
    train = sorted(speaker_set - set(test))
    return train, test


# --- trial generation -------------------------------------------------------------

def _grouped(utts: Sequence[UtteranceRecord]) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {}
    for u in sorted(utts, key=lambda r: r.utt_id):
        if u.speaker_id is None:
            raise InvariantViolationError(u.utt_id, "utterance has no speaker_id")
        groups.setdefault(u.speaker_id, []).append(u.utt_id)
    return groups


def _pair_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


def _choose(rng: np.random.Generator, items: list, k: int) -> list:
    picked = rng.choice(len(items), size=k, replace=False)
    return [items[i] for i in picked]


def _sample_same_speaker(
    rng: np.random.Generator,
    groups: dict[str, list[str]],
    k: int,
    exclude: set[tuple[str, str]],
) -> list[tuple[str, str]]:
    """k distinct unordered same-speaker pairs, uniform over the eligible set."""
    speakers = sorted(groups)
    weights = np.array([len(groups[s]) * (len(groups[s]) - 1) // 2 for s in speakers], dtype=float)
    total = int(weights.sum()) - len(exclude)
    if k > total:
        raise InsufficientUtterancesError(f"asked for {k} target pairs, only {total} available")
    if k == 0:
        return []
    if k * 2 > total:
        universe = [
            _pair_key(ids[i], ids[j])
            for s in speakers
            for ids in [groups[s]]
            for i in range(len(ids))
            for j in range(i + 1, len(ids))
            if _pair_key(ids[i], ids[j]) not in exclude
        ]
        return _choose(rng, universe, k)
    weights /= weights.sum()
    out: list[tuple[str, str]] = []
    seen = set(exclude)
    while len(out) < k:
        s = speakers[int(rng.choice(len(speakers), p=weights))]
        ids = groups[s]
        i, j = rng.choice(len(ids), size=2, replace=False)
        pair = _pair_key(ids[int(i)], ids[int(j)])
        if pair not in seen:
            seen.add(pair)
            out.append(pair)
    return out


def _sample_cross_speaker(
    rng: np.random.Generator,
    groups: dict[str, list[str]],
    k: int,
) -> list[tuple[str, str]]:
    """k distinct unordered cross-speaker pairs, uniform over the eligible set."""
    all_ids = sorted(i for ids in groups.values() for i in ids)
    speaker_of = {i: s for s, ids in groups.items() for i in ids}
    n = len(all_ids)
    same = sum(len(ids) * (len(ids) - 1) // 2 for ids in groups.values())
    total = n * (n - 1) // 2 - same
    if k > total:
        raise InsufficientUtterancesError(f"asked for {k} nontarget pairs, only {total} available")
    if k == 0:
        return []
    if k * 2 > total:
        universe = [
            _pair_key(all_ids[i], all_ids[j])
            for i in range(n)
            for j in range(i + 1, n)
            if speaker_of[all_ids[i]] != speaker_of[all_ids[j]]
        ]
        return _choose(rng, universe, k)
    out: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    while len(out) < k:
        i, j = rng.integers(0, n, size=2)
        if i == j:
            continue
        a, b = all_ids[int(i)], all_ids[int(j)]
        if speaker_of[a] == speaker_of[b]:
            continue
        pair = _pair_key(a, b)
        if pair not in seen:
            seen.add(pair)
            out.append(pair)
    return out


def generate_easy_trials(
    utts: list[UtteranceRecord], n_pairs: int, seed: int
) -> list[TrialPair]:
    """Random balanced trials: half target, half nontarget, no duplicate pairs."""
    groups = _grouped(utts)
    if len(groups) < 2:
        raise InsufficientUtterancesError("need at least 2 speakers in the pool")
    rng = np.random.default_rng(seed)
    n_target = n_pairs - n_pairs // 2
    n_non = n_pairs // 2
    targets = _sample_same_speaker(rng, groups, n_target, exclude=set())
    nons = _sample_cross_speaker(rng, groups, n_non)
    return [TrialPair(a, b, TARGET, TAG_EASY) for a, b in targets] + [
        TrialPair(a, b, NONTARGET, TAG_EASY) for a, b in nons
    ]


def cross_speaker_similarities(
    utts: Sequence[UtteranceRecord], audio: EmbeddingTable
) -> tuple[list[tuple[str, str]], np.ndarray]:
    """All unordered cross-speaker pairs with their cosine similarities."""
    ordered = sorted(utts, key=lambda r: r.utt_id)
    ids = [u.utt_id for u in ordered]
    speaker = [u.speaker_id for u in ordered]
    for utt_id in ids:
        if utt_id not in audio:
            raise MissingEmbeddingError(f"{utt_id} missing from audio table")
    unit = unit_rows(np.stack([audio[i] for i in ids]), ids)
    sim = unit @ unit.T
    pairs: list[tuple[str, str]] = []
    values: list[float] = []
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            if speaker[i] != speaker[j]:
                pairs.append((ids[i], ids[j]))
                values.append(float(sim[i, j]))
    return pairs, np.array(values)


def generate_hard_trials(
    utts: list[UtteranceRecord],
    audio: EmbeddingTable,
    n_pairs: int,
    cross_genre_frac: float = 0.2,
    hard_neg_percentile: float = 0.95,
    seed: int = 0,
) -> list[TrialPair]:
    """Adversarial trials: cross-genre same-speaker targets plus high-similarity
    cross-speaker negatives.

    At least ``ceil(cross_genre_frac * n_target)`` target pairs mix genres
    within one speaker; every nontarget pair sits at or above the
    ``hard_neg_percentile`` quantile of the cross-speaker similarity
    distribution. Remaining target slots fill like the easy generator.
    """
    if not 0.0 <= cross_genre_frac <= 1.0:
        raise ConfigError(f"cross_genre_frac must be in [0, 1], got {cross_genre_frac}")
    if not 0.0 <= hard_neg_percentile < 1.0:
        raise ConfigError(f"hard_neg_percentile must be in [0, 1), got {hard_neg_percentile}")
    for u in utts:
        if u.genre is None:
            raise InvariantViolationError(u.utt_id, "utterance has no genre")
    groups = _grouped(utts)
    if len(groups) < 2:
        raise InsufficientUtterancesError("need at least 2 speakers in the pool")
    rng = np.random.default_rng(seed)
    n_target = n_pairs - n_pairs // 2
    n_non = n_pairs // 2

    genre_of = {u.utt_id: u.genre for u in utts}
    cross_universe = [
        _pair_key(ids[i], ids[j])
        for s in sorted(groups)
        for ids in [groups[s]]
        for i in range(len(ids))
        for j in range(i + 1, len(ids))
        if genre_of[ids[i]] != genre_of[ids[j]]
    ]
    n_cross = math.ceil(cross_genre_frac * n_target)
    if n_cross > 0 and not cross_universe:
        raise NoCrossGenreSpeakersError("no speaker has utterances in two genres")
    if n_cross > len(cross_universe):
        raise InsufficientUtterancesError(
            f"asked for {n_cross} cross-genre pairs, only {len(cross_universe)} exist"
        )
    cross_pairs = _choose(rng, cross_universe, n_cross) if n_cross else []
    rest_pairs = _sample_same_speaker(rng, groups, n_target - n_cross, exclude=set(cross_pairs))

    pairs, values = cross_speaker_similarities(utts, audio)
    if not pairs:
        raise InsufficientUtterancesError("no cross-speaker pairs in the pool")
    floor = float(np.quantile(values, hard_neg_percentile))
    eligible = [pairs[i] for i in np.flatnonzero(values >= floor)]
    if n_non > len(eligible):
        raise InsufficientUtterancesError(
            f"asked for {n_non} hard negatives, only {len(eligible)} at or above "
            f"the {hard_neg_percentile} quantile"
        )
    neg_pairs = _choose(rng, eligible, n_non) if n_non else []

    return (
        [TrialPair(a, b, TARGET, TAG_CROSS_GENRE) for a, b in cross_pairs]
        + [TrialPair(a, b, TARGET, TAG_EASY) for a, b in rest_pairs]
        + [TrialPair(a, b, NONTARGET, TAG_HARD_NEG) for a, b in neg_pairs]
    )


# --- scoring and EER ---------------------------------------------------------------

def score_trials(
    trials: Sequence[TrialPair], audio: EmbeddingTable
) -> list[tuple[TrialPair, float]]:
    scored = []
    for trial in trials:
        for utt_id in (trial.enrol_utt, trial.test_utt):
            if utt_id not in audio:
                raise MissingEmbeddingError(f"{utt_id} missing from audio table")
        scored.append((trial, cosine_similarity(audio[trial.enrol_utt], audio[trial.test_utt])))
    return scored


def _lower_hull(points: list[tuple[Fraction, Fraction]]) -> list[tuple[Fraction, Fraction]]:
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts
    hull: list[tuple[Fraction, Fraction]] = []
    for p in pts:
        while len(hull) >= 2:
            ox, oy = hull[-2]
            ax, ay = hull[-1]
            if (ax - ox) * (p[1] - oy) - (ay - oy) * (p[0] - ox) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def eer_from_scores(
    target_scores: Sequence[float], nontarget_scores: Sequence[float]
) -> EerResult:
    """Equal error rate of labeled scores under the module's pinned convention."""
    tar = sorted(float(s) for s in target_scores)
    non = sorted(float(s) for s in nontarget_scores)
    if not tar or not non:
        raise DegenerateLabelsError("need at least one target and one nontarget score")
    nt, nn = len(tar), len(non)
    thresholds = sorted(set(tar) | set(non))
    points = [
        (Fraction(nn - bisect_left(non, t), nn), Fraction(bisect_left(tar, t), nt))
        for t in thresholds
    ]
    points.append((Fraction(0), Fraction(1)))

    hull = _lower_hull(points)
    eer = None
    for idx, (x, y) in enumerate(hull):
        diff = y - x
        if diff == 0:
            eer = x
            break
        if diff < 0:
            px, py = hull[idx - 1]
            prev_diff = py - px
            s = prev_diff / (prev_diff - diff)
            eer = px + s * (x - px)
            break
    assert eer is not None  # hull spans FAR 1 -> 0 while FRR runs 0 -> 1

    # report the empirical threshold closest to the equal-error operating point
    candidates = list(thresholds)
    candidates.extend((a + b) / 2.0 for a, b in zip(thresholds, thresholds[1:]))
    candidates.append(thresholds[-1] + 1.0)
    eer_f = float(eer)

    def badness(t: float) -> tuple[float, float, float]:
        far = (nn - bisect_left(non, t)) / nn
        frr = bisect_left(tar, t) / nt
        return (abs(far - frr), abs((far + frr) / 2.0 - eer_f), t)

    threshold = min(candidates, key=badness)
    return EerResult(eer_f, float(threshold))


def compute_eer(scored: Iterable[tuple[TrialPair, float]]) -> EerResult:
    pairs = list(scored)
    tar = [s for trial, s in pairs if trial.label == TARGET]
    non = [s for trial, s in pairs if trial.label == NONTARGET]
    return eer_from_scores(tar, non)


# --- genre matrix -------------------------------------------------------------------

def genre_eer_matrix(
    utts: list[UtteranceRecord],
    audio: EmbeddingTable,
    n_pairs_per_cell: int,
    seed: int = 0,
) -> dict[str, dict[str, float]]:
    """EER per (enrolment genre, test genre) cell over a balanced sample.

    The same number of speakers is sampled for every genre and the same number
    of utterances for every sampled speaker-genre, so no cell sees more data
    than another.
    """
    pool: dict[str, dict[str, list[str]]] = {g: {} for g in GENRES}
    for u in sorted(utts, key=lambda r: r.utt_id):
        if u.genre is None or u.speaker_id is None:
            continue
        pool[u.genre].setdefault(u.speaker_id, []).append(u.utt_id)
    for g in GENRES:
        if len(pool[g]) < 2:
            raise InsufficientGenreCoverageError(f"genre {g!r} has {len(pool[g])} speakers, need 2")

    roster_rng = np.random.default_rng([seed, 0])
    n_speakers = min(len(pool[g]) for g in GENRES)
    n_utts = None
    roster: dict[str, dict[str, list[str]]] = {}
    for g in GENRES:
        chosen = sorted(_choose(roster_rng, sorted(pool[g]), n_speakers))
        roster[g] = {s: pool[g][s] for s in chosen}
        n_utts_g = min(len(ids) for ids in roster[g].values())
        n_utts = n_utts_g if n_utts is None else min(n_utts, n_utts_g)
    for g in GENRES:
        roster[g] = {
            s: sorted(_choose(roster_rng, ids, n_utts)) for s, ids in sorted(roster[g].items())
        }

    n_target = n_pairs_per_cell - n_pairs_per_cell // 2
    n_non = n_pairs_per_cell // 2
    matrix: dict[str, dict[str, float]] = {}
    for i, g_enrol in enumerate(GENRES):
        matrix[g_enrol] = {}
        for j, g_test in enumerate(GENRES):
            cell_rng = np.random.default_rng([seed, 1 + i, 1 + j])
            shared = sorted(set(roster[g_enrol]) & set(roster[g_test]))
            targets = [
                (e, t)
                for s in shared
                for e in roster[g_enrol][s]
                for t in roster[g_test][s]
                if e != t
            ]
            nons = [
                (e, t)
                for se in sorted(roster[g_enrol])
                for st in sorted(roster[g_test])
                if se != st
                for e in roster[g_enrol][se]
                for t in roster[g_test][st]
                if e != t
            ]
            if len(targets) < n_target or len(nons) < n_non:
                raise InsufficientGenreCoverageError(
                    f"cell ({g_enrol}, {g_test}): {len(targets)} target and "
                    f"{len(nons)} nontarget pairs available, need {n_target}/{n_non}"
                )
            trials = [
                TrialPair(e, t, TARGET, TAG_EASY) for e, t in _choose(cell_rng, targets, n_target)
            ] + [
                TrialPair(e, t, NONTARGET, TAG_EASY) for e, t in _choose(cell_rng, nons, n_non)
            ]
            matrix[g_enrol][g_test] = compute_eer(score_trials(trials, audio)).eer
    return matrix


# --- text artifacts -----------------------------------------------------------------

def write_trials(path: str | Path, trials: Sequence[TrialPair]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for t in trials:
            fh.write(f"{1 if t.label == TARGET else 0} {t.enrol_utt} {t.test_utt}\n")


def load_trials(path: str | Path) -> list[TrialPair]:
    path = Path(path)
    trials = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            parts = raw.split()
            if len(parts) != 3 or parts[0] not in ("0", "1"):
                raise MalformedLineError(path, line_no, "expected 'label enrol_utt test_utt'")
            trials.append(TrialPair(parts[1], parts[2], TARGET if parts[0] == "1" else NONTARGET))
    return trials


def write_scores(path: str | Path, scored: Sequence[tuple[TrialPair, float]]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for trial, score in scored:
            fh.write(f"{trial.enrol_utt} {trial.test_utt} {score!r}\n")


def load_scores(path: str | Path) -> dict[tuple[str, str], float]:
    path = Path(path)
    scores: dict[tuple[str, str], float] = {}
    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            parts = raw.split()
            if len(parts) != 3:
                raise MalformedLineError(path, line_no, "expected 'enrol_utt test_utt score'")
            try:
                scores[(parts[0], parts[1])] = float(parts[2])
            except ValueError:
                raise MalformedLineError(path, line_no, f"bad score {parts[2]!r}") from None
    return scores
