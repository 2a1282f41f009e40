"""Corpus data model and JSONL manifest persistence.

Manifests are UTF-8 JSONL files, one record per line, field names exactly as
declared on the record types. Unknown fields are ignored on read and never
emitted on write. Loading is fail-fast: one bad line rejects the whole file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from datetime import date
from pathlib import Path
from typing import Iterable

from .errors import (
    DuplicateIdError,
    InvariantViolationError,
    MalformedLineError,
    NegativeDurationError,
    UnknownVideoError,
)

GENRES = ("spontaneous", "reading", "singing")
FINAL_SAMPLE_RATE_HZ = 16_000
DEFAULT_MIN_UTT_DURATION_S = 1.0
DURATION_TOL_S = 1e-6


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    playlist_id: str
    channel_id: str
    title: str
    upload_date: date
    height_px: int
    duration_s: float


@dataclass(frozen=True)
class SegmentRecord:
    video_id: str
    start_s: float
    end_s: float
    diar_label: str


@dataclass(frozen=True)
class UtteranceRecord:
    utt_id: str
    video_id: str
    playlist_id: str
    start_s: float
    end_s: float
    duration_s: float
    sample_rate_hz: int
    speaker_id: str | None = None
    genre: str | None = None
    genre_conf: float | None = None


@dataclass(frozen=True)
class QualityPolicy:
    """Source video admission policy: resolution and upload-date floors."""

    min_height_px: int = 480
    min_upload_date: date = date(2018, 1, 1)


def make_utt_id(video_id: str, start_s: float, end_s: float) -> str:
    return f"{video_id}/{round(start_s * 1000)}-{round(end_s * 1000)}"


def parse_utt_id(utt_id: str) -> tuple[str, int, int]:
    """Split an utterance id back into (video_id, start_ms, end_ms)."""
    video_id, _, span = utt_id.rpartition("/")
    start_ms, _, end_ms = span.partition("-")
    if not video_id or not start_ms or not end_ms:
        raise InvariantViolationError(utt_id, "utt_id must be 'video_id/start_ms-end_ms'")
    try:
        return video_id, int(start_ms), int(end_ms)
    except ValueError:
        raise InvariantViolationError(utt_id, "utt_id span is not integral milliseconds") from None


# --- line-level parsing -------------------------------------------------------

def _want(obj: dict, name: str, types, path, line_no: int):
    if name not in obj:
        raise MalformedLineError(path, line_no, f"missing field {name!r}")
    value = obj[name]
    if isinstance(value, bool) or not isinstance(value, types):
        raise MalformedLineError(path, line_no, f"field {name!r} has wrong type")
    return value


def _optional(obj: dict, name: str, types, path, line_no: int):
    value = obj.get(name)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, types):
        raise MalformedLineError(path, line_no, f"field {name!r} has wrong type")
    return value


def _parse_video(obj: dict, path, line_no: int) -> VideoRecord:
    raw_date = _want(obj, "upload_date", str, path, line_no)
    try:
        upload_date = date.fromisoformat(raw_date)
    except ValueError:
        raise MalformedLineError(path, line_no, f"upload_date {raw_date!r} is not ISO-8601") from None
    rec = VideoRecord(
        video_id=_want(obj, "video_id", str, path, line_no),
        playlist_id=_want(obj, "playlist_id", str, path, line_no),
        channel_id=_want(obj, "channel_id", str, path, line_no),
        title=_want(obj, "title", str, path, line_no),
        upload_date=upload_date,
        height_px=_want(obj, "height_px", int, path, line_no),
        duration_s=float(_want(obj, "duration_s", (int, float), path, line_no)),
    )
    if rec.height_px <= 0:
        raise InvariantViolationError(rec.video_id, "height_px must be > 0")
    if rec.duration_s < 0:
        raise InvariantViolationError(rec.video_id, "duration_s must be >= 0")
    return rec


def _parse_segment(obj: dict, path, line_no: int) -> SegmentRecord:
    rec = SegmentRecord(
        video_id=_want(obj, "video_id", str, path, line_no),
        start_s=float(_want(obj, "start_s", (int, float), path, line_no)),
        end_s=float(_want(obj, "end_s", (int, float), path, line_no)),
        diar_label=_want(obj, "diar_label", str, path, line_no),
    )
    if rec.start_s < 0:
        raise InvariantViolationError(rec.video_id, "segment start_s must be >= 0")
    if rec.end_s <= rec.start_s:
        raise InvariantViolationError(rec.video_id, "segment end_s must be > start_s")
    return rec


def _parse_utterance(obj: dict, path, line_no: int) -> UtteranceRecord:
    genre = _optional(obj, "genre", str, path, line_no)
    if genre is not None and genre not in GENRES:
        raise MalformedLineError(path, line_no, f"genre {genre!r} not one of {GENRES}")
    rec = UtteranceRecord(
        utt_id=_want(obj, "utt_id", str, path, line_no),
        video_id=_want(obj, "video_id", str, path, line_no),
        playlist_id=_want(obj, "playlist_id", str, path, line_no),
        start_s=float(_want(obj, "start_s", (int, float), path, line_no)),
        end_s=float(_want(obj, "end_s", (int, float), path, line_no)),
        duration_s=float(_want(obj, "duration_s", (int, float), path, line_no)),
        sample_rate_hz=_want(obj, "sample_rate_hz", int, path, line_no),
        speaker_id=_optional(obj, "speaker_id", str, path, line_no),
        genre=genre,
        genre_conf=_optional(obj, "genre_conf", (int, float), path, line_no),
    )
    if abs(rec.duration_s - (rec.end_s - rec.start_s)) > DURATION_TOL_S:
        raise InvariantViolationError(rec.utt_id, "duration_s != end_s - start_s")
    if rec.sample_rate_hz <= 0:
        raise InvariantViolationError(rec.utt_id, "sample_rate_hz must be positive")
    if rec.genre_conf is not None and not 0.0 <= rec.genre_conf <= 1.0:
        raise InvariantViolationError(rec.utt_id, "genre_conf must be in [0, 1]")
    vid, _, _ = parse_utt_id(rec.utt_id)
    if vid != rec.video_id:
        raise InvariantViolationError(rec.utt_id, "utt_id does not embed video_id as prefix")
    return rec


_PARSERS = {
    "videos": (_parse_video, "video_id"),
    "segments": (_parse_segment, None),
    "utterances": (_parse_utterance, "utt_id"),
}


def load_manifest(path: str | Path, kind: str) -> list:
    """Load a JSONL manifest of the given kind ('videos', 'segments', 'utterances').

    Rejects the whole file on the first malformed line, duplicate id, or
    invariant violation.
    """
    if kind not in _PARSERS:
        raise ValueError(f"unknown manifest kind {kind!r}")
    parse, id_field = _PARSERS[kind]
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    records = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError:
                raise MalformedLineError(path, line_no, "invalid JSON") from None
            if not isinstance(obj, dict):
                raise MalformedLineError(path, line_no, "line is not a JSON object")
            rec = parse(obj, path, line_no)
            if id_field is not None:
                rec_id = getattr(rec, id_field)
                if rec_id in seen:
                    raise DuplicateIdError(f"{path}:{line_no}: duplicate {id_field} {rec_id!r}")
                seen.add(rec_id)
            records.append(rec)
    return records


def _record_to_obj(rec) -> dict:
    obj = {}
    for f in fields(rec):
        value = getattr(rec, f.name)
        if isinstance(value, date):
            value = value.isoformat()
        obj[f.name] = value
    return obj


def write_manifest(path: str | Path, records: Iterable) -> None:
    """Write records as JSONL. Field order follows the record declaration."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(_record_to_obj(rec), ensure_ascii=False))
            fh.write("\n")


# --- operations ---------------------------------------------------------------

def filter_videos(videos: list[VideoRecord], policy: QualityPolicy) -> list[VideoRecord]:
    """Keep videos meeting the resolution and upload-date floors, order preserved."""
    return [
        v
        for v in videos
        if v.height_px >= policy.min_height_px and v.upload_date >= policy.min_upload_date
    ]


def apply_segmentation(
    videos: list[VideoRecord],
    segments: list[SegmentRecord],
    min_duration_s: float = DEFAULT_MIN_UTT_DURATION_S,
) -> list[UtteranceRecord]:
    """Turn diarized segments into utterance records.

    Every segment must reference a known video and lie within its duration.
    Segments shorter than ``min_duration_s`` are dropped. Output order follows
    input segment order.
    """
    by_id = {v.video_id: v for v in videos}
    out: list[UtteranceRecord] = []
    seen: set[str] = set()
    for seg in segments:
        video = by_id.get(seg.video_id)
        if video is None:
            raise UnknownVideoError(seg.video_id)
        if seg.end_s <= seg.start_s:
            raise NegativeDurationError(
                f"{seg.video_id}: segment [{seg.start_s}, {seg.end_s}] has no positive duration"
            )
        if seg.start_s < 0 or seg.end_s > video.duration_s:
            raise InvariantViolationError(
                seg.video_id,
                f"segment [{seg.start_s}, {seg.end_s}] outside video span [0, {video.duration_s}]",
            )
        duration = seg.end_s - seg.start_s
        if duration < min_duration_s:
            continue
        utt_id = make_utt_id(seg.video_id, seg.start_s, seg.end_s)
        if utt_id in seen:
            raise DuplicateIdError(f"duplicate utterance {utt_id!r} from overlapping segments")
        seen.add(utt_id)
        out.append(
            UtteranceRecord(
                utt_id=utt_id,
                video_id=seg.video_id,
                playlist_id=video.playlist_id,
                start_s=seg.start_s,
                end_s=seg.end_s,
                duration_s=duration,
                sample_rate_hz=FINAL_SAMPLE_RATE_HZ,
            )
        )
    return out
