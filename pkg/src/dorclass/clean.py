"""Turn qualified raw records into labelled English text payloads.

Order of operations per record: subject mapping, duplicate filtering, payload
construction (English parts only, at least ten whitespace-separated words).
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Callable, Iterable, Iterator

from .ingest import RawRecord
from .scheme_map import AutoLabeled, MappingTable, NotAnnotatable, map_record
from .taxonomy import Discipline

MIN_WORDS = 10
DEFAULT_ENGLISH_THRESHOLD = 0.25
DEDUP_KEYS = ("payload+labels", "payload", "id")

_WORD = re.compile(r"[^\W\d_]+")


class TooShort:
    def __repr__(self):
        return "TooShort"


TOO_SHORT = TooShort()


@dataclass(frozen=True)
class LabeledPayload:
    id: str
    payload: str
    labels: frozenset[Discipline]
    word_count: int = 0
    year: int | None = None

    def __post_init__(self):
        if not self.labels:
            raise ValueError(f"{self.id}: empty label set")
        object.__setattr__(self, "labels", frozenset(Discipline(l) for l in self.labels))
        if not self.word_count:
            object.__setattr__(self, "word_count", len(self.payload.split()))

    @property
    def label_codes(self) -> list[int]:
        return sorted(int(l) for l in self.labels)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "payload": self.payload,
            "labels": self.label_codes,
            "word_count": self.word_count,
            "year": self.year,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LabeledPayload":
        return cls(
            id=obj["id"],
            payload=obj["payload"],
            labels=frozenset(Discipline(c) for c in obj["labels"]),
            word_count=obj.get("word_count") or 0,
            year=obj.get("year"),
        )


@dataclass
class CleanStats:
    input: int = 0
    not_annotatable: int = 0
    auto_labeled: int = 0
    duplicates: int = 0
    unfit: int = 0
    output: int = 0

    def balanced(self) -> bool:
        parts = self.not_annotatable + self.auto_labeled + self.duplicates + self.unfit + self.output
        return self.input == parts


@lru_cache(maxsize=None)
def english_words() -> frozenset[str]:
    text = resources.files("dorclass").joinpath("data/english_words.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))


def is_mostly_english(part: str, threshold: float = DEFAULT_ENGLISH_THRESHOLD,
                      vocabulary: frozenset[str] | None = None) -> bool:
    """Share of word tokens found in the common-English list is at least ``threshold``."""
    tokens = _WORD.findall(part.casefold())
    if not tokens:
        return False
    vocabulary = english_words() if vocabulary is None else vocabulary
    hits = sum(1 for t in tokens if t in vocabulary)
    return hits / len(tokens) >= threshold


EnglishDetector = Callable[[str], bool]


def build_payload(record: RawRecord, consumed_subjects: Iterable[int],
                  is_english: EnglishDetector = is_mostly_english) -> str | TooShort:
    consumed = set(consumed_subjects)
    parts = list(record.titles) + list(record.descriptions)
    parts += [s.value for i, s in enumerate(record.subjects) if i not in consumed]
    kept = [" ".join(p.split()) for p in parts if p.strip() and is_english(p)]
    payload = " ".join(kept)
    if len(payload.split()) < MIN_WORDS:
        return TOO_SHORT
    return payload


def _normalize(text: str) -> str:
    return " ".join(text.split()).casefold()


def dedup_key(text: str, labels: Iterable[int] = ()) -> str:
    digest = hashlib.sha256(_normalize(text).encode("utf-8"))
    digest.update(b"\x00" + ",".join(str(int(l)) for l in sorted(labels)).encode("ascii"))
    return digest.hexdigest()


def dedup(items: Iterable[tuple[str, str, Iterable[int]]], mode: str = "payload+labels",
          counter: dict | None = None) -> Iterator[tuple[str, str, frozenset]]:
    """Yield the first ``(id, payload, labels)`` per duplicate key, in input order."""
    if mode not in DEDUP_KEYS:
        raise ValueError(f"unknown dedup key {mode!r}")
    seen: set[str] = set()
    for ident, payload, labels in items:
        labels = frozenset(labels)
        if mode == "id":
            key = ident
        elif mode == "payload":
            key = dedup_key(payload)
        else:
            key = dedup_key(payload, labels)
        if key in seen:
            if counter is not None:
                counter["duplicates"] = counter.get("duplicates", 0) + 1
            continue
        seen.add(key)
        yield ident, payload, labels


def _record_text(record: RawRecord) -> str:
    # dedup runs before the payload exists, so it keys on the sorted raw parts
    return "\n".join(sorted(record.titles)) + "\n\n" + "\n".join(sorted(record.descriptions))


@dataclass
class Cleaner:
    table: MappingTable
    dedup_mode: str = "payload+labels"
    english_threshold: float = DEFAULT_ENGLISH_THRESHOLD
    stats: CleanStats = field(default_factory=CleanStats)

    def __post_init__(self):
        if self.dedup_mode not in DEDUP_KEYS:
            raise ValueError(f"unknown dedup key {self.dedup_mode!r}")
        self._seen: set[str] = set()

    def _is_english(self, part: str) -> bool:
        return is_mostly_english(part, self.english_threshold)

    def feed(self, record: RawRecord) -> LabeledPayload | None:
        self.stats.input += 1
        outcome = map_record(record, self.table)
        if isinstance(outcome, AutoLabeled):
            self.stats.auto_labeled += 1
            return None
        if isinstance(outcome, NotAnnotatable):
            self.stats.not_annotatable += 1
            return None
        codes = sorted(int(l) for l in outcome.labels)
        if self.dedup_mode == "id":
            key = record.identifier
        elif self.dedup_mode == "payload":
            key = dedup_key(_record_text(record))
        else:
            key = dedup_key(_record_text(record), codes)
        if key in self._seen:
            self.stats.duplicates += 1
            return None
        self._seen.add(key)
        payload = build_payload(record, outcome.consumed_subjects, self._is_english)
        if isinstance(payload, TooShort):
            self.stats.unfit += 1
            return None
        self.stats.output += 1
        return LabeledPayload(record.identifier, payload, outcome.labels,
                              len(payload.split()), record.publication_year)


def clean(records: Iterable[RawRecord], table: MappingTable, dedup_mode: str = "payload+labels",
          english_threshold: float = DEFAULT_ENGLISH_THRESHOLD) -> tuple[list[LabeledPayload], CleanStats]:
    cleaner = Cleaner(table, dedup_mode, english_threshold)
    out = [p for p in map(cleaner.feed, records) if p is not None]
    return out, cleaner.stats


def read_payloads(path: str | os.PathLike) -> list[LabeledPayload]:
    with open(path, encoding="utf-8") as fh:
        return [LabeledPayload.from_json(json.loads(line)) for line in fh if line.strip()]


def write_payloads(payloads: Iterable[LabeledPayload], fh) -> None:
    for p in payloads:
        fh.write(json.dumps(p.to_json(), ensure_ascii=False) + "\n")
