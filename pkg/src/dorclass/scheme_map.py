"""Map qualified subject tags onto the 20 base classes.

The mapping lives in a tab-separated table, one directive per line::

    alias     <scheme>  name|name-prefix|uri  <alias text>
    notation  <scheme>  value|uri  <regex with one group>
    exclude   <scheme>
    rule      <scheme>  prefix|exact  <pattern>  <target>[|<target>...]

Targets are base-class names from :mod:`dorclass.taxonomy` (or their integer
codes).  A subject's notation is the first capture group of the scheme's first
matching ``notation`` regex, tried on the value then on the value URI; without
a match the case-folded, whitespace-collapsed value is used.  Rules compare
their pattern against that notation.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Union

from .ingest import RawRecord, SubjectTag
from .taxonomy import MERGED_DIVISIONS, Discipline

MATCHER_KINDS = ("prefix", "exact")


class InvalidMapping(ValueError):
    pass


class NotAnnotatable:
    """Sentinel outcome: no rule matched any subject."""

    def __repr__(self):
        return "NotAnnotatable"


class AutoLabeled:
    """Sentinel outcome: the record carries an automatically derived scheme."""

    def __repr__(self):
        return "AutoLabeled"


NOT_ANNOTATABLE = NotAnnotatable()
AUTO_LABELED = AutoLabeled()


def _norm_text(text: str) -> str:
    return " ".join(text.split()).casefold()


def _norm_uri(uri: str) -> str:
    return _norm_text(uri).rstrip("/")


@dataclass(frozen=True)
class MappingRule:
    scheme_id: str
    kind: str
    pattern: str
    targets: frozenset[Discipline]

    def __post_init__(self):
        if self.kind not in MATCHER_KINDS:
            raise InvalidMapping(f"unknown matcher kind {self.kind!r}")
        if not self.pattern:
            raise InvalidMapping("empty matcher pattern")
        if not self.targets:
            raise InvalidMapping(f"rule {self.scheme_id}/{self.pattern} has no targets")

    def matches(self, notation: str) -> bool:
        if self.kind == "exact":
            return notation == self.pattern
        return notation.startswith(self.pattern)


@dataclass(frozen=True)
class MappingResult:
    labels: frozenset[Discipline]
    consumed_subjects: frozenset[int]


@dataclass
class MappingTable:
    rules: list[MappingRule] = field(default_factory=list)
    name_aliases: dict[str, str] = field(default_factory=dict)
    name_prefixes: dict[str, str] = field(default_factory=dict)
    uri_aliases: dict[str, str] = field(default_factory=dict)
    notations: dict[str, list[tuple[str, re.Pattern]]] = field(default_factory=dict)
    excluded_schemes: set[str] = field(default_factory=set)

    def __post_init__(self):
        self._by_scheme: dict[str, list[MappingRule]] = {}
        for rule in self.rules:
            self._by_scheme.setdefault(rule.scheme_id, []).append(rule)

    @property
    def schemes(self) -> set[str]:
        return (
            set(self.name_aliases.values())
            | set(self.name_prefixes.values())
            | set(self.uri_aliases.values())
        )

    def recognize(self, subject: SubjectTag) -> str | None:
        """Return the scheme id a subject is qualified with, if known."""
        if subject.scheme_uri:
            scheme = self.uri_aliases.get(_norm_uri(subject.scheme_uri))
            if scheme:
                return scheme
        if subject.scheme_name:
            name = _norm_text(subject.scheme_name)
            scheme = self.name_aliases.get(name)
            if scheme:
                return scheme
            for prefix, scheme in self.name_prefixes.items():
                if name.startswith(prefix):
                    return scheme
        return None

    def notation(self, scheme: str, subject: SubjectTag) -> str:
        patterns = self.notations.get(scheme, [])
        for source, regex in patterns:
            text = subject.value if source == "value" else subject.value_uri
            if not text:
                continue
            m = regex.search(_norm_text(text))
            if m:
                return m.group(1)
        return _norm_text(subject.value)

    def targets_for(self, scheme: str, notation: str) -> set[Discipline]:
        out: set[Discipline] = set()
        for rule in self._by_scheme.get(scheme, ()):
            if rule.matches(notation):
                out |= rule.targets
        return out


def _parse_targets(text: str, lineno: int) -> frozenset[Discipline]:
    targets = set()
    for part in text.split("|"):
        part = part.strip()
        if not part:
            continue
        try:
            targets.add(Discipline.from_name(part))
        except KeyError:
            raise InvalidMapping(f"line {lineno}: unknown discipline {part!r}") from None
    return frozenset(targets)


def parse_mapping_table(text: str) -> MappingTable:
    rules: list[MappingRule] = []
    seen_rules: set[tuple[str, str, str]] = set()
    name_aliases: dict[str, str] = {}
    name_prefixes: dict[str, str] = {}
    uri_aliases: dict[str, str] = {}
    notations: dict[str, list[tuple[str, re.Pattern]]] = {}
    excluded: set[str] = set()

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cols = [c.strip() for c in raw.rstrip("\n").split("\t")]
        cols = [c for c in cols if c != ""]
        directive = cols[0]
        if directive == "alias":
            if len(cols) != 4:
                raise InvalidMapping(f"line {lineno}: alias needs scheme, kind, text")
            _, scheme, kind, alias = cols
            if kind == "name":
                name_aliases[_norm_text(alias)] = scheme
            elif kind == "name-prefix":
                name_prefixes[_norm_text(alias)] = scheme
            elif kind == "uri":
                uri_aliases[_norm_uri(alias)] = scheme
            else:
                raise InvalidMapping(f"line {lineno}: unknown alias kind {kind!r}")
        elif directive == "notation":
            if len(cols) != 4 or cols[2] not in ("value", "uri"):
                raise InvalidMapping(f"line {lineno}: notation needs scheme, value|uri, regex")
            try:
                regex = re.compile(cols[3])
            except re.error as exc:
                raise InvalidMapping(f"line {lineno}: bad regex: {exc}") from exc
            if regex.groups < 1:
                raise InvalidMapping(f"line {lineno}: notation regex needs a capture group")
            notations.setdefault(cols[1], []).append((cols[2], regex))
        elif directive == "exclude":
            if len(cols) != 2:
                raise InvalidMapping(f"line {lineno}: exclude needs a scheme")
            excluded.add(cols[1])
        elif directive == "rule":
            if len(cols) != 5:
                raise InvalidMapping(f"line {lineno}: rule needs scheme, kind, pattern, targets")
            _, scheme, kind, pattern, targets = cols
            pattern = _norm_text(pattern)
            key = (scheme, kind, pattern)
            if key in seen_rules:
                raise InvalidMapping(f"line {lineno}: duplicate rule {scheme} {kind} {pattern}")
            seen_rules.add(key)
            rules.append(MappingRule(scheme, kind, pattern, _parse_targets(targets, lineno)))
        else:
            raise InvalidMapping(f"line {lineno}: unknown directive {directive!r}")

    table = MappingTable(rules, name_aliases, name_prefixes, uri_aliases, notations, excluded)
    missing = {r.scheme_id for r in rules} - table.schemes
    if missing:
        raise InvalidMapping(f"rules for schemes without aliases: {sorted(missing)}")
    return table


def load_mapping_table(path: str | os.PathLike | None = None) -> MappingTable:
    """Load a mapping table; ``None`` loads the shipped default."""
    if path is None:
        text = resources.files("dorclass").joinpath("data/mapping.tsv").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return parse_mapping_table(text)


MapOutcome = Union[MappingResult, NotAnnotatable, AutoLabeled]


def map_record(record: RawRecord, table: MappingTable) -> MapOutcome:
    labels: set[Discipline] = set()
    consumed: set[int] = set()
    hits = []
    for i, subject in enumerate(record.subjects):
        if not subject.qualified():
            continue
        scheme = table.recognize(subject)
        if scheme is None:
            continue
        if scheme in table.excluded_schemes:
            return AUTO_LABELED
        hits.append((i, scheme, subject))
    for i, scheme, subject in hits:
        targets = table.targets_for(scheme, table.notation(scheme, subject))
        if targets:
            labels |= targets
            consumed.add(i)
    if not labels:
        return NOT_ANNOTATABLE
    return MappingResult(frozenset(labels), frozenset(consumed))


def merge_semantics_check(table: MappingTable, scheme: str = "anzsrc") -> list[str]:
    """Warn about rules that send a merged ANZSRC division anywhere but its merged class."""
    warnings = []
    for divisions, merged in MERGED_DIVISIONS:
        for division in divisions:
            targets = table.targets_for(scheme, division)
            if targets and targets != {merged}:
                names = ", ".join(sorted(t.label for t in targets))
                warnings.append(
                    f"{scheme} division {division} maps to {{{names}}}, expected {{{merged.label}}}"
                )
    return warnings

