"""OAI-PMH harvesting and DataCite record parsing.

Elements are matched by local name only, so every DataCite kernel from 2.x to
4.x parses the same way regardless of its namespace URI.
"""

from __future__ import annotations

import json
import logging
import os
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import requests

log = logging.getLogger(__name__)

DEFAULT_METADATA_PREFIX = "oai_datacite"


class IngestError(Exception):
    pass


class MalformedXml(IngestError):
    pass


class MissingIdentifier(IngestError):
    pass


class EndpointUnreachable(IngestError):
    pass


class ProtocolError(IngestError):
    """The repository answered with an OAI error other than ``noRecordsMatch``."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code


@dataclass(frozen=True)
class SubjectTag:
    value: str
    scheme_uri: str | None = None
    scheme_name: str | None = None
    value_uri: str | None = None

    def __post_init__(self):
        if not self.value or not self.value.strip():
            raise ValueError("subject value is empty")

    def qualified(self) -> bool:
        return bool(self.scheme_uri) or bool(self.scheme_name)

    def to_json(self) -> dict:
        out = {"value": self.value, "schemeURI": self.scheme_uri, "subjectScheme": self.scheme_name}
        if self.value_uri:
            out["valueURI"] = self.value_uri
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "SubjectTag":
        return cls(
            value=obj["value"],
            scheme_uri=obj.get("schemeURI"),
            scheme_name=obj.get("subjectScheme"),
            value_uri=obj.get("valueURI"),
        )


@dataclass(frozen=True)
class RawRecord:
    identifier: str
    titles: tuple[str, ...] = ()
    descriptions: tuple[str, ...] = ()
    subjects: tuple[SubjectTag, ...] = ()
    publication_year: int | None = None

    def __post_init__(self):
        if not self.identifier:
            raise MissingIdentifier("record identifier is empty")
        # accept lists from callers, store tuples
        object.__setattr__(self, "titles", tuple(self.titles))
        object.__setattr__(self, "descriptions", tuple(self.descriptions))
        object.__setattr__(self, "subjects", tuple(self.subjects))

    def to_json(self) -> dict:
        return {
            "id": self.identifier,
            "titles": list(self.titles),
            "descriptions": list(self.descriptions),
            "subjects": [s.to_json() for s in self.subjects],
            "year": self.publication_year,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RawRecord":
        return cls(
            identifier=obj["id"],
            titles=obj.get("titles", []),
            descriptions=obj.get("descriptions", []),
            subjects=[SubjectTag.from_json(s) for s in obj.get("subjects", [])],
            publication_year=obj.get("year"),
        )


@dataclass
class HarvestStats:
    requests_made: int = 0
    records_seen: int = 0
    records_qualified: int = 0
    resumption_tokens_followed: int = 0
    deleted_skipped: int = 0
    duplicates_skipped: int = 0
    parse_failures: int = 0


def _local(tag) -> str:
    if not isinstance(tag, str):
        return ""  # comments and processing instructions
    return tag.rsplit("}", 1)[-1]


def _children(elem: ET.Element, name: str) -> list[ET.Element]:
    return [c for c in elem if _local(c.tag) == name]


def _first(elem: ET.Element, name: str) -> ET.Element | None:
    for node in elem.iter():
        if _local(node.tag) == name:
            return node
    return None


def _text(elem: ET.Element) -> str:
    return " ".join("".join(elem.itertext()).split())


def _attr(elem: ET.Element, name: str) -> str | None:
    for key, value in elem.attrib.items():
        if _local(key) == name:
            value = value.strip()
            return value or None
    return None


def _parse_element(root: ET.Element) -> RawRecord:
    header = _first(root, "header")
    resource = root if _local(root.tag) == "resource" else _first(root, "resource")
    if resource is None:
        resource = root

    identifier = None
    if header is not None:
        node = next(iter(_children(header, "identifier")), None)
        if node is not None and _text(node):
            identifier = _text(node)
    if identifier is None:
        node = next(iter(_children(resource, "identifier")), None)
        if node is not None and _text(node):
            identifier = _text(node)
    if identifier is None:
        raise MissingIdentifier("no OAI header identifier and no DataCite identifier")

    titles, descriptions, subjects = [], [], []
    for group in _children(resource, "titles"):
        titles.extend(t for t in (_text(e) for e in _children(group, "title")) if t)
    for group in _children(resource, "descriptions"):
        descriptions.extend(d for d in (_text(e) for e in _children(group, "description")) if d)
    for group in _children(resource, "subjects"):
        for elem in _children(group, "subject"):
            value = _text(elem)
            if not value:
                continue
            subjects.append(
                SubjectTag(
                    value=value,
                    scheme_uri=_attr(elem, "schemeURI"),
                    scheme_name=_attr(elem, "subjectScheme"),
                    value_uri=_attr(elem, "valueURI"),
                )
            )

    year = None
    node = next(iter(_children(resource, "publicationYear")), None)
    if node is not None:
        digits = _text(node)[:4]
        if digits.isdigit():
            year = int(digits)

    return RawRecord(identifier, titles, descriptions, subjects, year)


def parse_datacite_record(xml: str | bytes) -> RawRecord:
    """Parse one DataCite document (bare ``resource`` or a full OAI ``record``)."""
    try:
        root = ET.fromstring(xml)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from exc
    return _parse_element(root)


def is_qualified(record: RawRecord) -> bool:
    return any(s.qualified() for s in record.subjects)


def read_records(path: str | os.PathLike) -> Iterator[RawRecord]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield RawRecord.from_json(json.loads(line))


def read_oai_file(path: str | os.PathLike) -> Iterator[RawRecord]:
    """Records of a saved ListRecords response, deleted ones skipped.

    Unlike :func:`harvest` this does not drop unqualified records, so a saved
    response can be cleaned exactly as it was stored.
    """
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        raise MalformedXml(f"{path}: {exc}") from exc
    _check_error(root)
    records, _ = _iter_page(root)
    for elem in records:
        header = next(iter(_children(elem, "header")), None)
        if header is not None and header.attrib.get("status") == "deleted":
            continue
        yield _parse_element(elem)


def load_raw(path: str | os.PathLike) -> Iterator[RawRecord]:
    """Newline-delimited records, or a ListRecords XML file when the name ends in ``.xml``."""
    if str(path).endswith(".xml"):
        return read_oai_file(path)
    return read_records(path)


class JsonlSink:
    """Append-only newline-delimited record writer."""

    def __init__(self, path: str | os.PathLike):
        self._fh = open(path, "a", encoding="utf-8")

    def __call__(self, record: RawRecord) -> None:
        self._fh.write(json.dumps(record.to_json(), ensure_ascii=False) + "\n")

    def flush(self) -> None:
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class OaiClient:
    endpoint: str
    metadata_prefix: str = DEFAULT_METADATA_PREFIX
    max_attempts: int = 5
    backoff: float = 1.0
    timeout: float = 60.0
    session: requests.Session = field(default_factory=requests.Session)
    sleep: Callable[[float], None] = time.sleep

    def fetch(self, params: dict) -> ET.Element:
        delay = self.backoff
        last_exc: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                resp = self.session.get(self.endpoint, params=params, timeout=self.timeout)
                if resp.status_code >= 500 or resp.status_code == 429:
                    raise requests.HTTPError(f"HTTP {resp.status_code}", response=resp)
                resp.raise_for_status()
                try:
                    return ET.fromstring(resp.content)
                except ET.ParseError as exc:
                    raise MalformedXml(f"unparseable OAI response: {exc}") from exc
            except (requests.ConnectionError, requests.Timeout, requests.HTTPError) as exc:
                status = getattr(getattr(exc, "response", None), "status_code", None)
                if status is not None and 400 <= status < 500 and status != 429:
                    raise EndpointUnreachable(f"{self.endpoint}: HTTP {status}") from exc
                last_exc = exc
                log.warning("request failed (attempt %d/%d): %s", attempt, self.max_attempts, exc)
                if attempt < self.max_attempts:
                    self.sleep(delay)
                    delay *= 2
        raise EndpointUnreachable(f"{self.endpoint}: {last_exc}")


def _check_error(root: ET.Element) -> bool:
    """Return True for an empty result; raise on any other OAI error."""
    for node in root:
        if _local(node.tag) == "error":
            code = node.attrib.get("code", "unknown")
            if code == "noRecordsMatch":
                return True
            raise ProtocolError(code, _text(node))
    return False


def _iter_page(root: ET.Element) -> tuple[list[ET.Element], str | None]:
    list_records = next((n for n in root if _local(n.tag) == "ListRecords"), None)
    if list_records is None:
        return [], None
    records = _children(list_records, "record")
    token_node = next(iter(_children(list_records, "resumptionToken")), None)
    token = _text(token_node) if token_node is not None else ""
    return records, token or None


def harvest(
    endpoint: str,
    sink: Callable[[RawRecord], None],
    from_date: str | None = None,
    until_date: str | None = None,
    metadata_prefix: str = DEFAULT_METADATA_PREFIX,
    cursor_file: str | os.PathLike | None = None,
    client: OaiClient | None = None,
) -> HarvestStats:
    """Run ListRecords against ``endpoint`` and feed qualified records to ``sink``.

    When ``cursor_file`` holds a resumption token from an interrupted run, the
    harvest resumes from it.  The file is updated after every page and removed
    once the token chain is exhausted.
    """
    client = client or OaiClient(endpoint, metadata_prefix)
    stats = HarvestStats()
    seen: set[str] = set()

    token = None
    if cursor_file is not None and Path(cursor_file).exists():
        token = Path(cursor_file).read_text(encoding="utf-8").strip() or None
        if token:
            log.info("resuming harvest from stored token %s", token)

    if token:
        params = {"verb": "ListRecords", "resumptionToken": token}
    else:
        params = {"verb": "ListRecords", "metadataPrefix": metadata_prefix}
        if from_date:
            params["from"] = from_date
        if until_date:
            params["until"] = until_date

    while True:
        root = client.fetch(params)
        stats.requests_made += 1
        if _check_error(root):
            break
        records, token = _iter_page(root)
        for elem in records:
            header = next(iter(_children(elem, "header")), None)
            if header is not None and header.attrib.get("status") == "deleted":
                stats.deleted_skipped += 1
                continue
            stats.records_seen += 1
            try:
                record = _parse_element(elem)
            except IngestError as exc:
                stats.parse_failures += 1
                log.warning("skipping unparseable record: %s", exc)
                continue
            if record.identifier in seen:
                stats.duplicates_skipped += 1
                continue
            seen.add(record.identifier)
            if is_qualified(record):
                stats.records_qualified += 1
                sink(record)
        if hasattr(sink, "flush"):
            sink.flush()
        if not token:
            break
        if cursor_file is not None:
            _write_cursor(cursor_file, token)
        stats.resumption_tokens_followed += 1
        params = {"verb": "ListRecords", "resumptionToken": token}

    if cursor_file is not None and Path(cursor_file).exists():
        Path(cursor_file).unlink()
    return stats


def _write_cursor(path: str | os.PathLike, token: str) -> None:
    tmp = Path(f"{path}.tmp")
    tmp.write_text(token, encoding="utf-8")
    os.replace(tmp, path)

