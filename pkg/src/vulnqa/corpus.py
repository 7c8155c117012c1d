"""NVD JSON 1.1 feed parsing, record normalization, and chunk serialization.

A feed item becomes a :class:`CveRecord`; preprocessing dedupes records,
collapses whitespace noise, and reports size/count statistics; each record
serializes to a single-line canonical chunk whose text round-trips back to
the identical record.
"""

from __future__ import annotations

import gzip
import json
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .prompting import estimate_tokens

CVE_ID_RE = re.compile(r"CVE-\d{4}-\d{4,}")

GZIP_MAGIC = b"\x1f\x8b"

# CVSS v3.1 qualitative severity bands.
SEVERITY_BANDS = (
    (0.0, 0.0, "NONE"),
    (0.1, 3.9, "LOW"),
    (4.0, 6.9, "MEDIUM"),
    (7.0, 8.9, "HIGH"),
    (9.0, 10.0, "CRITICAL"),
)


class MalformedFeed(ValueError):
    """Feed bytes are not valid JSON or lack the top-level item array."""


class MalformedChunk(ValueError):
    """Chunk text does not parse back into a CVE record."""


def severity_for_score(score: float) -> str | None:
    for lo, hi, label in SEVERITY_BANDS:
        if lo <= score <= hi:
            return label
    return None


def format_score(value: float) -> str:
    """Shortest decimal rendering of a CVSS score: 9.8 -> "9.8", 10.0 -> "10"."""
    text = repr(float(value))
    return text[:-2] if text.endswith(".0") else text


def parse_feed_timestamp(value: str) -> datetime:
    """Parse feed timestamps like 2023-01-10T04:15Z (minute precision)."""
    m = re.fullmatch(r"(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2})(?::(\d{2}))?Z?", value)
    if not m:
        raise ValueError(f"unrecognized timestamp: {value!r}")
    year, month, day, hour, minute = (int(m.group(i)) for i in range(1, 6))
    second = int(m.group(6)) if m.group(6) else 0
    return datetime(year, month, day, hour, minute, second, tzinfo=timezone.utc)


@dataclass
class CvssV3:
    """CVSS v3 base metrics plus the feed's exploitability/impact sub-scores."""

    version: str
    vector_string: str
    attack_vector: str
    attack_complexity: str
    privileges_required: str
    user_interaction: str
    scope: str
    confidentiality_impact: str
    integrity_impact: str
    availability_impact: str
    base_score: float
    base_severity: str
    exploitability_score: float
    impact_score: float

    def problems(self) -> list[str]:
        issues = []
        for name in ("base_score", "exploitability_score", "impact_score"):
            value = getattr(self, name)
            if not 0.0 <= value <= 10.0:
                issues.append(f"{name} {value} outside [0.0, 10.0]")
        expected = severity_for_score(self.base_score)
        if expected is not None and self.base_severity != expected:
            issues.append(
                f"base_severity {self.base_severity} inconsistent with base_score {self.base_score}"
            )
        return issues


@dataclass
class Reference:
    url: str
    tags: list[str] = field(default_factory=list)


@dataclass
class CveRecord:
    """One normalized NVD vulnerability entry.

    Timestamps are kept as the exact strings found in the feed so that
    ground-truth extraction stays byte-faithful; helpers parse them on
    demand for comparisons.
    """

    cve_id: str
    assigner: str
    published_date: str
    last_modified_date: str
    description: str
    cwe_ids: list[str] = field(default_factory=list)
    references: list[Reference] = field(default_factory=list)
    cpe_uris: list[str] = field(default_factory=list)
    cvss: CvssV3 | None = None

    def problems(self) -> list[str]:
        issues = []
        if not CVE_ID_RE.fullmatch(self.cve_id):
            issues.append(f"cve_id {self.cve_id!r} does not match CVE-YYYY-NNNN+")
        try:
            published = parse_feed_timestamp(self.published_date)
            modified = parse_feed_timestamp(self.last_modified_date)
            if published > modified:
                issues.append("published_date after last_modified_date")
        except ValueError as exc:
            issues.append(str(exc))
        if self.cvss is not None:
            issues.extend(self.cvss.problems())
        return issues


@dataclass
class CorpusStats:
    records_in: int = 0
    records_out: int = 0
    duplicates_removed: int = 0
    dropped_no_description: int = 0
    bytes_in: int = 0
    bytes_out: int = 0

    def as_dict(self) -> dict:
        return {
            "records_in": self.records_in,
            "records_out": self.records_out,
            "duplicates_removed": self.duplicates_removed,
            "dropped_no_description": self.dropped_no_description,
            "bytes_in": self.bytes_in,
            "bytes_out": self.bytes_out,
        }


@dataclass
class Chunk:
    """One retrievable unit of corpus text: a whole CVE record, serialized."""

    cve_id: str
    text: str
    token_estimate: int


# Fixed canonical key order for chunk serialization. The score block is
# omitted entirely when the record has no CVSS v3 metrics.
_LEADING_KEYS = ("cve_id", "published_date", "last_modified_date", "description")
_SCORE_KEYS = ("base_score", "base_severity", "exploitability_score", "impact_score", "vector_string")
_CVSS_DETAIL_KEYS = (
    ("cvss_version", "version"),
    ("attack_vector", "attack_vector"),
    ("attack_complexity", "attack_complexity"),
    ("privileges_required", "privileges_required"),
    ("user_interaction", "user_interaction"),
    ("scope", "scope"),
    ("confidentiality_impact", "confidentiality_impact"),
    ("integrity_impact", "integrity_impact"),
    ("availability_impact", "availability_impact"),
)


def canonical_text(record: CveRecord) -> str:
    """Serialize a record to its single-line canonical JSON form."""
    obj: dict = {
        "cve_id": record.cve_id,
        "published_date": record.published_date,
        "last_modified_date": record.last_modified_date,
        "description": record.description,
    }
    if record.cvss is not None:
        obj["base_score"] = record.cvss.base_score
        obj["base_severity"] = record.cvss.base_severity
        obj["exploitability_score"] = record.cvss.exploitability_score
        obj["impact_score"] = record.cvss.impact_score
        obj["vector_string"] = record.cvss.vector_string
    obj["cwe_ids"] = list(record.cwe_ids)
    obj["cpe_uris"] = list(record.cpe_uris)
    obj["references"] = [{"url": r.url, "tags": list(r.tags)} for r in record.references]
    obj["assigner"] = record.assigner
    if record.cvss is not None:
        for out_key, attr in _CVSS_DETAIL_KEYS:
            obj[out_key] = getattr(record.cvss, attr)
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def to_chunk(record: CveRecord) -> Chunk:
    """Serialize one record into its retrieval chunk (deterministic)."""
    text = canonical_text(record)
    return Chunk(cve_id=record.cve_id, text=text, token_estimate=estimate_tokens(text))


def parse_chunk_text(text: str) -> CveRecord:
    """Inverse of :func:`canonical_text`; recovers every record field."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedChunk(f"chunk text is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict) or "cve_id" not in obj:
        raise MalformedChunk("chunk JSON lacks a cve_id field")
    try:
        cvss = None
        if "base_score" in obj:
            cvss = CvssV3(
                version=obj["cvss_version"],
                vector_string=obj["vector_string"],
                attack_vector=obj["attack_vector"],
                attack_complexity=obj["attack_complexity"],
                privileges_required=obj["privileges_required"],
                user_interaction=obj["user_interaction"],
                scope=obj["scope"],
                confidentiality_impact=obj["confidentiality_impact"],
                integrity_impact=obj["integrity_impact"],
                availability_impact=obj["availability_impact"],
                base_score=obj["base_score"],
                base_severity=obj["base_severity"],
                exploitability_score=obj["exploitability_score"],
                impact_score=obj["impact_score"],
            )
        return CveRecord(
            cve_id=obj["cve_id"],
            assigner=obj["assigner"],
            published_date=obj["published_date"],
            last_modified_date=obj["last_modified_date"],
            description=obj["description"],
            cwe_ids=list(obj["cwe_ids"]),
            references=[Reference(url=r["url"], tags=list(r["tags"])) for r in obj["references"]],
            cpe_uris=list(obj["cpe_uris"]),
            cvss=cvss,
        )
    except (KeyError, TypeError) as exc:
        raise MalformedChunk(f"chunk JSON missing field: {exc}") from exc


def _english_description(item: dict) -> str | None:
    for entry in item.get("cve", {}).get("description", {}).get("description_data", []):
        if entry.get("lang") == "en":
            return entry.get("value", "")
    return None


def _collect_cpe_uris(node: dict, out: list[str]) -> None:
    for match in node.get("cpe_match", []):
        uri = match.get("cpe23Uri")
        if uri:
            out.append(uri)
    for child in node.get("children", []):
        _collect_cpe_uris(child, out)


def _parse_item(item: dict) -> CveRecord | None:
    """Map one feed item to a record; None when no English description."""
    cve = item["cve"]
    meta = cve["CVE_data_meta"]
    description = _english_description(item)
    if description is None:
        return None

    cwe_ids = []
    for ptype in cve.get("problemtype", {}).get("problemtype_data", []):
        for entry in ptype.get("description", []):
            if entry.get("lang") == "en" and entry.get("value"):
                cwe_ids.append(entry["value"])

    references = [
        Reference(url=r.get("url", ""), tags=list(r.get("tags", [])))
        for r in cve.get("references", {}).get("reference_data", [])
        if r.get("url")
    ]

    cpe_uris: list[str] = []
    for node in item.get("configurations", {}).get("nodes", []):
        _collect_cpe_uris(node, cpe_uris)

    cvss = None
    metric = item.get("impact", {}).get("baseMetricV3")
    if metric and "cvssV3" in metric:
        data = metric["cvssV3"]
        required = ("baseScore", "baseSeverity", "vectorString")
        if all(k in data for k in required) and "exploitabilityScore" in metric and "impactScore" in metric:
            cvss = CvssV3(
                version=data.get("version", "3.1"),
                vector_string=data["vectorString"],
                attack_vector=data.get("attackVector", ""),
                attack_complexity=data.get("attackComplexity", ""),
                privileges_required=data.get("privilegesRequired", ""),
                user_interaction=data.get("userInteraction", ""),
                scope=data.get("scope", ""),
                confidentiality_impact=data.get("confidentialityImpact", ""),
                integrity_impact=data.get("integrityImpact", ""),
                availability_impact=data.get("availabilityImpact", ""),
                base_score=float(data["baseScore"]),
                base_severity=data["baseSeverity"],
                exploitability_score=float(metric["exploitabilityScore"]),
                impact_score=float(metric["impactScore"]),
            )

    return CveRecord(
        cve_id=meta["ID"],
        assigner=meta.get("ASSIGNER", ""),
        published_date=item["publishedDate"],
        last_modified_date=item["lastModifiedDate"],
        description=description,
        cwe_ids=cwe_ids,
        references=references,
        cpe_uris=cpe_uris,
        cvss=cvss,
    )


def parse_feed(feed_bytes: bytes, errors: list[str] | None = None) -> list[CveRecord]:
    """Parse one NVD JSON 1.1 feed into records.

    Structural problems with the feed itself raise :class:`MalformedFeed`;
    per-item problems are soft: the item is skipped and, when an ``errors``
    list is supplied, a note is appended to it.
    """
    if feed_bytes[:2] == GZIP_MAGIC:
        feed_bytes = gzip.decompress(feed_bytes)
    try:
        payload = json.loads(feed_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFeed(f"feed is not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(payload, dict) or not isinstance(payload.get("CVE_Items"), list):
        raise MalformedFeed("feed lacks a top-level CVE_Items array")

    records = []
    for i, item in enumerate(payload["CVE_Items"]):
        try:
            record = _parse_item(item)
        except (KeyError, TypeError, ValueError) as exc:
            if errors is not None:
                errors.append(f"item {i}: unparseable ({exc})")
            continue
        if record is None:
            if errors is not None:
                cve_id = item.get("cve", {}).get("CVE_data_meta", {}).get("ID", f"item {i}")
                errors.append(f"{cve_id}: no English description")
            continue
        issues = record.problems()
        if issues:
            if errors is not None:
                errors.append(f"{record.cve_id}: {'; '.join(issues)}")
            continue
        records.append(record)
    return records


def _normalize_description(text: str) -> str:
    # Collapse every whitespace run to a single space and trim the ends.
    return " ".join(text.split())


def preprocess(records: Sequence[CveRecord]) -> tuple[list[CveRecord], CorpusStats]:
    """Normalize whitespace, drop empty descriptions, and dedupe by cve_id.

    For duplicate IDs the record with the latest last_modified_date wins,
    tie-broken by larger serialized length. Output is sorted by cve_id.
    Byte counts are measured on the canonical serialization of the records
    before and after, so bytes_out <= bytes_in on every input.
    """
    stats = CorpusStats(records_in=len(records))
    stats.bytes_in = sum(len(canonical_text(r).encode("utf-8")) for r in records)

    normalized = []
    for record in records:
        cleaned = replace(record, description=_normalize_description(record.description))
        if not cleaned.description:
            stats.dropped_no_description += 1
            continue
        normalized.append(cleaned)

    survivors: dict[str, tuple[datetime, int, CveRecord]] = {}
    for record in normalized:
        modified = parse_feed_timestamp(record.last_modified_date)
        size = len(canonical_text(record).encode("utf-8"))
        current = survivors.get(record.cve_id)
        if current is None:
            survivors[record.cve_id] = (modified, size, record)
            continue
        stats.duplicates_removed += 1
        if (modified, size) > current[:2]:
            survivors[record.cve_id] = (modified, size, record)

    out = [entry[2] for _, entry in sorted(survivors.items())]
    stats.records_out = len(out)
    stats.bytes_out = sum(len(canonical_text(r).encode("utf-8")) for r in out)
    return out, stats


@dataclass
class Corpus:
    """Preprocessed records in canonical order plus an id -> index map."""

    records: list[CveRecord]
    index_of: dict[str, int]
    stats: CorpusStats | None = None
    notes: list[str] = field(default_factory=list)

    @classmethod
    def from_records(
        cls,
        records: Sequence[CveRecord],
        stats: CorpusStats | None = None,
        notes: Iterable[str] = (),
    ) -> "Corpus":
        ordered = list(records)
        return cls(
            records=ordered,
            index_of={r.cve_id: i for i, r in enumerate(ordered)},
            stats=stats,
            notes=list(notes),
        )

    def __len__(self) -> int:
        return len(self.records)

    def get(self, cve_id: str) -> CveRecord | None:
        i = self.index_of.get(cve_id)
        return self.records[i] if i is not None else None

    def chunks(self) -> list[Chunk]:
        return [to_chunk(r) for r in self.records]


def load_corpus(paths: Sequence[str | Path]) -> Corpus:
    """Read feed files (gzip detected by magic bytes), merge, and preprocess.

    Unreadable paths raise OSError; malformed feeds raise MalformedFeed.
    Preprocessing runs once over the union, so duplicates across files
    collapse to a single record.
    """
    merged: list[CveRecord] = []
    notes: list[str] = []
    for path in paths:
        raw = Path(path).read_bytes()
        merged.extend(parse_feed(raw, errors=notes))
    records, stats = preprocess(merged)
    return Corpus.from_records(records, stats=stats, notes=notes)


def write_corpus_file(corpus: Corpus, path: str | Path) -> None:
    """Write the corpus as newline-delimited canonical chunk texts."""
    with open(path, "w", encoding="utf-8") as handle:
        for record in corpus.records:
            handle.write(canonical_text(record))
            handle.write("\n")


def read_corpus_file(path: str | Path) -> Corpus:
    """Load a corpus previously written by :func:`write_corpus_file`."""
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(parse_chunk_text(line))
    return Corpus.from_records(records)


def write_stats_file(stats: CorpusStats, path: str | Path) -> None:
    Path(path).write_text(json.dumps(stats.as_dict(), indent=2) + "\n", encoding="utf-8")
