"""Evaluation harness: question batches, answer judging, and metrics.

Generates seeded batches of field-level questions over the corpus, judges
backend answers into a four-outcome taxonomy (correct / hallucination /
omission / processing failure), and aggregates accuracy, failure counts,
token efficiency, and input-size curves into a versioned report.
"""

from __future__ import annotations

import csv
import json
import random
import re
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

from .backends import BackendConfig, LlmResponse, billed_cost_microusd, complete
from .corpus import Corpus, CveRecord, format_score, to_chunk
from .prompting import DEFAULT_TEMPLATE, PromptTemplate, assemble

if TYPE_CHECKING:  # pragma: no cover
    from .engine import QueryEngine

REPORT_FORMAT_VERSION = 1

DEFAULT_N_BATCHES = 5
DEFAULT_CVES_PER_BATCH = 5
DEFAULT_BUCKET_EDGES = (0, 8_192, 32_768, 131_072)

_CVE_MENTION_RE = re.compile(r"CVE-\d{4}-\d{4,}", re.IGNORECASE)
_DECIMAL_RE = re.compile(r"-?\d+(?:\.\d+)?")
_DATE_RE = re.compile(
    r"\d{4}-\d{2}-\d{2}(?:[T ]\d{2}:\d{2}(?::\d{2})?(?:Z|[+-]\d{2}:?\d{2})?)?",
    re.IGNORECASE,
)
_WORD_RE = re.compile(r"[a-z0-9]+")

DESCRIPTION_F1_THRESHOLD = 0.6


class InsufficientEligibleRecords(ValueError):
    """Corpus lacks enough fully scored records for the requested geometry."""


class MissingField(ValueError):
    """Record lacks the field a ground truth would be extracted from."""


class NoCorrectAnswers(ValueError):
    """Token efficiency is undefined without at least one correct row."""


class SchemaVersionMismatch(ValueError):
    """Report file was written with an unsupported format version."""


class QuestionType(Enum):
    PUBLISHED_DATE = "published_date"
    DESCRIPTION = "description"
    EXPLOITABILITY_SCORE = "exploitability_score"
    IMPACT_SCORE = "impact_score"
    BASE_SCORE = "base_score"

    @property
    def phrase(self) -> str:
        return _QTYPE_PHRASES[self]

    @property
    def label(self) -> str:
        return self.phrase.title()


_QTYPE_PHRASES = {
    QuestionType.PUBLISHED_DATE: "published date",
    QuestionType.DESCRIPTION: "description",
    QuestionType.EXPLOITABILITY_SCORE: "exploitability score",
    QuestionType.IMPACT_SCORE: "impact score",
    QuestionType.BASE_SCORE: "base score",
}

_NUMERIC_QTYPES = {
    QuestionType.EXPLOITABILITY_SCORE,
    QuestionType.IMPACT_SCORE,
    QuestionType.BASE_SCORE,
}


class Outcome(str, Enum):
    CORRECT = "correct"
    HALLUCINATION = "hallucination"
    OMISSION = "omission"
    PROCESSING_FAILURE = "processing_failure"


@dataclass
class Judgment:
    outcome: Outcome
    note: str | None = None


@dataclass
class EvalItem:
    batch_id: int
    cve_id: str
    qtype: QuestionType
    question: str
    ground_truth: str


@dataclass
class Batch:
    batch_id: int
    cve_ids: list[str]
    items: list[EvalItem]


@dataclass
class EvalRow:
    batch_id: int
    cve_id: str
    qtype: QuestionType
    question: str
    ground_truth: str
    response_text: str
    outcome: Outcome
    note: str | None = None
    input_tokens: int = 0
    output_tokens: int = 0
    latency: float = 0.0


def generate_question(cve_id: str, qtype: QuestionType) -> str:
    return f"What is the {qtype.phrase} of {cve_id}?"


def extract_ground_truth(record: CveRecord, qtype: QuestionType) -> str:
    """Expected answer straight from the record's structured fields."""
    if qtype is QuestionType.PUBLISHED_DATE:
        if not record.published_date:
            raise MissingField(f"{record.cve_id} has no published date")
        return record.published_date
    if qtype is QuestionType.DESCRIPTION:
        if not record.description:
            raise MissingField(f"{record.cve_id} has no description")
        return record.description
    if record.cvss is None:
        raise MissingField(f"{record.cve_id} has no CVSS v3 metrics")
    if qtype is QuestionType.EXPLOITABILITY_SCORE:
        return format_score(record.cvss.exploitability_score)
    if qtype is QuestionType.IMPACT_SCORE:
        return format_score(record.cvss.impact_score)
    return format_score(record.cvss.base_score)


def is_eligible(record: CveRecord) -> bool:
    """True when all five ground-truth fields can be extracted."""
    return bool(record.published_date) and bool(record.description) and record.cvss is not None


def sample_batches(
    corpus: Corpus,
    n_batches: int = DEFAULT_N_BATCHES,
    cves_per_batch: int = DEFAULT_CVES_PER_BATCH,
    seed: int = 0,
) -> list[Batch]:
    """Seeded sampling without replacement across all batches.

    Only records with every ground-truth field present are eligible; each
    sampled CVE receives one question per question type.
    """
    eligible = [r for r in corpus.records if is_eligible(r)]
    needed = n_batches * cves_per_batch
    if len(eligible) < needed:
        raise InsufficientEligibleRecords(
            f"need {needed} records with full CVSS v3 metrics, corpus has {len(eligible)}"
        )
    rng = random.Random(seed)
    picked = rng.sample(eligible, needed)

    batches = []
    for b in range(n_batches):
        batch_id = b + 1
        members = picked[b * cves_per_batch : (b + 1) * cves_per_batch]
        items = [
            EvalItem(
                batch_id=batch_id,
                cve_id=record.cve_id,
                qtype=qtype,
                question=generate_question(record.cve_id, qtype),
                ground_truth=extract_ground_truth(record, qtype),
            )
            for record in members
            for qtype in QuestionType
        ]
        batches.append(Batch(batch_id=batch_id, cve_ids=[r.cve_id for r in members], items=items))
    return batches


def _normalize_instant(text: str) -> datetime | None:
    candidate = text.strip()
    m = re.fullmatch(
        r"(\d{4})-(\d{2})-(\d{2})(?:[T ](\d{2}):(\d{2})(?::(\d{2}))?(Z|[+-]\d{2}:?\d{2})?)?",
        candidate,
        re.IGNORECASE,
    )
    if not m:
        return None
    year, month, day = int(m.group(1)), int(m.group(2)), int(m.group(3))
    hour = int(m.group(4)) if m.group(4) else 0
    minute = int(m.group(5)) if m.group(5) else 0
    second = int(m.group(6)) if m.group(6) else 0
    try:
        instant = datetime(year, month, day, hour, minute, second, tzinfo=timezone.utc)
    except ValueError:
        return None
    offset = m.group(7)
    if offset and offset.upper() != "Z":
        sign = 1 if offset[0] == "+" else -1
        hh, mm = int(offset[1:3]), int(offset[-2:])
        instant -= sign * timedelta(hours=hh, minutes=mm)
    return instant


def _first_decimal(text: str) -> float | None:
    # CVE IDs carry year/serial digits that are not answers; remove them
    # before looking for the first number.
    stripped = _CVE_MENTION_RE.sub(" ", text)
    m = _DECIMAL_RE.search(stripped)
    return float(m.group(0)) if m else None


def _word_tokens(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def _token_f1(a: Sequence[str], b: Sequence[str]) -> float:
    if not a or not b:
        return 0.0
    overlap = sum((Counter(a) & Counter(b)).values())
    if overlap == 0:
        return 0.0
    return 2.0 * overlap / (len(a) + len(b))


def _normalize_text(text: str) -> str:
    return " ".join(text.lower().split())


def judge(response: LlmResponse, item: EvalItem) -> Judgment:
    """Classify one answer against its ground truth.

    Decision order: processing failure, then blank omission, then
    type-specific content comparison (numeric canonicalization for scores,
    instant normalization for dates, token F1 or containment for
    descriptions).
    """
    if response.failure is not None:
        return Judgment(Outcome.PROCESSING_FAILURE, note=response.failure.value)
    text = response.text.strip()
    if not text:
        return Judgment(Outcome.OMISSION)

    if item.qtype in _NUMERIC_QTYPES:
        value = _first_decimal(text)
        if value is not None and value == float(item.ground_truth):
            return Judgment(Outcome.CORRECT)
        return Judgment(Outcome.HALLUCINATION)

    if item.qtype is QuestionType.PUBLISHED_DATE:
        truth_instant = _normalize_instant(item.ground_truth)
        for candidate in _DATE_RE.findall(text):
            if _normalize_instant(candidate) == truth_instant and truth_instant is not None:
                return Judgment(Outcome.CORRECT)
        return Judgment(Outcome.HALLUCINATION)

    truth_norm = _normalize_text(item.ground_truth)
    response_norm = _normalize_text(text)
    if truth_norm and truth_norm in response_norm:
        return Judgment(Outcome.CORRECT)
    truth_tokens = _word_tokens(item.ground_truth)
    response_tokens = _word_tokens(text)
    f1 = _token_f1(truth_tokens, response_tokens)
    if f1 >= DESCRIPTION_F1_THRESHOLD:
        return Judgment(Outcome.CORRECT)
    if f1 > 0.0:
        return Judgment(Outcome.OMISSION, note="partial")
    return Judgment(Outcome.HALLUCINATION)


@dataclass
class BatchScore:
    n_rows: int
    n_correct: int
    accuracy: float


@dataclass
class ScoreSummary:
    n_rows: int
    n_correct: int
    overall_accuracy: float
    overall_error: float
    per_batch: dict[int, BatchScore]


def score(rows: Sequence[EvalRow]) -> ScoreSummary:
    """Per-batch and overall accuracy; error rate is its complement."""
    if not rows:
        raise ValueError("cannot score zero rows")
    per_batch: dict[int, BatchScore] = {}
    for row in rows:
        batch = per_batch.setdefault(row.batch_id, BatchScore(0, 0, 0.0))
        batch.n_rows += 1
        if row.outcome is Outcome.CORRECT:
            batch.n_correct += 1
    for batch in per_batch.values():
        batch.accuracy = batch.n_correct / batch.n_rows
    n_correct = sum(b.n_correct for b in per_batch.values())
    accuracy = n_correct / len(rows)
    return ScoreSummary(
        n_rows=len(rows),
        n_correct=n_correct,
        overall_accuracy=accuracy,
        overall_error=1.0 - accuracy,
        per_batch=dict(sorted(per_batch.items())),
    )


def failure_distribution(rows: Sequence[EvalRow]) -> dict[str, int]:
    counts = {"hallucination": 0, "omission": 0, "processing_failure": 0}
    for row in rows:
        if row.outcome is not Outcome.CORRECT:
            counts[row.outcome.value] += 1
    return counts


def per_qtype_accuracy(rows: Sequence[EvalRow]) -> dict[QuestionType, float]:
    totals: dict[QuestionType, list[int]] = {}
    for row in rows:
        bucket = totals.setdefault(row.qtype, [0, 0])
        bucket[0] += 1
        if row.outcome is Outcome.CORRECT:
            bucket[1] += 1
    return {qtype: correct / total for qtype, (total, correct) in totals.items()}


@dataclass
class TokenEfficiency:
    """Cost units are billed micro-dollars of token usage, an artifact
    definition flagged in every report that carries them."""

    total_cost_microusd: float
    correct_count: int
    cost_per_correct: float
    normalized_cost: float
    raw_efficiency: float
    accuracy: float

    def as_dict(self) -> dict:
        return {
            "cost_units": "microusd",
            "total_cost_microusd": self.total_cost_microusd,
            "correct_count": self.correct_count,
            "cost_per_correct": self.cost_per_correct,
            "normalized_cost": self.normalized_cost,
            "raw_efficiency": self.raw_efficiency,
            "accuracy": self.accuracy,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TokenEfficiency":
        return cls(
            total_cost_microusd=payload["total_cost_microusd"],
            correct_count=payload["correct_count"],
            cost_per_correct=payload["cost_per_correct"],
            normalized_cost=payload["normalized_cost"],
            raw_efficiency=payload["raw_efficiency"],
            accuracy=payload["accuracy"],
        )


def _row_cost(row: EvalRow, config: BackendConfig) -> float:
    return billed_cost_microusd(
        LlmResponse(text="", input_tokens=row.input_tokens, output_tokens=row.output_tokens),
        config,
    )


def token_efficiency(
    rows: Sequence[EvalRow],
    config: BackendConfig,
    min_cost_per_correct: float | None = None,
) -> TokenEfficiency:
    """cost_per_correct = total billed cost / correct rows.

    raw_efficiency divides accuracy by the cost normalized against the
    suite minimum; for a single backend the normalization is 1.0 and raw
    efficiency equals accuracy.
    """
    if not rows:
        raise ValueError("cannot compute efficiency over zero rows")
    correct = sum(1 for r in rows if r.outcome is Outcome.CORRECT)
    if correct == 0:
        raise NoCorrectAnswers("no correct rows")
    total_cost = sum(_row_cost(r, config) for r in rows)
    cost_per_correct = total_cost / correct
    if min_cost_per_correct is None or min_cost_per_correct <= 0.0:
        normalized = 1.0
    else:
        normalized = cost_per_correct / min_cost_per_correct
    accuracy = correct / len(rows)
    return TokenEfficiency(
        total_cost_microusd=total_cost,
        correct_count=correct,
        cost_per_correct=cost_per_correct,
        normalized_cost=normalized,
        raw_efficiency=accuracy / normalized if normalized else accuracy,
        accuracy=accuracy,
    )


def efficiency_table(
    entries: Sequence[tuple[str, Sequence[EvalRow], BackendConfig]],
) -> list[tuple[str, TokenEfficiency]]:
    """Cross-backend comparison normalized by the suite's best cost."""
    raw = [(backend_id, token_efficiency(rows, config)) for backend_id, rows, config in entries]
    min_cpc = min(e.cost_per_correct for _, e in raw)
    table = [
        (backend_id, token_efficiency(rows, config, min_cost_per_correct=min_cpc))
        for (backend_id, rows, config), _ in zip(entries, raw)
    ]
    table.sort(key=lambda pair: pair[1].cost_per_correct)
    return table


@dataclass
class SizeBucket:
    lo: int
    hi: int
    n_rows: int
    n_correct: int
    accuracy: float | None
    total_cost_microusd: float

    def as_dict(self) -> dict:
        return {
            "lo": self.lo,
            "hi": self.hi,
            "n_rows": self.n_rows,
            "n_correct": self.n_correct,
            "accuracy": self.accuracy,
            "total_cost_microusd": self.total_cost_microusd,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SizeBucket":
        return cls(
            lo=payload["lo"],
            hi=payload["hi"],
            n_rows=payload["n_rows"],
            n_correct=payload["n_correct"],
            accuracy=payload["accuracy"],
            total_cost_microusd=payload["total_cost_microusd"],
        )


def efficiency_by_input_size(
    rows: Sequence[EvalRow],
    bucket_edges: Sequence[int] = DEFAULT_BUCKET_EDGES,
    config: BackendConfig | None = None,
) -> list[SizeBucket]:
    """Accuracy/cost per input-size bucket.

    Edges define half-open intervals [e_i, e_{i+1}); rows outside the
    overall range clamp into the first or last bucket. Empty buckets are
    emitted with a null accuracy, never dropped.
    """
    if len(bucket_edges) < 2 or any(a >= b for a, b in zip(bucket_edges, bucket_edges[1:])):
        raise ValueError("bucket edges must be strictly increasing")
    buckets = [
        SizeBucket(lo=lo, hi=hi, n_rows=0, n_correct=0, accuracy=None, total_cost_microusd=0.0)
        for lo, hi in zip(bucket_edges, bucket_edges[1:])
    ]
    for row in rows:
        i = 0
        for j, bucket in enumerate(buckets):
            if row.input_tokens >= bucket.lo:
                i = j
        buckets[i].n_rows += 1
        if row.outcome is Outcome.CORRECT:
            buckets[i].n_correct += 1
        if config is not None:
            buckets[i].total_cost_microusd += _row_cost(row, config)
    for bucket in buckets:
        if bucket.n_rows:
            bucket.accuracy = bucket.n_correct / bucket.n_rows
    return buckets


class ProbePosition(Enum):
    BEGIN = "begin"
    MIDDLE = "middle"
    END = "end"


@dataclass
class PositionalProbe:
    position: ProbePosition
    context_cve_ids: list[str]
    items: list[EvalItem]


def positional_probe(
    target: CveRecord,
    distractors: Sequence[CveRecord],
    position: ProbePosition,
) -> PositionalProbe:
    """Place the target chunk first, at the median index, or last among
    distractors, and emit the five question types for it."""
    if len(distractors) < 2:
        raise ValueError("positional probe needs at least 2 distractors")
    ordered = [r.cve_id for r in distractors]
    total = len(distractors) + 1
    if position is ProbePosition.BEGIN:
        ordered.insert(0, target.cve_id)
    elif position is ProbePosition.END:
        ordered.append(target.cve_id)
    else:
        ordered.insert(total // 2, target.cve_id)
    items = [
        EvalItem(
            batch_id=0,
            cve_id=target.cve_id,
            qtype=qtype,
            question=generate_question(target.cve_id, qtype),
            ground_truth=extract_ground_truth(target, qtype),
        )
        for qtype in QuestionType
    ]
    return PositionalProbe(position=position, context_cve_ids=ordered, items=items)


@dataclass
class ProbeResult:
    position: ProbePosition
    rows: list[EvalRow]
    accuracy: float


def run_positional_probes(
    target: CveRecord,
    distractors: Sequence[CveRecord],
    config: BackendConfig,
    template: PromptTemplate = DEFAULT_TEMPLATE,
    positions: Sequence[ProbePosition] = tuple(ProbePosition),
    store=None,
    transport=None,
) -> dict[ProbePosition, ProbeResult]:
    """Run the probe end to end with a fixed (non-retrieved) context order."""
    chunk_of = {r.cve_id: to_chunk(r) for r in [target, *distractors]}
    results = {}
    for position in positions:
        probe = positional_probe(target, distractors, position)
        chunks = [chunk_of[cve_id] for cve_id in probe.context_cve_ids]
        rows = []
        for item in probe.items:
            prompt = assemble(template, chunks, item.question)
            response = complete(config, prompt, store=store, transport=transport)
            judgment = judge(response, item)
            rows.append(_row_from(item, response, judgment))
        results[position] = ProbeResult(
            position=position,
            rows=rows,
            accuracy=score(rows).overall_accuracy,
        )
    return results


def _row_from(item: EvalItem, response: LlmResponse, judgment: Judgment) -> EvalRow:
    return EvalRow(
        batch_id=item.batch_id,
        cve_id=item.cve_id,
        qtype=item.qtype,
        question=item.question,
        ground_truth=item.ground_truth,
        response_text=response.text,
        outcome=judgment.outcome,
        note=judgment.note,
        input_tokens=response.input_tokens,
        output_tokens=response.output_tokens,
        latency=response.latency,
    )


@dataclass
class EvalReport:
    """Everything one evaluation run produced, ready for serialization."""

    backend_id: str
    seed: int
    n_batches: int
    cves_per_batch: int
    created_at: str
    rows: list[EvalRow]
    overall_accuracy: float
    overall_error: float
    per_batch_accuracy: dict[int, float]
    per_qtype_accuracy: dict[str, float]
    failure_counts: dict[str, int]
    token_efficiency: TokenEfficiency | None
    input_size_buckets: list[SizeBucket]

    def to_dict(self) -> dict:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "backend_id": self.backend_id,
            "seed": self.seed,
            "n_batches": self.n_batches,
            "cves_per_batch": self.cves_per_batch,
            "created_at": self.created_at,
            "rows": [
                {
                    "batch_id": r.batch_id,
                    "cve_id": r.cve_id,
                    "question_type": r.qtype.value,
                    "question": r.question,
                    "ground_truth": r.ground_truth,
                    "response": r.response_text,
                    "judgment": r.outcome.value,
                    "note": r.note,
                    "input_tokens": r.input_tokens,
                    "output_tokens": r.output_tokens,
                    "latency": r.latency,
                }
                for r in self.rows
            ],
            "overall_accuracy": self.overall_accuracy,
            "overall_error": self.overall_error,
            "per_batch_accuracy": {str(k): v for k, v in self.per_batch_accuracy.items()},
            "per_qtype_accuracy": self.per_qtype_accuracy,
            "failure_counts": self.failure_counts,
            "token_efficiency": self.token_efficiency.as_dict() if self.token_efficiency else None,
            "input_size_buckets": [b.as_dict() for b in self.input_size_buckets],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "EvalReport":
        version = payload.get("format_version")
        if version != REPORT_FORMAT_VERSION:
            raise SchemaVersionMismatch(
                f"unsupported report format version {version!r}, expected {REPORT_FORMAT_VERSION}"
            )
        rows = [
            EvalRow(
                batch_id=r["batch_id"],
                cve_id=r["cve_id"],
                qtype=QuestionType(r["question_type"]),
                question=r["question"],
                ground_truth=r["ground_truth"],
                response_text=r["response"],
                outcome=Outcome(r["judgment"]),
                note=r.get("note"),
                input_tokens=r.get("input_tokens", 0),
                output_tokens=r.get("output_tokens", 0),
                latency=r.get("latency", 0.0),
            )
            for r in payload["rows"]
        ]
        efficiency = payload.get("token_efficiency")
        return cls(
            backend_id=payload["backend_id"],
            seed=payload["seed"],
            n_batches=payload["n_batches"],
            cves_per_batch=payload["cves_per_batch"],
            created_at=payload["created_at"],
            rows=rows,
            overall_accuracy=payload["overall_accuracy"],
            overall_error=payload["overall_error"],
            per_batch_accuracy={int(k): v for k, v in payload["per_batch_accuracy"].items()},
            per_qtype_accuracy=dict(payload["per_qtype_accuracy"]),
            failure_counts=dict(payload["failure_counts"]),
            token_efficiency=TokenEfficiency.from_dict(efficiency) if efficiency else None,
            input_size_buckets=[SizeBucket.from_dict(b) for b in payload["input_size_buckets"]],
        )


def build_report(
    backend_id: str,
    rows: Sequence[EvalRow],
    config: BackendConfig,
    seed: int,
    n_batches: int,
    cves_per_batch: int,
    bucket_edges: Sequence[int] = DEFAULT_BUCKET_EDGES,
    created_at: str | None = None,
) -> EvalReport:
    summary = score(rows)
    try:
        efficiency = token_efficiency(rows, config)
    except NoCorrectAnswers:
        efficiency = None
    return EvalReport(
        backend_id=backend_id,
        seed=seed,
        n_batches=n_batches,
        cves_per_batch=cves_per_batch,
        created_at=created_at or datetime.now(timezone.utc).isoformat(timespec="seconds"),
        rows=list(rows),
        overall_accuracy=summary.overall_accuracy,
        overall_error=summary.overall_error,
        per_batch_accuracy={k: b.accuracy for k, b in summary.per_batch.items()},
        per_qtype_accuracy={q.value: a for q, a in per_qtype_accuracy(rows).items()},
        failure_counts=failure_distribution(rows),
        token_efficiency=efficiency,
        input_size_buckets=efficiency_by_input_size(rows, bucket_edges, config),
    )


def run_evaluation(
    engine: "QueryEngine",
    backend_id: str,
    seed: int,
    n_batches: int = DEFAULT_N_BATCHES,
    cves_per_batch: int = DEFAULT_CVES_PER_BATCH,
    k: int | None = None,
    budget: int | None = None,
) -> EvalReport:
    """Generate batches, run every item through the shared query path, and
    judge the answers into a report."""
    batches = sample_batches(engine.corpus, n_batches=n_batches, cves_per_batch=cves_per_batch, seed=seed)
    config = engine.backend_config(backend_id)
    rows = []
    for batch in batches:
        for item in batch.items:
            response, _prompt, _hits = engine.ask_raw(item.question, backend_id=backend_id, k=k, budget=budget)
            rows.append(_row_from(item, response, judge(response, item)))
    return build_report(
        backend_id=config.backend_id,
        rows=rows,
        config=config,
        seed=seed,
        n_batches=n_batches,
        cves_per_batch=cves_per_batch,
    )


def write_report(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")


def read_report(path: str | Path) -> EvalReport:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaVersionMismatch(f"report file is not valid JSON: {exc}") from exc
    return EvalReport.from_dict(payload)


def write_batch_files(report: EvalReport, out_dir: str | Path) -> list[Path]:
    """One file per batch, named `<backend>_batch<k>.json`, carrying the
    question / ground truth / verbatim response triple plus judgments."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    by_batch: dict[int, list[EvalRow]] = {}
    for row in report.rows:
        by_batch.setdefault(row.batch_id, []).append(row)
    for batch_id in sorted(by_batch):
        rows = by_batch[batch_id]
        correct = sum(1 for r in rows if r.outcome is Outcome.CORRECT)
        payload = {
            "format_version": REPORT_FORMAT_VERSION,
            "backend_id": report.backend_id,
            "batch_id": batch_id,
            "accuracy": correct / len(rows),
            "rows": [
                {
                    "question": r.question,
                    "ground_truth": r.ground_truth,
                    "response": r.response_text,
                    "judgment": r.outcome.value,
                    "note": r.note,
                    "input_tokens": r.input_tokens,
                    "output_tokens": r.output_tokens,
                }
                for r in rows
            ],
        }
        path = out / f"{report.backend_id}_batch{batch_id}.json"
        path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        paths.append(path)
    return paths


def export_qtype_csv(report: EvalReport, path: str | Path) -> None:
    """Per-question-type accuracy table as CSV."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["question_type", "accuracy"])
        for qtype in QuestionType:
            accuracy = report.per_qtype_accuracy.get(qtype.value)
            writer.writerow([qtype.label, "" if accuracy is None else f"{accuracy:.4f}"])
