"""TF-IDF sparse index with cosine ranking and a CVE-ID fast path.

Weighting: tf = raw term count, idf = ln((1 + N) / (1 + df)) + 1, document
vectors L2-normalized. The smoothed idf keeps corpus-universal terms at a
positive weight and avoids division edge cases. No stemming and no
stop-word removal: CVE text is terse and the index stays interpretable.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import Chunk

INDEX_FORMAT_VERSION = 1

_COARSE_SPLIT_RE = re.compile(r"[^0-9a-z.\-]+")
_INNER_SPLIT_RE = re.compile(r"[.\-]+")
_CVE_TOKEN_RE = re.compile(r"cve-\d{4}-\d{4,}")
_VERSION_TOKEN_RE = re.compile(r"\d+(?:\.\d+)+")


class EmptyCorpus(ValueError):
    """Index operations require at least one document."""


class IndexFormatError(ValueError):
    """Persisted index file has an unsupported format version or shape."""


def tokenize(text: str) -> list[str]:
    """Lowercase and split, keeping CVE IDs and dotted versions whole.

    Splits on anything that is not alphanumeric, '-', or '.'; coarse pieces
    that match the CVE-ID or dotted-version pattern survive intact, all
    other '-' and '.' act as further split points.
    """
    tokens = []
    for piece in _COARSE_SPLIT_RE.split(text.lower()):
        if not piece:
            continue
        if _CVE_TOKEN_RE.fullmatch(piece) or _VERSION_TOKEN_RE.fullmatch(piece):
            tokens.append(piece)
        else:
            tokens.extend(p for p in _INNER_SPLIT_RE.split(piece) if p)
    return tokens


@dataclass
class Vocabulary:
    term_ids: dict[str, int]
    document_frequency: dict[str, int]
    n_documents: int

    def __len__(self) -> int:
        return len(self.term_ids)


@dataclass
class SparseVector:
    """(term_id, weight) entries with strictly increasing ids, weights > 0."""

    entries: list[tuple[int, float]] = field(default_factory=list)

    def is_zero(self) -> bool:
        return not self.entries


@dataclass
class TfIdfIndex:
    vocabulary: Vocabulary
    doc_vectors: list[SparseVector]
    cve_ids: list[str]
    row_of: dict[str, int]

    @property
    def n_rows(self) -> int:
        return len(self.doc_vectors)


@dataclass
class RetrievalHit:
    cve_id: str
    score: float
    rank: int


def idf(document_frequency: int, n_documents: int) -> float:
    return math.log((1 + n_documents) / (1 + document_frequency)) + 1.0


def _weighted(counts: Counter, term_ids: dict[str, int], idf_by_id: dict[int, float]) -> SparseVector:
    entries = []
    for term, count in counts.items():
        term_id = term_ids.get(term)
        if term_id is None:
            continue
        entries.append((term_id, count * idf_by_id[term_id]))
    entries.sort()
    norm = math.sqrt(sum(w * w for _, w in entries))
    if norm == 0.0:
        return SparseVector([])
    return SparseVector([(tid, w / norm) for tid, w in entries])


def fit(chunks: Sequence[Chunk]) -> TfIdfIndex:
    """Build the index over corpus chunks (corpus order preserved)."""
    if not chunks:
        raise EmptyCorpus("cannot fit an index over zero chunks")

    doc_counts = [Counter(tokenize(chunk.text)) for chunk in chunks]

    term_ids: dict[str, int] = {}
    document_frequency: dict[str, int] = {}
    for counts in doc_counts:
        for term in counts:
            if term not in term_ids:
                term_ids[term] = len(term_ids)
            document_frequency[term] = document_frequency.get(term, 0) + 1

    n = len(chunks)
    idf_by_id = {term_ids[t]: idf(df, n) for t, df in document_frequency.items()}
    vocabulary = Vocabulary(term_ids=term_ids, document_frequency=document_frequency, n_documents=n)
    doc_vectors = [_weighted(counts, term_ids, idf_by_id) for counts in doc_counts]
    cve_ids = [chunk.cve_id for chunk in chunks]
    return TfIdfIndex(
        vocabulary=vocabulary,
        doc_vectors=doc_vectors,
        cve_ids=cve_ids,
        row_of={cve_id: i for i, cve_id in enumerate(cve_ids)},
    )


def transform(index: TfIdfIndex, text: str) -> SparseVector:
    """Vectorize free text against the fitted vocabulary.

    Out-of-vocabulary terms are ignored; all-OOV text yields the zero
    vector, otherwise the result is L2-normalized.
    """
    counts = Counter(tokenize(text))
    idf_by_id = {
        index.vocabulary.term_ids[t]: idf(df, index.vocabulary.n_documents)
        for t, df in index.vocabulary.document_frequency.items()
    }
    return _weighted(counts, index.vocabulary.term_ids, idf_by_id)


def cosine(a: SparseVector, b: SparseVector) -> float:
    """Dot product of the (already normalized) inputs; 0 when either is zero."""
    if a.is_zero() or b.is_zero():
        return 0.0
    total = 0.0
    i = j = 0
    ea, eb = a.entries, b.entries
    while i < len(ea) and j < len(eb):
        ta, wa = ea[i]
        tb, wb = eb[j]
        if ta == tb:
            total += wa * wb
            i += 1
            j += 1
        elif ta < tb:
            i += 1
        else:
            j += 1
    # Weights are nonnegative, so the true value lies in [0, 1]; clamp
    # float round-off at the boundaries.
    return min(1.0, max(0.0, total))


def retrieve(index: TfIdfIndex, query: str, k: int) -> list[RetrievalHit]:
    """Top-k chunks by cosine score, ties broken by cve_id ascending.

    CVE-ID tokens in the query that name corpus documents force-include
    those documents at the head of the list (score pinned to 1.0, ordered
    by first appearance in the query); similarity hits fill the remaining
    positions up to k.
    """
    if index.n_rows == 0:
        raise EmptyCorpus("index has no documents")
    if k < 1:
        raise ValueError("k must be >= 1")

    forced_ids = []
    for token in tokenize(query):
        if _CVE_TOKEN_RE.fullmatch(token):
            canonical = "CVE-" + token[len("cve-"):]
            if canonical in index.row_of and canonical not in forced_ids:
                forced_ids.append(canonical)

    query_vector = transform(index, query)
    scored = sorted(
        ((cosine(query_vector, index.doc_vectors[row]), cve_id) for cve_id, row in index.row_of.items()),
        key=lambda pair: (-pair[0], pair[1]),
    )

    hits = [RetrievalHit(cve_id=cve_id, score=1.0, rank=0) for cve_id in forced_ids]
    forced = set(forced_ids)
    for score, cve_id in scored:
        if len(hits) >= max(k, len(forced_ids)):
            break
        if cve_id in forced:
            continue
        hits.append(RetrievalHit(cve_id=cve_id, score=score, rank=0))
    for rank, hit in enumerate(hits, start=1):
        hit.rank = rank
    return hits


def save_index(index: TfIdfIndex, path: str | Path) -> None:
    """Persist the index as versioned JSON (floats round-trip exactly)."""
    terms = sorted(index.vocabulary.term_ids, key=index.vocabulary.term_ids.get)
    payload = {
        "format_version": INDEX_FORMAT_VERSION,
        "n_documents": index.vocabulary.n_documents,
        "terms": terms,
        "document_frequency": [index.vocabulary.document_frequency[t] for t in terms],
        "cve_ids": index.cve_ids,
        "vectors": [[[tid, w] for tid, w in v.entries] for v in index.doc_vectors],
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_index(path: str | Path) -> TfIdfIndex:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IndexFormatError(f"index file is not valid JSON: {exc}") from exc
    version = payload.get("format_version")
    if version != INDEX_FORMAT_VERSION:
        raise IndexFormatError(
            f"unsupported index format version {version!r}, expected {INDEX_FORMAT_VERSION}"
        )
    terms = payload["terms"]
    dfs = payload["document_frequency"]
    vocabulary = Vocabulary(
        term_ids={t: i for i, t in enumerate(terms)},
        document_frequency=dict(zip(terms, dfs)),
        n_documents=payload["n_documents"],
    )
    doc_vectors = [SparseVector([(int(tid), float(w)) for tid, w in entries]) for entries in payload["vectors"]]
    cve_ids = payload["cve_ids"]
    return TfIdfIndex(
        vocabulary=vocabulary,
        doc_vectors=doc_vectors,
        cve_ids=cve_ids,
        row_of={cve_id: i for i, cve_id in enumerate(cve_ids)},
    )
