"""Independent dense brute-force TF-IDF ranking used as the test oracle.

Deliberately shares no code with the package: documents are dense lists of
floats over a sorted term list, tokenization is plain whitespace split, and
ranking is a full sort. Only suitable for tiny corpora.
"""

from __future__ import annotations

import math


def rank(docs: list[tuple[str, str]], query: str) -> list[tuple[str, float]]:
    """Full ranked list of (doc_id, cosine score), ties by doc_id ascending.

    tf = raw count, idf = ln((1 + N)/(1 + df)) + 1, document and query
    vectors L2-normalized (zero vectors stay zero).
    """
    terms = sorted({t for _, text in docs for t in text.split()})
    n = len(docs)
    df = {t: sum(1 for _, text in docs if t in text.split()) for t in terms}
    idf = {t: math.log((1 + n) / (1 + df[t])) + 1.0 for t in terms}

    def vectorize(text: str) -> list[float]:
        tokens = text.split()
        raw = [tokens.count(t) * idf[t] for t in terms]
        norm = math.sqrt(sum(w * w for w in raw))
        return [w / norm for w in raw] if norm else raw

    doc_vectors = [(doc_id, vectorize(text)) for doc_id, text in docs]
    query_vector = vectorize(query)
    scored = [
        (doc_id, sum(a * b for a, b in zip(query_vector, vec)))
        for doc_id, vec in doc_vectors
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored
