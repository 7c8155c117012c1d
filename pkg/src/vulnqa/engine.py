"""The one query path shared by interactive use and evaluation runs."""

from __future__ import annotations

from dataclasses import dataclass, field

from .backends import (
    BackendConfig,
    LlmResponse,
    TranscriptStore,
    Transport,
    complete,
    default_backend_configs,
)
from .corpus import Corpus, to_chunk
from .prompting import (
    DEFAULT_TEMPLATE,
    AssembledPrompt,
    PromptTemplate,
    assemble,
    truncate_to_budget,
)
from .retrieval import RetrievalHit, TfIdfIndex, retrieve


class UnknownBackend(ValueError):
    def __init__(self, backend_id: str, known: list[str]):
        super().__init__(f"unknown backend {backend_id!r}; known: {', '.join(known)}")
        self.backend_id = backend_id
        self.known = known


@dataclass
class QueryResult:
    """Outcome of one interactive query (live queries are never judged)."""

    answer: str
    retrieved_cve_ids: list[str] = field(default_factory=list)
    backend_id: str = ""
    input_tokens: int = 0
    output_tokens: int = 0
    latency: float = 0.0
    failure: str | None = None

    def as_dict(self) -> dict:
        return {
            "answer": self.answer,
            "retrieved_cve_ids": self.retrieved_cve_ids,
            "backend_id": self.backend_id,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "latency": self.latency,
            "failure": self.failure,
        }


class QueryEngine:
    """Immutable corpus + index behind a retrieve -> assemble -> complete loop.

    Safe for concurrent ask() calls; the per-backend concurrency ceiling is
    enforced one layer down in the backends module.
    """

    def __init__(
        self,
        corpus: Corpus,
        index: TfIdfIndex,
        backends: dict[str, BackendConfig] | None = None,
        default_backend: str = "extractor",
        default_k: int = 3,
        template: PromptTemplate = DEFAULT_TEMPLATE,
        budget: int | None = None,
        transcript_store: TranscriptStore | None = None,
        transport: Transport | None = None,
    ):
        self.corpus = corpus
        self.index = index
        self.backends = backends or default_backend_configs()
        self.default_backend = default_backend
        self.default_k = default_k
        self.template = template
        self.budget = budget
        self.transcript_store = transcript_store
        self.transport = transport
        self._chunk_of = {record.cve_id: to_chunk(record) for record in corpus.records}

    def backend_config(self, backend_id: str | None = None) -> BackendConfig:
        resolved = backend_id or self.default_backend
        config = self.backends.get(resolved)
        if config is None:
            raise UnknownBackend(resolved, sorted(self.backends))
        return config

    def ask_raw(
        self,
        question: str,
        backend_id: str | None = None,
        k: int | None = None,
        budget: int | None = None,
    ) -> tuple[LlmResponse, AssembledPrompt, list[RetrievalHit]]:
        """The single internal entry point: every answered question, whether
        interactive or part of an evaluation batch, passes through here."""
        config = self.backend_config(backend_id)
        hits = retrieve(self.index, question, k or self.default_k)
        chunks = [self._chunk_of[hit.cve_id] for hit in hits]
        effective_budget = budget if budget is not None else self.budget
        if effective_budget is not None:
            prompt = truncate_to_budget(self.template, chunks, question, effective_budget)
        else:
            prompt = assemble(self.template, chunks, question)
        response = complete(config, prompt, store=self.transcript_store, transport=self.transport)
        return response, prompt, hits

    def ask(
        self,
        question: str,
        backend_id: str | None = None,
        k: int | None = None,
        budget: int | None = None,
    ) -> QueryResult:
        response, prompt, _hits = self.ask_raw(question, backend_id=backend_id, k=k, budget=budget)
        return QueryResult(
            answer=response.text,
            retrieved_cve_ids=list(prompt.included_cve_ids),
            backend_id=self.backend_config(backend_id).backend_id,
            input_tokens=response.input_tokens,
            output_tokens=response.output_tokens,
            latency=response.latency,
            failure=response.failure.value if response.failure else None,
        )
