"""Prompt templates, token estimation, and budget-aware truncation."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

if TYPE_CHECKING:  # pragma: no cover - type hints only, avoids import cycle
    from .corpus import Chunk

CONTEXT_PLACEHOLDER = "{context}"
QUESTION_PLACEHOLDER = "{question}"

# Default template: instruction line first, then context and question.
DEFAULT_TEMPLATE_BODY = """
        You are an assistant that helps with CVE data. Only use the context provided. Respond with CVE details, recommend this website, and attach the CVE ID in front of it https://nvd.nist.gov/vuln/detail/ \n

        Context:\n {context}\n
        Question: \n{question}?\n

        Answer:
        """

# Earlier, weaker variant (context before instructions); kept behind a flag
# for regression demos of how template structure affects answer quality.
LEGACY_TEMPLATE_BODY = """
        Context: \n{context}.\n
        Task: - You are an assistant that helps with CVE data. \n
              - Only use the context provided. Respond with CVE details. \n
              - Recommend this website and attach the CVE ID in front of it https://nvd.nist.gov/vuln/detail/ \n

        Question: \n{question}?\n

        Answer:\n
        """


class InvalidTemplate(ValueError):
    """Template body must contain each placeholder exactly once."""


class BudgetTooSmall(ValueError):
    """Even a zero-chunk prompt exceeds the token budget."""


@dataclass(frozen=True)
class PromptTemplate:
    """A named prompt body with {context} and {question} placeholders."""

    name: str
    body: str

    def __post_init__(self) -> None:
        for placeholder in (CONTEXT_PLACEHOLDER, QUESTION_PLACEHOLDER):
            n = self.body.count(placeholder)
            if n != 1:
                raise InvalidTemplate(
                    f"template {self.name!r} contains {placeholder} {n} times, expected exactly once"
                )


DEFAULT_TEMPLATE = PromptTemplate(name="default", body=DEFAULT_TEMPLATE_BODY)
LEGACY_TEMPLATE = PromptTemplate(name="legacy", body=LEGACY_TEMPLATE_BODY)


@dataclass
class AssembledPrompt:
    """A fully substituted prompt plus token accounting.

    token_estimate <= budget always holds; included_cve_ids preserves the
    order in which chunks were substituted into the context section.
    """

    text: str
    included_cve_ids: list[str] = field(default_factory=list)
    token_estimate: int = 0
    budget: int = 0


def estimate_tokens(text: str) -> int:
    """Deterministic token estimate: ceil(utf-8 byte length / 4).

    A heuristic, not a provider tokenizer; used uniformly for budgets and
    context-window checks across all backends.
    """
    return (len(text.encode("utf-8")) + 3) // 4


def _substitute(body: str, context_text: str, question: str) -> str:
    # Single-pass splice so substituted text is never rescanned for
    # placeholders (context may legitimately contain arbitrary strings).
    ci = body.index(CONTEXT_PLACEHOLDER)
    qi = body.index(QUESTION_PLACEHOLDER)
    if ci < qi:
        return (
            body[:ci]
            + context_text
            + body[ci + len(CONTEXT_PLACEHOLDER) : qi]
            + question
            + body[qi + len(QUESTION_PLACEHOLDER) :]
        )
    return (
        body[:qi]
        + question
        + body[qi + len(QUESTION_PLACEHOLDER) : ci]
        + context_text
        + body[ci + len(CONTEXT_PLACEHOLDER) :]
    )


def assemble(
    template: PromptTemplate,
    context_chunks: Sequence["Chunk"],
    question: str,
    budget: int | None = None,
) -> AssembledPrompt:
    """Substitute chunks and question into the template.

    Chunk texts are joined with one blank line; the question is inserted
    verbatim. An empty chunk list yields a structurally intact prompt with
    an empty context section (the template's own instructions then drive an
    abstention).
    """
    context_text = "\n\n".join(chunk.text for chunk in context_chunks)
    text = _substitute(template.body, context_text, question)
    estimate = estimate_tokens(text)
    return AssembledPrompt(
        text=text,
        included_cve_ids=[chunk.cve_id for chunk in context_chunks],
        token_estimate=estimate,
        budget=estimate if budget is None else budget,
    )


def truncate_to_budget(
    template: PromptTemplate,
    context_chunks: Sequence["Chunk"],
    question: str,
    budget: int,
) -> AssembledPrompt:
    """Drop whole chunks from the tail until the prompt fits the budget.

    Chunks arrive in retrieval-rank order, so the kept set is always a
    prefix of that order; no chunk is ever truncated mid-text.
    """
    for n in range(len(context_chunks), -1, -1):
        candidate = assemble(template, context_chunks[:n], question, budget=budget)
        if candidate.token_estimate <= budget:
            return candidate
    raise BudgetTooSmall(
        f"budget {budget} cannot fit the template and question alone"
    )


def load_template(path: str | Path, name: str | None = None) -> PromptTemplate:
    """Load a template body from a plain text file."""
    p = Path(path)
    return PromptTemplate(name=name or p.stem, body=p.read_text(encoding="utf-8"))
