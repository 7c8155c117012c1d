from __future__ import annotations

from pathlib import Path

import pytest

from vulnqa.corpus import Corpus, CveRecord, CvssV3, Reference, load_corpus, severity_for_score
from vulnqa.engine import QueryEngine
from vulnqa.retrieval import TfIdfIndex, fit

DATA_DIR = Path(__file__).parent / "data"
FEED_PATH = DATA_DIR / "nvd_fixture_feed.json"

FIG_DESCRIPTION = (
    "An unauthenticated attacker in SAP NetWeaver AS for Java version 7.50, due to improper "
    "access control, can attach to an open interface and use a naming and directory API to "
    "access services and perform unauthorized operations, including reading, modifying, and "
    "disabling services."
)


def make_cvss(
    base_score: float = 9.8,
    exploitability_score: float = 3.9,
    impact_score: float = 5.9,
    base_severity: str | None = None,
) -> CvssV3:
    return CvssV3(
        version="3.1",
        vector_string="CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H",
        attack_vector="NETWORK",
        attack_complexity="LOW",
        privileges_required="NONE",
        user_interaction="NONE",
        scope="UNCHANGED",
        confidentiality_impact="HIGH",
        integrity_impact="HIGH",
        availability_impact="HIGH",
        base_score=base_score,
        base_severity=base_severity or severity_for_score(base_score) or "NONE",
        exploitability_score=exploitability_score,
        impact_score=impact_score,
    )


def make_record(
    cve_id: str = "CVE-2020-1234",
    description: str = "A test vulnerability in ExampleSoft WidgetServer allows remote code execution.",
    published: str = "2020-06-01T10:00Z",
    modified: str = "2020-06-05T10:00Z",
    cvss: CvssV3 | None = None,
    with_cvss: bool = True,
    **kwargs,
) -> CveRecord:
    return CveRecord(
        cve_id=cve_id,
        assigner=kwargs.pop("assigner", "cve@example.org"),
        published_date=published,
        last_modified_date=modified,
        description=description,
        cwe_ids=kwargs.pop("cwe_ids", ["CWE-79"]),
        references=kwargs.pop(
            "references",
            [Reference(url="https://example.org/advisory", tags=["Vendor Advisory"])],
        ),
        cpe_uris=kwargs.pop("cpe_uris", ["cpe:2.3:a:examplesoft:widgetserver:1.0:*:*:*:*:*:*:*"]),
        cvss=cvss if cvss is not None else (make_cvss() if with_cvss else None),
    )


@pytest.fixture(scope="session")
def fixture_corpus() -> Corpus:
    return load_corpus([FEED_PATH])


@pytest.fixture(scope="session")
def fixture_index(fixture_corpus) -> TfIdfIndex:
    return fit(fixture_corpus.chunks())


@pytest.fixture()
def oracle_engine(fixture_corpus, fixture_index) -> QueryEngine:
    return QueryEngine(fixture_corpus, fixture_index, default_backend="extractor")


@pytest.fixture(scope="session")
def fig_record(fixture_corpus) -> CveRecord:
    record = fixture_corpus.get("CVE-2023-0017")
    assert record is not None
    return record
