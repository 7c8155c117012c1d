from __future__ import annotations

import gzip
import json
import random

import pytest

from conftest import FEED_PATH, FIG_DESCRIPTION, make_cvss, make_record
from vulnqa.corpus import (
    Corpus,
    CveRecord,
    MalformedChunk,
    MalformedFeed,
    Reference,
    canonical_text,
    load_corpus,
    parse_chunk_text,
    parse_feed,
    preprocess,
    read_corpus_file,
    to_chunk,
    write_corpus_file,
    write_stats_file,
)


def minimal_feed(items: list[dict]) -> bytes:
    return json.dumps({"CVE_data_type": "CVE", "CVE_Items": items}).encode("utf-8")


def feed_item(record: CveRecord) -> dict:
    """Build a feed item shaped like the JSON 1.1 schema from a record."""
    item = {
        "cve": {
            "CVE_data_meta": {"ID": record.cve_id, "ASSIGNER": record.assigner},
            "problemtype": {
                "problemtype_data": [
                    {"description": [{"lang": "en", "value": v} for v in record.cwe_ids]}
                ]
            },
            "description": {"description_data": [{"lang": "en", "value": record.description}]},
            "references": {
                "reference_data": [{"url": r.url, "tags": list(r.tags)} for r in record.references]
            },
        },
        "configurations": {
            "nodes": [
                {
                    "operator": "OR",
                    "cpe_match": [{"vulnerable": True, "cpe23Uri": uri} for uri in record.cpe_uris],
                }
            ]
        },
        "impact": {},
        "publishedDate": record.published_date,
        "lastModifiedDate": record.last_modified_date,
    }
    if record.cvss:
        c = record.cvss
        item["impact"] = {
            "baseMetricV3": {
                "cvssV3": {
                    "version": c.version,
                    "vectorString": c.vector_string,
                    "attackVector": c.attack_vector,
                    "attackComplexity": c.attack_complexity,
                    "privilegesRequired": c.privileges_required,
                    "userInteraction": c.user_interaction,
                    "scope": c.scope,
                    "confidentialityImpact": c.confidentiality_impact,
                    "integrityImpact": c.integrity_impact,
                    "availabilityImpact": c.availability_impact,
                    "baseScore": c.base_score,
                    "baseSeverity": c.base_severity,
                },
                "exploitabilityScore": c.exploitability_score,
                "impactScore": c.impact_score,
            }
        }
    return item


class TestParseFeed:
    def test_reference_record_fields(self, fig_record):
        assert fig_record.cve_id == "CVE-2023-0017"
        assert fig_record.assigner == "cna@sap.com"
        assert fig_record.published_date == "2023-01-10T04:15Z"
        assert fig_record.last_modified_date == "2023-01-13T18:18Z"
        assert fig_record.description == FIG_DESCRIPTION
        assert fig_record.cwe_ids == ["CWE-284"]
        assert fig_record.cvss is not None
        assert fig_record.cvss.base_score == 9.8
        assert fig_record.cvss.base_severity == "CRITICAL"
        assert fig_record.cvss.exploitability_score == 3.9
        assert fig_record.cvss.impact_score == 5.9
        assert fig_record.cvss.vector_string == "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H"
        assert [r.url for r in fig_record.references] == [
            "https://launchpad.support.sap.com/#/notes/328093",
            "https://www.sap.com/documents/2022/02/fa85ea4.html",
        ]
        assert fig_record.references[0].tags == ["Permissions Required", "Vendor Advisory"]
        assert fig_record.cpe_uris == [
            "cpe:2.3:a:sap:netweaver_application_server_for_java:7.50:*:*:*:*:*:*:*"
        ]

    def test_empty_item_array(self):
        assert parse_feed(minimal_feed([])) == []

    def test_truncated_json_raises(self):
        with pytest.raises(MalformedFeed):
            parse_feed(FEED_PATH.read_bytes()[:200])

    def test_missing_item_array_raises(self):
        with pytest.raises(MalformedFeed):
            parse_feed(b'{"CVE_data_type": "CVE"}')
        with pytest.raises(MalformedFeed):
            parse_feed(b"[1, 2, 3]")

    def test_gzip_detected_by_magic_bytes(self):
        raw = FEED_PATH.read_bytes()
        assert parse_feed(gzip.compress(raw)) == parse_feed(raw)

    def test_missing_cvss_yields_absent(self):
        records = parse_feed(minimal_feed([feed_item(make_record(with_cvss=False))]))
        assert len(records) == 1
        assert records[0].cvss is None

    def test_no_english_description_is_soft_error(self):
        item = feed_item(make_record())
        item["cve"]["description"]["description_data"] = [{"lang": "fr", "value": "Une faille."}]
        good = feed_item(make_record(cve_id="CVE-2020-2222"))
        errors: list[str] = []
        records = parse_feed(minimal_feed([item, good]), errors=errors)
        assert [r.cve_id for r in records] == ["CVE-2020-2222"]
        assert any("no English description" in e for e in errors)

    def test_unparseable_item_is_soft_error(self):
        errors: list[str] = []
        records = parse_feed(minimal_feed([{"cve": {}}, feed_item(make_record())]), errors=errors)
        assert len(records) == 1
        assert errors

    def test_published_after_modified_is_soft_error(self):
        bad = make_record(published="2021-05-05T10:00Z", modified="2021-05-01T10:00Z")
        errors: list[str] = []
        assert parse_feed(minimal_feed([feed_item(bad)]), errors=errors) == []
        assert any("published_date" in e for e in errors)


class TestPreprocess:
    def test_duplicate_latest_modified_survives(self):
        older = make_record(cve_id="CVE-2023-0017", modified="2023-01-11T00:00Z",
                            description="older revision")
        newer = make_record(cve_id="CVE-2023-0017", modified="2023-01-13T00:00Z",
                            description="newer revision")
        out, stats = preprocess([older, newer])
        assert len(out) == 1
        assert out[0].description == "newer revision"
        assert stats.duplicates_removed == 1

    def test_already_unique_is_identity(self):
        records = [make_record(cve_id=f"CVE-2020-{1000 + i}") for i in range(5)]
        out, stats = preprocess(records)
        assert stats.records_out == stats.records_in == 5
        assert stats.duplicates_removed == 0
        assert stats.dropped_no_description == 0

    def test_hundred_records_thirty_byte_identical_duplicates(self):
        # 70 unique records, 30 exact copies of some of them; expected counts
        # verified by brute force over the constructed list.
        uniques = [make_record(cve_id=f"CVE-2019-{2000 + i}", description=f"flaw number {i}")
                   for i in range(70)]
        dupes = [uniques[i % 70] for i in range(30)]
        mixed = uniques + dupes
        assert len(mixed) == 100
        expected_unique = len({r.cve_id for r in mixed})
        out, stats = preprocess(mixed)
        assert stats.records_out == len(out) == expected_unique == 70
        assert stats.duplicates_removed == 30
        assert stats.bytes_out < stats.bytes_in
        assert stats.records_out == stats.records_in - stats.duplicates_removed - stats.dropped_no_description

    def test_whitespace_collapsed_and_empty_description_dropped(self):
        noisy = make_record(cve_id="CVE-2020-3000",
                            description="  A  flaw\twith\n\nnoise   everywhere ")
        blank = make_record(cve_id="CVE-2020-3001", description=" \n\t ")
        out, stats = preprocess([noisy, blank])
        assert [r.cve_id for r in out] == ["CVE-2020-3000"]
        assert out[0].description == "A flaw with noise everywhere"
        assert stats.dropped_no_description == 1

    def test_output_sorted_by_cve_id(self):
        records = [make_record(cve_id=f"CVE-2018-{9999 - i}") for i in range(10)]
        out, _ = preprocess(records)
        assert [r.cve_id for r in out] == sorted(r.cve_id for r in out)

    def test_idempotence(self):
        rng = random.Random(42)
        records = []
        for i in range(40):
            records.append(make_record(
                cve_id=f"CVE-2021-{1000 + rng.randint(0, 25)}",
                description=" ".join("word%d" % rng.randint(0, 9) for _ in range(rng.randint(1, 30)))
                + rng.choice(["", "  ", "\n\t"]),
                modified=f"2021-06-{rng.randint(10, 28):02d}T10:00Z",
            ))
        once, _ = preprocess(records)
        twice, stats2 = preprocess(once)
        assert twice == once
        assert stats2.duplicates_removed == 0
        assert stats2.dropped_no_description == 0

    def test_dedup_soundness_survivor_has_max_last_modified(self):
        rng = random.Random(7)
        records = []
        for _ in range(60):
            day = rng.randint(1, 28)
            records.append(make_record(
                cve_id=f"CVE-2022-{1000 + rng.randint(0, 9)}",
                description=f"revision on day {day}",
                modified=f"2022-03-{day:02d}T12:00Z",
            ))
        out, _ = preprocess(records)
        assert len({r.cve_id for r in out}) == len(out)
        latest: dict[str, str] = {}
        for r in records:
            if r.cve_id not in latest or r.last_modified_date > latest[r.cve_id]:
                latest[r.cve_id] = r.last_modified_date
        for r in out:
            assert r.last_modified_date == latest[r.cve_id]

    def test_size_monotonicity(self):
        rng = random.Random(3)
        for _ in range(20):
            records = [
                make_record(
                    cve_id=f"CVE-2017-{1000 + rng.randint(0, 15)}",
                    description="".join(rng.choice("ab \t\n") for _ in range(rng.randint(0, 80))),
                )
                for _ in range(rng.randint(0, 12))
            ]
            _, stats = preprocess(records)
            assert stats.bytes_out <= stats.bytes_in


class TestChunks:
    def test_reference_chunk_contains_key_substrings(self, fig_record):
        chunk = to_chunk(fig_record)
        assert "CVE-2023-0017" in chunk.text
        assert "9.8" in chunk.text
        assert "2023-01-10T04:15Z" in chunk.text

    def test_deterministic(self, fig_record):
        assert to_chunk(fig_record).text == to_chunk(fig_record).text

    def test_cvss_absent_omits_score_keys(self):
        chunk = to_chunk(make_record(with_cvss=False))
        for key in ("base_score", "base_severity", "exploitability_score", "impact_score", "vector_string"):
            assert f'"{key}"' not in chunk.text

    def test_single_line(self, fig_record):
        record = make_record(description="line one\nline two\twith tab")
        assert "\n" not in to_chunk(record).text
        assert "\n" not in to_chunk(fig_record).text

    def test_canonical_key_order(self, fig_record):
        keys = list(json.loads(canonical_text(fig_record)).keys())
        assert keys[:12] == [
            "cve_id", "published_date", "last_modified_date", "description",
            "base_score", "base_severity", "exploitability_score", "impact_score",
            "vector_string", "cwe_ids", "cpe_uris", "references",
        ]

    def test_round_trip_reference_record(self, fig_record):
        assert parse_chunk_text(to_chunk(fig_record).text) == fig_record

    def test_round_trip_generated_records(self):
        rng = random.Random(99)
        alphabet = "abc XYZ 0189 .,;:/\\\"'{}[]()é中☃\t\n-"
        for i in range(50):
            record = make_record(
                cve_id=f"CVE-{rng.randint(1999, 2024)}-{rng.randint(1000, 999999)}",
                description="".join(rng.choice(alphabet) for _ in range(rng.randint(1, 120))),
                cwe_ids=[f"CWE-{rng.randint(1, 900)}" for _ in range(rng.randint(0, 3))],
                references=[
                    Reference(url=f"https://example.org/{j}", tags=[rng.choice(["Patch", "Exploit", ""])])
                    for j in range(rng.randint(0, 3))
                ],
                cpe_uris=[f"cpe:2.3:a:v{j}:p:1.0:*:*:*:*:*:*:*" for j in range(rng.randint(0, 2))],
                cvss=make_cvss(
                    base_score=round(rng.uniform(0.1, 10.0), 1),
                    exploitability_score=round(rng.uniform(0.0, 10.0), 1),
                    impact_score=round(rng.uniform(0.0, 10.0), 1),
                ) if rng.random() < 0.8 else None,
                with_cvss=False,
            )
            assert parse_chunk_text(to_chunk(record).text) == record, f"round trip failed at {i}"

    def test_malformed_chunk_raises(self):
        with pytest.raises(MalformedChunk):
            parse_chunk_text("not json at all")
        with pytest.raises(MalformedChunk):
            parse_chunk_text('{"no_cve_id": true}')

    def test_token_estimate_matches_byte_heuristic(self, fig_record):
        chunk = to_chunk(fig_record)
        assert chunk.token_estimate == (len(chunk.text.encode("utf-8")) + 3) // 4


class TestLoadCorpus:
    def test_same_record_across_two_files_dedupes(self, tmp_path):
        item = feed_item(make_record())
        for name in ("a.json", "b.json"):
            (tmp_path / name).write_bytes(minimal_feed([item]))
        corpus = load_corpus([tmp_path / "a.json", tmp_path / "b.json"])
        assert len(corpus) == 1
        assert corpus.stats.duplicates_removed == 1

    def test_zero_paths(self):
        corpus = load_corpus([])
        assert len(corpus) == 0

    def test_three_files_of_ten_disjoint_records(self, tmp_path):
        # Expected membership and order enumerated independently here.
        expected_ids = []
        for f in range(3):
            items = []
            for i in range(10):
                cve_id = f"CVE-201{f}-{5000 + i}"
                expected_ids.append(cve_id)
                items.append(feed_item(make_record(
                    cve_id=cve_id,
                    published=f"201{f}-01-01T00:00Z",
                    modified=f"201{f}-01-02T00:00Z",
                )))
            (tmp_path / f"feed{f}.json").write_bytes(minimal_feed(items))
        corpus = load_corpus(sorted(tmp_path.glob("feed*.json")))
        assert len(corpus) == 30
        assert [r.cve_id for r in corpus.records] == sorted(expected_ids)

    def test_unreadable_path_is_fatal(self, tmp_path):
        with pytest.raises(OSError):
            load_corpus([tmp_path / "missing.json"])

    def test_index_of_matches_order(self, fixture_corpus):
        for cve_id, i in fixture_corpus.index_of.items():
            assert fixture_corpus.records[i].cve_id == cve_id

    def test_corpus_file_round_trip(self, fixture_corpus, tmp_path):
        path = tmp_path / "corpus.txt"
        write_corpus_file(fixture_corpus, path)
        loaded = read_corpus_file(path)
        assert loaded.records == fixture_corpus.records

    def test_stats_file(self, fixture_corpus, tmp_path):
        path = tmp_path / "stats.json"
        write_stats_file(fixture_corpus.stats, path)
        payload = json.loads(path.read_text())
        assert payload == fixture_corpus.stats.as_dict()
        assert payload["records_out"] == payload["records_in"] - payload["duplicates_removed"] - payload["dropped_no_description"]

    def test_corpus_get(self, fixture_corpus):
        assert fixture_corpus.get("CVE-2023-0017").cve_id == "CVE-2023-0017"
        assert fixture_corpus.get("CVE-1900-0001") is None
