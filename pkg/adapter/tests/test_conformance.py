"""Conformance against the engine-generated fixture suite.

The fixture file pins the exact request bytes an attack engine sends and the
exact reply bytes a conforming server must produce for the reference toy
model, plus malformed lines the server must survive. The whole file doubles
as the 1000-request soak.
"""

import json
import os
import subprocess
import sys

import pytest

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures", "conformance.jsonl")


@pytest.fixture(scope="module")
def fixture_entries():
    with open(FIXTURES, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = json.loads(lines[0])
    entries = [json.loads(line) for line in lines[1:] if line]
    assert header["entries"] == len(entries)
    return entries


@pytest.fixture(scope="module")
def replies(fixture_entries):
    payload = "\n".join(e["request"] for e in fixture_entries) + "\n"
    proc = subprocess.run(
        [sys.executable, "-m", "victim_adapter",
         "--model", "victim_adapter.toy_model:load"],
        input=payload.encode("utf-8"), stdout=subprocess.PIPE, check=True,
        timeout=120,
    )
    out = proc.stdout.decode("utf-8").splitlines()
    assert len(out) == len(fixture_entries)
    return out


class TestConformance:
    def test_soak_has_a_thousand_requests(self, fixture_entries):
        assert len(fixture_entries) == 1000

    def test_byte_equivalence_on_well_formed_requests(self, fixture_entries, replies):
        checked = 0
        for entry, reply in zip(fixture_entries, replies):
            if "expect" in entry:
                assert reply == entry["expect"]
                checked += 1
        assert checked > 900

    def test_error_lines_are_survived(self, fixture_entries, replies):
        erroneous = [(e, r) for e, r in zip(fixture_entries, replies)
                     if e.get("expect_error")]
        assert erroneous
        for entry, reply in erroneous:
            obj = json.loads(reply)
            assert "error" in obj and "scores" not in obj

    def test_ids_echoed_in_order(self, fixture_entries, replies):
        expected_ids = []
        got_ids = []
        for entry, reply in zip(fixture_entries, replies):
            if "expect" in entry:
                expected_ids.append(json.loads(entry["request"])["id"])
                got_ids.append(json.loads(reply)["id"])
        assert got_ids == expected_ids
