from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from coda.codebook import (
    Code,
    Codebook,
    CodebookError,
    content_version,
    diff_codebooks,
    parse_codebook,
    serialize_codebook,
    validate_codebook,
)
from coda.fixtures import dubois_codebook


def make_doc(codes=None, name="t", preamble="You are a careful coder."):
    if codes is None:
        codes = [{"id": "scholar", "title": "Scholar", "definition": "Mentions of scholarship."}]
    return json.dumps({"name": name, "preamble": preamble, "codes": codes})


def test_parse_minimal_document():
    cb = parse_codebook(make_doc())
    assert len(cb.codes) == 1
    assert cb.codes[0].id == "scholar"
    assert cb.version


def test_fixture_has_nine_codes_in_three_categories():
    cb = dubois_codebook()
    assert len(cb.codes) == 9
    assert len({c.category for c in cb.codes}) == 3
    assert validate_codebook(cb) == []


def test_duplicate_title_case_insensitive_rejected():
    codes = [
        {"id": "a", "title": "Scholar", "definition": "x"},
        {"id": "b", "title": "scholar", "definition": "y"},
    ]
    with pytest.raises(CodebookError) as exc:
        parse_codebook(make_doc(codes))
    assert "Scholar" in str(exc.value) and "scholar" in str(exc.value)


def test_duplicate_id_rejected():
    codes = [
        {"id": "a", "title": "One", "definition": "x"},
        {"id": "a", "title": "Two", "definition": "y"},
    ]
    with pytest.raises(CodebookError, match="duplicate code id 'a'"):
        parse_codebook(make_doc(codes))


def test_empty_codes_rejected():
    with pytest.raises(CodebookError, match="empty codebook"):
        parse_codebook(make_doc([]))


def test_malformed_json_rejected():
    with pytest.raises(CodebookError, match="malformed"):
        parse_codebook(b"{not json")


def test_bad_id_rejected():
    with pytest.raises(CodebookError, match=r"\[a-z0-9_-\]\+"):
        parse_codebook(make_doc([{"id": "Bad Id", "title": "T", "definition": "d"}]))


def test_missing_definition_rejected():
    with pytest.raises(CodebookError, match="definition"):
        parse_codebook(make_doc([{"id": "a", "title": "T"}]))


def test_trailing_whitespace_trimmed_but_nothing_else():
    cb = parse_codebook(
        make_doc([{"id": "a", "title": "T", "definition": "  Keep  leading.  \n"}])
    )
    assert cb.codes[0].definition == "  Keep  leading."


def test_validate_reports_blank_definition():
    cb = Codebook(
        name="t",
        preamble="p",
        codes=(Code(id="a", title="T", definition="   "),),
    )
    issues = validate_codebook(cb)
    assert len(issues) == 1 and "'a'" in issues[0]


def test_validate_reports_empty_codebook():
    issues = validate_codebook(Codebook(name="t", preamble="p", codes=()))
    assert issues == ["empty codebook"]


def test_round_trip_preserves_fields_and_digest():
    cb = dubois_codebook()
    again = parse_codebook(serialize_codebook(cb))
    assert again == cb
    assert again.version == cb.version


def test_version_deterministic():
    doc = make_doc()
    assert parse_codebook(doc).version == parse_codebook(doc).version


def test_version_changes_with_definition():
    cb = dubois_codebook()
    doc = json.loads(serialize_codebook(cb))
    doc["codes"][0]["definition"] += "!"
    assert parse_codebook(json.dumps(doc)).version != cb.version


def test_version_changes_with_preamble():
    cb = dubois_codebook()
    doc = json.loads(serialize_codebook(cb))
    doc["preamble"] += " Extra."
    assert parse_codebook(json.dumps(doc)).version != cb.version


def test_version_changes_when_codes_swapped():
    cb = dubois_codebook()
    doc = json.loads(serialize_codebook(cb))
    doc["codes"][0], doc["codes"][1] = doc["codes"][1], doc["codes"][0]
    assert parse_codebook(json.dumps(doc)).version != cb.version


def test_diff_identity_is_empty():
    cb = dubois_codebook()
    assert diff_codebooks(cb, cb).is_empty()


def test_diff_single_definition_edit():
    a = dubois_codebook()
    doc = json.loads(serialize_codebook(a))
    old = doc["codes"][2]["definition"]
    doc["codes"][2]["definition"] = "New definition."
    b = parse_codebook(json.dumps(doc))
    d = diff_codebooks(a, b)
    assert d.added == () and d.removed == ()
    assert d.changed == ((a.codes[2].id, "definition", old, "New definition."),)


def test_diff_added_code():
    a = parse_codebook(make_doc())
    b = parse_codebook(
        make_doc(
            [
                {"id": "scholar", "title": "Scholar", "definition": "Mentions of scholarship."},
                {"id": "activist", "title": "Activist", "definition": "Mentions of organizing."},
            ]
        )
    )
    d = diff_codebooks(a, b)
    assert d.added == ("activist",) and d.removed == () and d.changed == ()


# Hypothesis: random small codebooks for the anti-symmetry property.

_ids = st.lists(
    st.text(alphabet="abcdefgh", min_size=1, max_size=4), min_size=1, max_size=5, unique=True
)


@st.composite
def codebooks(draw):
    ids = draw(_ids)
    codes = tuple(
        Code(id=i, title=f"Title {i.upper()}", definition=draw(st.text(min_size=1, max_size=20)).rstrip() or "d")
        for i in ids
    )
    cb = Codebook(name="h", preamble="pre", codes=codes)
    return cb


@given(codebooks(), codebooks())
def test_diff_antisymmetric(a, b):
    fwd = diff_codebooks(a, b)
    rev = diff_codebooks(b, a)
    assert set(fwd.added) == set(rev.removed)
    assert set(fwd.removed) == set(rev.added)
    assert {(i, f, new, old) for i, f, old, new in fwd.changed} == set(rev.changed)


@given(codebooks())
def test_digest_sensitive_to_any_code_field(cb):
    base = content_version(cb)
    for idx, code in enumerate(cb.codes):
        mutated = list(cb.codes)
        mutated[idx] = Code(
            id=code.id, title=code.title + "x", definition=code.definition, category=code.category
        )
        assert content_version(Codebook(cb.name, cb.preamble, tuple(mutated))) != base
