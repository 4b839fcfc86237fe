"""Codebooks: versioned code definitions that double as prompt fragments.

A codebook is an ordered list of codes, each with a stable id, a display
title (the string that appears in prompts and is matched in model output)
and a prose definition. Codebooks are immutable; editing one means
constructing a new version. The version is a digest of the canonical
serialization, sensitive to code order because order fixes prompt layout.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, replace

__all__ = [
    "Code",
    "Codebook",
    "CodebookDiff",
    "CodebookError",
    "parse_codebook",
    "serialize_codebook",
    "validate_codebook",
    "diff_codebooks",
    "content_version",
]

ID_PATTERN = re.compile(r"[a-z0-9_-]+\Z")

# Code fields that participate in diffs, in reporting order.
DIFFABLE_FIELDS = ("title", "definition", "category", "notes")


class CodebookError(ValueError):
    """Raised when a codebook document violates the format or an invariant."""


@dataclass(frozen=True)
class Code:
    """One category: binary applied / not-applied per passage."""

    id: str
    title: str
    definition: str
    category: str | None = None
    notes: str | None = None


@dataclass(frozen=True)
class Codebook:
    name: str
    preamble: str
    codes: tuple[Code, ...]
    version: str = ""

    def code_ids(self) -> list[str]:
        return [c.id for c in self.codes]

    def get(self, code_id: str) -> Code | None:
        for c in self.codes:
            if c.id == code_id:
                return c
        return None

    def title_index(self) -> dict[str, str]:
        """Lowercased title -> code id, for output matching."""
        return {c.title.lower(): c.id for c in self.codes}

    def with_version(self) -> "Codebook":
        return replace(self, version=content_version(self))


@dataclass(frozen=True)
class CodebookDiff:
    """Difference between two codebook versions, keyed by code id."""

    added: tuple[str, ...]
    removed: tuple[str, ...]
    changed: tuple[tuple[str, str, str | None, str | None], ...]

    def is_empty(self) -> bool:
        return not (self.added or self.removed or self.changed)


def _canonical_document(cb: Codebook) -> dict:
    """The on-disk document shape (no version; it is computed on load)."""
    codes = []
    for c in cb.codes:
        entry: dict = {"id": c.id, "title": c.title, "definition": c.definition}
        if c.category is not None:
            entry["category"] = c.category
        if c.notes is not None:
            entry["notes"] = c.notes
        codes.append(entry)
    return {"name": cb.name, "preamble": cb.preamble, "codes": codes}


def content_version(cb: Codebook) -> str:
    """Digest of the canonical serialization; order-sensitive by design."""
    canon = json.dumps(
        _canonical_document(cb), ensure_ascii=False, sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def serialize_codebook(cb: Codebook) -> bytes:
    """UTF-8 JSON document; omits the version field."""
    doc = _canonical_document(cb)
    return (json.dumps(doc, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


def _prose(raw: object, what: str, code_ref: str | None = None) -> str:
    if not isinstance(raw, str):
        where = f" for code {code_ref!r}" if code_ref else ""
        raise CodebookError(f"{what}{where} must be a string, got {type(raw).__name__}")
    # Prose is stored exactly as authored apart from a trailing-whitespace trim.
    return raw.rstrip()


def parse_codebook(data: bytes | str) -> Codebook:
    """Parse and validate a codebook document, computing its version.

    Raises CodebookError naming the offending code for duplicate ids,
    duplicate titles (case-insensitive), bad ids, and empty fields.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise CodebookError(f"malformed codebook document: {exc}") from exc
    if not isinstance(doc, dict):
        raise CodebookError("malformed codebook document: top level must be an object")

    name = _prose(doc.get("name", ""), "name")
    preamble = _prose(doc.get("preamble", ""), "preamble")
    raw_codes = doc.get("codes")
    if not isinstance(raw_codes, list):
        raise CodebookError("malformed codebook document: 'codes' must be a list")
    if not raw_codes:
        raise CodebookError("empty codebook: at least one code is required")

    codes: list[Code] = []
    seen_ids: set[str] = set()
    seen_titles: dict[str, tuple[str, str]] = {}
    for i, raw in enumerate(raw_codes):
        if not isinstance(raw, dict):
            raise CodebookError(f"malformed codebook document: code #{i + 1} must be an object")
        code_id = raw.get("id")
        if not isinstance(code_id, str) or not code_id:
            raise CodebookError(f"code #{i + 1}: id is missing or empty")
        if not ID_PATTERN.fullmatch(code_id):
            raise CodebookError(f"code {code_id!r}: id must match [a-z0-9_-]+")
        if code_id in seen_ids:
            raise CodebookError(f"duplicate code id {code_id!r}")
        seen_ids.add(code_id)

        title = _prose(raw.get("title", ""), "title", code_id)
        if not title:
            raise CodebookError(f"code {code_id!r}: title is missing or empty")
        key = title.lower()
        if key in seen_titles:
            prev_id, prev_title = seen_titles[key]
            raise CodebookError(
                f"duplicate title: {title!r} on code {code_id!r} collides with "
                f"{prev_title!r} on code {prev_id!r} (titles are matched case-insensitively)"
            )
        seen_titles[key] = (code_id, title)

        definition = _prose(raw.get("definition", ""), "definition", code_id)
        if not definition:
            raise CodebookError(f"code {code_id!r}: definition is missing or empty")

        category = raw.get("category")
        notes = raw.get("notes")
        codes.append(
            Code(
                id=code_id,
                title=title,
                definition=definition,
                category=_prose(category, "category", code_id) if category is not None else None,
                notes=_prose(notes, "notes", code_id) if notes is not None else None,
            )
        )

    return Codebook(name=name, preamble=preamble, codes=tuple(codes)).with_version()


def validate_codebook(cb: Codebook) -> list[str]:
    """Return invariant violations as human-readable issues (empty = valid)."""
    issues: list[str] = []
    if not cb.codes:
        issues.append("empty codebook")
        return issues
    seen_ids: set[str] = set()
    seen_titles: dict[str, str] = {}
    for c in cb.codes:
        if not c.id or not ID_PATTERN.fullmatch(c.id):
            issues.append(f"code {c.id!r}: id must be a non-empty [a-z0-9_-]+ slug")
        if c.id in seen_ids:
            issues.append(f"duplicate code id {c.id!r}")
        seen_ids.add(c.id)
        if not c.title.strip():
            issues.append(f"code {c.id!r}: blank title")
        else:
            key = c.title.strip().lower()
            if key in seen_titles:
                issues.append(
                    f"duplicate title {c.title!r}: codes {seen_titles[key]!r} and {c.id!r}"
                )
            seen_titles[key] = c.id
        if not c.definition.strip():
            issues.append(f"code {c.id!r}: blank definition")
    return issues


def diff_codebooks(a: Codebook, b: Codebook) -> CodebookDiff:
    """Code-level diff from a to b: added/removed ids and per-field changes."""
    a_by_id = {c.id: c for c in a.codes}
    b_by_id = {c.id: c for c in b.codes}
    added = tuple(sorted(set(b_by_id) - set(a_by_id)))
    removed = tuple(sorted(set(a_by_id) - set(b_by_id)))
    changed: list[tuple[str, str, str | None, str | None]] = []
    for code_id in sorted(set(a_by_id) & set(b_by_id)):
        before, after = a_by_id[code_id], b_by_id[code_id]
        for field_name in DIFFABLE_FIELDS:
            old, new = getattr(before, field_name), getattr(after, field_name)
            if old != new:
                changed.append((code_id, field_name, old, new))
    return CodebookDiff(added=added, removed=removed, changed=tuple(changed))
