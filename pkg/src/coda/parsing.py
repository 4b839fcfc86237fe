"""Interpret raw model replies into coding decisions.

The contract with the model is a tag the script can locate: the reply ends
with a ``Codes Applied:`` line followed by a dash-bulleted list of code
titles (or ``- None``). Models drift, so parsing is total: it tolerates
``*`` and numbered bullets, discards trailing prose after the list, matches
the *last* tag occurrence (earlier ones may be quoted instructions), and
reports what happened in a parse status instead of ever failing. Titles are
matched case-insensitively but never fuzzily; anything unmatched is surfaced
for human triage rather than silently dropped or guessed.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .codebook import Codebook

__all__ = [
    "ParseStatus",
    "CodingDecision",
    "parse_decision",
    "normalize_code_title",
]

_TAG = "codes applied:"
_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*(.*)$")
_JUSTIFICATION = re.compile(r"^\s*justification:\s*", re.IGNORECASE)


class ParseStatus(str, enum.Enum):
    CLEAN = "clean"
    RECOVERED = "recovered"
    UNPARSEABLE = "unparseable"


@dataclass(frozen=True)
class CodingDecision:
    passage_id: str
    scope_code: str | None
    justification: str | None
    applied: frozenset[str]
    unknown_titles: tuple[str, ...]
    parse_status: ParseStatus


def normalize_code_title(raw: str, cb: Codebook) -> str | None:
    """Resolve one list item to a code id, or None when nothing matches.

    Strips bullets, surrounding whitespace and trailing sentence
    punctuation, then matches titles case-insensitively and exactly.
    """
    s = raw.strip()
    m = _BULLET.match(s)
    if m:
        s = m.group(1)
    s = s.strip().rstrip(".,;:!?").strip()
    return cb.title_index().get(s.lower())


def _is_none_marker(item: str) -> bool:
    return item.strip().rstrip(".,;:!?").strip().lower() == "none"


def _find_tag(lines: list[str]) -> tuple[int, str] | None:
    """Locate the last line starting with the tag; return (index, remainder)."""
    found: tuple[int, str] | None = None
    for i, line in enumerate(lines):
        stripped = line.strip()
        if stripped.lower().startswith(_TAG):
            found = (i, stripped[len(_TAG):])
    return found


def _capture_justification(lines: list[str], end: int) -> str | None:
    """Text of the last line-block beginning "Justification:" before the tag."""
    start = None
    for i in range(end):
        if _JUSTIFICATION.match(lines[i]):
            start = i
    if start is None:
        return None
    block = [_JUSTIFICATION.sub("", lines[start], count=1)]
    for line in lines[start + 1 : end]:
        if not line.strip():
            break
        block.append(line)
    text = "\n".join(block).strip()
    return text or None


def parse_decision(
    text: str,
    cb: Codebook,
    scope_code: str | None = None,
    *,
    passage_id: str = "",
) -> CodingDecision:
    """Parse one model reply. Never raises; failures land in parse_status."""
    lines = text.splitlines()
    tag = _find_tag(lines)
    if tag is None:
        return CodingDecision(
            passage_id=passage_id,
            scope_code=scope_code,
            justification=None,
            applied=frozenset(),
            unknown_titles=(),
            parse_status=ParseStatus.UNPARSEABLE,
        )
    tag_idx, remainder = tag

    # The item list: the tag-line remainder (if any) behaves like the first
    # list line; then following lines, skipping blanks, until the first
    # non-bullet line, which (with anything after it) is discarded prose.
    candidates: list[str] = []
    if remainder.strip():
        candidates.append(remainder)
    candidates.extend(lines[tag_idx + 1 :])

    items: list[str] = []
    trailing_prose = False
    for line in candidates:
        if not line.strip():
            continue
        m = _BULLET.match(line)
        if m is None:
            trailing_prose = True
            break
        items.append(m.group(1))

    applied: list[str] = []
    unknown: list[str] = []
    for item in items:
        if _is_none_marker(item):
            continue
        code_id = normalize_code_title(item, cb)
        if code_id is None:
            unknown.append(item.strip())
        elif scope_code is not None and code_id != scope_code:
            # Out-of-scope titles are surfaced, never silently applied.
            unknown.append(item.strip())
        elif code_id not in applied:
            applied.append(code_id)

    status = (
        ParseStatus.CLEAN
        if not trailing_prose and not unknown
        else ParseStatus.RECOVERED
    )
    return CodingDecision(
        passage_id=passage_id,
        scope_code=scope_code,
        justification=_capture_justification(lines, tag_idx),
        applied=frozenset(applied),
        unknown_titles=tuple(unknown),
        parse_status=status,
    )
