"""Corpus handling: passage extraction, desk-scale statistics, gold labels.

Passages are keyword-anchored: a passage is a maximal run of consecutive
paragraphs that each contain the keyword, joined by a single blank line.
Word and sentence counts use deliberately simple rules (whitespace tokens;
'.', '!' or '?' followed by whitespace or end of text) since the statistics
are descriptive, not load-bearing.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass

__all__ = [
    "Passage",
    "CorpusStats",
    "GoldLabels",
    "CorpusError",
    "GoldLabelError",
    "count_words",
    "count_sentences",
    "segment_paragraphs",
    "extract_passages",
    "corpus_stats",
    "load_gold",
    "load_passages_jsonl",
    "passages_to_jsonl",
]

_SENTENCE_END = re.compile(r"[.!?](?=\s|$)")


class CorpusError(ValueError):
    """Raised for malformed corpus files or invalid passages."""


class GoldLabelError(ValueError):
    """Raised for malformed or conflicting gold-label rows."""


def count_words(text: str) -> int:
    return len(text.split())


def count_sentences(text: str) -> int:
    return len(_SENTENCE_END.findall(text))


@dataclass(frozen=True)
class Passage:
    id: str
    text: str
    source: str | None = None
    date: str | None = None
    word_count: int = 0
    sentence_count: int = 0

    @classmethod
    def from_text(
        cls, id: str, text: str, source: str | None = None, date: str | None = None
    ) -> "Passage":
        if not text:
            raise CorpusError(f"passage {id!r}: text must be non-empty")
        return cls(
            id=id,
            text=text,
            source=source,
            date=date,
            word_count=count_words(text),
            sentence_count=count_sentences(text),
        )


@dataclass(frozen=True)
class CorpusStats:
    n: int
    mean_words: float
    sd_words: float
    mean_sentences: float
    sd_sentences: float


@dataclass(frozen=True)
class GoldLabels:
    """Total map from (passage id, code id) to the human decision.

    Absence of a pair is an error at scoring time, never an implicit False.
    """

    entries: dict[tuple[str, str], bool]

    def get(self, passage_id: str, code_id: str) -> bool:
        return self.entries[(passage_id, code_id)]

    def missing_pairs(self, cells: list[tuple[str, str]]) -> list[tuple[str, str]]:
        return sorted(cell for cell in cells if cell not in self.entries)


def segment_paragraphs(document: str) -> list[str]:
    """Split into maximal blank-line-delimited blocks, trimmed, empties dropped."""
    paragraphs: list[str] = []
    current: list[str] = []
    for line in document.splitlines():
        if line.strip():
            current.append(line)
        elif current:
            paragraphs.append("\n".join(current).strip())
            current = []
    if current:
        paragraphs.append("\n".join(current).strip())
    return [p for p in paragraphs if p]


def extract_passages(
    document: str,
    keyword: str,
    *,
    id_prefix: str = "p",
    source: str | None = None,
    date: str | None = None,
) -> list[Passage]:
    """Extract maximal runs of consecutive keyword-bearing paragraphs.

    Each run becomes one passage (paragraphs re-joined by a single blank
    line), numbered in document order: ids are f"{id_prefix}{k}" with k
    starting at 1. Matching is a case-sensitive substring test.
    """
    if not keyword:
        raise CorpusError("keyword must be non-empty")
    passages: list[Passage] = []
    run: list[str] = []

    def flush() -> None:
        if run:
            text = "\n\n".join(run)
            passages.append(
                Passage.from_text(f"{id_prefix}{len(passages) + 1}", text, source, date)
            )
            run.clear()

    for paragraph in segment_paragraphs(document):
        if keyword in paragraph:
            run.append(paragraph)
        else:
            flush()
    flush()
    return passages


def corpus_stats(passages: list[Passage]) -> CorpusStats:
    """Means and population standard deviations of word/sentence counts."""
    n = len(passages)
    if n == 0:
        return CorpusStats(0, 0.0, 0.0, 0.0, 0.0)

    def mean_sd(values: list[int]) -> tuple[float, float]:
        mean = sum(values) / n
        variance = sum((v - mean) ** 2 for v in values) / n
        return mean, math.sqrt(variance)

    mean_w, sd_w = mean_sd([p.word_count for p in passages])
    mean_s, sd_s = mean_sd([p.sentence_count for p in passages])
    return CorpusStats(n=n, mean_words=mean_w, sd_words=sd_w, mean_sentences=mean_s, sd_sentences=sd_s)


def load_gold(data: bytes | str) -> GoldLabels:
    """Load the long-format gold CSV: passage_id,code_id,applied with applied in {0,1}.

    Duplicate rows restating the same value are tolerated; conflicting
    duplicates are errors.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    reader = csv.reader(io.StringIO(data))
    try:
        header = next(reader)
    except StopIteration:
        raise GoldLabelError("empty gold file: expected header passage_id,code_id,applied")
    if [h.strip() for h in header] != ["passage_id", "code_id", "applied"]:
        raise GoldLabelError(
            f"bad gold header {header!r}: expected passage_id,code_id,applied"
        )
    entries: dict[tuple[str, str], bool] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 3:
            raise GoldLabelError(f"line {lineno}: expected 3 columns, got {len(row)}")
        passage_id, code_id, token = (col.strip() for col in row)
        if not passage_id or not code_id:
            raise GoldLabelError(f"line {lineno}: empty passage_id or code_id")
        if token not in ("0", "1"):
            raise GoldLabelError(
                f"line {lineno}: applied must be 0 or 1, got {token!r}"
            )
        value = token == "1"
        key = (passage_id, code_id)
        if key in entries and entries[key] != value:
            raise GoldLabelError(
                f"conflicting duplicate for ({passage_id!r}, {code_id!r})"
            )
        entries[key] = value
    return GoldLabels(entries=entries)


def load_passages_jsonl(data: bytes | str) -> list[Passage]:
    """Read a JSON-lines passage (or raw-document) file: one object per line."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    passages: list[Passage] = []
    seen: set[str] = set()
    for lineno, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"line {lineno}: malformed JSON: {exc}") from exc
        if not isinstance(obj, dict) or not isinstance(obj.get("id"), str) or not obj["id"]:
            raise CorpusError(f"line {lineno}: object must carry a non-empty string 'id'")
        if not isinstance(obj.get("text"), str) or not obj["text"]:
            raise CorpusError(f"line {lineno}: object must carry non-empty string 'text'")
        if obj["id"] in seen:
            raise CorpusError(f"line {lineno}: duplicate passage id {obj['id']!r}")
        seen.add(obj["id"])
        passages.append(
            Passage.from_text(obj["id"], obj["text"], obj.get("source"), obj.get("date"))
        )
    return passages


def passages_to_jsonl(passages: list[Passage]) -> bytes:
    lines = []
    for p in passages:
        obj: dict = {"id": p.id, "text": p.text}
        if p.source is not None:
            obj["source"] = p.source
        if p.date is not None:
            obj["date"] = p.date
        lines.append(json.dumps(obj, ensure_ascii=False))
    return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")
