from __future__ import annotations

import json
from pathlib import Path

import pytest

from coda.codebook import serialize_codebook
from coda.corpus import Passage, passages_to_jsonl
from coda.fixtures import dubois_codebook
from coda.llm_client import pair_key

CB = dubois_codebook()

NONE_REPLY = "Justification: Nothing in the passage supports this code.\n\nCodes Applied:\n- None"


def applied_reply(code_id: str, justification: str | None = None) -> str:
    title = CB.get(code_id).title
    j = justification or "The passage supports this code directly."
    return f"Justification: {j}\n\nCodes Applied:\n- {title}"


def synthetic_passages(n: int = 6) -> list[Passage]:
    texts = [
        "Du Bois published a landmark study of urban life. Scholars still cite it today.",
        "At the rally, organizers repeatedly invoked Du Bois and his campaigns for justice.",
        "A professor of history said Du Bois shaped the field. Her lecture drew hundreds.",
        "The city unveiled a statue of Du Bois outside the library he once used.",
        "Among the era's Black intellectuals, from Washington to Du Bois, debates ran deep.",
        "Du Bois co-founded a national association and convened congresses across continents.",
    ]
    return [Passage.from_text(f"p{i + 1}", texts[i % len(texts)]) for i in range(n)]


def script_for(passages, positives: dict[tuple[str, str], str | None] | None = None) -> dict:
    """Pair-keyed mock script covering every per-code cell.

    positives maps (passage_id, code_id) -> optional justification for cells
    the mock should answer positively; all other cells answer None.
    """
    positives = positives or {}
    script = {}
    for p in passages:
        for c in CB.codes:
            if (p.id, c.id) in positives:
                script[pair_key(p.id, c.id)] = applied_reply(c.id, positives[(p.id, c.id)])
            else:
                script[pair_key(p.id, c.id)] = NONE_REPLY
    return script


def gold_csv(passages, positives: set[tuple[str, str]]) -> str:
    lines = ["passage_id,code_id,applied"]
    for p in passages:
        for c in CB.codes:
            lines.append(f"{p.id},{c.id},{1 if (p.id, c.id) in positives else 0}")
    return "\n".join(lines) + "\n"


# -- refinement-loop scenario shared by service and acceptance tests --------
# Gold: Social/Political Advocacy applies to p2 and p5; the parent-run
# script gets all three of p2, p3, p5 wrong (misses both, false-positive p3).

ADVOCACY_GOLD = {("p2", "advocacy"), ("p5", "advocacy")}


def seed_workspace(tmp_path: Path):
    from coda.fixtures import dubois_codebook

    root = tmp_path / "ws"
    (root / "codebooks").mkdir(parents=True)
    (root / "codebooks" / "dubois.json").write_bytes(serialize_codebook(dubois_codebook()))
    passages = synthetic_passages(6)
    (root / "corpus.jsonl").write_bytes(passages_to_jsonl(passages))
    (root / "gold.csv").write_text(gold_csv(passages, ADVOCACY_GOLD), encoding="utf-8")
    return root, passages


def parent_script(passages) -> dict:
    return script_for(passages, {("p3", "advocacy"): "It reads as advocacy to me."})


def retest_script() -> dict:
    return {
        pair_key("p2", "advocacy"): applied_reply("advocacy"),
        pair_key("p3", "advocacy"): "Justification: Not advocacy.\n\nCodes Applied:\n- None",
        pair_key("p5", "advocacy"): applied_reply("advocacy"),
    }


@pytest.fixture
def fixture_files(tmp_path: Path):
    """Codebook, 6-passage corpus, mock script, and matching gold on disk."""
    passages = synthetic_passages(6)
    positives = {
        ("p1", "scholar"): None,
        ("p1", "scholarly_work"): None,
        ("p2", "mouth_activists"): None,
        ("p3", "mouth_academics"): None,
        ("p4", "memorialization"): None,
        ("p5", "synecdoche"): None,
        ("p6", "coalition_building"): None,
    }
    paths = {
        "codebook": tmp_path / "codebook.json",
        "corpus": tmp_path / "corpus.jsonl",
        "script": tmp_path / "script.json",
        "gold": tmp_path / "gold.csv",
    }
    paths["codebook"].write_bytes(serialize_codebook(CB))
    paths["corpus"].write_bytes(passages_to_jsonl(passages))
    paths["script"].write_text(
        json.dumps(script_for(passages, positives), indent=2), encoding="utf-8"
    )
    paths["gold"].write_text(gold_csv(passages, set(positives)), encoding="utf-8")
    return {"passages": passages, "positives": positives, "tmp": tmp_path, **paths}
