from __future__ import annotations

import json
import math

import pytest

from coda.corpus import GoldLabels, Passage
from coda.experiment import (
    AgreementReport,
    CodeSetMismatchError,
    GoldCoverageError,
    PerCodeAgreement,
    RunFileStore,
    RunIncompleteError,
    RunRecord,
    compare_runs,
    disagreements,
    report_to_csv,
    report_to_dict,
    report_to_markdown,
    run_coding,
    run_from_json,
    run_to_json,
    score_run,
)
from coda.fixtures import dubois_codebook
from coda.llm_client import LLMClient, ScriptedProvider, cache_key, pair_key
from coda.parsing import CodingDecision, ParseStatus
from coda.prompting import (
    ChatMessage,
    PromptConfig,
    Reasoning,
    Role,
    Scope,
    format_reminder,
    per_code_messages,
)
from coda.reliability import (
    AgreementBand,
    AgreementStats,
    Confusion2x2,
    KappaAggregate,
    agreement_stats,
    interpret_agreement,
)

CB = dubois_codebook()

NONE_REPLY = "Justification: Nothing fits.\n\nCodes Applied:\n- None"


def reply(code_id: str) -> str:
    title = CB.get(code_id).title
    return f"Justification: The passage clearly shows this.\n\nCodes Applied:\n- {title}"


def make_passages(n=2):
    return [
        Passage.from_text(f"p{i}", f"Passage {i} discusses Du Bois and his study.")
        for i in range(1, n + 1)
    ]


def make_client(script, tmp_path, name="cache"):
    return LLMClient(
        ScriptedProvider(script), cache_dir=tmp_path / name, sleep=lambda s: None
    )


def full_script(passages, applied=None):
    """Pair-keyed script: applied maps (pid, cid) -> True for positives."""
    applied = applied or {}
    script = {}
    for p in passages:
        for c in CB.codes:
            key = pair_key(p.id, c.id)
            script[key] = reply(c.id) if applied.get((p.id, c.id)) else NONE_REPLY
    return script


def gold_from(passages, positives=frozenset()):
    entries = {
        (p.id, c.id): (p.id, c.id) in positives for p in passages for c in CB.codes
    }
    return GoldLabels(entries)


def cfg(scope=Scope.PER_CODE):
    return PromptConfig(model="test-model", scope=scope)


def test_per_code_run_cardinality_and_order(tmp_path):
    passages = make_passages(2)
    client = make_client(full_script(passages), tmp_path)
    record = run_coding(
        CB, passages, cfg(), client, store=RunFileStore(tmp_path / "run.json")
    )
    assert len(record.decisions) == 2 * 9
    keys = [(d.passage_id, d.scope_code) for d in record.decisions]
    assert keys == sorted(keys)
    assert record.unparseable_count == 0
    assert not record.incomplete
    assert (tmp_path / "run.json").exists()


def test_full_codebook_run_cardinality(tmp_path):
    passages = make_passages(2)
    script = {p.id: NONE_REPLY for p in passages}
    client = make_client(script, tmp_path)
    record = run_coding(
        CB,
        passages,
        cfg(scope=Scope.FULL_CODEBOOK),
        client,
        store=RunFileStore(tmp_path / "run.json"),
    )
    assert len(record.decisions) == 2
    assert all(d.scope_code is None for d in record.decisions)


def test_run_is_deterministic_with_scripted_provider(tmp_path):
    passages = make_passages(2)
    applied = {("p1", "scholar"): True, ("p2", "activist"): True}
    r1 = run_coding(
        CB, passages, cfg(), make_client(full_script(passages, applied), tmp_path, "c1"),
        store=RunFileStore(tmp_path / "r1.json"),
    )
    r2 = run_coding(
        CB, passages, cfg(), make_client(full_script(passages, applied), tmp_path, "c2"),
        store=RunFileStore(tmp_path / "r2.json"),
    )
    assert run_to_json(r1) == run_to_json(r2)
    assert (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()


def test_warm_cache_replay_reproduces_decisions(tmp_path):
    passages = make_passages(2)
    script = full_script(passages)
    store = RunFileStore(tmp_path / "run.json")
    client = make_client(script, tmp_path)
    first = run_coding(CB, passages, cfg(), client, store=store)
    calls_after_first = client.provider.calls
    second = run_coding(CB, passages, cfg(), client, store=store)
    assert client.provider.calls == calls_after_first
    assert second.cache_hits == len(second.decisions)
    assert first.decisions == second.decisions
    assert first.run_id == second.run_id


def test_missing_script_key_yields_incomplete_partial_run(tmp_path):
    passages = make_passages(2)
    script = full_script(passages)
    del script[pair_key("p2", "synecdoche")]
    store = RunFileStore(tmp_path / "run.json")
    client = make_client(script, tmp_path)
    with pytest.raises(RunIncompleteError) as exc:
        run_coding(CB, passages, cfg(), client, store=store)
    record = exc.value.record
    assert record.incomplete
    assert len(record.decisions) == 17
    persisted = run_from_json((tmp_path / "run.json").read_text())
    assert persisted.incomplete and len(persisted.decisions) == 17


def test_unparseable_reply_requeried_once(tmp_path):
    passages = make_passages(1)
    p = passages[0]
    base_req = per_code_messages(CB, CB.get("scholar"), p, cfg())
    retry_req = base_req.__class__(
        model=base_req.model,
        messages=(
            base_req.messages[0],
            ChatMessage(
                Role.USER,
                p.text + "\n\n" + format_reminder(Scope.PER_CODE, Reasoning.CHAIN_OF_THOUGHT),
            ),
        ),
        temperature=base_req.temperature,
        top_p=base_req.top_p,
    )
    script = full_script(passages)
    script[pair_key("p1", "scholar")] = "I cannot decide."  # no tag
    script[cache_key(retry_req)] = reply("scholar")
    client = make_client(script, tmp_path)
    record = run_coding(CB, passages, cfg(), client, store=RunFileStore(tmp_path / "r.json"))
    decision = next(d for d in record.decisions if d.scope_code == "scholar")
    assert decision.applied == {"scholar"}
    assert record.unparseable_count == 0


def test_double_unparseable_is_final(tmp_path):
    passages = make_passages(1)
    script = full_script(passages)
    script[pair_key("p1", "scholar")] = "still no tag here"
    client = make_client(script, tmp_path)
    record = run_coding(CB, passages, cfg(), client, store=RunFileStore(tmp_path / "r.json"))
    decision = next(d for d in record.decisions if d.scope_code == "scholar")
    assert decision.parse_status is ParseStatus.UNPARSEABLE
    assert record.unparseable_count == 1


def test_cells_restriction_runs_single_cell(tmp_path):
    passages = make_passages(2)
    client = make_client(full_script(passages), tmp_path)
    record = run_coding(
        CB,
        passages,
        cfg(),
        client,
        store=RunFileStore(tmp_path / "r.json"),
        cells=[("p1", "scholar")],
    )
    assert len(record.decisions) == 1
    assert record.cells == (("p1", "scholar"),)


def test_run_json_round_trip(tmp_path):
    passages = make_passages(2)
    client = make_client(full_script(passages, {("p1", "scholar"): True}), tmp_path)
    record = run_coding(CB, passages, cfg(), client, store=RunFileStore(tmp_path / "r.json"))
    again = run_from_json(run_to_json(record))
    assert again.run_id == record.run_id
    assert again.decisions == record.decisions
    assert again.config == record.config
    assert again.passages == record.passages


def hand_run(decisions, passages, scope=Scope.PER_CODE, code_ids=None):
    return RunRecord(
        run_id="testrun",
        codebook_version=CB.version,
        config=PromptConfig(model="m", scope=scope),
        decisions=tuple(decisions),
        passages=tuple((p.id, p.text) for p in passages),
        code_ids=tuple(code_ids or CB.code_ids()),
        provider_info={"kind": "hand"},
    )


def decision(pid, cid, applied, status=ParseStatus.CLEAN, justification=None):
    return CodingDecision(
        passage_id=pid,
        scope_code=cid,
        justification=justification,
        applied=frozenset([cid] if applied else []),
        unknown_titles=(),
        parse_status=status,
    )


def test_score_perfect_run(tmp_path):
    passages = make_passages(2)
    positives = {("p1", "scholar"), ("p2", "activist")}
    applied = {k: True for k in positives}
    client = make_client(full_script(passages, applied), tmp_path)
    record = run_coding(CB, passages, cfg(), client, store=RunFileStore(tmp_path / "r.json"))
    report = score_run(record, gold_from(passages, frozenset(positives)))
    for row in report.per_code:
        assert row.stats.percent_agreement == 1.0
        if row.stats.kappa is not None:
            assert row.stats.kappa == 1.0
            assert row.band is AgreementBand.EXCELLENT
    scholar = report.row("scholar")
    assert scholar.stats.kappa == 1.0


def test_score_hand_built_confusion_table():
    # 10 passages, one code of interest: a=4, b=1, c=1, d=4.
    passages = [Passage.from_text(f"p{i:02d}", f"text {i}") for i in range(1, 11)]
    machine_true = {"p01", "p02", "p03", "p04", "p05"}
    gold_true = {"p01", "p02", "p03", "p04", "p06"}
    decisions = [
        decision(p.id, "scholar", p.id in machine_true) for p in passages
    ]
    run = hand_run(decisions, passages, code_ids=["scholar"])
    gold = GoldLabels({(p.id, "scholar"): p.id in gold_true for p in passages})
    report = score_run(run, gold)
    row = report.row("scholar")
    assert (row.table.a, row.table.b, row.table.c, row.table.d) == (4, 1, 1, 4)
    assert math.isclose(row.stats.kappa, 0.6)
    assert row.band is AgreementBand.SUBSTANTIAL


def test_score_excludes_unparseable():
    passages = make_passages(2)
    decisions = [
        decision("p1", "scholar", True),
        decision("p2", "scholar", False, status=ParseStatus.UNPARSEABLE),
    ]
    run = hand_run(decisions, passages, code_ids=["scholar"])
    gold = GoldLabels({("p1", "scholar"): True, ("p2", "scholar"): False})
    report = score_run(run, gold)
    row = report.row("scholar")
    assert row.evaluated == 1 and row.excluded == 1
    assert row.evaluated + row.excluded == len(passages)


def test_score_rejects_gold_gap():
    passages = make_passages(2)
    decisions = [decision(p.id, "scholar", False) for p in passages]
    run = hand_run(decisions, passages, code_ids=["scholar"])
    gold = GoldLabels({("p1", "scholar"): False})
    with pytest.raises(GoldCoverageError) as exc:
        score_run(run, gold)
    assert ("p2", "scholar") in exc.value.missing


def test_full_codebook_scoring_derives_per_code_booleans():
    passages = make_passages(1)
    d = CodingDecision(
        passage_id="p1",
        scope_code=None,
        justification="j",
        applied=frozenset({"scholar", "activist"}),
        unknown_titles=(),
        parse_status=ParseStatus.CLEAN,
    )
    run = hand_run([d], passages, scope=Scope.FULL_CODEBOOK)
    gold = gold_from(passages, frozenset({("p1", "scholar"), ("p1", "activist")}))
    report = score_run(run, gold)
    assert report.row("scholar").table.a == 1
    assert report.row("advocacy").table.d == 1
    assert len(report.per_code) == 9


def report_from_kappas(kappas: dict[str, float | None]) -> AgreementReport:
    rows = []
    for cid, k in kappas.items():
        stats = AgreementStats(
            p_o=1.0, p_e=0.5, kappa=k, percent_agreement=1.0, ac1=1.0, prevalence=0.5
        )
        band = interpret_agreement(k) if k is not None else None
        rows.append(
            PerCodeAgreement(
                code_id=cid, table=Confusion2x2(1, 0, 0, 1), stats=stats,
                band=band, evaluated=2, excluded=0,
            )
        )
    defined = [k for k in kappas.values() if k is not None]
    mean = sum(defined) / len(defined) if defined else None
    return AgreementReport(
        run_id="r", codebook_version="v", per_code=tuple(rows),
        mean_kappa=KappaAggregate(mean, sum(1 for k in kappas.values() if k is None)),
    )


def test_compare_identical_reports_is_zero():
    r = report_from_kappas({"a": 0.5, "b": 0.7})
    cmp = compare_runs(r, r)
    assert all(d == 0.0 for _, d in cmp.per_code)
    assert cmp.delta_mean_kappa == 0.0


def test_compare_undefined_propagates():
    r1 = report_from_kappas({"a": 0.5, "b": None})
    r2 = report_from_kappas({"a": 0.7, "b": 0.9})
    cmp = compare_runs(r1, r2)
    deltas = dict(cmp.per_code)
    assert deltas["b"] is None
    assert math.isclose(deltas["a"], 0.2)
    assert math.isclose(cmp.delta_mean_kappa, 0.2)


def test_compare_rejects_code_set_mismatch():
    r1 = report_from_kappas({"a": 0.5})
    r2 = report_from_kappas({"b": 0.5})
    with pytest.raises(CodeSetMismatchError):
        compare_runs(r1, r2)


def test_disagreements_empty_for_perfect_run():
    passages = make_passages(1)
    decisions = [decision("p1", "scholar", True)]
    run = hand_run(decisions, passages, code_ids=["scholar"])
    gold = GoldLabels({("p1", "scholar"): True})
    assert disagreements(run, gold) == []


def test_disagreement_carries_justification_and_excerpt():
    passages = make_passages(1)
    decisions = [decision("p1", "scholar", True, justification="He is called a sociologist.")]
    run = hand_run(decisions, passages, code_ids=["scholar"])
    gold = GoldLabels({("p1", "scholar"): False})
    out = disagreements(run, gold)
    assert len(out) == 1
    d = out[0]
    assert d.machine is True and d.gold is False
    assert d.justification == "He is called a sociologist."
    assert d.excerpt.startswith("Passage 1")


def test_disagreements_exclude_unparseable():
    passages = make_passages(1)
    decisions = [decision("p1", "scholar", False, status=ParseStatus.UNPARSEABLE)]
    run = hand_run(decisions, passages, code_ids=["scholar"])
    gold = GoldLabels({("p1", "scholar"): True})
    assert disagreements(run, gold) == []


def test_disagreements_sorted_by_code_then_passage():
    passages = make_passages(2)
    decisions = [
        decision("p1", "scholar", True),
        decision("p2", "scholar", True),
        decision("p1", "activist", True),
    ]
    run = hand_run(decisions, passages, code_ids=["scholar", "activist"])
    gold = GoldLabels(
        {
            ("p1", "scholar"): False,
            ("p2", "scholar"): False,
            ("p1", "activist"): False,
        }
    )
    out = disagreements(run, gold)
    assert [(d.code_id, d.passage_id) for d in out] == [
        ("activist", "p1"),
        ("scholar", "p1"),
        ("scholar", "p2"),
    ]


def test_report_row_count_invariant(tmp_path):
    passages = make_passages(3)
    client = make_client(full_script(passages), tmp_path)
    record = run_coding(CB, passages, cfg(), client, store=RunFileStore(tmp_path / "r.json"))
    report = score_run(record, gold_from(passages))
    for row in report.per_code:
        assert row.table.n + row.excluded == len(passages)


def test_report_csv_and_markdown_shapes():
    r = report_from_kappas({"a": 0.5, "b": None})
    csv_text = report_to_csv(r)
    lines = csv_text.strip().split("\n")
    assert lines[0] == "code_id,a,b,c,d,n,excluded,kappa,percent_agreement,ac1,band"
    assert len(lines) == 3
    assert lines[1].startswith("a,1,0,0,1,2,0,0.5,1,1,low")
    md = report_to_markdown(r)
    assert md.count("|") > 10 and "code_id" in md
    d = report_to_dict(r)
    assert d["per_code"][1]["kappa"] is None
    assert json.dumps(d)  # JSON-serializable
