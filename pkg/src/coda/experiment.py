"""Coding runs: orchestration, persistence, scoring, and comparison.

A run applies one codebook version to a corpus under one prompt
configuration and stores every parsed decision. Run files are canonical
JSON: decisions are sorted by (passage id, code id), the run id is a digest
of the run's inputs, and nothing volatile (wall-clock times, cache
statistics) is written, so identical inputs produce byte-identical files on
any machine. Scoring compares decisions to the gold standard per code;
unparseable decisions are excluded from the statistics and counted, never
coerced to "not applied".
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from hashlib import sha256
from pathlib import Path
from typing import Protocol

from .codebook import Codebook, validate_codebook
from .corpus import GoldLabels, Passage
from .llm_client import LLMClient, ProviderError, RequestMeta
from .parsing import CodingDecision, ParseStatus, parse_decision
from .prompting import (
    ChatMessage,
    ChatRequest,
    PromptConfig,
    Reasoning,
    Role,
    Scope,
    format_reminder,
    full_codebook_messages,
    per_code_messages,
)
from .reliability import (
    AgreementBand,
    AgreementStats,
    Confusion2x2,
    KappaAggregate,
    aggregate_mean_kappa,
    agreement_stats,
    confusion_2x2,
    interpret_agreement,
)

__all__ = [
    "RunRecord",
    "PerCodeAgreement",
    "AgreementReport",
    "RunComparison",
    "Disagreement",
    "RunError",
    "RunIncompleteError",
    "GoldCoverageError",
    "CodeSetMismatchError",
    "RunStore",
    "RunFileStore",
    "run_coding",
    "score_run",
    "compare_runs",
    "disagreements",
    "run_to_json",
    "run_from_json",
    "report_rows",
    "report_to_csv",
    "report_to_markdown",
    "report_to_dict",
    "comparison_to_dict",
]

EXCERPT_CHARS = 240


class RunError(Exception):
    pass


class RunIncompleteError(RunError):
    """Some cells failed after retries; the partial record was persisted."""

    def __init__(self, record: "RunRecord", failures: list[tuple[str, str | None, str]]):
        lines = ", ".join(f"({p}, {c or '-'}): {msg}" for p, c, msg in failures[:5])
        super().__init__(
            f"run {record.run_id} incomplete: {len(failures)} cell(s) failed ({lines})"
        )
        self.record = record
        self.failures = failures


class GoldCoverageError(RunError):
    def __init__(self, missing: list[tuple[str, str]]):
        shown = ", ".join(f"({p}, {c})" for p, c in missing[:10])
        more = "" if len(missing) <= 10 else f" and {len(missing) - 10} more"
        super().__init__(f"gold labels missing for pairs: {shown}{more}")
        self.missing = missing


class CodeSetMismatchError(RunError):
    pass


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    codebook_version: str
    config: PromptConfig
    decisions: tuple[CodingDecision, ...]
    passages: tuple[tuple[str, str], ...]  # (id, text), in corpus order
    code_ids: tuple[str, ...]
    provider_info: dict
    codebook_id: str | None = None
    parent_run_id: str | None = None
    cells: tuple[tuple[str, str], ...] | None = None  # retests: scored cells
    incomplete: bool = False
    unparseable_count: int = 0
    # Diagnostics; deliberately absent from the persisted document.
    started: float | None = None
    finished: float | None = None
    cache_hits: int = 0

    def passage_text(self, passage_id: str) -> str | None:
        for pid, text in self.passages:
            if pid == passage_id:
                return text
        return None

    def scored_cells(self) -> list[tuple[str, str]]:
        """The (passage, code) cells this run's decisions cover."""
        if self.cells is not None:
            return list(self.cells)
        if self.config.scope is Scope.PER_CODE:
            return [(d.passage_id, d.scope_code or "") for d in self.decisions]
        return [(d.passage_id, cid) for d in self.decisions for cid in self.code_ids]


@dataclass(frozen=True)
class PerCodeAgreement:
    code_id: str
    table: Confusion2x2
    stats: AgreementStats
    band: AgreementBand | None
    evaluated: int
    excluded: int


@dataclass(frozen=True)
class AgreementReport:
    run_id: str
    codebook_version: str
    per_code: tuple[PerCodeAgreement, ...]
    mean_kappa: KappaAggregate

    def row(self, code_id: str) -> PerCodeAgreement | None:
        for row in self.per_code:
            if row.code_id == code_id:
                return row
        return None


@dataclass(frozen=True)
class RunComparison:
    per_code: tuple[tuple[str, float | None], ...]
    delta_mean_kappa: float | None


@dataclass(frozen=True)
class Disagreement:
    passage_id: str
    code_id: str
    gold: bool
    machine: bool
    justification: str | None
    excerpt: str


class RunStore(Protocol):
    def save(self, record: "RunRecord") -> Path: ...


class RunFileStore:
    """Persists a run as a single JSON file at a caller-chosen path."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def save(self, record: RunRecord) -> Path:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_name(self.path.name + ".tmp")
        tmp.write_text(run_to_json(record), encoding="utf-8")
        tmp.replace(self.path)
        return self.path


def _config_dict(cfg: PromptConfig) -> dict:
    return {
        "model": cfg.model,
        "scope": cfg.scope.value,
        "reasoning": cfg.reasoning.value,
        "temperature": cfg.temperature,
        "top_p": cfg.top_p,
    }


def _config_from_dict(d: dict) -> PromptConfig:
    return PromptConfig(
        model=d["model"],
        scope=Scope(d["scope"]),
        reasoning=Reasoning(d["reasoning"]),
        temperature=d["temperature"],
        top_p=d["top_p"],
    )


def _decision_dict(d: CodingDecision) -> dict:
    return {
        "passage_id": d.passage_id,
        "scope_code": d.scope_code,
        "justification": d.justification,
        "applied": sorted(d.applied),
        "unknown_titles": list(d.unknown_titles),
        "parse_status": d.parse_status.value,
    }


def _decision_from_dict(d: dict) -> CodingDecision:
    return CodingDecision(
        passage_id=d["passage_id"],
        scope_code=d["scope_code"],
        justification=d["justification"],
        applied=frozenset(d["applied"]),
        unknown_titles=tuple(d["unknown_titles"]),
        parse_status=ParseStatus(d["parse_status"]),
    )


def _run_inputs_dict(record: RunRecord) -> dict:
    return {
        "codebook_version": record.codebook_version,
        "codebook_id": record.codebook_id,
        "config": _config_dict(record.config),
        "passages": [{"id": pid, "text": text} for pid, text in record.passages],
        "code_ids": list(record.code_ids),
        "provider": record.provider_info,
        "parent_run_id": record.parent_run_id,
        "cells": [list(c) for c in record.cells] if record.cells is not None else None,
    }


def _derive_run_id(inputs: dict) -> str:
    canon = json.dumps(inputs, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
    return sha256(canon.encode("utf-8")).hexdigest()[:16]


def run_to_json(record: RunRecord) -> str:
    doc = {
        "run_id": record.run_id,
        "codebook_version": record.codebook_version,
        "config": _config_dict(record.config),
        "decisions": [_decision_dict(d) for d in record.decisions],
        "meta": {
            "codebook_id": record.codebook_id,
            "code_ids": list(record.code_ids),
            "passages": [{"id": pid, "text": text} for pid, text in record.passages],
            "provider": record.provider_info,
            "parent_run_id": record.parent_run_id,
            "cells": [list(c) for c in record.cells] if record.cells is not None else None,
            "incomplete": record.incomplete,
            "unparseable_count": record.unparseable_count,
        },
    }
    return json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


def run_from_json(data: bytes | str) -> RunRecord:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    doc = json.loads(data)
    meta = doc["meta"]
    return RunRecord(
        run_id=doc["run_id"],
        codebook_version=doc["codebook_version"],
        config=_config_from_dict(doc["config"]),
        decisions=tuple(_decision_from_dict(d) for d in doc["decisions"]),
        passages=tuple((p["id"], p["text"]) for p in meta["passages"]),
        code_ids=tuple(meta["code_ids"]),
        provider_info=meta["provider"],
        codebook_id=meta.get("codebook_id"),
        parent_run_id=meta.get("parent_run_id"),
        cells=tuple((c[0], c[1]) for c in meta["cells"]) if meta.get("cells") else None,
        incomplete=meta.get("incomplete", False),
        unparseable_count=meta.get("unparseable_count", 0),
    )


def _retry_request(req: ChatRequest, cfg: PromptConfig) -> ChatRequest:
    """Re-ask with the format block restated; lands on a fresh cache key."""
    reminded = req.user.content + "\n\n" + format_reminder(cfg.scope, cfg.reasoning)
    return replace(req, messages=(req.system, ChatMessage(Role.USER, reminded)))


def run_coding(
    cb: Codebook,
    passages: list[Passage],
    cfg: PromptConfig,
    client: LLMClient,
    *,
    store: RunStore,
    codebook_id: str | None = None,
    parent_run_id: str | None = None,
    cells: list[tuple[str, str]] | None = None,
) -> RunRecord:
    """Execute one coding run and persist it before returning.

    Per-code scope issues one request per (passage, code); full-codebook
    scope issues one per passage. An unparseable reply is re-queried once
    with the format reminder; a second failure is recorded as-is. Provider
    failures that outlive the retry policy leave a partial record on disk,
    flagged incomplete, and raise RunIncompleteError.
    """
    issues = validate_codebook(cb)
    if issues:
        raise RunError(f"codebook invalid: {issues[0]}")
    if not passages:
        raise RunError("corpus is empty")
    by_id = {p.id: p for p in passages}
    if cells is not None:
        if not cells:
            raise RunError("cells restriction must be non-empty")
        for pid, cid in cells:
            if pid not in by_id:
                raise RunError(f"cell references unknown passage {pid!r}")
            if cb.get(cid) is None:
                raise RunError(f"cell references unknown code {cid!r}")

    record = RunRecord(
        run_id="",
        codebook_version=cb.version,
        config=cfg,
        decisions=(),
        passages=tuple((p.id, p.text) for p in passages),
        code_ids=tuple(cb.code_ids()),
        provider_info=client.provider.describe(),
        codebook_id=codebook_id,
        parent_run_id=parent_run_id,
        cells=tuple(cells) if cells is not None else None,
        started=time.time(),
    )
    record = replace(record, run_id=_derive_run_id(_run_inputs_dict(record)))

    if cfg.scope is Scope.PER_CODE:
        if cells is not None:
            work = [(by_id[pid], cid) for pid, cid in cells]
        else:
            work = [(p, c.id) for p in passages for c in cb.codes]
    else:
        work = [(p, None) for p in passages]

    def one(item: tuple[Passage, str | None]) -> tuple[CodingDecision, int]:
        passage, cid = item
        if cid is not None:
            req = per_code_messages(cb, cb.get(cid), passage, cfg)
        else:
            req = full_codebook_messages(cb, passage, cfg)
        meta = RequestMeta(passage_id=passage.id, code_id=cid)
        completion = client.complete(req, meta)
        hits = 1 if completion.cached else 0
        decision = parse_decision(completion.text, cb, scope_code=cid, passage_id=passage.id)
        if decision.parse_status is ParseStatus.UNPARSEABLE:
            retry = client.complete(_retry_request(req, cfg), meta)
            hits += 1 if retry.cached else 0
            decision = parse_decision(retry.text, cb, scope_code=cid, passage_id=passage.id)
        return decision, hits

    decisions: list[CodingDecision] = []
    failures: list[tuple[str, str | None, str]] = []
    cache_hits = 0
    with ThreadPoolExecutor(max_workers=client.max_in_flight) as pool:
        futures = [(item, pool.submit(one, item)) for item in work]
        for (passage, cid), future in futures:
            try:
                decision, hits = future.result()
            except ProviderError as exc:
                failures.append((passage.id, cid, str(exc)))
                continue
            decisions.append(decision)
            cache_hits += hits

    decisions.sort(key=lambda d: (d.passage_id, d.scope_code or ""))
    record = replace(
        record,
        decisions=tuple(decisions),
        incomplete=bool(failures),
        unparseable_count=sum(
            1 for d in decisions if d.parse_status is ParseStatus.UNPARSEABLE
        ),
        finished=time.time(),
        cache_hits=cache_hits,
    )
    store.save(record)
    if failures:
        raise RunIncompleteError(record, failures)
    return record


def _machine_labels(
    run: RunRecord,
) -> tuple[dict[str, list[str]], dict[tuple[str, str], tuple[bool | None, str | None]]]:
    """Per code: passage ids in order, and per cell (machine, justification).

    machine is None when the covering decision was unparseable.
    """
    cells = run.scored_cells()
    per_code: dict[str, list[str]] = {}
    values: dict[tuple[str, str], tuple[bool | None, str | None]] = {}
    if run.config.scope is Scope.PER_CODE:
        index = {(d.passage_id, d.scope_code): d for d in run.decisions}
        for pid, cid in cells:
            d = index.get((pid, cid))
            if d is None:
                continue  # incomplete run: the cell never produced a decision
            per_code.setdefault(cid, []).append(pid)
            if d.parse_status is ParseStatus.UNPARSEABLE:
                values[(pid, cid)] = (None, d.justification)
            else:
                values[(pid, cid)] = (cid in d.applied, d.justification)
    else:
        index = {d.passage_id: d for d in run.decisions}
        for pid, cid in cells:
            d = index.get(pid)
            if d is None:
                continue
            per_code.setdefault(cid, []).append(pid)
            if d.parse_status is ParseStatus.UNPARSEABLE:
                values[(pid, cid)] = (None, d.justification)
            else:
                values[(pid, cid)] = (cid in d.applied, d.justification)
    return per_code, values


def _check_gold_coverage(run: RunRecord, gold: GoldLabels) -> None:
    per_code, _ = _machine_labels(run)
    cells = [(pid, cid) for cid, pids in per_code.items() for pid in pids]
    missing = gold.missing_pairs(cells)
    if missing:
        raise GoldCoverageError(missing)


def score_run(run: RunRecord, gold: GoldLabels) -> AgreementReport:
    """Per-code agreement statistics against the gold standard."""
    _check_gold_coverage(run, gold)
    per_code, values = _machine_labels(run)
    rows: list[PerCodeAgreement] = []
    order = [cid for cid in run.code_ids if cid in per_code]
    order += [cid for cid in per_code if cid not in run.code_ids]
    for cid in order:
        machine: dict[str, bool] = {}
        gold_vec: dict[str, bool] = {}
        excluded = 0
        for pid in per_code[cid]:
            m, _ = values[(pid, cid)]
            if m is None:
                excluded += 1
                continue
            machine[pid] = m
            gold_vec[pid] = gold.get(pid, cid)
        if not machine:
            # Every decision for this code was unparseable: no table to report.
            rows.append(
                PerCodeAgreement(
                    code_id=cid,
                    table=Confusion2x2(0, 0, 0, 0),
                    stats=AgreementStats(0.0, 0.0, None, 0.0, None, 0.0),
                    band=None,
                    evaluated=0,
                    excluded=excluded,
                )
            )
            continue
        table = confusion_2x2(machine, gold_vec)
        stats = agreement_stats(table)
        band = interpret_agreement(stats.kappa) if stats.kappa is not None else None
        rows.append(
            PerCodeAgreement(
                code_id=cid,
                table=table,
                stats=stats,
                band=band,
                evaluated=table.n,
                excluded=excluded,
            )
        )
    mean = aggregate_mean_kappa(row.stats.kappa for row in rows)
    return AgreementReport(
        run_id=run.run_id,
        codebook_version=run.codebook_version,
        per_code=tuple(rows),
        mean_kappa=mean,
    )


def compare_runs(r1: AgreementReport, r2: AgreementReport) -> RunComparison:
    """Per-code kappa deltas (r2 - r1) and the delta of the means.

    Undefined kappas propagate: the row's delta is None and the code is
    excluded from the aggregate delta.
    """
    ids1 = [row.code_id for row in r1.per_code]
    ids2 = {row.code_id for row in r2.per_code}
    if set(ids1) != ids2:
        raise CodeSetMismatchError(
            f"reports cover different codes: {sorted(set(ids1) ^ ids2)}"
        )
    deltas: list[tuple[str, float | None]] = []
    defined: list[float] = []
    for code_id in ids1:
        k1 = r1.row(code_id).stats.kappa
        k2 = r2.row(code_id).stats.kappa
        if k1 is None or k2 is None:
            deltas.append((code_id, None))
        else:
            deltas.append((code_id, k2 - k1))
            defined.append(k2 - k1)
    delta_mean = sum(defined) / len(defined) if defined else None
    return RunComparison(per_code=tuple(deltas), delta_mean_kappa=delta_mean)


def _excerpt(text: str) -> str:
    if len(text) <= EXCERPT_CHARS:
        return text
    return text[: EXCERPT_CHARS - 3] + "..."


def disagreements(run: RunRecord, gold: GoldLabels) -> list[Disagreement]:
    """Cells where machine and gold differ, with the model's rationale.

    Unparseable cells never appear here; they are visible in the report's
    excluded counts instead.
    """
    _check_gold_coverage(run, gold)
    per_code, values = _machine_labels(run)
    out: list[Disagreement] = []
    for cid in sorted(per_code):
        for pid in sorted(per_code[cid]):
            machine, justification = values[(pid, cid)]
            if machine is None:
                continue
            g = gold.get(pid, cid)
            if machine != g:
                out.append(
                    Disagreement(
                        passage_id=pid,
                        code_id=cid,
                        gold=g,
                        machine=machine,
                        justification=justification,
                        excerpt=_excerpt(run.passage_text(pid) or ""),
                    )
                )
    return out


def _fmt(value: float | None, places: int = 6) -> str:
    if value is None:
        return ""
    text = f"{value:.{places}f}".rstrip("0").rstrip(".")
    return text if text else "0"


def report_rows(report: AgreementReport) -> list[list[str]]:
    header = [
        "code_id", "a", "b", "c", "d", "n", "excluded",
        "kappa", "percent_agreement", "ac1", "band",
    ]
    rows = [header]
    for row in report.per_code:
        t = row.table
        rows.append(
            [
                row.code_id,
                str(t.a), str(t.b), str(t.c), str(t.d), str(t.n),
                str(row.excluded),
                _fmt(row.stats.kappa),
                _fmt(row.stats.percent_agreement) if row.evaluated else "",
                _fmt(row.stats.ac1),
                row.band.value if row.band is not None else "",
            ]
        )
    return rows


def report_to_csv(report: AgreementReport) -> str:
    return "\n".join(",".join(row) for row in report_rows(report)) + "\n"


def report_to_markdown(report: AgreementReport) -> str:
    rows = report_rows(report)
    lines = [
        "| " + " | ".join(rows[0]) + " |",
        "|" + "|".join(" --- " for _ in rows[0]) + "|",
    ]
    lines += ["| " + " | ".join(row) + " |" for row in rows[1:]]
    return "\n".join(lines) + "\n"


def report_to_dict(report: AgreementReport) -> dict:
    return {
        "run_id": report.run_id,
        "codebook_version": report.codebook_version,
        "mean_kappa": {"mean": report.mean_kappa.mean, "excluded": report.mean_kappa.excluded},
        "per_code": [
            {
                "code_id": row.code_id,
                "a": row.table.a,
                "b": row.table.b,
                "c": row.table.c,
                "d": row.table.d,
                "n": row.table.n,
                "excluded": row.excluded,
                "kappa": row.stats.kappa,
                "percent_agreement": row.stats.percent_agreement if row.evaluated else None,
                "ac1": row.stats.ac1,
                "band": row.band.value if row.band is not None else None,
            }
            for row in report.per_code
        ],
    }


def comparison_to_dict(cmp: RunComparison) -> dict:
    return {
        "per_code": [{"code_id": cid, "delta_kappa": d} for cid, d in cmp.per_code],
        "delta_mean_kappa": cmp.delta_mean_kappa,
    }
