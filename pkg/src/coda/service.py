"""Local review service: the HTTP face of a workspace.

Serves codebook versions, runs, reports, disagreement queues, and kappa
trends to the review UI, and accepts the two mutations the refinement loop
needs: editing a code definition (which creates a new immutable codebook
version) and re-testing selected cells under a chosen version (which
creates a derived run). Binds localhost by default; single-researcher tool,
no authentication.
"""

from __future__ import annotations

import json
from typing import Any

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .codebook import CodebookError, serialize_codebook
from .experiment import (
    GoldCoverageError,
    RunIncompleteError,
    disagreements,
    report_to_dict,
    run_coding,
    run_to_json,
    score_run,
)
from .llm_client import HttpProvider, LLMClient, ProviderConfig, ProviderError, ScriptedProvider
from .prompting import PromptConfig, Reasoning, Scope
from .workspace import NoChangeError, UnknownResourceError, Workspace

__all__ = ["ApiError", "create_app"]


class ApiError(Exception):
    """Service-level failure with a wire representation."""

    STATUSES = {400, 404, 409, 422, 502}

    def __init__(self, status: int, code: str, message: str):
        assert status in self.STATUSES
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message

    def response(self) -> JSONResponse:
        return JSONResponse(
            status_code=self.status,
            content={"status": self.status, "code": self.code, "message": self.message},
        )


class CodeEditBody(BaseModel):
    title: str | None = None
    definition: str | None = None
    category: str | None = None
    notes: str | None = None


class ProviderBody(BaseModel):
    kind: str
    script: dict[str, str] | None = None
    base_url: str | None = None
    api_key_env: str | None = None


class RunBody(BaseModel):
    codebook_id: str
    codebook_version: str | None = None
    scope: str = Scope.PER_CODE.value
    reasoning: str = Reasoning.CHAIN_OF_THOUGHT.value
    model: str
    temperature: float = 0.0
    top_p: float = 1.0
    provider: ProviderBody
    passage_ids: list[str] | None = None


class RetestBody(BaseModel):
    passage_ids: list[str]
    code_ids: list[str]
    codebook_version: str
    provider: ProviderBody | None = None


def _build_client(ws: Workspace, body: ProviderBody | None, parent_info: dict | None = None) -> LLMClient:
    if body is None:
        if parent_info and parent_info.get("kind") == "http":
            provider = HttpProvider(ProviderConfig(base_url=parent_info["base_url"]))
            return LLMClient(provider, cache_dir=ws.cache_dir)
        raise ApiError(400, "provider_required", "request must name a provider")
    if body.kind == "scripted":
        if body.script is None:
            raise ApiError(400, "script_required", "scripted provider needs a script")
        return LLMClient(ScriptedProvider(body.script), cache_dir=ws.cache_dir)
    if body.kind == "http":
        config = ProviderConfig(
            base_url=body.base_url or "", api_key_env=body.api_key_env or "CODA_API_KEY"
        )
        return LLMClient(HttpProvider(config), cache_dir=ws.cache_dir)
    raise ApiError(400, "unknown_provider", f"unknown provider kind {body.kind!r}")


def create_app(workspace_root: str) -> FastAPI:
    ws = Workspace(workspace_root)
    app = FastAPI(title="coda review service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(ApiError)
    async def api_error_handler(request: Request, exc: ApiError):
        return exc.response()

    @app.exception_handler(RequestValidationError)
    async def body_error_handler(request: Request, exc: RequestValidationError):
        return ApiError(400, "bad_request", str(exc.errors()[:3])).response()

    def not_found(exc: Exception) -> ApiError:
        return ApiError(404, "not_found", str(exc))

    # -- codebooks -----------------------------------------------------------

    @app.get("/codebooks/{cb_id}/versions")
    def get_versions(cb_id: str) -> list[str]:
        try:
            return ws.codebook_versions(cb_id)
        except UnknownResourceError as exc:
            raise not_found(exc)

    @app.get("/codebooks/{cb_id}/{version}")
    def get_codebook(cb_id: str, version: str) -> dict:
        try:
            cb = ws.load_codebook(cb_id, version)
        except UnknownResourceError as exc:
            raise not_found(exc)
        doc = json.loads(serialize_codebook(cb))
        doc["version"] = cb.version
        return doc

    @app.put("/codebooks/{cb_id}/codes/{code_id}")
    def update_code(cb_id: str, code_id: str, body: CodeEditBody) -> dict:
        fields = {k: v for k, v in body.model_dump().items() if v is not None}
        if not fields:
            raise ApiError(422, "empty_edit", "at least one editable field is required")
        try:
            old, new = ws.update_code(cb_id, code_id, fields)
        except UnknownResourceError as exc:
            raise not_found(exc)
        except NoChangeError as exc:
            raise ApiError(409, "no_change", str(exc))
        except CodebookError as exc:
            raise ApiError(422, "validation_failed", str(exc))
        return {"old_version": old, "new_version": new}

    # -- runs ----------------------------------------------------------------

    def _execute_run(
        cb_id: str,
        version: str | None,
        cfg: PromptConfig,
        client: LLMClient,
        passage_ids: list[str] | None,
        parent_run_id: str | None = None,
        cells: list[tuple[str, str]] | None = None,
    ) -> str:
        try:
            cb = ws.load_codebook(cb_id, version)
        except UnknownResourceError as exc:
            raise not_found(exc)
        try:
            passages = ws.load_corpus()
        except UnknownResourceError as exc:
            raise ApiError(422, "no_corpus", str(exc))
        if passage_ids is not None:
            by_id = {p.id: p for p in passages}
            missing = [pid for pid in passage_ids if pid not in by_id]
            if missing:
                raise ApiError(404, "not_found", f"unknown passage ids: {missing}")
            passages = [by_id[pid] for pid in passage_ids]
        with ws.run_lock:
            try:
                record = run_coding(
                    cb,
                    passages,
                    cfg,
                    client,
                    store=ws,
                    codebook_id=cb_id,
                    parent_run_id=parent_run_id,
                    cells=cells,
                )
            except (ProviderError, RunIncompleteError) as exc:
                raise ApiError(502, "provider_failure", str(exc))
        return record.run_id

    @app.post("/runs")
    def post_run(body: RunBody) -> dict:
        try:
            cfg = PromptConfig(
                model=body.model,
                scope=Scope(body.scope),
                reasoning=Reasoning(body.reasoning),
                temperature=body.temperature,
                top_p=body.top_p,
            )
        except ValueError as exc:
            raise ApiError(422, "bad_config", str(exc))
        client = _build_client(ws, body.provider)
        run_id = _execute_run(body.codebook_id, body.codebook_version, cfg, client, body.passage_ids)
        return {"run_id": run_id}

    @app.get("/runs/{run_id}")
    def get_run(run_id: str) -> Any:
        try:
            record = ws.load_run(run_id)
        except UnknownResourceError as exc:
            raise not_found(exc)
        return json.loads(run_to_json(record))

    def _run_and_gold(run_id: str):
        try:
            record = ws.load_run(run_id)
        except UnknownResourceError as exc:
            raise not_found(exc)
        try:
            gold = ws.load_gold()
        except UnknownResourceError as exc:
            raise ApiError(422, "no_gold", str(exc))
        return record, gold

    @app.get("/runs/{run_id}/report")
    def get_report(run_id: str) -> dict:
        record, gold = _run_and_gold(run_id)
        try:
            return report_to_dict(score_run(record, gold))
        except GoldCoverageError as exc:
            raise ApiError(422, "gold_gap", str(exc))

    @app.get("/runs/{run_id}/disagreements")
    def get_disagreements(run_id: str) -> list[dict]:
        record, gold = _run_and_gold(run_id)
        try:
            rows = disagreements(record, gold)
        except GoldCoverageError as exc:
            raise ApiError(422, "gold_gap", str(exc))
        return [
            {
                "passage_id": d.passage_id,
                "code_id": d.code_id,
                "gold": d.gold,
                "machine": d.machine,
                "justification": d.justification,
                "excerpt": d.excerpt,
                "run_id": run_id,
            }
            for d in rows
        ]

    @app.post("/runs/{run_id}/retest")
    def post_retest(run_id: str, body: RetestBody) -> dict:
        if not body.passage_ids or not body.code_ids:
            raise ApiError(422, "empty_selection", "passage_ids and code_ids must be non-empty")
        try:
            parent = ws.load_run(run_id)
        except UnknownResourceError as exc:
            raise not_found(exc)
        parent_pids = {pid for pid, _ in parent.passages}
        missing_p = [pid for pid in body.passage_ids if pid not in parent_pids]
        if missing_p:
            raise ApiError(404, "not_found", f"passages not in parent run: {missing_p}")
        if parent.codebook_id is None:
            raise ApiError(422, "no_lineage", "parent run records no codebook id")
        try:
            cb = ws.load_codebook(parent.codebook_id, body.codebook_version)
        except UnknownResourceError as exc:
            raise not_found(exc)
        missing_c = [cid for cid in body.code_ids if cb.get(cid) is None]
        if missing_c:
            raise ApiError(404, "not_found", f"codes not in codebook version: {missing_c}")
        client = _build_client(ws, body.provider, parent.provider_info)
        cells = [(pid, cid) for pid in body.passage_ids for cid in body.code_ids]
        derived = _execute_run(
            parent.codebook_id,
            body.codebook_version,
            parent.config,
            client,
            body.passage_ids,
            parent_run_id=run_id,
            cells=cells,
        )
        return {"derived_run_id": derived}

    # -- trends ----------------------------------------------------------------

    @app.get("/codes/{code_id}/kappa-trend")
    def kappa_trend(code_id: str) -> list[dict]:
        try:
            gold = ws.load_gold()
        except UnknownResourceError as exc:
            raise ApiError(422, "no_gold", str(exc))
        points = []
        for record in ws.list_runs():
            cells = record.scored_cells()
            if not any(cid == code_id for _, cid in cells):
                continue
            try:
                report = score_run(record, gold)
            except GoldCoverageError:
                continue
            row = report.row(code_id)
            if row is None:
                continue
            points.append(
                {
                    "codebook_version": record.codebook_version,
                    "run_id": record.run_id,
                    "kappa": row.stats.kappa,
                }
            )
        return points

    return app
