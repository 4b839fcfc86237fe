"""The coda command line: codebook checks, extraction, runs, and reports.

Exit codes: 0 success, 1 input/validation problems, 2 runtime or provider
failures. Run and report outputs are byte-reproducible given identical
inputs, so reruns can be compared with cmp/diff.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .codebook import CodebookError, diff_codebooks, parse_codebook, validate_codebook
from .corpus import (
    CorpusError,
    GoldLabelError,
    corpus_stats,
    extract_passages,
    load_gold,
    load_passages_jsonl,
    passages_to_jsonl,
)
from .experiment import (
    CodeSetMismatchError,
    GoldCoverageError,
    RunFileStore,
    RunIncompleteError,
    compare_runs,
    comparison_to_dict,
    disagreements,
    report_to_csv,
    report_to_markdown,
    run_coding,
    run_from_json,
    score_run,
)
from .llm_client import (
    DEFAULT_API_KEY_ENV,
    HttpProvider,
    LLMClient,
    ProviderConfig,
    ProviderError,
    ScriptedProvider,
)
from .prompting import PromptConfig, Reasoning, Scope
from .workspace import WorkspaceError

VALIDATION_ERRORS = (
    CodebookError,
    CorpusError,
    GoldLabelError,
    GoldCoverageError,
    CodeSetMismatchError,
    WorkspaceError,
    ValueError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we reserve
        self.print_usage(sys.stderr)  # that for runtime failures.
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _fmt(value: float) -> str:
    text = f"{value:.6f}".rstrip("0").rstrip(".")
    return text if text else "0"


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coda", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    cb = sub.add_parser("codebook", help="validate or diff codebook files")
    cb_sub = cb.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    cb_validate = cb_sub.add_parser("validate", help="check a codebook file")
    cb_validate.add_argument("path")
    cb_diff = cb_sub.add_parser("diff", help="diff two codebook files")
    cb_diff.add_argument("old")
    cb_diff.add_argument("new")

    corpus = sub.add_parser("corpus", help="extract passages or compute statistics")
    corpus_sub = corpus.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    extract = corpus_sub.add_parser("extract", help="keyword-anchored passage extraction")
    extract.add_argument("--keyword", required=True)
    extract.add_argument("--in", dest="infile", required=True)
    extract.add_argument("--out", required=True)
    stats = corpus_sub.add_parser("stats", help="word/sentence statistics of a passage file")
    stats.add_argument("--in", dest="infile", required=True)

    run = sub.add_parser("run", help="code a corpus with a model")
    run.add_argument("--codebook", required=True)
    run.add_argument("--corpus", required=True)
    run.add_argument("--scope", choices=[s.value for s in Scope], default=Scope.PER_CODE.value)
    run.add_argument(
        "--reasoning", choices=[r.value for r in Reasoning], default=Reasoning.CHAIN_OF_THOUGHT.value
    )
    run.add_argument("--model", required=True)
    run.add_argument("--temperature", type=float, default=0.0)
    run.add_argument("--top-p", type=float, default=1.0)
    run.add_argument("--provider", choices=["mock", "http"], required=True)
    run.add_argument("--script", help="response script for the mock provider")
    run.add_argument("--base-url", help="endpoint for the http provider")
    run.add_argument("--api-key-env", default=DEFAULT_API_KEY_ENV)
    run.add_argument("--cache-dir")
    run.add_argument("--max-in-flight", type=int, default=4)
    run.add_argument("--max-retries", type=int, default=3)
    run.add_argument("--out", required=True)

    report = sub.add_parser("report", help="score a run against gold labels")
    report.add_argument("--run", required=True)
    report.add_argument("--gold", required=True)
    report.add_argument("--out", required=True)
    report.add_argument("--markdown")

    compare = sub.add_parser("compare", help="per-code kappa deltas between two runs")
    compare.add_argument("--run-a", required=True)
    compare.add_argument("--run-b", required=True)
    compare.add_argument("--gold", required=True)
    compare.add_argument("--out")

    disagree = sub.add_parser("disagreements", help="cells where machine and gold differ")
    disagree.add_argument("--run", required=True)
    disagree.add_argument("--gold", required=True)
    disagree.add_argument("--out")

    serve = sub.add_parser("serve", help="run the local review service")
    serve.add_argument("--port", type=int, default=8700)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--workspace", required=True)
    return parser


def cmd_codebook(args) -> int:
    if args.subcommand == "validate":
        cb = parse_codebook(Path(args.path).read_bytes())
        issues = validate_codebook(cb)
        for issue in issues:
            print(f"issue: {issue}")
        if issues:
            return 1
        print(f"ok: {len(cb.codes)} codes, version {cb.version[:12]}")
        return 0
    old = parse_codebook(Path(args.old).read_bytes())
    new = parse_codebook(Path(args.new).read_bytes())
    diff = diff_codebooks(old, new)
    for code_id in diff.added:
        print(f"added: {code_id}")
    for code_id in diff.removed:
        print(f"removed: {code_id}")
    for code_id, field, before, after in diff.changed:
        print(f"changed: {code_id}.{field}: {before!r} -> {after!r}")
    if diff.is_empty():
        print("identical")
    return 0


def cmd_corpus(args) -> int:
    if args.subcommand == "extract":
        docs = load_passages_jsonl(Path(args.infile).read_bytes())
        passages = []
        for doc in docs:
            passages.extend(
                extract_passages(
                    doc.text,
                    args.keyword,
                    id_prefix=f"{doc.id}#p",
                    source=doc.source,
                    date=doc.date,
                )
            )
        Path(args.out).write_bytes(passages_to_jsonl(passages))
        print(f"extracted {len(passages)} passages from {len(docs)} documents")
        return 0
    passages = load_passages_jsonl(Path(args.infile).read_bytes())
    s = corpus_stats(passages)
    print(f"passages: {s.n}")
    print(f"words: mean {_fmt(s.mean_words)}, sd {_fmt(s.sd_words)}")
    print(f"sentences: mean {_fmt(s.mean_sentences)}, sd {_fmt(s.sd_sentences)}")
    return 0


def _build_client(args) -> LLMClient:
    if args.provider == "mock":
        if not args.script:
            raise ValueError("--provider mock requires --script")
        script = json.loads(Path(args.script).read_text(encoding="utf-8"))
        provider = ScriptedProvider(script)
    else:
        config = ProviderConfig(
            base_url=args.base_url or "", api_key_env=args.api_key_env,
            max_in_flight=args.max_in_flight, max_retries=args.max_retries,
        )
        provider = HttpProvider(config)
    return LLMClient(
        provider,
        cache_dir=args.cache_dir,
        max_in_flight=args.max_in_flight,
        max_retries=args.max_retries,
    )


def cmd_run(args) -> int:
    cb = parse_codebook(Path(args.codebook).read_bytes())
    passages = load_passages_jsonl(Path(args.corpus).read_bytes())
    cfg = PromptConfig(
        model=args.model,
        scope=Scope(args.scope),
        reasoning=Reasoning(args.reasoning),
        temperature=args.temperature,
        top_p=args.top_p,
    )
    client = _build_client(args)
    record = run_coding(cb, passages, cfg, client, store=RunFileStore(args.out))
    print(
        f"run_id={record.run_id} decisions={len(record.decisions)} "
        f"unparseable={record.unparseable_count} "
        f"provider_calls={client.provider_calls} cache_hits={record.cache_hits}"
    )
    return 0


def cmd_report(args) -> int:
    record = run_from_json(Path(args.run).read_bytes())
    gold = load_gold(Path(args.gold).read_bytes())
    report = score_run(record, gold)
    Path(args.out).write_text(report_to_csv(report), encoding="utf-8")
    if args.markdown:
        Path(args.markdown).write_text(report_to_markdown(report), encoding="utf-8")
    mean = report.mean_kappa
    mean_text = _fmt(mean.mean) if mean.mean is not None else "undefined"
    print(f"codes={len(report.per_code)} mean_kappa={mean_text} undefined={mean.excluded}")
    return 0


def cmd_compare(args) -> int:
    gold = load_gold(Path(args.gold).read_bytes())
    report_a = score_run(run_from_json(Path(args.run_a).read_bytes()), gold)
    report_b = score_run(run_from_json(Path(args.run_b).read_bytes()), gold)
    cmp = compare_runs(report_a, report_b)
    for code_id, delta in cmp.per_code:
        print(f"{code_id}: {'undefined' if delta is None else _fmt(delta)}")
    overall = "undefined" if cmp.delta_mean_kappa is None else _fmt(cmp.delta_mean_kappa)
    print(f"delta_mean_kappa: {overall}")
    if args.out:
        lines = ["code_id,delta_kappa"]
        lines += [
            f"{cid},{'' if d is None else _fmt(d)}" for cid, d in cmp.per_code
        ]
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def cmd_disagreements(args) -> int:
    record = run_from_json(Path(args.run).read_bytes())
    gold = load_gold(Path(args.gold).read_bytes())
    rows = disagreements(record, gold)
    payload = [
        {
            "passage_id": d.passage_id,
            "code_id": d.code_id,
            "gold": d.gold,
            "machine": d.machine,
            "justification": d.justification,
            "excerpt": d.excerpt,
        }
        for d in rows
    ]
    text = json.dumps(payload, ensure_ascii=False, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    print(f"disagreements: {len(rows)}", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.workspace)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


COMMANDS = {
    "codebook": cmd_codebook,
    "corpus": cmd_corpus,
    "run": cmd_run,
    "report": cmd_report,
    "compare": cmd_compare,
    "disagreements": cmd_disagreements,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except RunIncompleteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ProviderError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
