"""Command-line interface: thin wrappers over the same engine the service uses.

Exit codes: 0 success, 1 usage or input error, 2 required index missing,
3 model-backend failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import uuid
from pathlib import Path

from .config import EngineConfig, load_config
from .evaluation import EvalError, compare_modes, format_table, load_cases, write_report
from .figures import save_eval_figures
from .gateway import GatewayError
from .ingest import IngestError, load_document
from .query import QueryMode
from .service import ApiError, chat_payload, create_app
from .store import CorpusStore, MissingStageError, STAGES, StoreError

_MODES = [m.value for m in QueryMode]


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse default exits 2; usage errors are 1
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="regrag",
                     description="RAG engine and chat service for regulatory documents")
    parser.add_argument("--corpus", default="corpus", help="corpus directory")
    parser.add_argument("--config", default=None, help="JSON config file")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="chunk a document into the corpus")
    p.add_argument("file")
    p.add_argument("--format", choices=["structured_markup", "plain_text"],
                   default="structured_markup")
    p.add_argument("--title", default=None)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("build", help="run index build stages")
    p.add_argument("--stages", nargs="*", choices=list(STAGES), default=None)
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("query", help="ask one question")
    p.add_argument("question")
    p.add_argument("--mode", choices=_MODES, default="naive")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--level", type=int, default=None)
    p.add_argument("--json", action="store_true", dest="as_json",
                   help="print the full chat payload as JSON")
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("chat", help="interactive chat loop")
    p.add_argument("--mode", choices=_MODES, default="naive")
    p.set_defaults(func=_cmd_chat)

    p = sub.add_parser("eval", help="run the evaluation harness")
    p.add_argument("cases")
    p.add_argument("--mode", action="append", choices=_MODES, required=True,
                   help="repeat to compare several modes")
    p.add_argument("--out", default=None, help="output directory (default <corpus>/eval)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)
    return parser


def _store(args) -> CorpusStore:
    config = load_config(args.config) if args.config else EngineConfig()
    return CorpusStore(args.corpus, config)


def _cmd_ingest(args) -> int:
    doc = load_document(args.file, format=args.format, title=args.title)
    count = _store(args).ingest_document(doc)
    print(f"ingested {doc.title!r}: doc_id={doc.doc_id} chunks={count}")
    return 0


def _cmd_build(args) -> int:
    results = _store(args).build(args.stages)
    for stage in STAGES:
        if stage in results:
            print(f"{stage}: {results[stage]}")
    return 0


def _cmd_query(args) -> int:
    store = _store(args)
    payload = chat_payload(store, args.question, args.mode,
                           level=args.level, seed=args.seed)
    if args.as_json:
        print(json.dumps(payload, indent=2, ensure_ascii=False))
    else:
        answer = payload["answer"]
        print(answer["text"])
        if answer["citations"]:
            refs = ", ".join(f"{c['kind']}:{c['ref_id']}" for c in answer["citations"])
            print(f"\nsources: {refs}")
    return 0


def _cmd_chat(args) -> int:
    store = _store(args)
    session_id = f"repl-{uuid.uuid4().hex[:12]}"
    print(f"mode={args.mode}; empty line to quit (session {session_id})")
    while True:
        try:
            question = input("> ").strip()
        except EOFError:
            break
        if not question:
            break
        payload = chat_payload(store, question, args.mode, session_id=session_id)
        print(payload["answer"]["text"])
    return 0


def _cmd_eval(args) -> int:
    store = _store(args)
    cases = load_cases(args.cases)
    seed = args.seed if args.seed is not None else store.config.seed
    modes = list(dict.fromkeys(args.mode))
    engine = store.engine(modes[0])
    for mode in modes:
        store.engine(mode)  # verify artifacts exist for every requested mode
    reports = compare_modes(cases, modes, engine, seed=seed,
                            budget_tokens=store.config.answer_budget_tokens,
                            map_chunk_tokens=store.config.map_chunk_tokens,
                            k=store.config.top_k_chunks)
    out_dir = Path(args.out) if args.out else Path(args.corpus) / "eval"
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report(reports, out_dir / "eval_report.json")
    figures = save_eval_figures(reports, out_dir)
    print(format_table(reports))
    print(f"\nreport: {out_dir / 'eval_report.json'}")
    for fig in figures:
        print(f"figure: {fig}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    config = load_config(args.config) if args.config else EngineConfig()
    app = create_app(args.corpus, config)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MissingStageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GatewayError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 3
    except ApiError as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return 2 if exc.status == 409 else 1
    except (StoreError, IngestError, EvalError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
