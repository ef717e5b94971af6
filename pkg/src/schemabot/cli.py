"""Command-line interface.

Exit codes: 0 on success, 1 when validation or an evaluation threshold
fails, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import SchemabotError
from .evalkit import EvalRunConfig, load_corpus, run_action_eval, run_e2e_eval
from .pipeline import PipelineConfig, step
from .schema import edit_skeleton, parse_edits, parse_schema, serialize_schema, validate_schema
from .serve import AppConfig, ServerConfig, build_engine, http_api, load_app_config, read_source


def _engine_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="engine config file (JSON)")
    parser.add_argument("--schema", action="append", default=[], metavar="FILE",
                        help="schema file; repeatable (default: bundled toy schemas)")
    parser.add_argument("--db", action="append", default=[], metavar="FILE",
                        help="database file; repeatable (default: bundled toy DBs)")
    parser.add_argument("--backend", default=None,
                        help="backend spec: 'http' or 'scripted:FILE' (default from config, else http)")
    parser.add_argument("--no-policy", action="store_true", help="disable the policy prompter")
    parser.add_argument("--no-db", action="store_true", help="disable the database retriever")
    parser.add_argument("--no-belief", action="store_true", help="disable the DST prompter")


def _build_engine(args) -> tuple:
    if args.config:
        config = load_app_config(args.config)
    else:
        config = AppConfig()
    if args.schema:
        config.schema_paths = args.schema
    if args.db:
        config.db_paths = args.db
    if args.backend:
        config.backend_spec = args.backend
    if args.no_policy:
        config.pipeline.use_policy_prompter = False
    if args.no_db:
        config.pipeline.use_db = False
    if args.no_belief:
        config.pipeline.use_dst_prompter = False
    return build_engine(config), config


def cmd_validate_schema(args) -> int:
    worst = 0
    for path in args.files:
        text = Path(path).read_text(encoding="utf-8")
        try:
            schema = parse_schema(text)
        except SchemabotError as e:
            print(f"{path}: INVALID")
            print(f"  {e}", file=sys.stderr)
            worst = 1
            continue
        diagnostics = validate_schema(schema)
        errors = [d for d in diagnostics if d.severity == "error"]
        for d in diagnostics:
            print(f"  {d}")
        print(f"{path}: {'INVALID' if errors else 'OK'} ({len(schema.policy.turns)} turns, {len(schema.belief.slots)} slots)")
        if errors:
            worst = 1
    return worst


def cmd_extend_schema(args) -> int:
    schema = parse_schema(Path(args.file).read_text(encoding="utf-8"))
    edits = parse_edits(Path(args.edits).read_text(encoding="utf-8"))
    extended = edit_skeleton(schema, edits)
    out_text = serialize_schema(extended)
    if args.output:
        Path(args.output).write_text(out_text, encoding="utf-8")
        print(f"wrote {args.output}: {len(extended.policy.turns)} turns "
              f"({len(extended.policy.turns) - len(schema.policy.turns):+d})")
    else:
        print(out_text, end="")
    return 0


def cmd_eval_e2e(args) -> int:
    engine, _ = _build_engine(args)
    corpus = load_corpus(read_source(args.corpus))
    run_config = EvalRunConfig(
        workers=args.workers,
        transcript_path=args.transcript,
        use_gold_belief=args.gold_belief,
    )
    report = run_e2e_eval(corpus, engine, run_config)
    print(report.render_table())
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
        print(f"report written to {args.report}")
    if args.min_combined is not None and report.combined < args.min_combined:
        print(f"combined {report.combined:.2f} below threshold {args.min_combined:.2f}", file=sys.stderr)
        return 1
    return 0


def cmd_eval_action(args) -> int:
    engine, _ = _build_engine(args)
    corpus = load_corpus(read_source(args.corpus))
    report = run_action_eval(corpus, engine, EvalRunConfig(workers=args.workers))
    print(f"{'WeightedF1':>10} {'Accuracy':>9}")
    print(f"{report.weighted_f1:10.2f} {report.accuracy:9.2f}")
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
    if args.min_f1 is not None and report.weighted_f1 < args.min_f1:
        return 1
    return 0


def cmd_chat(args) -> int:
    engine, _ = _build_engine(args)
    session = engine.new_session(args.bind or None)
    print(f"session {session.id} over {', '.join(s.domain for s in session.schemas)} "
          f"(/quit to exit)")
    while True:
        try:
            line = input("you> ").strip()
        except (EOFError, KeyboardInterrupt):
            print()
            return 0
        if not line:
            continue
        if line in ("/quit", "/exit"):
            return 0
        try:
            record = step(session, line)
        except SchemabotError as e:
            print(f"error: {e}", file=sys.stderr)
            continue
        if args.debug:
            print(f"  belief: {record.belief_sql}")
            print(f"  db:     {record.db.count} match(es)")
            print(f"  action: {record.action.render()}")
        print(f"bot> {record.final}")


def cmd_serve(args) -> int:
    if args.config:
        config = load_app_config(args.config)
    else:
        config = AppConfig(server=ServerConfig(cors_origin="*"))
    if args.schema:
        config.schema_paths = args.schema
    if args.db:
        config.db_paths = args.db
    if args.backend:
        config.backend_spec = args.backend
    http_api(config, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="schemabot",
                                     description="Schema-guided task bots over pluggable LLM backends")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-schema", help="validate schema files")
    p.add_argument("files", nargs="+")
    p.set_defaults(fn=cmd_validate_schema)

    p = sub.add_parser("extend-schema", help="apply a skeleton edit file to a schema")
    p.add_argument("file")
    p.add_argument("--edits", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_extend_schema)

    p = sub.add_parser("eval-e2e", help="end-to-end corpus evaluation")
    p.add_argument("--corpus", required=True)
    _engine_args(p)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--transcript", help="write a JSON-lines transcript here")
    p.add_argument("--gold-belief", action="store_true", help="teacher-force gold beliefs")
    p.add_argument("--min-combined", type=float, default=None,
                   help="exit 1 if Combined falls below this threshold")
    p.set_defaults(fn=cmd_eval_e2e)

    p = sub.add_parser("eval-action", help="next-action prediction evaluation")
    p.add_argument("--corpus", required=True)
    _engine_args(p)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--report")
    p.add_argument("--min-f1", type=float, default=None)
    p.set_defaults(fn=cmd_eval_action)

    p = sub.add_parser("chat", help="terminal chat over one session")
    _engine_args(p)
    p.add_argument("--bind", action="append", default=[], metavar="DOMAIN",
                   help="bind only these schema domains")
    p.add_argument("--debug", action="store_true", help="print belief/DB/action per turn")
    p.set_defaults(fn=cmd_chat)

    p = sub.add_parser("serve", help="run the HTTP service")
    _engine_args(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SchemabotError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
