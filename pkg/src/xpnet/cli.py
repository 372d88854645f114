"""Command-line entry points: scenario runs, oracle evaluation, size estimation,
and the interactive HTTP server."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .catalog import table_payload_bytes
from .engine import Engine, ScenarioConfig, serve_api, table_to_dict, write_jsonl
from .pattern import evaluate_pattern, evaluate_query, parse_pattern, parse_query
from .synopsis import build_synopsis, estimate_contribution
from .xml_model import parse_document


def _load_corpus_dir(path: str):
    docs = []
    for p in sorted(Path(path).glob("*.xml")):
        docs.append(parse_document(p.read_text(), p.name))
    if not docs:
        raise SystemExit(f"no .xml documents under {path}")
    return docs


def cmd_run(args) -> int:
    cfg = ScenarioConfig.from_file(args.config)
    engine = Engine(cfg)
    if args.serve is not None:
        serve_api(engine, args.serve)
        return 0
    records = engine.run()
    write_jsonl(records, args.out)
    summary = records[-1]
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


def cmd_eval(args) -> int:
    docs = _load_corpus_dir(args.corpus)
    q = parse_query(args.query)
    table = evaluate_query(docs, q)
    print(json.dumps(table_to_dict(table), sort_keys=True, indent=2))
    return 0


def cmd_estimate(args) -> int:
    docs = _load_corpus_dir(args.corpus)
    pattern = parse_pattern(args.view)
    estimate = 0
    actual = 0
    for d in docs:
        estimate += estimate_contribution(build_synopsis(d), pattern)
        actual += table_payload_bytes(evaluate_pattern(d, pattern))
    print(json.dumps({"estimatedBytes": estimate, "actualBytes": actual}, indent=2))
    return 0


def cmd_serve(args) -> int:
    cfg = ScenarioConfig.from_file(args.config)
    engine = Engine(cfg)
    engine.start()
    serve_api(engine, args.port)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="xpnet")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario to completion")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default="metrics.jsonl")
    p_run.add_argument("--serve", type=int, default=None, metavar="PORT",
                       help="serve the control API instead of running to completion")
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="evaluate a query over an XML corpus directory")
    p_eval.add_argument("--corpus", required=True)
    p_eval.add_argument("--query", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_est = sub.add_parser("estimate", help="estimated vs actual view size over a corpus")
    p_est.add_argument("--corpus", required=True)
    p_est.add_argument("--view", required=True)
    p_est.set_defaults(func=cmd_estimate)

    p_serve = sub.add_parser("serve", help="serve the control API for interactive stepping")
    p_serve.add_argument("--config", required=True)
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=cmd_serve)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
