"""Command line: fuzz, exec, validate, replay.

Exit codes: 0 ran, 1 usage or config error, 2 corpus error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .campaign import BackendConfig, CampaignConfig, CorpusError, emit_report, load_report, replay, run_campaign
from .contract_vm.interpreter import execute_sequence
from .contract_vm.model import ModelError, load_model_file
from .crp import CrpConfig
from .oracles import run_all
from .txmodel import DecodeError, SeedPool, decode_sequence, validate_sequence

EXIT_OK, EXIT_USAGE, EXIT_CORPUS = 0, 1, 2
ENDPOINT_ENV = "REFLECT_FUZZ_LLM_ENDPOINT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="reflectfuzz", description="Multi-agent reflective smart contract fuzzer.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fuzz = sub.add_parser("fuzz", help="run a fuzzing campaign over a corpus")
    fuzz.add_argument("--corpus", nargs="+", required=True, help="contract-model files or directories")
    fuzz.add_argument("--backend", choices=("heuristic", "llm"), default="heuristic")
    fuzz.add_argument("--llm-endpoint", default=None, help=f"chat endpoint URL (default: ${ENDPOINT_ENV})")
    fuzz.add_argument("--llm-model", default="llama3")
    fuzz.add_argument("--llm-timeout-secs", type=float, default=60.0)
    fuzz.add_argument("--max-rounds", type=int, default=10)
    fuzz.add_argument("--max-seq-len", type=int, default=10)
    fuzz.add_argument("--contract-budget-secs", type=float, default=600.0)
    fuzz.add_argument("--total-budget-secs", type=float, default=1800.0)
    fuzz.add_argument("--seed", type=int, default=0)
    fuzz.add_argument("--jobs", type=int, default=1)
    fuzz.add_argument("--out", required=True, help="report path prefix")

    ex = sub.add_parser("exec", help="execute an encoded sequence and print trace and oracle report")
    ex.add_argument("--model", required=True)
    ex.add_argument("--sequence", required=True, help="sequence record file, or - for stdin")

    val = sub.add_parser("validate", help="statically validate an encoded sequence")
    val.add_argument("--model", required=True)
    val.add_argument("--sequence", required=True, help="sequence record file, or - for stdin")

    rep = sub.add_parser("replay", help="re-run a report's witness and confirm its class")
    rep.add_argument("--report", required=True)
    rep.add_argument("--contract", required=True)
    return parser


def _read_sequence(arg: str):
    text = sys.stdin.read() if arg == "-" else Path(arg).read_text()
    return decode_sequence(text)


def _fuzz(args) -> int:
    endpoint = args.llm_endpoint or os.environ.get(ENDPOINT_ENV)
    if args.backend == "llm" and not endpoint:
        raise UsageError(f"--backend llm needs --llm-endpoint or ${ENDPOINT_ENV}")
    try:
        cfg = CampaignConfig(
            corpus=tuple(args.corpus),
            crp=CrpConfig(args.max_rounds, args.max_seq_len, args.contract_budget_secs, args.seed),
            backend=BackendConfig(args.backend, endpoint, args.llm_model, timeout=args.llm_timeout_secs),
            total_budget=args.total_budget_secs,
            output=args.out,
            jobs=args.jobs,
        )
    except ValueError as e:
        raise UsageError(str(e)) from None
    try:
        report = run_campaign(cfg)
    except CorpusError as e:
        print(f"corpus error: {e}", file=sys.stderr)
        for path, err in e.errors:
            print(f"  {path}: {err}", file=sys.stderr)
        return EXIT_CORPUS
    for path in emit_report(report, args.out):
        print(f"wrote {path}")
    for c in report.contracts:
        found = f" {c.primary} ({','.join(c.found_classes)}) round {c.rounds}" if c.primary else ""
        print(f"{c.name}: {c.status}{found}")
    for path, err in report.errors:
        print(f"corpus error: {path}: {err}", file=sys.stderr)
    return EXIT_CORPUS if report.errors else EXIT_OK


def _exec(args) -> int:
    model = load_model_file(args.model)
    pool = SeedPool.default()
    trace = execute_sequence(model, pool, _read_sequence(args.sequence))
    report = run_all(model, trace, pool)
    doc = {"trace": trace.to_dict(), "oracles": report.to_dict(), "found": [c.value for c in report.found]}
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def _validate(args) -> int:
    model = load_model_file(args.model)
    faults = validate_sequence(_read_sequence(args.sequence), model.context())
    for f in faults:
        print(f"{f}: {f.detail}")
    print("ok" if not faults else f"{len(faults)} fault(s)")
    return EXIT_OK


def _replay(args) -> int:
    doc = load_report(args.report)
    ok, classes, reported = replay(doc, args.contract)
    if reported is None:
        print(f"{args.contract}: no finding to replay")
        return EXIT_OK
    print(f"{args.contract}: reported {reported}; replay found {','.join(classes) or 'nothing'}; "
          f"{'confirmed' if ok else 'NOT confirmed'}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handler = {"fuzz": _fuzz, "exec": _exec, "validate": _validate, "replay": _replay}[args.command]
    try:
        return handler(args)
    except UsageError as e:
        print(f"reflectfuzz: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError, DecodeError, ModelError) as e:
        print(f"reflectfuzz: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
