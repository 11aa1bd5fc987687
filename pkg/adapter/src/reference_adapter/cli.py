"""reference-adapter: serve or fine-tune a transformer behind the wire
protocol.

    reference-adapter --echo                    # model-free protocol stub
    reference-adapter serve --model DIR [--tcp PORT]
    reference-adapter fine-tune --base MODEL --ner ner.jsonl --re re.jsonl \
        --out DIR [--epochs N] [--batch-size N] [--seed N] [--max-steps N] \
        [--lr F] [--dropout F] [--patience N] [--max-len N] \
        [--val-ner FILE] [--val-re FILE]

Exit codes: 0 success; 2 usage error; 3 load/data failure (serve emits an
error record before exiting nonzero so wire clients see the cause)."""

from __future__ import annotations

import argparse
import json
import sys

from .config import AdapterConfig, AdapterConfigError, AdapterDataError
from .finetune import fine_tune, load_ner_dump, load_re_dump
from .model import Adapter
from .server import AdapterServer
from .wire import EchoServer, encode_record

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 2, 3


def _serve(server, tcp: int | None) -> int:
    if tcp is None:
        server.serve(sys.stdin, sys.stdout)
    else:
        server.serve_tcp(tcp)
    return EXIT_OK


def cmd_echo(args) -> int:
    return _serve(EchoServer(), args.tcp)


def cmd_serve(args) -> int:
    try:
        adapter = Adapter.load(args.model)
    except AdapterConfigError as e:
        # tell the wire client why before dying, per the protocol
        sys.stdout.write(encode_record(
            {"kind": "error", "id": None,
             "message": f"model load failure: {e}"}))
        sys.stdout.flush()
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    return _serve(AdapterServer(adapter), args.tcp)


def cmd_fine_tune(args) -> int:
    config = AdapterConfig(
        base_model=args.base, learning_rate=args.lr, dropout=args.dropout,
        max_length=args.max_len, patience=args.patience)
    _, report = fine_tune(
        config,
        load_ner_dump(args.ner) if args.ner else [],
        load_re_dump(args.re) if args.re else [],
        val_ner=load_ner_dump(args.val_ner) if args.val_ner else (),
        val_re=load_re_dump(args.val_re) if args.val_re else (),
        epochs=args.epochs, batch_size=args.batch_size, seed=args.seed,
        max_steps=args.max_steps, out_dir=args.out)
    print(json.dumps({"epochs": report.epochs_run, "steps": report.steps,
                      "stop_reason": report.stop_reason,
                      "history": report.history},
                     indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reference-adapter",
        description="transformer model server for the radevents wire "
                    "protocol")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("echo", help="serve without a model: all O / "
                                    "No_relation")
    p.add_argument("--tcp", type=int, metavar="PORT")
    p.set_defaults(func=cmd_echo)

    p = sub.add_parser("serve", help="serve a saved adapter directory")
    p.add_argument("--model", required=True)
    p.add_argument("--tcp", type=int, metavar="PORT")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("fine-tune", help="train from task dump files")
    p.add_argument("--base", required=True, help="base model name or path")
    p.add_argument("--ner", help="ner.jsonl training dump")
    p.add_argument("--re", help="re.jsonl training dump")
    p.add_argument("--val-ner", help="ner.jsonl validation dump")
    p.add_argument("--val-re", help="re.jsonl validation dump")
    p.add_argument("--out", required=True, help="output adapter directory")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--lr", type=float, default=3e-5)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--max-len", type=int, default=128)
    p.set_defaults(func=cmd_fine_tune)
    return parser


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # `--echo` as the first argument is shorthand for the echo subcommand
    if argv and argv[0] == "--echo":
        argv = ["echo"] + argv[1:]
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except (AdapterConfigError, AdapterDataError, OSError,
            json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
