"""CLI: train a recognizer checkpoint or serve it over stdin/stdout."""

from __future__ import annotations

import argparse
import sys


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="recognizer")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("train")
    p.add_argument("--dreams", required=True)
    p.add_argument("--lib", help="library manifest listing abstractions")
    p.add_argument("--out", required=True)
    p.add_argument("--max-epochs", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int)

    p = sub.add_parser("serve")
    p.add_argument("--ckpt", required=True)

    args = ap.parse_args(argv)
    if args.cmd == "train":
        from .train import train

        summary = train(
            args.dreams,
            args.lib,
            args.out,
            max_epochs=args.max_epochs,
            seed=args.seed,
            limit=args.limit,
            log=lambda msg: print(msg, file=sys.stderr),
        )
        print(summary)
        return 0
    if args.cmd == "serve":
        from .serve import serve

        serve(args.ckpt)
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
