"""Command-line entry point: convert | index | extract | eval | ablate.

Exit codes: 0 clean, 1 usage or configuration error, 2 data error,
3 when gateway errors occurred during extraction.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, DataError, PicoframeError
from .evalkit import format_report
from .runner import ExperimentConfig, cmd_ablate, cmd_convert, cmd_eval, cmd_extract, cmd_index


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # map argparse usage errors onto exit code 1
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="picoframe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    convert = sub.add_parser("convert", help="build the instruction dataset from a corpus split")
    convert.add_argument("--config", required=True)
    convert.add_argument("--split", default="train")

    index = sub.add_parser("index", help="build the demonstration index over the training split")
    index.add_argument("--config", required=True)

    extract = sub.add_parser("extract", help="run the extraction pipeline over the test split")
    extract.add_argument("--config", required=True)

    evaluate = sub.add_parser("eval", help="score a predictions file against the gold test split")
    evaluate.add_argument("--config", required=True)
    evaluate.add_argument("--predictions", required=True)
    evaluate.add_argument(
        "--kind-sensitive",
        action="store_true",
        help="also require B/I kind to match (sensitivity analysis)",
    )

    ablate = sub.add_parser("ablate", help="sweep selection strategies and k values")
    ablate.add_argument("--config", required=True)
    ablate.add_argument("--k", required=True, help="comma-separated k values, e.g. 0,1,3,9")
    ablate.add_argument(
        "--strategies", default="knn,random", help="comma-separated subset of knn,random"
    )

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        config = ExperimentConfig.from_file(args.config)
        if args.command == "convert":
            stats = cmd_convert(config, split=args.split)
            print(f"wrote {stats['records']} records to {stats['dataset_path']}")
            print(f"span counts: {stats['span_counts']}")
        elif args.command == "index":
            path = cmd_index(config)
            print(f"index written to {path}")
        elif args.command == "extract":
            result = cmd_extract(config)
            print(f"predictions written to {result.predictions_path}")
            print(f"manifest written to {result.manifest_path}")
            print(f"gateway stats: {result.gateway_stats}")
            if result.error_rows:
                print(f"{result.error_rows} sentences failed at the gateway", file=sys.stderr)
                return 3
        elif args.command == "eval":
            report = cmd_eval(config, args.predictions, kind_sensitive=args.kind_sensitive)
            print(format_report(report))
        elif args.command == "ablate":
            try:
                k_values = [int(v) for v in args.k.split(",") if v != ""]
            except ValueError:
                raise ConfigError(f"--k must be comma-separated integers, got {args.k!r}") from None
            strategies = [s for s in args.strategies.split(",") if s]
            rows = cmd_ablate(config, k_values, strategies)
            for row in rows:
                print(f"{row['strategy']}\tk={row['k']}\tmacro_f1={row['macro_f1']:.4f}")
            if any(row["error_rows"] for row in rows):
                return 3
    except ConfigError as exc:
        print(f"picoframe: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"picoframe: {exc}", file=sys.stderr)
        return 2
    except PicoframeError as exc:
        print(f"picoframe: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
