from __future__ import annotations

import argparse
from collections.abc import Sequence

from cli.bench import run_bench
from cli.segment import run_pipeline

COMMANDS = {
    "segment": run_pipeline,
    "bench": run_bench,
}


def dispatch(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="kcut", description="Fractional K-way normalized cut toolkit")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("args", nargs=argparse.REMAINDER)
    try:
        parsed = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return COMMANDS[parsed.command](parsed.args)


def main() -> None:
    raise SystemExit(dispatch())


if __name__ == "__main__":
    main()
