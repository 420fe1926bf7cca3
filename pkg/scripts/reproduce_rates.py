from __future__ import annotations

import argparse
import asyncio
import logging
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.cli import main as cli_main  # noqa: E402

# (subcommand, extra flags); every run uses the package defaults otherwise
RUNS: list[tuple[str, list[str]]] = [
    ("rocket-sweep", ["--solver", "rocket-analytic", "--trajectory"]),
    ("rocket-sweep", ["--solver", "rocket-fd", "--format", "csv"]),
    ("heat-modal-sweep", ["--target", "sin(pi x)"]),
    ("heat-fd-sweep", ["--target", "sin(pi x)"]),
    ("admissibility", ["--rule", "d_n = 1/n"]),
    ("rate-constants", ["--target", "sin(pi x) + 0.5 sin(3 pi x)"]),
    ("compare", ["--target", "sin(pi x)"]),
]


async def run(out_dir: str, strict: bool) -> int:
    worst = 0
    for command, extra in RUNS:
        sub_out = os.path.join(out_dir, command if "rocket-fd" not in extra else "rocket-fd-sweep")
        argv = [command, *extra, "--out", sub_out]
        if strict:
            argv.append("--strict")
        print(f"== {' '.join(argv)}")
        status = await cli_main(argv)
        worst = max(worst, status)
    return worst


def main() -> None:
    parser = argparse.ArgumentParser(description="Run every experiment family once with default settings.")
    parser.add_argument("out_dir", nargs="?", default="./results", help="Directory for CSV/JSON artifacts")
    parser.add_argument("--strict", action="store_true", help="Fail on bound violations or compare budget excess")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    raise SystemExit(asyncio.run(run(args.out_dir, strict=args.strict)))


if __name__ == "__main__":
    main()
