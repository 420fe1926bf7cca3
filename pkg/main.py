import asyncio
import logging
import sys

from app.cli import main
from app.config import load_log_level

try:
    _level = load_log_level()
except ValueError as exc:
    print(f"error: {exc}", file=sys.stderr)
    sys.exit(2)

logging.basicConfig(level=_level, format="%(levelname)s %(name)s: %(message)s")


if __name__ == "__main__":
    sys.exit(asyncio.run(main()))
