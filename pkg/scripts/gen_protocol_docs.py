#!/usr/bin/env python3
"""Regenerate docs/protocol.md from the schema source of truth in wire.py."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from splatspace.wire import protocol_markdown  # noqa: E402


def main() -> None:
    out = Path(__file__).resolve().parents[1] / "docs" / "protocol.md"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(protocol_markdown() + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
