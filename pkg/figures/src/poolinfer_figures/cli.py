"""Batch figure rendering: ``poolinfer-render --spec figures.json --out dir/``.

Exit codes: 0 success, 2 bad spec, 3 missing or malformed input CSVs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .csvio import SchemaError
from .render import render_spec


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="poolinfer-render", description=__doc__)
    parser.add_argument("--spec", required=True, help="figure spec JSON")
    parser.add_argument("--out", required=True, help="output directory for PNG/SVG files")
    args = parser.parse_args(argv)
    spec_path = Path(args.spec)
    try:
        spec = json.loads(spec_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"bad figure spec: {exc}", file=sys.stderr)
        return 2
    try:
        written = render_spec(spec, spec_path.parent, Path(args.out))
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {len(written)} files to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
