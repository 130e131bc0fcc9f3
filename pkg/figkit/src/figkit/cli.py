"""figkit: render figures from statestream trace / FC matrix files.

Usage: figkit SPECFILE [SPECFILE ...]
"""

from __future__ import annotations

import sys

from .files import FileFormatError
from .render import render
from .spec import load_spec


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if not argv or argv[0] in ("-h", "--help"):
        print(__doc__.strip(), file=sys.stderr)
        return 0 if argv else 1
    code = 0
    for path in argv:
        try:
            spec = load_spec(path)
            out = render(spec)
            print(f"{path} -> {out}")
        except (FileFormatError, OSError) as e:
            print(f"error: {e}", file=sys.stderr)
            code = 2
    return code


if __name__ == "__main__":
    sys.exit(main())
