#!/usr/bin/env python3
"""Generate the toy config and seeded weight container used by the CLI
examples and tests.

Usage: python scripts/make_toy_assets.py [outdir] [--seed N]
"""

import argparse
from pathlib import Path

from statestream.modelio import (init_random_weights, save_config,
                                 save_weights, toy_config)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("outdir", nargs="?", default="assets")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = toy_config()
    save_config(str(out / "toy.cfg"), cfg)
    bundle = init_random_weights(cfg, args.seed)
    save_weights(str(out / "toy.sstw"), bundle)
    print(f"wrote {out / 'toy.cfg'} and {out / 'toy.sstw'} "
          f"(seed {args.seed}, hash {bundle.content_hash()[:16]})")


if __name__ == "__main__":
    main()
