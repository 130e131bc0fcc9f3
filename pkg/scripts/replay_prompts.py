#!/usr/bin/env python3
"""Replay the qualitative prompt corpus through both forward paths.

Exploration only: at toy scale with random weights the text is gibberish,
but the divergence structure (first differing step, repetition reports) is
real. Point --weights/--config at bigger assets to make the text meaningful.

Usage: python scripts/replay_prompts.py --weights W --config C [--alpha A]
       [--recursions R] [--max-tokens N]
"""

import argparse
from pathlib import Path

from statestream.generate import GenerationConfig, generate
from statestream.modelio import BOS_ID, ByteTokenizer, load_config, load_weights
from statestream.stream import StreamConfig

PROMPT_DIR = Path(__file__).parent.parent / "prompts"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--weights", required=True)
    ap.add_argument("--config", required=True)
    ap.add_argument("--alpha", type=float, default=0.027)
    ap.add_argument("--recursions", type=int, default=2)
    ap.add_argument("--max-tokens", type=int, default=64)
    args = ap.parse_args()

    cfg = load_config(args.config)
    weights = load_weights(args.weights, cfg)
    tok = ByteTokenizer()

    for path in sorted(PROMPT_DIR.glob("*.txt")):
        prompt = path.read_bytes().strip()
        ids = [BOS_ID] + tok.encode(prompt)
        runs = {}
        for mode, stream in (("base", StreamConfig(alpha=0.0)),
                             ("sst", StreamConfig(alpha=args.alpha,
                                                  recursions=args.recursions))):
            gen = GenerationConfig(max_new_tokens=args.max_tokens, mode=mode,
                                   stream=stream)
            runs[mode] = generate(ids, weights, cfg, gen)
        first = next((i for i, (a, b) in enumerate(
            zip(runs["base"].tokens, runs["sst"].tokens)) if a != b), -1)
        print(f"=== {path.name} (first divergence at step {first}) ===")
        for mode, res in runs.items():
            text = tok.decode(res.tokens).decode("utf-8", "replace")
            print(f"[{mode}] repetition={res.report.kind} "
                  f"aborted={res.aborted}\n{text}\n")


if __name__ == "__main__":
    main()
