#!/usr/bin/env python3
"""Print the current values of every golden constant frozen in the tests.

Run after an intentional numeric change, verify the new values against the
independent oracles, then paste them into the tests.
"""

import hashlib
import io

import numpy as np

from statestream.cli import run as cli_run
from statestream.generate import GenerationConfig, generate
from statestream.model import KVCache, block_forward_base, causal_mask
from statestream.modelio import BOS_ID, init_random_weights, save_config, save_weights, toy_config
from statestream.stream import StreamConfig

TOY_SEED = 7


def main():
    cfg = toy_config()
    weights = init_random_weights(cfg, TOY_SEED)

    kv = KVCache(cfg)
    rng = np.random.default_rng(12)
    x = rng.standard_normal((1, 3, cfg.d_model)).astype(np.float32)
    out = block_forward_base(x, 0, kv, 0, causal_mask(3, 0), weights, cfg)
    print("tests/test_model.py GOLDEN_BLOCK_HASH =",
          hashlib.sha256(out.tobytes()).hexdigest())

    prompt = [BOS_ID] + [ord(c) for c in "the quick brown fox"]
    base = generate(prompt, weights, cfg,
                    GenerationConfig(max_new_tokens=48, mode="base",
                                     stream=StreamConfig(alpha=0.0)))
    sst = generate(prompt, weights, cfg,
                   GenerationConfig(max_new_tokens=48, mode="sst",
                                    stream=StreamConfig(alpha=0.027, recursions=2)))
    first = next((i for i, (a, b) in enumerate(zip(base.tokens, sst.tokens))
                  if a != b), -1)
    print("tests/test_generate.py GOLDEN_DIVERGENCE_INDEX =", first)

    import tempfile, os
    d = tempfile.mkdtemp()
    cfg_p, w_p = os.path.join(d, "toy.cfg"), os.path.join(d, "toy.sstw")
    save_config(cfg_p, cfg)
    save_weights(w_p, weights)
    out_buf = io.BytesIO()
    cli_run(["generate", "--weights", w_p, "--config", cfg_p, "--mode", "base",
             "--alpha", "0", "--recursions", "0", "--prompt", "hello",
             "--max-tokens", "24"], out_buf, io.StringIO())
    print("tests/test_cli.py GOLDEN_GENERATE_SHA =",
          hashlib.sha256(out_buf.getvalue()).hexdigest())


if __name__ == "__main__":
    main()
