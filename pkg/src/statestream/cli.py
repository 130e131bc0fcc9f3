"""Command-line harness.

Subcommands: generate, compare, trace, membudget, bench. Every command is
deterministic: identical invocations produce byte-identical outputs.

Exit codes: 0 success, 1 usage error, 2 runtime error, 3 generation
terminated by attractor detection.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import sys
from dataclasses import dataclass

from .errors import EngineError
from .generate import (GenerationConfig, extract_answer, generate,
                       run_two_phase)
from .modelio import (BOS_ID, EOS_ID, ByteTokenizer, load_config,
                      load_weights, parse_kv_file)
from .stream import StreamConfig, cache_overhead
from .trace import (TraceSink, compare_traces, default_dim_subset, export_fc,
                    export_trace, fc_matrix)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_ATTRACTOR = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class TaskItem:
    """One benchmark item: tab-separated id/prompt/expected/extractor."""
    id: str
    prompt: str
    expected: str
    extractor: str = "exact"


def load_task_file(path: str, warn=lambda msg: None) -> list[TaskItem]:
    """Parse tab-separated task lines, skipping malformed ones with a warning."""
    items: list[TaskItem] = []
    seen = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4 or not parts[0] or parts[3] not in ("exact", "last-integer"):
                warn(f"{path}:{lineno}: skipping malformed task line")
                continue
            if parts[0] in seen:
                warn(f"{path}:{lineno}: skipping duplicate id {parts[0]!r}")
                continue
            seen.add(parts[0])
            items.append(TaskItem(*parts))
    return items


def _add_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--weights", required=True, help="weight container file")
    p.add_argument("--config", required=True, help="model config file")


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--mode", choices=["base", "sst"], default="base")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--recursions", type=int, default=None)
    p.add_argument("--alignment", choices=["head", "tail"], default=None)
    p.add_argument("--max-tokens", type=int, default=64)
    p.add_argument("--prompt", default=None)
    p.add_argument("--prompt-file", default=None)
    p.add_argument("--seed", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="statestream")
    sub = top.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="greedy generation")
    _add_model_flags(g)
    _add_run_flags(g)
    g.add_argument("--trace-out", default=None, help="write a state trace file")

    c = sub.add_parser("compare", help="run base and sst on the same assets")
    _add_model_flags(c)
    _add_run_flags(c)
    c.add_argument("--weights-b", default=None,
                   help="must be content-identical to --weights if given")

    t = sub.add_parser("trace", help="generation with trace + FC matrix export")
    _add_model_flags(t)
    _add_run_flags(t)
    t.add_argument("--trace-out", required=True)
    t.add_argument("--fc-out", required=True, help="directory for FC matrix files")
    t.add_argument("--fc-window", type=int, default=16)

    m = sub.add_parser("membudget", help="state-cache memory budget")
    m.add_argument("--tokens", type=int, default=1)
    m.add_argument("--d-model", type=int, default=4096)
    m.add_argument("--layers", type=int, default=32)
    m.add_argument("--bytes", type=int, default=2)

    b = sub.add_parser("bench", help="two-phase task runner")
    _add_model_flags(b)
    _add_run_flags(b)
    b.add_argument("--tasks", required=True, help="task file")
    b.add_argument("--out", required=True, help="results CSV path")
    b.add_argument("--phase1-recursions", type=int, default=2)
    b.add_argument("--phase2-recursions", type=int, default=4)
    b.add_argument("--workers", type=int, default=1)
    return top


def _stream_config(args, file_keys: dict[str, str]) -> StreamConfig:
    """CLI flags override optional config-file keys, which override defaults."""
    alpha = StreamConfig().alpha
    recursions = 0
    alignment = "tail"
    if "alpha" in file_keys:
        alpha = float(file_keys["alpha"])
    if "recursions" in file_keys:
        recursions = int(file_keys["recursions"])
    if "alignment" in file_keys:
        alignment = file_keys["alignment"]
    if args.alpha is not None:
        alpha = args.alpha
    if args.recursions is not None:
        recursions = args.recursions
    if args.alignment is not None:
        alignment = args.alignment
    if not 0.0 <= alpha <= 1.0:
        raise UsageError(f"--alpha must be in [0, 1], got {alpha}")
    if recursions < 0:
        raise UsageError(f"--recursions must be >= 0, got {recursions}")
    return StreamConfig(alpha=alpha, recursions=recursions, alignment=alignment)


def _load_assets(args):
    cfg = load_config(args.config)
    weights = load_weights(args.weights, cfg)
    stream = _stream_config(args, parse_kv_file(args.config))
    return cfg, weights, stream


def _prompt_ids(args, tok: ByteTokenizer) -> list[int]:
    if args.prompt is not None and args.prompt_file is not None:
        raise UsageError("give either --prompt or --prompt-file, not both")
    if args.prompt is not None:
        text = args.prompt.encode("utf-8")
    elif args.prompt_file is not None:
        with open(args.prompt_file, "rb") as f:
            text = f.read()
    else:
        text = b""
    return [BOS_ID] + tok.encode(text)


def _config_label(args, stream: StreamConfig, weights) -> str:
    h = hashlib.sha256()
    h.update(f"mode={args.mode} alpha={stream.alpha} r={stream.recursions} "
             f"align={stream.alignment} seed={args.seed} "
             f"weights={weights.content_hash()}".encode())
    return h.hexdigest()[:16]


def _gen_config(args, stream: StreamConfig, max_tokens=None, trace=None,
                monitor=None) -> GenerationConfig:
    return GenerationConfig(
        max_new_tokens=max_tokens if max_tokens is not None else args.max_tokens,
        stop_ids=frozenset({EOS_ID}),
        mode=args.mode,
        stream=stream,
        seed=args.seed,
        trace=trace,
        monitor=monitor,
    )


def cmd_generate(args, out, err) -> int:
    cfg, weights, stream = _load_assets(args)
    tok = ByteTokenizer()
    prompt_ids = _prompt_ids(args, tok)
    trace = None
    if args.trace_out:
        trace = TraceSink(default_dim_subset(cfg.d_model),
                          config_label=_config_label(args, stream, weights))
    gen = _gen_config(args, stream, trace=trace)
    result = generate(prompt_ids, weights, cfg, gen)
    out.write(tok.decode(result.tokens))
    out.write(b"\n")
    rep = result.report
    err.write(f"# tokens={len(result.tokens)} repetition kind={rep.kind} "
              f"period={rep.period} run={rep.run_length} onset={rep.onset_index} "
              f"seed={args.seed}\n")
    if trace is not None:
        export_trace(trace, args.trace_out)
    return EXIT_ATTRACTOR if result.aborted else EXIT_OK


def cmd_compare(args, out, err) -> int:
    cfg, weights, stream = _load_assets(args)
    if args.weights_b is not None:
        other = load_weights(args.weights_b, cfg)
        if other.content_hash() != weights.content_hash():
            raise UsageError("comparison requires identical weights on both paths")
    tok = ByteTokenizer()
    prompt_ids = _prompt_ids(args, tok)

    def run(mode: str):
        label = f"{mode}-compare"
        trace = TraceSink(default_dim_subset(cfg.d_model), config_label=label)
        run_args = replace_mode(args, mode)
        gen = _gen_config(run_args, stream, trace=trace)
        return generate(prompt_ids, weights, cfg, gen), trace

    res_base, trace_base = run("base")
    res_sst, trace_sst = run("sst")

    lines = []
    lines.append(f"tokens_base {len(res_base.tokens)}")
    lines.append(f"tokens_sst {len(res_sst.tokens)}")
    first = -1
    for i, (a, b) in enumerate(zip(res_base.tokens, res_sst.tokens)):
        if a != b:
            first = i
            break
    if first < 0 and len(res_base.tokens) != len(res_sst.tokens):
        first = min(len(res_base.tokens), len(res_sst.tokens))
    lines.append(f"first_divergence {first}")
    steps = sorted({e.step for e in trace_base.events} & {e.step for e in trace_sst.events})
    overall = 0.0
    a_map = {(e.step, e.pass_idx, e.layer, e.position): e.values for e in trace_base.events}
    b_map = {(e.step, e.pass_idx, e.layer, e.position): e.values for e in trace_sst.events}
    report = compare_traces(a_map, b_map)
    per_step: dict[int, float] = {}
    for key, diff in report.per_key.items():
        per_step[key[0]] = max(per_step.get(key[0], 0.0), diff)
    for step in steps:
        lines.append(f"state_diff step={step} max_abs={per_step.get(step, 0.0):.9g}")
        overall = max(overall, per_step.get(step, 0.0))
    lines.append(f"overall_max_abs {overall:.9g}")
    lines.append("stream_base " + " ".join(str(t) for t in res_base.tokens))
    lines.append("stream_sst " + " ".join(str(t) for t in res_sst.tokens))
    out.write(("\n".join(lines) + "\n").encode("utf-8"))
    return EXIT_OK


def replace_mode(args, mode: str):
    ns = argparse.Namespace(**vars(args))
    ns.mode = mode
    return ns


def cmd_trace(args, out, err) -> int:
    import os
    cfg, weights, stream = _load_assets(args)
    tok = ByteTokenizer()
    prompt_ids = _prompt_ids(args, tok)
    trace = TraceSink(default_dim_subset(cfg.d_model),
                      config_label=_config_label(args, stream, weights))
    gen = _gen_config(args, stream, trace=trace)
    result = generate(prompt_ids, weights, cfg, gen)
    export_trace(trace, args.trace_out)
    os.makedirs(args.fc_out, exist_ok=True)
    n_steps = len(result.tokens)
    passes = stream.recursions + 1
    written = 0
    for step in range(1, n_steps):
        for p in range(passes):
            try:
                fc = fc_matrix(trace, step, p, window_steps=args.fc_window)
            except EngineError:
                continue
            export_fc(fc, os.path.join(args.fc_out, f"fc_step{step:04d}_pass{p}.txt"))
            written += 1
    err.write(f"# trace events={len(trace.events)} fc_files={written}\n")
    out.write(tok.decode(result.tokens))
    out.write(b"\n")
    return EXIT_ATTRACTOR if result.aborted else EXIT_OK


def _human_bytes(n: int) -> str:
    if n == 0:
        return "0 B"
    units = [("GB", 1024 ** 3), ("MB", 1024 ** 2), ("KB", 1024)]
    for name, size in units:
        if n % size == 0 and n >= size:
            return f"{n // size} {name}"
    for name, size in units:
        if n >= size:
            return f"{n / size:.2f} {name}"
    return f"{n} B"


def cmd_membudget(args, out, err) -> int:
    if args.tokens < 0 or args.d_model <= 0 or args.layers <= 0 or args.bytes <= 0:
        raise UsageError("membudget arguments must be positive (tokens may be 0)")
    per_token = cache_overhead(1, args.d_model, args.layers, args.bytes)
    total = cache_overhead(args.tokens, args.d_model, args.layers, args.bytes)
    text = (f"state cache budget: d_model={args.d_model} layers={args.layers} "
            f"bytes/value={args.bytes}\n"
            f"per token: {per_token} bytes ({_human_bytes(per_token)}/token)\n"
            f"{args.tokens} tokens: {total} bytes ({_human_bytes(total)})\n")
    out.write(text.encode("utf-8"))
    return EXIT_OK


def cmd_bench(args, out, err) -> int:
    cfg, weights, stream = _load_assets(args)
    tok = ByteTokenizer()
    items = load_task_file(args.tasks, warn=lambda m: err.write(f"# warning: {m}\n"))

    def evaluate(item: TaskItem, text: str) -> bool:
        return extract_answer(text, item.extractor) == item.expected

    gen = _gen_config(args, stream)

    def run_items(batch):
        return run_two_phase(
            batch, evaluate, weights, cfg, gen,
            phase1_r=args.phase1_recursions, phase2_r=args.phase2_recursions,
            encode=lambda text: [BOS_ID] + tok.encode(text),
            decode=lambda ids: tok.decode(ids))

    if args.workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            futures = [pool.submit(run_items, [item]) for item in items]
            results = [f.result()[0] for f in futures]
    else:
        results = run_items(items)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "phase1_answer", "phase1_correct", "retried",
                     "phase2_answer", "phase2_correct", "changed"])
    n_ok1 = n_retried = n_ok2 = n_changed = 0
    for item, res in zip(items, results):
        a1 = extract_answer(res.phase1_text, item.extractor)
        a2 = extract_answer(res.phase2_text, item.extractor) if res.retried else ""
        writer.writerow([res.item_id, a1, int(res.phase1_ok), int(res.retried),
                         a2, "" if res.phase2_ok is None else int(res.phase2_ok),
                         int(res.changed)])
        n_ok1 += res.phase1_ok
        n_retried += res.retried
        n_ok2 += bool(res.phase2_ok)
        n_changed += res.changed
    buf.write(f"# aggregate items={len(items)} phase1_correct={n_ok1} "
              f"retried={n_retried} phase2_corrected={n_ok2} changed={n_changed}\n")
    with open(args.out, "w", encoding="utf-8", newline="") as f:
        f.write(buf.getvalue())
    err.write(f"# bench wrote {args.out}\n")
    return EXIT_OK


_COMMANDS = {
    "generate": cmd_generate,
    "compare": cmd_compare,
    "trace": cmd_trace,
    "membudget": cmd_membudget,
    "bench": cmd_bench,
}


def run(argv, out=None, err=None) -> int:
    out = out if out is not None else sys.stdout.buffer
    err = err if err is not None else sys.stderr

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args, out, err)
    except UsageError as e:
        err.write(f"usage error: {e}\n")
        return EXIT_USAGE
    except EngineError as e:
        err.write(f"error: {e}\n")
        return EXIT_RUNTIME
    except OSError as e:
        err.write(f"error: {e}\n")
        return EXIT_RUNTIME


def main(argv=None) -> int:
    code = run(sys.argv[1:] if argv is None else argv)
    sys.stdout.flush()
    return code


if __name__ == "__main__":
    sys.exit(main())
