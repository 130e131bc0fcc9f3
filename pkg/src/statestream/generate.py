"""Autoregressive decoding with frozen-KV thinking recursions.

Every generated token is selected by one decode step of 1 + r forward
passes over the same input token embedding: the KV cache prefix, cur_pos
and sequence length are frozen across passes, the current position's k/v
slot is rewritten each pass (last write persists), and in stream mode the
per-layer state caches evolve every pass. The emitted token is the argmax
of the final pass's logits; cur_pos advances exactly once per step.

prefill() runs the full prompt and advances cur_pos to the prompt length.
generate() then winds the session back one slot so the last prompt token is
re-fed by the first decode step, which gives the first generated token the
same 1 + r pass treatment as every other token (in base mode this re-feed
recomputes bit-identical k/v for that slot, so the stream equals classic
greedy decoding).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EngineError, ShapeError
from .kernels import argmax_greedy
from .model import KVCache, RunHooks, forward_base
from .modelio import EOS_ID, ModelConfig, WeightBundle
from .stream import StateCache, StreamConfig, forward_sst


@dataclass(frozen=True)
class RepetitionConfig:
    """Detector window and attractor thresholds (all tunable)."""
    window: int = 64
    max_period: int = 16
    min_repeats: int = 2
    attractor_direct_run: int = 30
    attractor_period_max: int = 8
    attractor_min_repeats: int = 6


@dataclass(frozen=True)
class RepetitionReport:
    kind: str = "none"          # none | direct | cyclic | attractor
    period: int = 0
    run_length: int = 0
    onset_index: int = -1


@dataclass(frozen=True)
class GenerationConfig:
    max_new_tokens: int = 64
    stop_ids: frozenset[int] = frozenset({EOS_ID})
    mode: str = "base"          # base | sst
    stream: StreamConfig = StreamConfig()
    seed: int = 1               # provenance only; the greedy path ignores it
    trace: object | None = None
    trace_layers: frozenset[int] | None = None
    monitor: object | None = None
    repetition: RepetitionConfig = RepetitionConfig()

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ShapeError(f"max_new_tokens must be >= 1, got {self.max_new_tokens}")
        if self.mode not in ("base", "sst"):
            raise ShapeError(f"mode must be 'base' or 'sst', got {self.mode!r}")


@dataclass
class GenerationResult:
    tokens: list[int]
    report: RepetitionReport
    trace: object | None
    step_logits: list[np.ndarray]   # final-pass logits per emitted token
    aborted: bool = False
    stats: dict = field(default_factory=dict)


class Session:
    """One generation's mutable state: KV cache, state cache, position."""

    def __init__(self, weights: WeightBundle, cfg: ModelConfig, gen: GenerationConfig):
        self.weights = weights
        self.cfg = cfg
        self.gen = gen
        self.kv = KVCache(cfg)
        self.state = StateCache(cfg.n_layers) if gen.mode == "sst" else None
        self.hooks = RunHooks(trace=gen.trace, trace_layers=gen.trace_layers,
                              monitor=gen.monitor)
        self.pending: int | None = None
        self.prefilled = False

    def reset_kv(self) -> None:
        self.kv.reset()
        self.prefilled = False
        self.pending = None

    def reset_state(self) -> None:
        if self.state is not None:
            from .stream import cache_reset
            cache_reset(self.state)

    def _forward(self, tokens, start_pos: int) -> np.ndarray:
        if self.gen.mode == "sst":
            return forward_sst(tokens, self.kv, self.state, start_pos,
                               self.weights, self.cfg, self.gen.stream, self.hooks)
        return forward_base(tokens, self.kv, start_pos,
                            self.weights, self.cfg, self.hooks)


def make_session(weights: WeightBundle, cfg: ModelConfig,
                 gen: GenerationConfig) -> Session:
    return Session(weights, cfg, gen)


def prefill(session: Session, prompt_ids: list[int]) -> np.ndarray | None:
    """Full-prompt forward pass; advances cur_pos to the prompt length.

    Returns the last-position logits, or None for an empty prompt.
    Requires a fresh KV cache (cur_pos == 0).
    """
    if session.kv.cur_pos != 0:
        raise EngineError("prefill requires a fresh KV cache")
    if len(prompt_ids) > session.cfg.max_seq:
        raise ShapeError(f"prompt length {len(prompt_ids)} exceeds max_seq "
                         f"{session.cfg.max_seq}")
    session.prefilled = True
    if not prompt_ids:
        return None
    # Trace events are per generated token; the prompt pass is not recorded.
    saved_trace = session.hooks.trace
    session.hooks.trace = None
    try:
        logits = session._forward(list(prompt_ids), 0)
    finally:
        session.hooks.trace = saved_trace
    session.kv.advance(len(prompt_ids))
    session.pending = int(prompt_ids[-1])
    return logits[0, -1]


def decode_step(session: Session) -> tuple[int, list[np.ndarray]]:
    """Run 1 + r passes over the pending token; emit the final argmax.

    The KV prefix below cur_pos is untouched across passes; the slot at
    cur_pos is rewritten by every pass. cur_pos advances by one, once,
    after the final pass.
    """
    if not session.prefilled or session.pending is None:
        raise EngineError("decode_step requires a prefilled session with a pending token")
    if session.kv.cur_pos >= session.cfg.max_seq:
        raise ShapeError("context window exhausted")
    r = session.gen.stream.recursions
    pass_logits: list[np.ndarray] = []
    for pass_idx in range(1 + r):
        session.hooks.pass_idx = pass_idx
        logits = session._forward([session.pending], session.kv.cur_pos)
        pass_logits.append(logits[0, -1])
    session.kv.advance(1)
    token = argmax_greedy(pass_logits[-1])
    session.pending = token
    return token, pass_logits


def detect_repetition(window_ids, rep: RepetitionConfig = RepetitionConfig()) -> RepetitionReport:
    """Classify the repetition pattern ending at the window's last token.

    Scans periods from 1 upward and reports the smallest period whose
    cycle covers the window suffix with at least min_repeats repetitions,
    escalating to "attractor" past the configured thresholds.
    """
    w = [int(t) for t in window_ids]
    n = len(w)
    if n < 2:
        return RepetitionReport()
    for p in range(1, min(rep.max_period, n - 1) + 1):
        matched = 0
        for i in range(n - 1, p - 1, -1):
            if w[i] == w[i - p]:
                matched += 1
            else:
                break
        run_length = (matched + p) // p
        if run_length < rep.min_repeats:
            continue
        onset = n - run_length * p
        if p == 1:
            kind = "attractor" if run_length >= rep.attractor_direct_run else "direct"
        elif p <= rep.attractor_period_max and run_length >= rep.attractor_min_repeats:
            kind = "attractor"
        else:
            kind = "cyclic"
        return RepetitionReport(kind=kind, period=p, run_length=run_length,
                                onset_index=onset)
    return RepetitionReport()


def generate(prompt_ids, weights: WeightBundle, cfg: ModelConfig,
             gen: GenerationConfig, session: Session | None = None) -> GenerationResult:
    """Greedy decode until a stop id, max_new_tokens, or an attractor abort.

    A fresh session (new KV and state caches) is created unless one is
    passed in explicitly; sequences are isolated by default.
    """
    if session is None:
        session = make_session(weights, cfg, gen)
    prompt_ids = list(prompt_ids)
    if not prompt_ids:
        raise ShapeError("generate requires a non-empty prompt (use a BOS id)")
    prefill(session, prompt_ids)
    # Rewind one slot: the last prompt token is re-fed by the first decode
    # step so that every emitted token gets the full 1 + r pass treatment.
    session.kv.cur_pos -= 1
    session.pending = int(prompt_ids[-1])

    tokens: list[int] = []
    step_logits: list[np.ndarray] = []
    report = RepetitionReport()
    aborted = False
    for step in range(gen.max_new_tokens):
        session.hooks.step = step
        token, pass_logits = decode_step(session)
        tokens.append(token)
        step_logits.append(pass_logits[-1])
        if token in gen.stop_ids:
            break
        window = tokens[-gen.repetition.window:]
        report = detect_repetition(window, gen.repetition)
        if report.kind == "attractor":
            aborted = True
            break
    stats = {}
    if gen.monitor is not None:
        stats["blend_rms"] = gen.monitor.rms
        stats["blend_finite"] = gen.monitor.finite
    return GenerationResult(tokens=tokens, report=report, trace=gen.trace,
                            step_logits=step_logits, aborted=aborted, stats=stats)


LAST_INT_RE = re.compile(r"-?\d+")


def extract_answer(text: str, extractor: str) -> str:
    """Pull the comparable answer out of generated text."""
    if extractor == "exact":
        return text.strip()
    if extractor == "last-integer":
        hits = LAST_INT_RE.findall(text)
        return hits[-1] if hits else ""
    raise ShapeError(f"unknown extractor {extractor!r}")


@dataclass
class TwoPhaseResult:
    item_id: str
    phase1_text: str
    phase1_ok: bool
    retried: bool
    phase2_text: str | None
    phase2_ok: bool | None
    changed: bool


def run_two_phase(items, evaluate, weights: WeightBundle, cfg: ModelConfig,
                  gen: GenerationConfig, phase1_r: int = 2, phase2_r: int = 4,
                  encode=None, decode=None,
                  session_factory=make_session) -> list[TwoPhaseResult]:
    """Attempt every item at phase1_r recursions; rerun failures once at
    phase2_r with a completely fresh session (no context carryover).

    items need .id and .prompt (token ids, or text if encode is given);
    evaluate(item, output_text) -> bool must be pure. An evaluator crash is
    recorded as a failure for that item and does not abort the batch.
    """
    results: list[TwoPhaseResult] = []
    for item in items:
        prompt_ids = encode(item.prompt) if encode is not None else list(item.prompt)

        def attempt(r: int) -> str:
            g = replace(gen, stream=replace(gen.stream, recursions=r))
            sess = session_factory(weights, cfg, g)
            res = generate(prompt_ids, weights, cfg, g, session=sess)
            raw = decode(res.tokens) if decode is not None else res.tokens
            return raw.decode("utf-8", "replace") if isinstance(raw, bytes) else str(raw)

        text1 = attempt(phase1_r)
        try:
            ok1 = bool(evaluate(item, text1))
        except Exception:
            ok1 = False
        if ok1:
            results.append(TwoPhaseResult(item.id, text1, True, False, None, None, False))
            continue
        text2 = attempt(phase2_r)
        try:
            ok2 = bool(evaluate(item, text2))
        except Exception:
            ok2 = False
        results.append(TwoPhaseResult(item.id, text1, False, True, text2, ok2,
                                      changed=(text2 != text1)))
    return results
