"""Toy-scale transformer inference engine with a persistent latent state
stream, frozen-KV thinking recursions, and deterministic instrumentation."""

from .errors import (CacheStateError, EngineError, FormatError,
                     NonFiniteError, ShapeError)
from .generate import (GenerationConfig, GenerationResult, RepetitionConfig,
                       RepetitionReport, Session, decode_step,
                       detect_repetition, generate, make_session, prefill,
                       run_two_phase)
from .kernels import (argmax_greedy, matmul, rms_norm, rope_apply, silu,
                      softmax_rows)
from .model import (KVCache, RunHooks, attention_block, block_forward_base,
                    causal_mask, ffn_swiglu, forward_base)
from .modelio import (BOS_ID, EOS_ID, PAD_ID, ByteTokenizer, ModelConfig,
                      WeightBundle, expected_shapes, init_random_weights,
                      load_config, load_weights, save_config, save_weights,
                      toy_config)
from .stream import (BlendMonitor, StateCache, StreamConfig, block_forward_sst,
                     cache_blend, cache_init, cache_overhead, cache_reset,
                     cache_update, forward_sst)
from .trace import (FCMatrix, TraceEvent, TraceSink, compare_traces,
                    default_dim_subset, export_fc, export_trace, fc_matrix,
                    load_fc, load_trace, pass_slice)

__version__ = "0.1.0"
