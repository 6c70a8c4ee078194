"""Generation loop: draft a chunk via priors, gate on confidence, re-sample rejections.

Speed is accounted in sequential sampling rounds: one round per draft pass
that sampled at least one accepted value (its inputs carry no sampling
dependency) plus one round per re-sampled position. Pure autoregressive
generation therefore costs one round per sample.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .ar import ArParams, advance_many, draft_pass, next_dist, sample_next, warmup
from .confidence import ConfidenceVector, accept_prefix, build_accept_mask, predict_confidence
from .numeric import GaussianHead, gaussian_log_density, sample_gaussian
from .priors import PriorChunk, predict_priors, take_window

PURPOSE_DRAFT = 0
PURPOSE_RESAMPLE = 1


def substream(seed: int, position: int, purpose: int) -> np.random.Generator:
    """Deterministic rng keyed by (seed, absolute position, purpose).

    Pure autoregressive generation uses the resample purpose at every
    position, so at ε=1 (everything re-sampled) both generators consume
    identical draw sequences.
    """
    if purpose not in (PURPOSE_DRAFT, PURPOSE_RESAMPLE):
        raise ValueError("purpose must be PURPOSE_DRAFT or PURPOSE_RESAMPLE")
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64((position << 1) | purpose)])
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class GenerationConfig:
    epsilon: float
    chunk: int = 20
    window: int = 200
    horizon: int = 100
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.chunk < 1:
            raise ValueError("chunk size must be at least 1")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.window < 1:
            raise ValueError("window must be at least 1")


@dataclass
class ChunkDraft:
    """Everything produced for one chunk: priors, heads, samples, scores, mask."""

    priors: PriorChunk
    heads: list[GaussianHead]
    drafted: np.ndarray
    scores: ConfidenceVector
    mask: np.ndarray
    accepted: int


@dataclass
class GenerationTrace:
    values: np.ndarray
    sequential_rounds: int = 0
    draft_passes: int = 0
    accepted_total: int = 0
    resampled_total: int = 0
    wall_ms: float = 0.0
    sampling_nll: float = 0.0
    chunks: list[ChunkDraft] = field(default_factory=list)


def generate_pure_ar(ar_params: ArParams, context, horizon: int, seed: int) -> GenerationTrace:
    """Sequential reference generator: one dependent round per sample."""
    t0 = time.perf_counter()
    if horizon == 0:
        return GenerationTrace(values=np.empty(0))
    state = warmup(ar_params, context)
    values = np.empty(horizon)
    nll = 0.0
    for p in range(horizon):
        rng = substream(seed, p, PURPOSE_RESAMPLE)
        head = next_dist(ar_params, state)
        x, state = sample_next(ar_params, state, rng)
        nll -= gaussian_log_density(x, head)
        values[p] = x
    return GenerationTrace(
        values=values,
        sequential_rounds=horizon,
        resampled_total=horizon,
        sampling_nll=nll,
        wall_ms=(time.perf_counter() - t0) * 1e3,
    )


def generate_nara(bundle, context, cfg: GenerationConfig) -> GenerationTrace:
    """Confidence-gated generation over cfg.horizon positions.

    Per chunk: predict priors and confidence scores from the trailing window,
    accept the leading prefix clearing ε, sample those positions from one
    draft pass, then re-sample the first rejected position sequentially.
    """
    t0 = time.perf_counter()
    context = np.asarray(context, dtype=np.float64)
    if context.size < 1:
        raise ValueError("context must be non-empty")
    trace = GenerationTrace(values=np.empty(0))
    values = list(context)
    state = warmup(bundle.ar, context)
    emitted = 0
    out = []
    while emitted < cfg.horizon:
        mcur = min(cfg.chunk, cfg.horizon - emitted)
        win = take_window(values, len(values), bundle.prior.window)
        pchunk = predict_priors(bundle.prior, win)
        scores = predict_confidence(bundle.conf, win, pchunk.values)
        khat, accepted = accept_prefix(scores.values[:mcur], cfg.epsilon)
        a = min(accepted, mcur)
        heads: list[GaussianHead] = []
        drafted = np.empty(0)
        if a > 0:
            heads = draft_pass(bundle.ar, state, pchunk.values[:a])
            drafted = np.empty(a)
            for j in range(a):
                rng = substream(cfg.seed, emitted + j, PURPOSE_DRAFT)
                drafted[j] = sample_gaussian(heads[j], rng.standard_normal())
                if not np.isfinite(drafted[j]):
                    raise FloatingPointError("diverged: non-finite sample")
            state = advance_many(bundle.ar, state, drafted)
            values.extend(drafted)
            out.extend(drafted)
            emitted += a
            trace.draft_passes += 1
            trace.sequential_rounds += 1
            trace.accepted_total += a
        mask = build_accept_mask(scores.values[:mcur], cfg.epsilon).mask
        trace.chunks.append(
            ChunkDraft(
                priors=PriorChunk(values=pchunk.values, position=emitted - a),
                heads=heads,
                drafted=drafted,
                scores=scores,
                mask=mask,
                accepted=a,
            )
        )
        if a < mcur:
            rng = substream(cfg.seed, emitted, PURPOSE_RESAMPLE)
            x, state = sample_next(bundle.ar, state, rng)
            if not np.isfinite(x):
                raise FloatingPointError("diverged: non-finite sample")
            values.append(x)
            out.append(x)
            emitted += 1
            trace.sequential_rounds += 1
            trace.resampled_total += 1
    trace.values = np.asarray(out)
    trace.wall_ms = (time.perf_counter() - t0) * 1e3
    return trace
