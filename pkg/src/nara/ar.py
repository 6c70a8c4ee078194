"""Autoregressive base model: stacked LSTM over scalar samples with a Gaussian head.

The recurrence starts from zero state; the conditional for the very first
sequence position is produced by feeding a constant start input of 0 through
the same recurrence on a side branch, so a warmup over a length-N context
performs exactly N steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lstm import LstmCell, LstmTape, lstm_sequence, lstm_sequence_backward
from .numeric import (
    LOG_VAR_MAX,
    LOG_VAR_MIN,
    DenseLayer,
    GaussianHead,
    gaussian_log_density,
    gaussian_log_density_grad,
    sample_gaussian,
)


# Indices into ArParams.log_var: heads conditioned on observed/sampled values
# versus heads conditioned on predicted priors inside a draft chunk.
LV_DATA = 0
LV_DRAFT = 1


@dataclass
class ArParams:
    """Parameters of the base model: input projection, LSTM stack, Gaussian head.

    The head projects the hidden state to the conditional mean. The
    log-variance is not a function of the inputs: a value-dependent variance
    channel lets the chunk-NLL objective widen its way out of penalties
    instead of pulling the priors toward the data, which destroys prior
    convergence. Instead two learned widths are keyed by conditioning type:
    one for observation-conditioned heads, one for prior-conditioned draft
    heads (whose targets carry genuine multi-step uncertainty).
    """

    in_proj: DenseLayer  # scalar -> embed
    cells: list[LstmCell]
    head: DenseLayer  # hidden -> mean
    log_var: np.ndarray  # shape (2,), [LV_DATA, LV_DRAFT], clamped on use

    @classmethod
    def init(cls, hidden: int, layers: int, rng: np.random.Generator) -> "ArParams":
        in_proj = DenseLayer.init(1, hidden, rng)
        cells = [LstmCell.init(hidden, hidden, rng) for _ in range(layers)]
        head = DenseLayer.init(hidden, 1, rng)
        head.bias[:] = 0.0
        return cls(in_proj=in_proj, cells=cells, head=head, log_var=np.zeros(2))

    @classmethod
    def zeros(cls, hidden: int, layers: int) -> "ArParams":
        return cls(
            in_proj=DenseLayer.zeros(1, hidden),
            cells=[LstmCell.zeros(hidden, hidden) for _ in range(layers)],
            head=DenseLayer.zeros(hidden, 1),
            log_var=np.zeros(2),
        )

    @property
    def hidden(self) -> int:
        return self.cells[0].hidden_size

    def parameters(self) -> dict[str, np.ndarray]:
        out = {"in_proj.weight": self.in_proj.weight, "in_proj.bias": self.in_proj.bias}
        for i, cell in enumerate(self.cells):
            out[f"lstm{i}.wx"] = cell.wx
            out[f"lstm{i}.wh"] = cell.wh
            out[f"lstm{i}.b"] = cell.b
        out["head.weight"] = self.head.weight
        out["head.bias"] = self.head.bias
        out["head.log_var"] = self.log_var
        return out

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(p) for name, p in self.parameters().items()}


@dataclass
class ArState:
    """Recurrence state after conditioning on some prefix."""

    hs: list[np.ndarray]
    cs: list[np.ndarray]
    position: int = 0

    def copy(self) -> "ArState":
        return ArState([h.copy() for h in self.hs], [c.copy() for c in self.cs], self.position)


def initial_state(params: ArParams) -> ArState:
    h = params.hidden
    n = len(params.cells)
    return ArState([np.zeros(h) for _ in range(n)], [np.zeros(h) for _ in range(n)], 0)


@dataclass
class SegmentTape:
    """Forward record of one teacher-forced segment, for the backward pass."""

    inputs: np.ndarray  # scalar inputs fed, [T]
    u: np.ndarray  # projected inputs, [T, E]
    layer_tapes: list[LstmTape]
    hs_top: np.ndarray  # [T, H]
    raw_log_var: np.ndarray  # pre-clamp head output, [T]
    heads: list[GaussianHead]
    state0: ArState
    state1: ArState
    lv_index: int = LV_DATA


def forward_segment(params: ArParams, state: ArState, inputs, lv_index: int = LV_DATA) -> SegmentTape:
    """Teacher-forced pass over scalar inputs; one head per step.

    The head after consuming inputs[t] is the conditional for the next
    position. lv_index selects which learned width the heads carry. Does not
    mutate the given state.
    """
    xs = np.asarray(inputs, dtype=np.float64)
    T = xs.shape[0]
    u = np.outer(xs, params.in_proj.weight[:, 0]) + params.in_proj.bias
    layer_tapes = []
    feed = u
    for li, cell in enumerate(params.cells):
        hs, tape = lstm_sequence(cell, feed, state.hs[li], state.cs[li])
        layer_tapes.append(tape)
        feed = hs
    hs_top = feed
    heads = []
    raw = float(params.log_var[lv_index])
    raw_log_var = np.full(T, raw)
    for t in range(T):
        mu = params.head.forward(hs_top[t])[0]
        heads.append(GaussianHead.from_raw(mu, raw))
    state1 = ArState(
        hs=[tape.hs[-1].copy() for tape in layer_tapes],
        cs=[tape.cs[-1].copy() for tape in layer_tapes],
        position=state.position + T,
    )
    return SegmentTape(
        inputs=xs,
        u=u,
        layer_tapes=layer_tapes,
        hs_top=hs_top,
        raw_log_var=raw_log_var,
        heads=heads,
        state0=state,
        state1=state1,
        lv_index=lv_index,
    )


def backward_segment(
    params: ArParams,
    tape: SegmentTape,
    dmean: np.ndarray,
    dlog_var: np.ndarray,
    grads: dict[str, np.ndarray],
    dstate1: tuple[list[np.ndarray], list[np.ndarray]] | None = None,
    dstate_index: int = -1,
):
    """Accumulate parameter gradients for one segment into `grads`.

    dmean/dlog_var are loss gradients wrt each step's head; dstate1
    optionally carries gradients wrt the per-layer (h, c) state emitted at
    step `dstate_index` (default: the handed-off final state). Returns
    (dinputs [T], dstate0) so callers can chain segments.
    """
    n_layers = len(params.cells)
    # Clamp is a hard stop: no gradient outside the open interval.
    pass_mask = (tape.raw_log_var > LOG_VAR_MIN) & (tape.raw_log_var < LOG_VAR_MAX)
    dlog_raw = np.where(pass_mask, dlog_var, 0.0)
    grads["head.weight"][0] += dmean @ tape.hs_top
    grads["head.bias"][0] += float(np.sum(dmean))
    grads["head.log_var"][tape.lv_index] += float(np.sum(dlog_raw))
    dh_top = np.outer(dmean, params.head.weight[0])

    dh_out = dh_top
    dh0s: list[np.ndarray] = []
    dc0s: list[np.ndarray] = []
    for li in range(n_layers - 1, -1, -1):
        dc_out = np.zeros_like(dh_out)
        if dstate1 is not None:
            dh_out = dh_out.copy()
            dh_out[dstate_index] += dstate1[0][li]
            dc_out[dstate_index] += dstate1[1][li]
        dwx, dwh, db, dx, dh0, dc0 = lstm_sequence_backward(
            params.cells[li], tape.layer_tapes[li], dh_out, dc_out
        )
        grads[f"lstm{li}.wx"] += dwx
        grads[f"lstm{li}.wh"] += dwh
        grads[f"lstm{li}.b"] += db
        dh0s.insert(0, dh0)
        dc0s.insert(0, dc0)
        dh_out = dx
    du = dh_out  # [T, E]
    grads["in_proj.weight"][:, 0] += tape.inputs @ du
    grads["in_proj.bias"] += du.sum(axis=0)
    dinputs = du @ params.in_proj.weight[:, 0]
    return dinputs, (dh0s, dc0s)


def state_at(tape: SegmentTape, index: int) -> ArState:
    """State emitted after the segment consumed inputs[0..index]."""
    if index < 0 or index >= tape.inputs.shape[0]:
        raise IndexError("state index outside the segment")
    return ArState(
        hs=[lt.hs[index].copy() for lt in tape.layer_tapes],
        cs=[lt.cs[index].copy() for lt in tape.layer_tapes],
        position=tape.state0.position + index + 1,
    )


def warmup(params: ArParams, context) -> ArState:
    """State after a teacher-forced pass over the context (one step per sample)."""
    context = np.asarray(context, dtype=np.float64)
    if context.size == 0:
        raise ValueError("empty context")
    return forward_segment(params, initial_state(params), context).state1


def next_dist(params: ArParams, state: ArState) -> GaussianHead:
    """Conditional for the next position given the state's prefix."""
    mu = params.head.forward(state.hs[-1])[0]
    return GaussianHead.from_raw(mu, float(params.log_var[LV_DATA]))


def start_head(params: ArParams) -> GaussianHead:
    """Conditional for position 1: constant start input 0 through the recurrence."""
    return forward_segment(params, initial_state(params), [0.0]).heads[0]


def advance(params: ArParams, state: ArState, value: float) -> ArState:
    """Feed one known value; returns the advanced state."""
    from . import kernels

    feed = params.in_proj.weight[:, 0] * float(value) + params.in_proj.bias
    hs = []
    cs = []
    for li, cell in enumerate(params.cells):
        h, c = kernels.lstm_step(cell.wx, cell.wh, cell.b, feed, state.hs[li], state.cs[li])
        hs.append(h)
        cs.append(c)
        feed = h
    return ArState(hs=hs, cs=cs, position=state.position + 1)


def advance_many(params: ArParams, state: ArState, values) -> ArState:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return state.copy()
    return forward_segment(params, state, values).state1


def sample_next(params: ArParams, state: ArState, rng: np.random.Generator):
    """Draw the next sample with one rng draw; returns (value, advanced state)."""
    head = next_dist(params, state)
    x = sample_gaussian(head, rng.standard_normal())
    return x, advance(params, state, x)


def suffix_nll(params: ArParams, state: ArState, values) -> float:
    """Teacher-forced negative log-likelihood of values continuing the state."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return 0.0
    # First head comes from the state itself, later ones from feeding values.
    nll = -gaussian_log_density(values[0], next_dist(params, state))
    if values.size > 1:
        tape = forward_segment(params, state, values[:-1])
        for t in range(values.size - 1):
            nll -= gaussian_log_density(values[t + 1], tape.heads[t])
    return nll


def sequence_nll(params: ArParams, seq) -> float:
    """Negative log-likelihood of a full sequence under teacher forcing.

    Position 1 is scored against the start-input head; positions 2..N against
    heads from the recurrence over the true prefix.
    """
    x = np.asarray(seq, dtype=np.float64)
    if x.size < 1:
        raise ValueError("sequence must be non-empty")
    nll = -gaussian_log_density(x[0], start_head(params))
    if x.size > 1:
        tape = forward_segment(params, initial_state(params), x[:-1])
        for t in range(x.size - 1):
            nll -= gaussian_log_density(x[t + 1], tape.heads[t])
    return nll


def sequence_nll_grad(params: ArParams, seq, grads: dict[str, np.ndarray] | None = None):
    """(nll, gradient dict) for :func:`sequence_nll`."""
    x = np.asarray(seq, dtype=np.float64)
    if grads is None:
        grads = params.zero_grads()
    start_tape = forward_segment(params, initial_state(params), [0.0])
    nll = -gaussian_log_density(x[0], start_tape.heads[0])
    _, dmu, dlv = gaussian_log_density_grad(x[0], start_tape.heads[0])
    backward_segment(params, start_tape, np.array([-dmu]), np.array([-dlv]), grads)
    if x.size > 1:
        tape = forward_segment(params, initial_state(params), x[:-1])
        T = x.size - 1
        dmean = np.empty(T)
        dlog_var = np.empty(T)
        for t in range(T):
            nll -= gaussian_log_density(x[t + 1], tape.heads[t])
            _, dmu, dlv = gaussian_log_density_grad(x[t + 1], tape.heads[t])
            dmean[t] = -dmu
            dlog_var[t] = -dlv
        backward_segment(params, tape, dmean, dlog_var, grads)
    return nll, grads


def draft_pass(params: ArParams, state: ArState, priors) -> list[GaussianHead]:
    """Conditionals for a whole chunk in one dependent round.

    Head k is conditioned on the state's prefix plus priors[:k-1] fed as if
    they were the chunk's values; priors[-1] is never consumed. The first
    head is the exact next-step conditional; later heads carry the draft
    width. No sampling happens here, so the chunk costs zero sequential
    rounds internally.
    """
    priors = np.asarray(priors, dtype=np.float64)
    m = priors.shape[0]
    if m < 1:
        raise ValueError("chunk must contain at least one position")
    heads = [next_dist(params, state)]
    if m > 1:
        tape = forward_segment(params, state, priors[:-1], lv_index=LV_DRAFT)
        heads.extend(tape.heads)
    return heads


@dataclass
class DraftTape:
    """Forward record of a draft evaluation (context head + prior-fed segment)."""

    state: ArState
    priors: np.ndarray
    heads: list[GaussianHead]
    segment: SegmentTape | None = field(default=None)


def draft_pass_tape(params: ArParams, state: ArState, priors) -> DraftTape:
    priors = np.asarray(priors, dtype=np.float64)
    heads = [next_dist(params, state)]
    segment = None
    if priors.shape[0] > 1:
        segment = forward_segment(params, state, priors[:-1], lv_index=LV_DRAFT)
        heads.extend(segment.heads)
    return DraftTape(state=state, priors=priors, heads=heads, segment=segment)
