"""Confidence subsystem: oracle scores, learned predictor, calibration, acceptance rule.

The oracle score of a drafted value is its log-density under the draft-pass
conditionals. The predictor estimates, from (window, priors) alone, whether
that score will clear a calibrated threshold, so acceptance can be decided
before any base-model pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ar import ArParams, draft_pass, warmup
from .numeric import AdamState, DenseLayer, adam_step, gaussian_log_density, sigmoid
from .priors import PriorParams, predict_priors, take_window

# Quantile of the oracle log-density stream used as the training label
# threshold in quantile mode (the sweep threshold stays the caller's ε).
TRAIN_REFERENCE_QUANTILE = 0.5

CONF_HIDDEN = 64


@dataclass
class ConfParams:
    """Two-layer sigmoid-output network scoring each chunk position."""

    hidden: DenseLayer  # [hidden, window + horizon]
    out: DenseLayer  # [horizon, hidden]

    @classmethod
    def init(cls, window: int, horizon: int, rng: np.random.Generator, hidden: int = CONF_HIDDEN) -> "ConfParams":
        return cls(
            hidden=DenseLayer.init(window + horizon, hidden, rng),
            out=DenseLayer.init(hidden, horizon, rng),
        )

    @classmethod
    def zeros(cls, window: int, horizon: int, hidden: int = CONF_HIDDEN) -> "ConfParams":
        return cls(hidden=DenseLayer.zeros(window + horizon, hidden), out=DenseLayer.zeros(hidden, horizon))

    @property
    def window_plus_horizon(self) -> int:
        return self.hidden.n_in

    @property
    def horizon(self) -> int:
        return self.out.n_out

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            "hidden.weight": self.hidden.weight,
            "hidden.bias": self.hidden.bias,
            "out.weight": self.out.weight,
            "out.bias": self.out.bias,
        }


@dataclass
class ConfidenceVector:
    """Per-position scores; `kind` is 'predictor' (in (0,1)) or 'oracle' (log-densities)."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.kind not in ("predictor", "oracle"):
            raise ValueError(f"unknown confidence kind {self.kind!r}")


@dataclass
class AcceptMask:
    """Prefix acceptance mask for one chunk."""

    mask: np.ndarray  # bool
    accepted: int

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        prefix_len = int(np.sum(np.cumprod(self.mask))) if self.mask.size else 0
        if self.accepted != prefix_len or bool(np.any(self.mask[self.accepted :])):
            raise ValueError("mask is not a prefix matching the accepted count")


def predict_confidence(params: ConfParams, window_values, priors) -> ConfidenceVector:
    """Sigmoid scores for each chunk position, from the window and priors only."""
    w = np.asarray(window_values, dtype=np.float64)
    m = np.asarray(priors, dtype=np.float64)
    feats = np.concatenate([w, m])
    if feats.shape[0] != params.window_plus_horizon:
        raise ValueError("feature length does not match confidence net input")
    a1 = np.tanh(params.hidden.forward(feats))
    z2 = params.out.forward(a1)
    return ConfidenceVector(values=sigmoid(z2), kind="predictor")


def oracle_confidence(
    ar_params: ArParams,
    prior_params: PriorParams | None,
    context,
    priors,
    drafted,
) -> ConfidenceVector:
    """Log-density of each drafted value under the draft-pass conditionals.

    `priors` may be None, in which case they are predicted from the context
    window with `prior_params`.
    """
    context = np.asarray(context, dtype=np.float64)
    drafted = np.asarray(drafted, dtype=np.float64)
    if priors is None:
        if prior_params is None:
            raise ValueError("either priors or prior_params must be given")
        win = take_window(context, context.shape[0], prior_params.window)
        priors = predict_priors(prior_params, win).values
    priors = np.asarray(priors, dtype=np.float64)
    if priors.shape[0] != drafted.shape[0]:
        raise ValueError(
            f"priors length {priors.shape[0]} does not match drafted length {drafted.shape[0]}"
        )
    state = warmup(ar_params, context)
    heads = draft_pass(ar_params, state, priors)
    dens = np.array([gaussian_log_density(x, h) for x, h in zip(drafted, heads)])
    return ConfidenceVector(values=dens, kind="oracle")


@dataclass
class ThresholdCalibration:
    """Running statistics of oracle log-densities plus the threshold rule.

    running_mean mode: threshold = kappa * mean(log-densities).
    quantile mode: threshold = empirical ε-quantile (index floor(ε·n) of the
    sorted values), with ε supplied at query time; ε <= 0 yields -inf.
    """

    mode: str = "quantile"
    kappa: float = 2.5
    count: int = 0
    mean: float = 0.0
    values: list = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in ("quantile", "running_mean"):
            raise ValueError(f"unknown calibration mode {self.mode!r}")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")

    def update(self, stream) -> None:
        stream = np.asarray(stream, dtype=np.float64).reshape(-1)
        if stream.size == 0:
            return
        total = self.mean * self.count + float(np.sum(stream))
        self.count += int(stream.size)
        self.mean = total / self.count
        self.values.extend(float(v) for v in stream)

    def threshold(self, epsilon: float | None = None) -> float:
        if self.mode == "running_mean":
            if self.count == 0:
                raise ValueError("empty calibration stream")
            return self.kappa * self.mean
        if len(self.values) < 100:
            raise ValueError("quantile calibration needs at least 100 values")
        if epsilon is None:
            raise ValueError("quantile mode needs epsilon at query time")
        if epsilon <= 0.0:
            return -math.inf
        vals = np.sort(np.asarray(self.values))
        idx = min(vals.size - 1, int(math.floor(epsilon * vals.size)))
        return float(vals[idx])

    def train_threshold(self) -> float:
        """Threshold used to binarize training labels for the predictor."""
        if self.mode == "running_mean":
            return self.threshold()
        return self.threshold(TRAIN_REFERENCE_QUANTILE)


def calibrate_threshold(cal: ThresholdCalibration, stream, epsilon: float | None = None) -> float:
    """Ingest a stream of oracle log-densities and return the decision threshold."""
    cal.update(stream)
    return cal.threshold(epsilon) if cal.mode == "quantile" else cal.threshold()


def label_chunk(oracle_scores, tau: float) -> np.ndarray:
    """Per-position training labels: indicator of clearing the threshold.

    Not prefix-restricted; the prefix rule applies only at inference.
    """
    scores = np.asarray(oracle_scores, dtype=np.float64)
    return scores >= tau


def accept_prefix(scores, epsilon: float):
    """First sub-threshold index decides the accepted prefix.

    Returns (k̂, accepted) where k̂ is 1-based: the first position whose score
    falls below ε, or M+1 when none does. ε=1 always rejects the whole chunk;
    ε=0 always accepts it.
    """
    if isinstance(scores, ConfidenceVector):
        scores = scores.values
    scores = np.asarray(scores, dtype=np.float64)
    m = scores.shape[0]
    if epsilon >= 1.0:
        return 1, 0
    if epsilon <= 0.0:
        return m + 1, m
    below = np.nonzero(scores < epsilon)[0]
    khat = int(below[0]) + 1 if below.size else m + 1
    return khat, khat - 1


def build_accept_mask(scores, epsilon: float) -> AcceptMask:
    if isinstance(scores, ConfidenceVector):
        scores = scores.values
    scores = np.asarray(scores, dtype=np.float64)
    khat, accepted = accept_prefix(scores, epsilon)
    mask = np.zeros(scores.shape[0], dtype=bool)
    mask[:accepted] = True
    return AcceptMask(mask=mask, accepted=accepted)


def _conf_features(window_values, priors) -> np.ndarray:
    return np.concatenate([np.asarray(window_values, dtype=np.float64), np.asarray(priors, dtype=np.float64)])


def binary_cross_entropy(scores: np.ndarray, labels: np.ndarray) -> float:
    s = np.clip(scores, 1e-12, 1.0 - 1e-12)
    y = labels.astype(np.float64)
    return float(-np.mean(y * np.log(s) + (1.0 - y) * np.log(1.0 - s)))


def _conf_forward_batch(params: ConfParams, feats: np.ndarray):
    a1 = np.tanh(feats @ params.hidden.weight.T + params.hidden.bias)
    z2 = a1 @ params.out.weight.T + params.out.bias
    return a1, sigmoid(z2)


def confidence_batch_scores(params: ConfParams, feats: np.ndarray) -> np.ndarray:
    return _conf_forward_batch(params, feats)[1]


def _conf_bce_grads(params: ConfParams, feats: np.ndarray, labels: np.ndarray):
    a1, s = _conf_forward_batch(params, feats)
    y = labels.astype(np.float64)
    n = s.size
    loss = binary_cross_entropy(s, labels)
    dz2 = (s - y) / n
    dw2 = dz2.T @ a1
    db2 = dz2.sum(axis=0)
    da1 = dz2 @ params.out.weight
    dz1 = da1 * (1.0 - a1 * a1)
    dw1 = dz1.T @ feats
    db1 = dz1.sum(axis=0)
    grads = {"hidden.weight": dw1, "hidden.bias": db1, "out.weight": dw2, "out.bias": db2}
    return loss, grads


def rollout_chunk(ar_params: ArParams, context, length: int, rng: np.random.Generator) -> np.ndarray:
    """Sequential draw of `length` samples from the base model after the context."""
    return _rollout_from_state(ar_params, warmup(ar_params, context), length, rng)


def _rollout_from_state(ar_params: ArParams, state, length: int, rng: np.random.Generator) -> np.ndarray:
    from .ar import sample_next  # local import keeps module load order simple

    out = np.empty(length)
    for k in range(length):
        out[k], state = sample_next(ar_params, state, rng)
    return out


def build_confidence_set(
    ar_params: ArParams,
    prior_params: PriorParams,
    sequences,
    rng: np.random.Generator,
    positions_per_seq: int,
):
    """(features, oracle log-densities) pairs for confidence training.

    One sequential chunk rollout per sampled position; the oracle scores the
    rollout against the prior-conditioned draft heads.
    """
    window = prior_params.window
    horizon = prior_params.horizon
    feats = []
    dens = []
    for seq in sequences:
        seq = np.asarray(seq, dtype=np.float64)
        n = seq.shape[0]
        hi = n - horizon
        lo = min(window, hi)
        if hi < 1:
            continue
        for _ in range(positions_per_seq):
            v = int(rng.integers(lo, hi + 1))
            context = seq[:v]
            win = take_window(context, v, window)
            priors = predict_priors(prior_params, win).values
            state = warmup(ar_params, context)
            drafted = _rollout_from_state(ar_params, state, horizon, rng)
            heads = draft_pass(ar_params, state, priors)
            feats.append(_conf_features(win, priors))
            dens.append([gaussian_log_density(x, h) for x, h in zip(drafted, heads)])
    if not feats:
        raise ValueError("no confidence training positions available")
    return np.asarray(feats), np.asarray(dens)


def train_confidence(
    conf: ConfParams,
    ar_params: ArParams,
    prior_params: PriorParams,
    train_sequences,
    val_sequences,
    cal: ThresholdCalibration,
    rng: np.random.Generator,
    *,
    epochs: int = 150,
    positions_per_seq: int = 8,
    lr: float = 0.001,
):
    """Fit the confidence predictor against thresholded oracle labels.

    Only `conf` is updated; the base model and prior predictor are read-only
    throughout. Returns per-epoch (train BCE, validation BCE) rows.
    """
    train_feats, train_dens = build_confidence_set(
        ar_params, prior_params, train_sequences, rng, positions_per_seq
    )
    val_feats, val_dens = build_confidence_set(
        ar_params, prior_params, val_sequences, rng, positions_per_seq
    )
    cal.update(train_dens)
    tau = cal.train_threshold()
    train_labels = label_chunk(train_dens, tau)
    val_labels = label_chunk(val_dens, tau)

    params = conf.parameters()
    adam = AdamState(lr=lr)
    log = []
    for epoch in range(1, epochs + 1):
        loss, grads = _conf_bce_grads(conf, train_feats, train_labels)
        adam_step(adam, params, grads)
        val_bce = binary_cross_entropy(confidence_batch_scores(conf, val_feats), val_labels)
        log.append((epoch, loss, val_bce))
    return log
