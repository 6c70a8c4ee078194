"""Prior predictor: maps the trailing observation window to a chunk of future priors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numeric import DenseLayer


@dataclass
class PriorParams:
    """Single dense layer from an o-sample window to M prior values.

    The weight response is squashed to ±bound (in standardized units) around
    the learned offset: unbounded priors get flung into gate-saturated
    regions early in joint training and never recover. Zero weights still
    yield the bias vector exactly.
    """

    net: DenseLayer  # [M, o]
    bound: float = 3.0

    @classmethod
    def init(cls, window: int, horizon: int, rng: np.random.Generator) -> "PriorParams":
        return cls(net=DenseLayer.init(window, horizon, rng))

    @property
    def window(self) -> int:
        return self.net.n_in

    @property
    def horizon(self) -> int:
        return self.net.n_out

    def parameters(self) -> dict[str, np.ndarray]:
        return {"net.weight": self.net.weight, "net.bias": self.net.bias}

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(p) for name, p in self.parameters().items()}


@dataclass
class PriorChunk:
    """Predicted prior values for the chunk starting after `position`."""

    values: np.ndarray  # [M]
    position: int


def take_window(values, end: int, window: int) -> np.ndarray:
    """Last `window` samples of values[:end], left-padded with zeros when short."""
    values = np.asarray(values, dtype=np.float64)
    end = int(end)
    lo = max(0, end - window)
    chunk = values[lo:end]
    if chunk.shape[0] < window:
        chunk = np.concatenate([np.zeros(window - chunk.shape[0]), chunk])
    return chunk


def predict_priors(params: PriorParams, window_values) -> PriorChunk:
    """Deterministic prior chunk for one window; the window alone decides the output."""
    w = np.asarray(window_values, dtype=np.float64)
    if w.shape != (params.window,):
        raise ValueError(f"window length {w.shape} does not match predictor input {params.window}")
    raw = params.net.weight @ w
    m = params.bound * np.tanh(raw / params.bound) + params.net.bias
    return PriorChunk(values=m, position=0)


def prior_backward(params: PriorParams, window_values, m_values, dpriors):
    """Gradients of the squashed prediction wrt the layer parameters."""
    squash_grad = 1.0 - ((m_values - params.net.bias) / params.bound) ** 2
    dz = dpriors * squash_grad
    return np.outer(dz, window_values), dpriors.copy()


def prior_windows(sequences, window: int, horizon: int):
    """(window, true future) evaluation pairs at non-overlapping positions."""
    pairs = []
    for seq in sequences:
        seq = np.asarray(seq, dtype=np.float64)
        n = seq.shape[0]
        for v in range(window, n - horizon + 1, horizon):
            pairs.append((seq[v - window : v], seq[v : v + horizon]))
    return pairs


def prior_l1(params: PriorParams, sequences) -> float:
    """Mean absolute error between predicted priors and true futures."""
    pairs = prior_windows(sequences, params.window, params.horizon)
    if not pairs:
        raise ValueError("no evaluation windows in dataset")
    total = 0.0
    count = 0
    for win, truth in pairs:
        m = predict_priors(params, win).values
        total += float(np.sum(np.abs(m - truth)))
        count += truth.shape[0]
    return total / count
