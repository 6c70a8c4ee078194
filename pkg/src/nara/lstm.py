"""LSTM cell with fused gate parameters and analytic sequence gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels

GATE_ORDER = ("input", "forget", "cell", "output")


@dataclass
class LstmCell:
    """Fused-gate LSTM parameters.

    ``wx`` stacks the four input matrices row-block-wise in ``GATE_ORDER``;
    ``wh`` stacks the recurrent matrices the same way; ``b`` the biases.
    """

    wx: np.ndarray  # [4H, D]
    wh: np.ndarray  # [4H, H]
    b: np.ndarray  # [4H]

    def __post_init__(self):
        h = self.hidden_size
        if self.wx.shape[0] != 4 * h or self.b.shape != (4 * h,):
            raise ValueError("inconsistent LSTM gate shapes")

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng: np.random.Generator) -> "LstmCell":
        k = 1.0 / math.sqrt(hidden_size)
        cell = cls(
            wx=rng.uniform(-k, k, size=(4 * hidden_size, input_size)),
            wh=rng.uniform(-k, k, size=(4 * hidden_size, hidden_size)),
            b=rng.uniform(-k, k, size=4 * hidden_size),
        )
        # Forget gate opens at init; helps credit flow over long contexts.
        cell.b[hidden_size : 2 * hidden_size] = 1.0
        return cell

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "LstmCell":
        return cls(
            wx=np.zeros((4 * hidden_size, input_size)),
            wh=np.zeros((4 * hidden_size, hidden_size)),
            b=np.zeros(4 * hidden_size),
        )

    @property
    def hidden_size(self) -> int:
        return self.wh.shape[1]

    @property
    def input_size(self) -> int:
        return self.wx.shape[1]

    def gate(self, name: str):
        """(input matrix, recurrent matrix, bias) views for one gate."""
        idx = GATE_ORDER.index(name)
        h = self.hidden_size
        rows = slice(idx * h, (idx + 1) * h)
        return self.wx[rows], self.wh[rows], self.b[rows]

    def zero_state(self):
        h = self.hidden_size
        return np.zeros(h), np.zeros(h)


@dataclass
class LstmTape:
    """Forward activations recorded for one sequence, consumed by backward."""

    xs: np.ndarray
    h0: np.ndarray
    c0: np.ndarray
    gi: np.ndarray
    gf: np.ndarray
    gg: np.ndarray
    go: np.ndarray
    cs: np.ndarray
    hs: np.ndarray


def lstm_sequence(cell: LstmCell, xs: np.ndarray, h0: np.ndarray, c0: np.ndarray):
    """Run the recurrence over xs [T, D]; returns (hs [T, H], tape)."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != cell.input_size:
        raise ValueError(
            f"input shape {xs.shape} does not match cell input size {cell.input_size}"
        )
    hs, gi, gf, gg, go, cs = kernels.lstm_forward(
        cell.wx, cell.wh, cell.b, xs, np.asarray(h0, dtype=np.float64), np.asarray(c0, dtype=np.float64)
    )
    tape = LstmTape(xs=xs, h0=np.asarray(h0), c0=np.asarray(c0), gi=gi, gf=gf, gg=gg, go=go, cs=cs, hs=hs)
    return hs, tape


def lstm_step(cell: LstmCell, x: np.ndarray, h: np.ndarray, c: np.ndarray):
    """One recurrence step; returns (h', c'). Output vector is h'."""
    return kernels.lstm_step(
        cell.wx,
        cell.wh,
        cell.b,
        np.ascontiguousarray(x, dtype=np.float64),
        np.asarray(h, dtype=np.float64),
        np.asarray(c, dtype=np.float64),
    )


def lstm_sequence_backward(
    cell: LstmCell,
    tape: LstmTape,
    dh_out: np.ndarray,
    dc_out: np.ndarray | None = None,
):
    """Backward through a recorded sequence.

    dh_out [T, H] holds loss gradients wrt each step's hidden output; a
    gradient wrt the handed-off final state belongs in the last row (same
    for dc_out). Returns (dwx, dwh, db, dx, dh0, dc0).
    """
    if dc_out is None:
        dc_out = np.zeros_like(dh_out)
    return kernels.lstm_backward(
        cell.wx,
        cell.wh,
        tape.xs,
        tape.h0,
        tape.c0,
        tape.gi,
        tape.gf,
        tape.gg,
        tape.go,
        tape.cs,
        tape.hs,
        np.ascontiguousarray(dh_out, dtype=np.float64),
        np.ascontiguousarray(dc_out, dtype=np.float64),
    )
