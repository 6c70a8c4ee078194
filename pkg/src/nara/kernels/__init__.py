"""LSTM sequence kernels with a compiled core and a pure-NumPy fallback.

The compiled extension is used when it imported cleanly; set
``NARA_PURE_PYTHON=1`` to force the fallback. Both backends evaluate each
time step independently with identical per-step arithmetic, so splitting a
sequence into single-step calls reproduces the full-sequence results
bit for bit (the generation engine relies on this).

Kernel API (all arrays float64, C-contiguous):

``lstm_forward(wx, wh, b, xs, h0, c0) -> (hs, gi, gf, gg, go, cs)``
    wx [4H,D], wh [4H,H], b [4H], xs [T,D], h0/c0 [H].
    Gate row-block order is input, forget, cell, output.

``lstm_backward(wx, wh, xs, h0, i, f, g, o, cs, hs, dh_out, dc_out)``
    -> ``(dwx, dwh, db, dx, dh0, dc0)``
    dh_out/dc_out [T,H] carry the loss gradients wrt each step's emitted
    hidden/cell state (state handoff gradients go into row T-1).

``lstm_step(wx, wh, b, x, h, c) -> (h', c')``
    One recurrence step, identical arithmetic to one lstm_forward iteration.
"""

import os

if os.environ.get("NARA_PURE_PYTHON", "") not in ("", "0"):
    from . import _pylstm as _impl

    BACKEND = "python"
else:
    try:
        from . import _lstm as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _pylstm as _impl

        BACKEND = "python"

lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward
lstm_step = _impl.lstm_step


def backend() -> str:
    """Name of the active kernel backend: 'compiled' or 'python'."""
    return BACKEND
