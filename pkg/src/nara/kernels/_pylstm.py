"""Pure-NumPy LSTM sequence kernels.

Steps are evaluated one at a time (no cross-step batching) so that results
are bit-identical whether a sequence is processed in one call or split into
single-step calls.
"""

import numpy as np


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_step(wx, wh, b, x, h, c):
    H = wh.shape[1]
    z = wx @ x + wh @ h + b
    i = _sigmoid(z[0:H])
    f = _sigmoid(z[H : 2 * H])
    g = np.tanh(z[2 * H : 3 * H])
    o = _sigmoid(z[3 * H : 4 * H])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new


def lstm_forward(wx, wh, b, xs, h0, c0):
    T = xs.shape[0]
    H = wh.shape[1]
    gi = np.empty((T, H))
    gf = np.empty((T, H))
    gg = np.empty((T, H))
    go = np.empty((T, H))
    cs = np.empty((T, H))
    hs = np.empty((T, H))
    h = h0
    c = c0
    for t in range(T):
        z = wx @ xs[t] + wh @ h + b
        i = _sigmoid(z[0:H])
        f = _sigmoid(z[H : 2 * H])
        g = np.tanh(z[2 * H : 3 * H])
        o = _sigmoid(z[3 * H : 4 * H])
        c = f * c + i * g
        h = o * np.tanh(c)
        gi[t] = i
        gf[t] = f
        gg[t] = g
        go[t] = o
        cs[t] = c
        hs[t] = h
    return hs, gi, gf, gg, go, cs


def lstm_backward(wx, wh, xs, h0, c0, gi, gf, gg, go, cs, hs, dh_out, dc_out):
    T, H = hs.shape
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * H)
    dx = np.zeros_like(xs)
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    dz = np.empty(4 * H)
    for t in range(T - 1, -1, -1):
        i = gi[t]
        f = gf[t]
        g = gg[t]
        o = go[t]
        c = cs[t]
        c_prev = cs[t - 1] if t > 0 else c0
        h_prev = hs[t - 1] if t > 0 else h0
        tc = np.tanh(c)
        dh = dh_out[t] + dh_next
        dc = dc_out[t] + dc_next + dh * o * (1.0 - tc * tc)
        do = dh * tc
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dz[0:H] = di * i * (1.0 - i)
        dz[H : 2 * H] = df * f * (1.0 - f)
        dz[2 * H : 3 * H] = dg * (1.0 - g * g)
        dz[3 * H : 4 * H] = do * o * (1.0 - o)
        dwx += np.outer(dz, xs[t])
        dwh += np.outer(dz, h_prev)
        db += dz
        dx[t] = wx.T @ dz
        dh_next = wh.T @ dz
        dc_next = dc * f
    return dwx, dwh, db, dx, dh_next, dc_next
