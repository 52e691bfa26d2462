"""Pure-numpy LSTM layer kernels, the fallback when the compiled extension
is unavailable.

Packed (.., 4H) matrices order their gate blocks f, i, o, c.
"""

from __future__ import annotations

import numpy as np


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_layer_forward(x, w, u, b):
    """Run one LSTM layer over a (T, D) sequence from zero initial state.

    w is (D, 4H), u is (H, 4H), b is (1, 4H).  Returns the hidden sequence
    (T, H) and the cache consumed by :func:`lstm_layer_backward`.
    """
    steps = x.shape[0]
    hidden = u.shape[0]
    pre = x @ w + b
    f = np.empty((steps, hidden))
    i = np.empty((steps, hidden))
    o = np.empty((steps, hidden))
    cbar = np.empty((steps, hidden))
    c = np.empty((steps, hidden))
    tc = np.empty((steps, hidden))
    h = np.empty((steps, hidden))
    h_prev = np.zeros(hidden)
    c_prev = np.zeros(hidden)
    for t in range(steps):
        a = pre[t] + h_prev @ u
        gates = _sigmoid(a[: 3 * hidden])
        f[t] = gates[:hidden]
        i[t] = gates[hidden : 2 * hidden]
        o[t] = gates[2 * hidden :]
        cbar[t] = np.tanh(a[3 * hidden :])
        c[t] = f[t] * c_prev + i[t] * cbar[t]
        tc[t] = np.tanh(c[t])
        h[t] = o[t] * tc[t]
        h_prev = h[t]
        c_prev = c[t]
    return h, (x, w, u, f, i, o, cbar, c, tc, h)


def lstm_layer_backward(cache, gh):
    """Backpropagate d(loss)/d(h_seq) through one LSTM layer.

    Returns (dx (T, D), dw (D, 4H), du (H, 4H), db (1, 4H)).
    """
    x, w, u, f, i, o, cbar, c, tc, h = cache
    steps, hidden = h.shape
    da = np.empty((steps, 4 * hidden))
    dh_rec = np.zeros(hidden)
    dc_rec = np.zeros(hidden)
    for t in range(steps - 1, -1, -1):
        dh = gh[t] + dh_rec
        do = dh * tc[t]
        dc = dc_rec + dh * o[t] * (1.0 - tc[t] * tc[t])
        c_prev = c[t - 1] if t > 0 else 0.0
        da[t, :hidden] = dc * c_prev * f[t] * (1.0 - f[t])
        da[t, hidden : 2 * hidden] = dc * cbar[t] * i[t] * (1.0 - i[t])
        da[t, 2 * hidden : 3 * hidden] = do * o[t] * (1.0 - o[t])
        da[t, 3 * hidden :] = dc * i[t] * (1.0 - cbar[t] * cbar[t])
        dc_rec = dc * f[t]
        dh_rec = da[t] @ u.T
    dx = da @ w.T
    dw = x.T @ da
    h_prev = np.vstack([np.zeros((1, hidden)), h[:-1]])
    du = h_prev.T @ da
    db = da.sum(axis=0, keepdims=True)
    return dx, dw, du, db
