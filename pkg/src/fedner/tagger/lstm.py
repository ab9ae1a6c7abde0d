"""Masked LSTM layer with backpropagation through time.

Inputs are time-major ``[S, N, D]`` with a ``[S, N]`` prefix mask.  Gate
layout along the kernel's output axis is ``[input, forget, output, cell]``.
On masked steps the state is carried over unchanged, so ``hs[-1]`` is the
final state of each sequence.
"""

from __future__ import annotations

import numpy as np


def sigmoid(x):
    return 0.5 * np.tanh(0.5 * x) + 0.5


def lstm_forward(x, mask, kernel, bias):
    S, N, D = x.shape
    H = kernel.shape[1] // 4
    h = np.zeros((N, H))
    c = np.zeros((N, H))
    hs = np.empty((S, N, H))
    steps = []
    for t in range(S):
        z = np.concatenate([x[t], h], axis=1)
        gates = z @ kernel + bias
        i = sigmoid(gates[:, :H])
        f = sigmoid(gates[:, H : 2 * H])
        o = sigmoid(gates[:, 2 * H : 3 * H])
        g = np.tanh(gates[:, 3 * H :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        m = mask[t][:, None]
        steps.append((z, i, f, o, g, c, tc))
        h = np.where(m, o * tc, h)
        c = np.where(m, c_new, c)
        hs[t] = h
    return hs, (mask, kernel, steps, D)


def lstm_backward(d_hs, cache):
    """Gradients for ``(x, kernel, bias)`` given d(loss)/d(hs)."""
    mask, kernel, steps, D = cache
    S, N, H = d_hs.shape
    d_x = np.empty((S, N, D))
    d_kernel = np.zeros_like(kernel)
    d_bias = np.zeros(kernel.shape[1])
    dh_next = np.zeros((N, H))
    dc_next = np.zeros((N, H))
    for t in range(S - 1, -1, -1):
        z, i, f, o, g, c_prev, tc = steps[t]
        m = mask[t][:, None]
        dh = d_hs[t] + dh_next
        dh_new = np.where(m, dh, 0.0)
        dc_new = np.where(m, dc_next, 0.0) + dh_new * o * (1.0 - tc * tc)
        d_gates = np.concatenate(
            [
                dc_new * g * i * (1.0 - i),
                dc_new * c_prev * f * (1.0 - f),
                dh_new * tc * o * (1.0 - o),
                dc_new * i * (1.0 - g * g),
            ],
            axis=1,
        )
        d_kernel += z.T @ d_gates
        d_bias += d_gates.sum(axis=0)
        dz = d_gates @ kernel.T
        d_x[t] = dz[:, :D]
        dh_next = dz[:, D:] + np.where(m, 0.0, dh)
        dc_next = dc_new * f + np.where(m, 0.0, dc_next)
    return d_x, d_kernel, d_bias


def reverse_index(mask):
    """Time indices that reverse each sequence's valid prefix and fix padding.

    Applying the index twice is the identity.
    """
    S, N = mask.shape
    lengths = mask.sum(axis=0)
    t = np.arange(S)[:, None]
    return np.where(t < lengths[None, :], lengths[None, :] - 1 - t, t)


def take_time(x, index):
    return x[index, np.arange(x.shape[1])[None, :]]
