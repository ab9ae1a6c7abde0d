"""Batched linear-chain CRF: log-partition, NLL with gradients, Viterbi.

Emissions are ``[B, L, T]``; ``mask`` is a ``[B, L]`` prefix mask.  A tag
sequence ``y`` of length ``n`` scores

    start[y_0] + sum_i P[i, y_i] + sum_i A[y_i, y_{i+1}] + end[y_{n-1}].
"""

from __future__ import annotations

import numpy as np


class NumericalError(FloatingPointError):
    def __init__(self, name: str, message: str = "non-finite values"):
        super().__init__(f"{name}: {message}")
        self.tensor = name


def check_finite(name: str, x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericalError(name)


def logsumexp(x: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def _prepare(emissions, mask):
    emissions = np.asarray(emissions, dtype=np.float64)
    if emissions.ndim == 2:
        emissions = emissions[None]
    B, L, _ = emissions.shape
    if mask is None:
        mask = np.ones((B, L), dtype=bool)
    mask = np.asarray(mask, dtype=bool).reshape(B, L)
    lengths = mask.sum(axis=1)
    if np.any(lengths < 1):
        raise ValueError("every sentence needs at least one unmasked position")
    if np.any(mask != (np.arange(L)[None, :] < lengths[:, None])):
        raise ValueError("mask must be a prefix mask")
    check_finite("emissions", emissions)
    return emissions, mask, lengths


def _forward_alphas(P, A, start, mask):
    B, L, T = P.shape
    alphas = np.empty((B, L, T))
    alpha = start[None, :] + P[:, 0]
    alphas[:, 0] = alpha
    for t in range(1, L):
        nxt = logsumexp(alpha[:, :, None] + A[None], axis=1) + P[:, t]
        alpha = np.where(mask[:, t, None], nxt, alpha)
        alphas[:, t] = alpha
    return alphas


def _backward_betas(P, A, end, mask):
    B, L, T = P.shape
    betas = np.empty((B, L, T))
    beta = np.broadcast_to(end, (B, T)).copy()
    betas[:, L - 1] = beta
    for t in range(L - 2, -1, -1):
        nxt = logsumexp(A[None] + (P[:, t + 1] + beta)[:, None, :], axis=2)
        beta = np.where(mask[:, t + 1, None], nxt, beta)
        betas[:, t] = beta
    return betas


def crf_log_partition(emissions, transitions, start, end, mask=None) -> np.ndarray:
    """Per-sentence log of the sum of exp(score) over all tag sequences."""
    P, mask, _ = _prepare(emissions, mask)
    alphas = _forward_alphas(P, transitions, start, mask)
    log_z = logsumexp(alphas[:, -1] + end[None, :], axis=1)
    check_finite("log_partition", log_z)
    return log_z


def sequence_score(emissions, transitions, start, end, tags, mask=None) -> np.ndarray:
    P, mask, lengths = _prepare(emissions, mask)
    tags = np.asarray(tags).reshape(mask.shape)
    B, L, _ = P.shape
    rows = np.arange(B)
    score = start[tags[:, 0]] + P[rows, 0, tags[:, 0]]
    for t in range(1, L):
        step = transitions[tags[:, t - 1], tags[:, t]] + P[rows, t, tags[:, t]]
        score = score + np.where(mask[:, t], step, 0.0)
    return score + end[tags[rows, lengths - 1]]


def crf_nll(emissions, transitions, start, end, tags, mask=None) -> float:
    """Mean over sentences of log Z - score(gold)."""
    log_z = crf_log_partition(emissions, transitions, start, end, mask)
    return float(np.mean(log_z - sequence_score(emissions, transitions, start, end, tags, mask)))


def crf_nll_grad(emissions, transitions, start, end, tags, mask=None):
    """Mean NLL and its gradients via forward-backward marginals.

    Returns ``(loss, d_emissions, d_transitions, d_start, d_end)``.
    """
    P, mask, lengths = _prepare(emissions, mask)
    tags = np.asarray(tags).reshape(mask.shape)
    B, L, T = P.shape
    rows = np.arange(B)
    alphas = _forward_alphas(P, transitions, start, mask)
    betas = _backward_betas(P, transitions, end, mask)
    log_z = logsumexp(alphas[:, -1] + end[None, :], axis=1)
    check_finite("log_partition", log_z)
    gold = sequence_score(P, transitions, start, end, tags, mask)
    loss = float(np.mean(log_z - gold))

    fmask = mask.astype(np.float64)
    unary = np.exp(alphas + betas - log_z[:, None, None]) * fmask[:, :, None]
    onehot = np.zeros((B, L, T))
    onehot[rows[:, None], np.arange(L)[None, :], tags] = 1.0
    onehot *= fmask[:, :, None]
    d_emissions = (unary - onehot) / B

    d_transitions = np.zeros((T, T))
    for t in range(L - 1):
        pair = alphas[:, t, :, None] + transitions[None] + (P[:, t + 1] + betas[:, t + 1])[:, None, :]
        pair = np.exp(pair - log_z[:, None, None]) * fmask[:, t + 1, None, None]
        d_transitions += pair.sum(axis=0)
        np.add.at(d_transitions, (tags[:, t], tags[:, t + 1]), -fmask[:, t + 1])
    d_transitions /= B

    first = tags[:, 0]
    last = tags[rows, lengths - 1]
    d_start = unary[:, 0].sum(axis=0)
    np.add.at(d_start, first, -1.0)
    d_end = np.exp(alphas[rows, lengths - 1] + end[None, :] - log_z[:, None]).sum(axis=0)
    np.add.at(d_end, last, -1.0)
    return loss, d_emissions, d_transitions, d_start / B, d_end / B


def viterbi_decode(emissions, transitions, start, end, mask=None):
    """Best tag sequence per sentence and its score.

    Ties go to the smaller tag index, resolved from the last position backwards.
    """
    P, mask, lengths = _prepare(emissions, mask)
    B, L, T = P.shape
    delta = start[None, :] + P[:, 0]
    backptr = np.zeros((B, L, T), dtype=np.int64)
    for t in range(1, L):
        cand = delta[:, :, None] + transitions[None]
        backptr[:, t] = np.argmax(cand, axis=1)
        nxt = np.max(cand, axis=1) + P[:, t]
        delta = np.where(mask[:, t, None], nxt, delta)
    final = delta + end[None, :]
    best_last = np.argmax(final, axis=1)
    scores = final[np.arange(B), best_last]
    paths = []
    for b in range(B):
        path = [int(best_last[b])]
        for t in range(lengths[b] - 1, 0, -1):
            path.append(int(backptr[b, t, path[-1]]))
        paths.append(path[::-1])
    return paths, scores
