"""Pure-numpy dynamic-programming recursions (fallback for the compiled core)."""

import numpy as np

from ..gauss import lse_axis


def viterbi(log_init, log_trans, log_emit):
    n_frames, _ = log_emit.shape
    delta = log_init + log_emit[0]
    bp = np.zeros(log_emit.shape, dtype=np.intp)
    for n in range(1, n_frames):
        cand = delta[:, None] + log_trans
        best = np.argmax(cand, axis=0)
        bp[n] = best
        delta = cand[best, np.arange(cand.shape[1])] + log_emit[n]
    path = np.zeros(n_frames, dtype=np.intp)
    path[-1] = int(np.argmax(delta))
    for n in range(n_frames - 1, 0, -1):
        path[n - 1] = bp[n, path[n]]
    return path, float(delta[path[-1]])


def viterbi_pair(log_init, log_trans, log_emit_first, log_emit_pair):
    n_frames = log_emit_pair.shape[0]
    delta = log_init + log_emit_first
    bp = np.zeros((n_frames, delta.size), dtype=np.intp)
    for n in range(1, n_frames):
        cand = delta[:, None] + log_trans + log_emit_pair[n]
        best = np.argmax(cand, axis=0)
        bp[n] = best
        delta = cand[best, np.arange(cand.shape[1])]
    path = np.zeros(n_frames, dtype=np.intp)
    path[-1] = int(np.argmax(delta))
    for n in range(n_frames - 1, 0, -1):
        path[n - 1] = bp[n, path[n]]
    return path, float(delta[path[-1]])


def forward_matrix(log_init, log_trans, log_emit):
    alpha = np.empty(log_emit.shape)
    alpha[0] = log_init + log_emit[0]
    for n in range(1, log_emit.shape[0]):
        alpha[n] = lse_axis(alpha[n - 1][:, None] + log_trans, axis=0) + log_emit[n]
    return alpha


def backward_matrix(log_trans, log_emit):
    beta = np.zeros(log_emit.shape)
    for n in range(log_emit.shape[0] - 2, -1, -1):
        beta[n] = lse_axis(log_trans + (log_emit[n + 1] + beta[n + 1])[None, :], axis=1)
    return beta
