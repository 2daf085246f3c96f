"""Forward scoring and Viterbi-family decoders.

Every decoder evaluates emissions only through an :class:`EmissionScorer`
(or, for the 3D decoder, a joint scorer) and never reads uncertainty fields
of the evidence itself.
"""

from __future__ import annotations

from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import _core
from .gauss import lse_axis
from .hmm import (
    PARTIAL_PATH,
    PAST,
    PREV_STATE,
    DecodeContext,
    DecodeResult,
    EmissionScorer,
    FrameEvidence,
    Hmm,
    as_evidence,
    require_compatible,
)

MAX_PRODUCT_STATES = 100_000


class NumericError(ArithmeticError):
    """A NaN appeared in a score computation."""


class StateSpaceTooLarge(ValueError):
    pass


def _check_scores(scores: np.ndarray, what: str) -> np.ndarray:
    if np.isnan(scores).any():
        idx = tuple(int(i) for i in np.argwhere(np.isnan(scores))[0])
        raise NumericError(f"NaN {what} at index {idx}")
    return scores


def _prepare(evidence) -> list[FrameEvidence]:
    frames = as_evidence(evidence)
    if len(frames) == 0:
        raise ValueError("cannot decode an empty sequence")
    return frames


def emission_matrix(scorer: EmissionScorer, evidence, context_for=None) -> np.ndarray:
    """(N, S) matrix of emission log scores for a context-free scorer."""
    frames = _prepare(evidence)
    rows = []
    for n, frame in enumerate(frames):
        ctx = context_for(n) if context_for else DecodeContext(sequence=frames)
        rows.append(scorer.frame_scores(n, frame, ctx))
    return _check_scores(np.array(rows, dtype=float), "emission score")


def _path_result(hmm: Hmm, path: np.ndarray, scores: np.ndarray, total: float, kind: str,
                 diagnostics=None) -> DecodeResult:
    frame_scores = scores[np.arange(len(path)), path]
    return DecodeResult(np.asarray(path, dtype=int), float(total), frame_scores, kind,
                        list(diagnostics or []))


def forward_log_score(hmm: Hmm, scorer: EmissionScorer, evidence) -> float:
    """Total log likelihood ``log sum_q p(y_{1:N}, q_{1:N})`` by the forward recursion."""
    require_compatible(scorer, frozenset(), "forward_log_score")
    scores = emission_matrix(scorer, evidence)
    alpha = _core.forward_matrix(hmm.log_initial(), hmm.log_transitions(), scores)
    return float(lse_axis(alpha[-1]))


def state_posteriors(hmm: Hmm, scorer: EmissionScorer, evidence) -> tuple[np.ndarray, float]:
    """Per-frame state posteriors (N, S) and the total log likelihood."""
    require_compatible(scorer, frozenset(), "state_posteriors")
    scores = emission_matrix(scorer, evidence)
    alpha = _core.forward_matrix(hmm.log_initial(), hmm.log_transitions(), scores)
    beta = _core.backward_matrix(hmm.log_transitions(), scores)
    total = float(lse_axis(alpha[-1]))
    if total == -np.inf:
        raise NumericError("sequence has zero likelihood under the model")
    return np.exp(alpha + beta - total), total


def viterbi(hmm: Hmm, scorer: EmissionScorer, evidence) -> DecodeResult:
    """Best state sequence; equal scores resolve to the lower predecessor index.

    Scorers that read the best partial path (``partial_path``) are decoded
    online: the previous states handed to the scorer for candidate state q
    at frame n are the backtrace of q's best predecessor.
    """
    require_compatible(scorer, frozenset({PARTIAL_PATH}), "viterbi")
    if PARTIAL_PATH in scorer.consumes:
        return _viterbi_partial_path(hmm, scorer, _prepare(evidence))
    scores = emission_matrix(scorer, evidence)
    path, total = _core.viterbi(hmm.log_initial(), hmm.log_transitions(), scores)
    return _path_result(hmm, path, scores, total, "viterbi")


def _viterbi_partial_path(hmm: Hmm, scorer: EmissionScorer,
                          frames: list[FrameEvidence]) -> DecodeResult:
    log_a = hmm.log_transitions()
    n_states = hmm.num_states
    backptr: list[np.ndarray] = [np.zeros(n_states, dtype=int)]
    scores = np.empty((len(frames), n_states))

    ctx = DecodeContext(sequence=frames, history=lambda q, depth: [])
    scores[0] = scorer.frame_scores(0, frames[0], ctx)
    delta = hmm.log_initial() + scores[0]
    for n in range(1, len(frames)):
        cand = delta[:, None] + log_a
        best = np.argmax(cand, axis=0)

        def history(q, depth, _best=best, _n=n):
            out = []
            j, m = int(_best[q]), _n - 1
            while len(out) < depth:
                out.append(j)
                if m == 0:
                    break
                j, m = int(backptr[m][j]), m - 1
            return out

        ctx = DecodeContext(sequence=frames, history=history)
        scores[n] = scorer.frame_scores(n, frames[n], ctx)
        backptr.append(best)
        delta = cand[best, np.arange(n_states)] + scores[n]
    _check_scores(scores, "emission score")
    path = np.zeros(len(frames), dtype=int)
    path[-1] = int(np.argmax(delta))
    for n in range(len(frames) - 1, 0, -1):
        path[n - 1] = backptr[n][path[n]]
    return _path_result(hmm, path, scores, delta[path[-1]], "viterbi.partial_path")


class JointDecodeResult(NamedTuple):
    speech_path: np.ndarray
    noise_path: np.ndarray
    log_score: float


def product_log_params(speech: Hmm, noise: Hmm) -> tuple[np.ndarray, np.ndarray]:
    """Log initial/transition parameters of the explicit product-state chain.

    Product state ``q * S_noise + q_noise``.
    """
    li = (speech.log_initial()[:, None] + noise.log_initial()[None, :]).ravel()
    s, r = speech.num_states, noise.num_states
    lt = (speech.log_transitions()[:, None, :, None] + noise.log_transitions()[None, :, None, :])
    return li, lt.reshape(s * r, s * r)


def joint_emission_tensor(speech: Hmm, noise: Hmm, joint_scorer, evidence) -> np.ndarray:
    frames = _prepare(evidence)
    s, r = speech.num_states, noise.num_states
    if hasattr(joint_scorer, "frame_matrix"):
        rows = [joint_scorer.frame_matrix(n, f) for n, f in enumerate(frames)]
    else:
        rows = [[[joint_scorer(n, q, qn, f) for qn in range(r)] for q in range(s)]
                for n, f in enumerate(frames)]
    return _check_scores(np.array(rows, dtype=float), "joint emission score")


def viterbi_3d(speech: Hmm, noise: Hmm, joint_scorer: Callable, evidence) -> JointDecodeResult:
    """Joint best path over speech and noise state sequences.

    The maximisation over the product predecessor ``(j, j_noise)`` is done in
    two separable stages (noise first, then speech); ties resolve to the
    lexicographically lowest product index, as on the explicit product chain.
    """
    s, r = speech.num_states, noise.num_states
    if s * r > MAX_PRODUCT_STATES:
        raise StateSpaceTooLarge(f"product state space {s}x{r} exceeds {MAX_PRODUCT_STATES}")
    emit = joint_emission_tensor(speech, noise, joint_scorer, evidence)
    la, lb = speech.log_transitions(), noise.log_transitions()
    n_frames = emit.shape[0]
    delta = speech.log_initial()[:, None] + noise.log_initial()[None, :] + emit[0]
    bp_speech = np.zeros((n_frames, s, r), dtype=int)
    bp_noise = np.zeros((n_frames, s, r), dtype=int)
    cols = np.arange(r)
    for n in range(1, n_frames):
        inner = delta[:, :, None] + lb[None, :, :]  # [j, j_noise, q_noise]
        inner_arg = np.argmax(inner, axis=1)  # [j, q_noise]
        inner_val = np.take_along_axis(inner, inner_arg[:, None, :], axis=1)[:, 0, :]
        outer = inner_val[:, None, :] + la[:, :, None]  # [j, q, q_noise]
        best_j = np.argmax(outer, axis=0)  # [q, q_noise]
        val = np.take_along_axis(outer, best_j[None], axis=0)[0]
        bp_speech[n] = best_j
        bp_noise[n] = inner_arg[best_j, cols[None, :]]
        delta = val + emit[n]
    flat = int(np.argmax(delta))
    q, qn = divmod(flat, r)
    speech_path = np.zeros(n_frames, dtype=int)
    noise_path = np.zeros(n_frames, dtype=int)
    speech_path[-1], noise_path[-1] = q, qn
    for n in range(n_frames - 1, 0, -1):
        q, qn = bp_speech[n, q, qn], bp_noise[n, q, qn]
        speech_path[n - 1], noise_path[n - 1] = q, qn
    return JointDecodeResult(speech_path, noise_path, float(delta.ravel()[flat]))


def conditional_context(frames: Sequence[FrameEvidence], n: int, shifts: Sequence[int]) -> DecodeContext:
    """Context carrying ``y_{n - shift}`` for each shift (``None`` before the first frame)."""
    past = tuple(frames[n - p].observed if n - p >= 0 else None for p in shifts)
    return DecodeContext(sequence=frames, past=past)


def decode_conditional(hmm: Hmm, scorer: EmissionScorer, evidence,
                       shifts: Sequence[int] = (1,)) -> DecodeResult:
    """Viterbi for emissions conditioned on past observations at fixed shifts."""
    shifts = tuple(int(p) for p in shifts)
    if any(p < 1 for p in shifts):
        raise ValueError(f"conditioning shifts must be positive, got {shifts}")
    require_compatible(scorer, frozenset({PAST}), "decode_conditional")
    frames = _prepare(evidence)
    scores = emission_matrix(scorer, frames, lambda n: conditional_context(frames, n, shifts))
    diagnostics = []
    for n, frame in enumerate(frames):
        msg = scorer.diagnose(n, frame, conditional_context(frames, n, shifts))
        if msg:
            diagnostics.append({"frame": n, "message": msg})
    path, total = _core.viterbi(hmm.log_initial(), hmm.log_transitions(), scores)
    return _path_result(hmm, path, scores, total, "conditional", diagnostics)


def decode_combined_order(hmm: Hmm, scorer: EmissionScorer, evidence) -> DecodeResult:
    """Viterbi whose edge weight includes ``p(y_n | q_n, q_{n-1})``.

    The first frame is scored with ``q_prev=None``.
    """
    require_compatible(scorer, frozenset({PREV_STATE}), "decode_combined_order")
    frames = _prepare(evidence)
    s = hmm.num_states
    ctx = DecodeContext(sequence=frames)
    first = np.array([scorer.score(0, q, frames[0], ctx, q_prev=None) for q in range(s)])
    pair = np.zeros((len(frames), s, s))
    for n in range(1, len(frames)):
        for j in range(s):
            for q in range(s):
                pair[n, j, q] = scorer.score(n, q, frames[n], ctx, q_prev=j)
    _check_scores(first, "emission score")
    _check_scores(pair, "pair emission score")
    path, total = _core.viterbi_pair(hmm.log_initial(), hmm.log_transitions(), first, pair)
    frame_scores = np.empty(len(frames))
    frame_scores[0] = first[path[0]]
    for n in range(1, len(frames)):
        frame_scores[n] = pair[n, path[n - 1], path[n]]
    return DecodeResult(path.astype(int), float(total), frame_scores, "combined_order")
