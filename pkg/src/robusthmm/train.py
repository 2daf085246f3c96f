"""Maximum-likelihood training of clean models from state-labelled data."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .gauss import Gaussian, Gmm, gaussian_logpdf_batch, lse_axis
from .hmm import Hmm

EM_ITERATIONS = 10
EM_TOLERANCE = 1e-6


def _component_logliks(data: np.ndarray, gmm: Gmm) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logw = np.log(gmm.weights)
    return np.stack([logw[k] + gaussian_logpdf_batch(data, c) for k, c in enumerate(gmm.components)], axis=1)


def gmm_loglik(data, gmm: Gmm) -> float:
    return float(lse_axis(_component_logliks(np.asarray(data, dtype=float), gmm), axis=1).sum())


def em_gmm(data, init: Gmm, iterations: int = EM_ITERATIONS,
           tolerance: float = EM_TOLERANCE) -> tuple[Gmm, list[float]]:
    """Diagonal-covariance EM starting from ``init``.

    Returns the final mixture and the data log likelihood before each
    update and after the last one.  Components that receive no
    responsibility keep their previous parameters.
    """
    x = np.atleast_2d(np.asarray(data, dtype=float))
    gmm = init
    history = [gmm_loglik(x, gmm)]
    for _ in range(iterations):
        ll = _component_logliks(x, gmm)
        resp = np.exp(ll - lse_axis(ll, axis=1)[:, None])
        occ = resp.sum(axis=0)
        comps, weights = [], occ / occ.sum()
        for k, old in enumerate(gmm.components):
            if occ[k] <= 0:
                comps.append(old)
                continue
            mean = resp[:, k] @ x / occ[k]
            var = resp[:, k] @ (x - mean) ** 2 / occ[k]
            comps.append(Gaussian(mean, var))
        weights = weights / weights.sum()
        gmm = Gmm(weights, tuple(comps))
        history.append(gmm_loglik(x, gmm))
        prev = history[-2]
        if abs(history[-1] - prev) <= tolerance * abs(prev):
            break
    return gmm, history


def train_ml(topology: Hmm, sequences: Sequence[tuple]) -> Hmm:
    """Viterbi-style training from fixed alignments.

    ``sequences`` holds ``(observations (N, D), states (N,))`` pairs.
    Initial and transition probabilities are relative alignment counts;
    each state's mixture is re-estimated by EM on its frames, starting
    from the topology's mixture.  States (or transition rows) that never
    occur keep the topology's parameters.
    """
    s = topology.num_states
    first = np.zeros(s)
    counts = np.zeros((s, s))
    frames: list[list[np.ndarray]] = [[] for _ in range(s)]
    for obs, states in sequences:
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        states = np.asarray(states, dtype=int)
        if len(obs) != len(states):
            raise ValueError("each observation sequence needs one state label per frame")
        if len(states) == 0:
            continue
        first[states[0]] += 1
        np.add.at(counts, (states[:-1], states[1:]), 1)
        for q in range(s):
            frames[q].append(obs[states == q])

    initial = first / first.sum() if first.sum() > 0 else topology.initial.copy()
    trans = topology.transitions.copy()
    rows = counts.sum(axis=1)
    trans[rows > 0] = counts[rows > 0] / rows[rows > 0, None]

    emissions = []
    for q in range(s):
        data = np.concatenate(frames[q]) if frames[q] else np.zeros((0, topology.dim))
        prior = topology.emissions[q]
        if len(data) == 0:
            emissions.append(prior)
        elif len(prior) == 1:
            emissions.append(Gmm.single(Gaussian(data.mean(axis=0), data.var(axis=0))))
        else:
            emissions.append(em_gmm(data, prior)[0])
    return Hmm(initial, trans, tuple(emissions), topology.model_id)
