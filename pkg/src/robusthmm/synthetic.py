"""Random synthetic models for experiments and tests."""

from __future__ import annotations

import numpy as np

from .gauss import Gaussian, Gmm
from .hmm import Hmm


def _normalise(p: np.ndarray) -> np.ndarray:
    p = p / p.sum(axis=-1, keepdims=True)
    # push rounding residue onto the largest entry so rows sum to 1 exactly enough
    if p.ndim == 1:
        p[np.argmax(p)] += 1.0 - p.sum()
    else:
        for row in p:
            row[np.argmax(row)] += 1.0 - row.sum()
    return p


def random_hmm(rng: np.random.Generator, num_states: int, dim: int, num_components: int = 1,
               mean_scale: float = 2.0, var_range=(0.3, 1.5), model_id: str = "hmm",
               offset=0.0) -> Hmm:
    """Fully connected HMM with random diagonal-covariance GMM emissions."""
    initial = _normalise(rng.uniform(0.2, 1.0, num_states))
    trans = _normalise(rng.uniform(0.1, 1.0, (num_states, num_states)))
    emissions = []
    for _ in range(num_states):
        comps = tuple(
            Gaussian(offset + rng.normal(0.0, mean_scale, dim), rng.uniform(*var_range, dim))
            for _ in range(num_components)
        )
        w = _normalise(rng.uniform(0.3, 1.0, num_components))
        emissions.append(Gmm(w, comps))
    return Hmm(initial, trans, tuple(emissions), model_id)


def left_to_right_hmm(means, variances, self_loop: float = 0.7, model_id: str = "hmm") -> Hmm:
    """Left-to-right HMM with one diagonal Gaussian per state."""
    means = np.atleast_2d(np.asarray(means, dtype=float))
    variances = np.atleast_2d(np.asarray(variances, dtype=float))
    s = means.shape[0]
    initial = np.zeros(s)
    initial[0] = 1.0
    trans = np.zeros((s, s))
    for q in range(s):
        if q + 1 < s:
            trans[q, q], trans[q, q + 1] = self_loop, 1.0 - self_loop
        else:
            trans[q, q] = 1.0
    ems = tuple(Gmm.single(Gaussian(m, v)) for m, v in zip(means, variances))
    return Hmm(initial, trans, ems, model_id)


def class_models(seed, num_classes: int, num_states: int, dim: int,
                 separation: float = 1.5, variance: float = 1.0, self_loop: float = 0.7) -> list[Hmm]:
    """Per-class left-to-right models with randomly placed state means.

    ``seed`` is an int or a ready ``numpy.random.Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    models = []
    for c in range(num_classes):
        means = rng.normal(0.0, separation, (num_states, dim))
        variances = np.full((num_states, dim), variance)
        models.append(left_to_right_hmm(means, variances, self_loop, model_id=f"class{c}"))
    return models
