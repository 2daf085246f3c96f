"""Model adaptation with affine transforms, MAP means and Bayesian MLLR."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..decode import state_posteriors
from ..gauss import CovarianceError, Gaussian, Gmm, _mvn_logpdf, lse_axis
from ..hmm import ComponentScorer, ConventionalScorer, Hmm
from ..obsmodels import RegressionAssignment
from ._common import map_components
from .uncertainty import _affine_moments


@dataclass(frozen=True, eq=False)
class AdaptedHmm:
    """An HMM with replaced emission parameters and a record of how it was made.

    ``hmm`` shares the base topology (initial and transition probabilities
    and mixture weights).
    """

    base: Hmm
    hmm: Hmm
    technique: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        b, a = self.base, self.hmm
        same = (np.array_equal(b.initial, a.initial) and np.array_equal(b.transitions, a.transitions)
                and all(np.array_equal(x.weights, y.weights) for x, y in zip(b.emissions, a.emissions)))
        if not same:
            raise ValueError("adaptation must preserve the HMM topology and mixture weights")

    def scorer(self) -> ConventionalScorer:
        return ConventionalScorer(self.hmm)


def adapted(base: Hmm, emissions, technique: str, **params) -> AdaptedHmm:
    return AdaptedHmm(base, base.with_emissions(emissions), technique, params)


def cmllr_transform(hmm: Hmm, assignment: RegressionAssignment) -> AdaptedHmm:
    """Mean ``A mu + b`` and covariance ``A C A^T`` per component."""
    assignment.validate_for(hmm)

    def fn(q, k, c):
        t = assignment.transform_for(q, k)
        if t.bias_cov is not None and np.any(np.asarray(t.bias_cov) != 0):
            raise ValueError("CMLLR takes a deterministic bias; use JUD for a random one")
        mean, cov = _affine_moments(c, t.matrix, t.bias_mean, None)
        return Gaussian(mean, cov)

    return adapted(hmm, map_components(hmm, fn), "cmllr")


def mllr_adapt_means(hmm: Hmm, assignment: RegressionAssignment) -> AdaptedHmm:
    """Mean ``A mu + b`` per component; covariances untouched."""
    assignment.validate_for(hmm)

    def fn(q, k, c):
        t = assignment.transform_for(q, k)
        mean, _ = _affine_moments(c, t.matrix, t.bias_mean, None)
        return Gaussian(mean, c.cov)

    return adapted(hmm, map_components(hmm, fn), "mllr")


# --- MAP -------------------------------------------------------------------


@dataclass(frozen=True)
class MapPrior:
    """Conjugate prior ``N(mu; prior_mean, C / tau)`` on every component mean.

    ``means[q][k]`` is the prior mean of component k of state q (defaults
    to the model's own means).  ``tau`` may be ``inf``.
    """

    tau: float
    means: Optional[Sequence] = None

    def __post_init__(self):
        if not self.tau >= 0:
            raise ValueError("MAP prior weight tau must be non-negative")

    def mean_for(self, hmm: Hmm, q: int, k: int) -> np.ndarray:
        if self.means is None:
            return hmm.emissions[q].components[k].mean
        return np.asarray(self.means[q][k], dtype=float)


def _component_posteriors(y: np.ndarray, gmm: Gmm) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logw = np.log(gmm.weights)
    ll = np.stack([logw[k] + _mvn_logpdf(y, c.mean, c.cov) for k, c in enumerate(gmm.components)], axis=1)
    return ll, np.exp(ll - lse_axis(ll, axis=1)[:, None])


def _map_objective(hmm: Hmm, prior: MapPrior, data) -> float:
    total = 0.0
    for obs, states in data:
        if states is None:
            _, ll = state_posteriors(hmm, ConventionalScorer(hmm), obs)
            total += ll
        else:
            total += float(hmm.log_initial()[states[0]]
                           + np.sum(hmm.log_transitions()[states[:-1], states[1:]]))
            for q in np.unique(states):
                ll, _ = _component_posteriors(obs[states == q], hmm.emissions[q])
                total += float(np.sum(lse_axis(ll, axis=1)))
    if 0 < prior.tau < math.inf:
        for q, gmm in enumerate(hmm.emissions):
            for k, c in enumerate(gmm.components):
                total += float(_mvn_logpdf(c.mean, prior.mean_for(hmm, q, k), c.cov / prior.tau))
    return total


def _occupancies(hmm: Hmm, data):
    """Per-component zeroth and first order statistics."""
    zero = [np.zeros(len(g)) for g in hmm.emissions]
    first = [np.zeros((len(g), hmm.dim)) for g in hmm.emissions]
    for obs, states in data:
        if states is None:
            gamma, _ = state_posteriors(hmm, ConventionalScorer(hmm), obs)
        else:
            gamma = np.zeros((len(obs), hmm.num_states))
            gamma[np.arange(len(obs)), states] = 1.0
        for q, gmm in enumerate(hmm.emissions):
            if not gamma[:, q].any():
                continue
            _, post = _component_posteriors(obs, gmm)
            occ = gamma[:, q, None] * post
            zero[q] += occ.sum(axis=0)
            first[q] += occ.T @ obs
    return zero, first


def map_adapt_means(hmm: Hmm, prior: MapPrior, data, iterations: int = 100,
                    tolerance: float = 1e-8) -> AdaptedHmm:
    """MAP estimate of the component means from adaptation data.

    ``data`` holds ``(observations, states)`` pairs; ``states=None`` lets EM
    infer the state occupancies.  Each iteration sets
    ``mu = (tau prior_mean + sum gamma y) / (tau + sum gamma)``; iteration
    stops once the objective ``log p(Y | mu) + log p(mu)`` changes by less
    than ``tolerance``.  The objective trace is kept in ``params["objective"]``.
    """
    data = [(np.atleast_2d(np.asarray(o, dtype=float)),
             None if s is None else np.asarray(s, dtype=int)) for o, s in data]
    tau = prior.tau
    current = hmm
    history = [_map_objective(current, prior, data)]
    for _ in range(iterations):
        zero, first = _occupancies(current, data)

        def fn(q, k, c):
            mu0 = prior.mean_for(hmm, q, k)
            if tau == math.inf:
                return Gaussian(mu0, c.cov)
            occ = zero[q][k]
            if tau + occ == 0:
                return c
            return Gaussian((tau * mu0 + first[q][k]) / (tau + occ), c.cov)

        current = current.with_emissions(map_components(current, fn))
        history.append(_map_objective(current, prior, data))
        if abs(history[-1] - history[-2]) < tolerance:
            break
    return adapted(hmm, current.emissions, "map", tau=tau, objective=history)


# --- Bayesian MLLR -----------------------------------------------------------


@dataclass(frozen=True)
class MllrPrior:
    """Independent Gaussian prior on the diagonal of ``A`` and on the bias ``c``.

    ``c_cov`` is a variance vector or a full matrix.
    """

    a_mean: np.ndarray
    a_var: np.ndarray
    c_mean: np.ndarray
    c_cov: np.ndarray

    def __post_init__(self):
        a_mean = np.asarray(self.a_mean, dtype=float)
        a_var = np.asarray(self.a_var, dtype=float)
        if a_mean.ndim != 1 or a_var.shape != a_mean.shape:
            raise ValueError("only a diagonal transform prior with independent entries is supported")
        c_mean = np.asarray(self.c_mean, dtype=float).reshape(-1)
        c_cov = np.asarray(self.c_cov, dtype=float)
        if c_mean.shape != a_mean.shape or c_cov.shape not in (a_mean.shape, a_mean.shape * 2):
            raise ValueError("bias prior does not match the transform dimension")
        if np.any(a_var < 0) or (c_cov.ndim == 1 and np.any(c_cov < 0)):
            raise CovarianceError("prior variances must be non-negative")
        for name, v in (("a_mean", a_mean), ("a_var", a_var), ("c_mean", c_mean), ("c_cov", c_cov)):
            object.__setattr__(self, name, v)

    @classmethod
    def dirac(cls, a_diag, c) -> "MllrPrior":
        a = np.asarray(a_diag, dtype=float)
        return cls(a, np.zeros_like(a), c, np.zeros_like(a))


class BayesianMllrScorer(ComponentScorer):
    """Frame-wise Bayesian MLLR: ``int N(y; A mu + c, C) p(A, c) dA dc`` per component.

    The integral is ``N(y; a_mean mu + c_mean, C + diag(a_var mu^2) + c_cov)``.
    """

    def __init__(self, hmm: Hmm, prior: MllrPrior):
        super().__init__(hmm)
        if prior.a_mean.size != hmm.dim:
            raise ValueError("transform prior dimension does not match the model")
        self.prior = prior
        self._cache: dict = {}

    def _component(self, q, k):
        if (q, k) not in self._cache:
            c = self.hmm.emissions[q].components[k]
            p = self.prior
            mean = p.a_mean * c.mean + p.c_mean
            param_var = p.a_var * c.mean**2
            if c.kind == "diagonal" and p.c_cov.ndim == 1:
                cov = c.cov + param_var + p.c_cov
            else:
                cc = p.c_cov if p.c_cov.ndim == 2 else np.diag(p.c_cov)
                cov = c.full_cov() + np.diag(param_var) + cc
            self._cache[(q, k)] = (mean, cov)
        return self._cache[(q, k)]

    def component_score(self, n, q, k, frame, context):
        mean, cov = self._component(q, k)
        return float(_mvn_logpdf(frame.observed, mean, cov))


def bayesian_mllr_frame_scorer(hmm: Hmm, prior: MllrPrior) -> BayesianMllrScorer:
    return BayesianMllrScorer(hmm, prior)
