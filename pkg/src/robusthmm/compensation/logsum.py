"""Compensation for log-sum observation models (noise, channel, reverberation)."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..gauss import Gaussian, _mvn_logpdf, gmm_logpdf
from ..hmm import PARTIAL_PATH, PAST, ComponentScorer, EmissionScorer, Hmm, IncompatibleScorerError
from ..obsmodels import InvalidObservation, PmcLogSum, ReverbLogSum, TakiguchiAR, VtsLogSum, jacobian_takiguchi
from ..oracles import QuadratureConfig, gaussian_expectation
from ._common import (
    diag_var,
    lognormal_sum,
    logsum_linearize,
    map_components,
    predecessor_moments,
    state_moments,
)
from .adaptation import AdaptedHmm, adapted

LOG_ADD = "log_add"
LOG_NORMAL = "log_normal"
QUADRATURE = "quadrature"
PMC_APPROXIMATIONS = (LOG_ADD, LOG_NORMAL, QUADRATURE)
PMC_QUADRATURE = QuadratureConfig(points=1024)


# --- PMC ---------------------------------------------------------------------


def _pmc_component(c: Gaussian, alpha: float, noise_mean, noise_var, approx: str) -> Gaussian:
    var = diag_var(c, "PMC")
    speech_mean = math.log(alpha) + c.mean
    if approx == LOG_ADD:
        mean, _, _ = logsum_linearize([speech_mean, noise_mean], [var, noise_var])
        return Gaussian(mean, var)
    if approx == LOG_NORMAL:
        mean, out_var = lognormal_sum([speech_mean, noise_mean], [var, noise_var])
        return Gaussian(mean, out_var)
    means, variances = np.empty(c.dim), np.empty(c.dim)
    for d in range(c.dim):
        m2 = (speech_mean[d], noise_mean[d])
        v2 = (var[d], noise_var[d])
        first = gaussian_expectation(lambda z: np.logaddexp(z[:, 0], z[:, 1]), m2, v2, PMC_QUADRATURE)
        second = gaussian_expectation(lambda z: (np.logaddexp(z[:, 0], z[:, 1]) - first) ** 2,
                                      m2, v2, PMC_QUADRATURE)
        means[d], variances[d] = first, second
    return Gaussian(means, variances)


def pmc_adapt(hmm: Hmm, spec: PmcLogSum, approx: str = LOG_ADD) -> AdaptedHmm:
    """Parallel model combination with a stationary noise pdf.

    ``log_add`` moves only the mean to ``log(alpha exp(mu_x) + exp(mu_b))``;
    ``log_normal`` matches the linear-domain mean and variance of the sum;
    ``quadrature`` computes the exact mean and variance of ``y`` per
    dimension numerically (at most two dimensions) and fits a Gaussian.
    """
    if approx not in PMC_APPROXIMATIONS:
        raise ValueError(f"unknown PMC approximation {approx!r}")
    if spec.noise_absent:
        if spec.alpha == 1.0:
            return adapted(hmm, hmm.emissions, f"pmc.{approx}", alpha=spec.alpha, noise_absent=True)
        shift = math.log(spec.alpha)
        return adapted(hmm, map_components(hmm, lambda q, k, c: Gaussian(c.mean + shift, c.cov)),
                       f"pmc.{approx}", alpha=spec.alpha, noise_absent=True)
    if spec.noise_mean is None:
        raise ValueError("stationary PMC needs a noise mean and covariance; use the noise-HMM scorer")
    if approx == QUADRATURE and hmm.dim > 2:
        raise ValueError(f"PMC quadrature is limited to D <= 2, model has D = {hmm.dim}")
    nm, nv = spec.noise_mean, spec.noise_cov
    return adapted(hmm, map_components(hmm, lambda q, k, c: _pmc_component(c, spec.alpha, nm, nv, approx)),
                   f"pmc.{approx}", alpha=spec.alpha)


class PmcNoiseHmmScorer:
    """Joint scorer ``p(y_n | q_n, noise state)`` for :func:`robusthmm.decode.viterbi_3d`.

    Every noise state has one Gaussian; the speech model is PMC-adapted once
    per noise state with that Gaussian as the stationary noise pdf.
    """

    def __init__(self, hmm: Hmm, spec: PmcLogSum, approx: str = LOG_ADD):
        if spec.noise_hmm is None:
            raise ValueError("the noise-HMM scorer needs a noise HMM")
        noise = spec.noise_hmm
        if any(len(g) != 1 for g in noise.emissions):
            raise ValueError("noise HMM states must have a single Gaussian each")
        self.speech, self.noise = hmm, noise
        self.adapted = []
        for g in noise.emissions:
            c = g.components[0]
            stat = PmcLogSum(spec.alpha, c.mean, c.cov)
            self.adapted.append(pmc_adapt(hmm, stat, approx).hmm)

    def frame_matrix(self, n, frame) -> np.ndarray:
        return np.array([[gmm_logpdf(frame.observed, a.emissions[q]) for a in self.adapted]
                         for q in range(self.speech.num_states)])

    def __call__(self, n, q, q_noise, frame) -> float:
        return gmm_logpdf(frame.observed, self.adapted[q_noise].emissions[q])


# --- VTS ---------------------------------------------------------------------


def vts_expansion(mu_x, m_h, m_c, noise_absent: bool = False):
    """Value and gain ``G = dy/dx`` of ``log(exp(h + x) + exp(c))`` at the expansion point."""
    speech = np.asarray(mu_x, dtype=float) + m_h
    if noise_absent:
        return speech, np.ones_like(speech)
    value, _, gains = logsum_linearize([speech, m_c], np.zeros((2, speech.size)))
    return value, gains[0]


def vts_adapt(hmm: Hmm, spec: VtsLogSum) -> AdaptedHmm:
    """First-order VTS at ``[mu_x, m_h, m_c]``.

    Mean ``log(exp(mu_x + m_h) + exp(m_c))``, covariance
    ``G^2 (C_x + C_h) + (1 - G)^2 C_c`` with the diagonal gain ``G``.
    """

    def fn(q, k, c):
        var = diag_var(c, "VTS")
        means, variances = [c.mean + spec.h_mean], [var + spec.h_cov]
        if not spec.noise_absent:
            means.append(spec.c_mean)
            variances.append(spec.c_cov)
        mean, cov, _ = logsum_linearize(means, variances)
        return Gaussian(mean, cov)

    return adapted(hmm, map_components(hmm, fn), "vts")


def _reverb_terms(spec: ReverbLogSum, mean, var, prev_means, prev_vars):
    """Term moments of ``log sum_l exp(x_{n-l} + mu_l)``: current frame, then lags 1..L."""
    means = [mean + spec.taps[0]] + [prev_means[l] + spec.taps[l + 1] for l in range(spec.tail_length)]
    variances = [var] + [prev_vars[l] for l in range(spec.tail_length)]
    return means, variances


def rev_vts_adapt(hmm: Hmm, spec: ReverbLogSum) -> AdaptedHmm:
    """Reverberant VTS on the extended clean vector ``[x_{n-L}, ..., x_n]``.

    Previous frames take the clean statistics averaged over the possible
    previous states; the log-sum is then linearised at the term means as
    in :func:`vts_adapt`.
    """
    if spec.tail_length == 0:
        raise ValueError("reverberant VTS needs L >= 1; use vts_adapt for a single tap")
    pm, pv = predecessor_moments(hmm, spec.tail_length, "reverberant VTS")

    def fn(q, k, c):
        means, variances = _reverb_terms(spec, c.mean, diag_var(c, "reverberant VTS"), pm[:, q], pv[:, q])
        if not spec.noise_absent:
            means.append(spec.noise_mean)
            variances.append(spec.noise_cov)
        mean, cov, _ = logsum_linearize(means, variances)
        return Gaussian(mean, cov)

    return adapted(hmm, map_components(hmm, fn), "rev_vts")


# --- Reverberation log-add (static prior / best partial path) ----------------


def _reverb_component(spec, c: Gaussian, prev_means, prev_vars, moment: str) -> Gaussian:
    var = diag_var(c, "reverberation log-add")
    means, variances = _reverb_terms(spec, c.mean, var, prev_means, prev_vars)
    if moment == LOG_ADD:
        mean, _, _ = logsum_linearize(means, variances)
        return Gaussian(mean, var)
    mean, out_var = lognormal_sum(means, variances)
    return Gaussian(mean, out_var)


def _check_reverb(spec: ReverbLogSum, moment: str):
    if not spec.noise_absent:
        raise ValueError("the reverberation log-add rule takes a noise-free model")
    if moment not in (LOG_ADD, LOG_NORMAL):
        raise ValueError(f"unknown moment approximation {moment!r}")


def reverb_log_add_adapt(hmm: Hmm, spec: ReverbLogSum, variant: str = "static_prior",
                         moment: str = LOG_ADD):
    """Mean (and with ``log_normal`` also variance) compensation for reverberation.

    ``static_prior`` returns an :class:`AdaptedHmm` whose previous-frame
    terms use means averaged over the possible previous states;
    ``partial_path`` returns a scorer that takes them from the decoder's
    best partial path.
    """
    _check_reverb(spec, moment)
    if variant == "partial_path":
        return ReverbPartialPathScorer(hmm, spec, moment)
    if variant != "static_prior":
        raise ValueError(f"unknown reverberation variant {variant!r}")
    pm, pv = predecessor_moments(hmm, spec.tail_length, "reverberation log-add")
    return adapted(hmm, map_components(hmm, lambda q, k, c: _reverb_component(spec, c, pm[:, q], pv[:, q], moment)),
                   f"reverb.static_prior.{moment}")


class ReverbPartialPathScorer(ComponentScorer):
    """Reverberation log-add with previous-frame means from the best partial path.

    Lags reaching before the first frame fall back to the averaged
    previous-state statistics of the static rule.
    """

    consumes = frozenset({PARTIAL_PATH})

    def __init__(self, hmm: Hmm, spec: ReverbLogSum, moment: str = LOG_ADD):
        super().__init__(hmm)
        _check_reverb(spec, moment)
        self.spec, self.moment = spec, moment
        self.state_means, self.state_vars = state_moments(hmm, "reverberation log-add")
        self.static_means, self.static_vars = predecessor_moments(hmm, spec.tail_length, "reverberation log-add")
        self._cache: dict = {}

    def component_score(self, n, q, k, frame, context):
        if context is None or context.history is None:
            raise IncompatibleScorerError("the partial-path rule needs a decoder that publishes its best partial path")
        hist = tuple(context.history(q, self.spec.tail_length)) if self.spec.tail_length else ()
        key = (q, k, hist)
        if key not in self._cache:
            pm, pv = [], []
            for l in range(self.spec.tail_length):
                if l < len(hist):
                    pm.append(self.state_means[hist[l]])
                    pv.append(self.state_vars[hist[l]])
                else:
                    pm.append(self.static_means[l, q])
                    pv.append(self.static_vars[l, q])
            self._cache[key] = _reverb_component(self.spec, self.hmm.emissions[q].components[k], pm, pv,
                                                 self.moment)
        g = self._cache[key]
        return float(_mvn_logpdf(frame.observed, g.mean, g.cov))


# --- Takiguchi ---------------------------------------------------------------


class TakiguchiScorer(EmissionScorer):
    """Change-of-variables likelihood ``p(x_n | q) / |det dy/dx|`` for the AR reverberation model.

    Reads ``y_{n-1}`` from the decoder context (shift 1); at the first frame
    the tail term is absent.  Observations below the tail floor score
    ``-inf`` and are reported by :meth:`diagnose`.
    """

    consumes = frozenset({PAST})

    def __init__(self, hmm: Hmm, spec: TakiguchiAR):
        super().__init__(hmm)
        self.spec = spec

    @staticmethod
    def _prev(context) -> Optional[np.ndarray]:
        if context is None or not context.past:
            return None
        return context.past[0]

    def _invert(self, frame, context):
        return jacobian_takiguchi(self.spec, frame.observed, self._prev(context))

    def score(self, n, q, frame, context=None, k=None, q_prev=None):
        try:
            x, logdet = self._invert(frame, context)
        except InvalidObservation:
            return -math.inf
        return gmm_logpdf(x, self.hmm.emissions[q]) - logdet

    def frame_scores(self, n, frame, context=None):
        try:
            x, logdet = self._invert(frame, context)
        except InvalidObservation:
            return np.full(self.num_states, -math.inf)
        return np.array([gmm_logpdf(x, g) - logdet for g in self.hmm.emissions])

    def diagnose(self, n, frame, context=None):
        try:
            self._invert(frame, context)
        except InvalidObservation as exc:
            return f"invalid observation: {exc}"
        return None


def takiguchi_scorer(hmm: Hmm, spec: TakiguchiAR) -> TakiguchiScorer:
    return TakiguchiScorer(hmm, spec)


def pmc_noise_hmm_scorer(hmm: Hmm, spec: PmcLogSum, approx: str = LOG_ADD) -> PmcNoiseHmmScorer:
    return PmcNoiseHmmScorer(hmm, spec, approx)
