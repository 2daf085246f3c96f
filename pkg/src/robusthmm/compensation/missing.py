"""Missing-feature decoding: imputation, marginalisation and their uncertainty variants."""

from __future__ import annotations

import numpy as np

from ..gauss import Gaussian, _mvn_logpdf, gaussian_log_peak, gaussian_product
from ..hmm import ComponentScorer, Hmm
from ._common import MissingEvidenceError, diag_var, normal_logpdf, raw_var, require

IMPUTATION = "imputation"
MARGINALIZATION = "marginalization"


class MissingFeatureScorer(ComponentScorer):
    """Per-dimension reliable/unreliable scoring of diagonal components.

    ``imputation`` scores the observed value in reliable dimensions and the
    frame's ``imputed`` value elsewhere.  ``marginalization`` integrates each
    unreliable dimension's state marginal against the clean-speech marginal
    ``N(marginal_mean, marginal_var)``; with ``flat=True`` an unreliable
    dimension contributes nothing.
    """

    def __init__(self, hmm: Hmm, mode: str, marginal_mean=None, marginal_var=None,
                 flat: bool = False):
        super().__init__(hmm)
        if mode not in (IMPUTATION, MARGINALIZATION):
            raise ValueError(f"unknown missing-feature mode {mode!r}")
        self.mode, self.flat = mode, flat
        if mode == MARGINALIZATION and not flat:
            if marginal_mean is None or marginal_var is None:
                raise ValueError("marginalization needs the clean marginal or flat=True")
            self.marginal_mean = np.asarray(marginal_mean, dtype=float).reshape(-1)
            self.marginal_var = np.asarray(marginal_var, dtype=float).reshape(-1)

    def component_score(self, n, q, k, frame, context):
        (reliable,) = require(frame, "reliable", technique="missing-feature decoding")
        c = self.hmm.emissions[q].components[k]
        var = diag_var(c, "missing-feature decoding")
        y = frame.observed
        if self.mode == IMPUTATION:
            if reliable.all():
                return float(_mvn_logpdf(y, c.mean, var))
            if frame.imputed is None:
                raise MissingEvidenceError("imputation needs imputed values for unreliable dims")
            x = np.where(reliable, y, frame.imputed)
            return float(_mvn_logpdf(x, c.mean, var))
        total = np.sum(normal_logpdf(y[reliable], c.mean[reliable], var[reliable]))
        if self.flat:
            return float(total)
        u = ~reliable
        total += np.sum(normal_logpdf(c.mean[u], self.marginal_mean[u], var[u] + self.marginal_var[u]))
        return float(total)


def _posterior(frame, dim, technique):
    mean, cov = require(frame, "posterior_mean", "posterior_cov", technique=technique)
    return np.asarray(mean, dtype=float), raw_var(cov, dim, technique)


class ModifiedImputationScorer(ComponentScorer):
    """Score ``log p(x_hat | k)`` at the maximiser ``x_hat`` of ``p(x | k) p(x | y)``."""

    def component_score(self, n, q, k, frame, context):
        c = self.hmm.emissions[q].components[k]
        var = diag_var(c, "modified imputation")
        x_hat = self.estimate(frame, c)
        return float(_mvn_logpdf(x_hat, c.mean, var))

    @staticmethod
    def estimate(frame, component: Gaussian) -> np.ndarray:
        mean, cov = _posterior(frame, component.dim, "modified imputation")
        var = component.cov
        return mean + cov / (var + cov) * (component.mean - mean)


class SignificanceScorer(ComponentScorer):
    """``log max_x N(x; mu_k, C_k) N(x; mu_post, C_post)``."""

    def component_score(self, n, q, k, frame, context):
        mean, cov = require(frame, "posterior_mean", "posterior_cov", technique="significance")
        c = self.hmm.emissions[q].components[k]
        log_scale, g = gaussian_product(c, Gaussian(mean, cov))
        return log_scale + gaussian_log_peak(g)


def missing_feature_scorer(hmm: Hmm, mode: str, marginal_mean=None, marginal_var=None,
                           flat: bool = False) -> MissingFeatureScorer:
    return MissingFeatureScorer(hmm, mode, marginal_mean, marginal_var, flat)


def modified_imputation_scorer(hmm: Hmm) -> ModifiedImputationScorer:
    return ModifiedImputationScorer(hmm)


def significance_scorer(hmm: Hmm) -> SignificanceScorer:
    return SignificanceScorer(hmm)
