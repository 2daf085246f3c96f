"""Uncertainty decoding: emission rules driven by per-frame uncertainty."""

from __future__ import annotations


import numpy as np

from ..gauss import CovarianceError, Gaussian, _mvn_logpdf, gaussian_convolve
from ..hmm import ComponentScorer, Hmm
from ..obsmodels import RegressionAssignment, SpliceRegions
from ._common import diag_var, log_ratio_overlap, normal_logpdf, raw_var, require


class ArrowoodScorer(ComponentScorer):
    """Each component convolved with the frame's bias pdf ``N(bias_mean, bias_cov)``.

    A missing ``bias_mean`` is taken as zero.
    """

    def component_score(self, n, q, k, frame, context):
        (cov_b,) = require(frame, "bias_cov", technique="arrowood")
        c = self.hmm.emissions[q].components[k]
        mean_b = 0.0 if frame.bias_mean is None else frame.bias_mean
        g = gaussian_convolve(c, cov_b, mean_b)
        return float(_mvn_logpdf(frame.observed, g.mean, g.cov))


class DvcScorer(ComponentScorer):
    """Overlap of the state component with the clean-feature posterior.

    Returns ``log N(mu_k; mu_post, C_k + C_post)``, a scaled likelihood.
    """

    def component_score(self, n, q, k, frame, context):
        mean, cov = require(frame, "posterior_mean", "posterior_cov", technique="dvc")
        c = self.hmm.emissions[q].components[k]
        g = gaussian_convolve(c, cov, 0.0)
        return float(_mvn_logpdf(mean, g.mean, g.cov))


class SpliceScorer(ComponentScorer):
    """Region-mixture bias ``b ~ sum_s p(s) N(-r_s, G_s)``.

    ``convolution``: ``sum_s p(s) N(y; mu_k - r_s, C_k + G_s)``.
    ``prior_model``: the integral of ``p(x|k) p(x, y) / p(x)`` with
    ``p(x, y) = sum_s p(s) N(x; y + r_s, G_s) N(y; m_s, V_s)``.  The
    denominator ``p(x) = sum_s p(s) N(x; m_s + r_s, V_s + G_s)`` is
    moment-matched to one Gaussian so each region term is a closed-form
    ratio integral.
    """

    VARIANTS = ("convolution", "prior_model")

    def __init__(self, hmm: Hmm, spec: SpliceRegions, variant: str = "convolution"):
        super().__init__(hmm)
        if variant not in self.VARIANTS:
            raise ValueError(f"unknown SPLICE variant {variant!r}")
        if variant == "prior_model" and not spec.has_prior_model:
            raise ValueError("the prior_model variant needs prior_means and prior_covs")
        self.spec, self.variant = spec, variant
        with np.errstate(divide="ignore"):
            self._logp = np.log(spec.priors)
        if variant == "prior_model":
            m = spec.prior_means + spec.offsets
            v = spec.prior_covs + spec.covs
            mean = spec.priors @ m
            self._den = (mean, spec.priors @ (v + m**2) - mean**2)

    def component_score(self, n, q, k, frame, context):
        c = self.hmm.emissions[q].components[k]
        mu, var = c.mean, diag_var(c, "splice")
        y, sp = frame.observed, self.spec
        if self.variant == "convolution":
            terms = [np.sum(normal_logpdf(y, mu - sp.offsets[s], var + sp.covs[s]))
                     for s in range(sp.priors.size)]
        else:
            den_mean, den_var = self._den
            terms = [np.sum(normal_logpdf(y, sp.prior_means[s], sp.prior_covs[s])
                            + log_ratio_overlap(y + sp.offsets[s], sp.covs[s], mu, var,
                                                den_mean, den_var))
                     for s in range(sp.priors.size)]
        terms = np.array(terms) + self._logp
        return float(np.logaddexp.reduce(terms))


def _affine_moments(c: Gaussian, matrix: np.ndarray, bias_mean, bias_cov) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of ``A x + b`` for ``x ~ c`` and independent ``b``.

    A diagonal ``A`` on a diagonal component keeps the diagonal form.
    ``bias_cov=None`` is a deterministic bias.
    """
    diag_a = np.array_equal(matrix, np.diag(np.diag(matrix)))
    if diag_a and c.kind == "diagonal":
        a = np.diag(matrix)
        mean = a * c.mean + bias_mean
        cov = a * a * c.cov
    else:
        mean = matrix @ c.mean + bias_mean
        cov = matrix @ c.full_cov() @ matrix.T
    if bias_cov is not None:
        bc = np.asarray(bias_cov, dtype=float)
        if bc.ndim == 2 and cov.ndim == 1:
            cov = np.diag(cov)
        elif bc.ndim == 1 and cov.ndim == 2:
            bc = np.diag(bc)
        cov = cov + bc
    return mean, cov


class JudScorer(ComponentScorer):
    """Joint uncertainty decoding: ``N(y; A_r mu_k + m_b, A_r C_k A_r^T + C_b)`` per class ``r``."""

    def __init__(self, hmm: Hmm, assignment: RegressionAssignment):
        super().__init__(hmm)
        assignment.validate_for(hmm)
        self.assignment = assignment
        self._cache: dict = {}

    def _component(self, q, k) -> Gaussian:
        if (q, k) not in self._cache:
            t = self.assignment.transform_for(q, k)
            mean, cov = _affine_moments(self.hmm.emissions[q].components[k], t.matrix,
                                        t.bias_mean, t.bias_cov)
            self._cache[(q, k)] = Gaussian(mean, cov)
        return self._cache[(q, k)]

    def component_score(self, n, q, k, frame, context):
        g = self._component(q, k)
        return float(_mvn_logpdf(frame.observed, g.mean, g.cov))


class IonScorer(ComponentScorer):
    """``log int p(x | y_{1:N}) / p(x) p(x | k) dx`` with Gaussian posterior and prior.

    The per-frame posterior comes from the evidence (``posterior_mean``,
    ``posterior_cov``).  Every posterior variance must not exceed the prior
    variance, otherwise the ratio is not a normalisable Gaussian.
    """

    def __init__(self, hmm: Hmm, prior_mean, prior_var):
        super().__init__(hmm)
        self.prior_mean = np.asarray(prior_mean, dtype=float).reshape(-1)
        self.prior_var = np.asarray(prior_var, dtype=float).reshape(-1)
        if np.any(self.prior_var <= 0):
            raise CovarianceError("prior variances must be positive")

    def component_score(self, n, q, k, frame, context):
        mean, cov = require(frame, "posterior_mean", "posterior_cov", technique="ion")
        cov = raw_var(cov, self.prior_var.size, "ion")
        bad = np.flatnonzero(cov > self.prior_var)
        if bad.size:
            raise CovarianceError(
                f"frame {n}: posterior variance exceeds prior variance in dims {bad.tolist()}"
            )
        c = self.hmm.emissions[q].components[k]
        return float(np.sum(log_ratio_overlap(mean, cov, c.mean, diag_var(c, "ion"),
                                              self.prior_mean, self.prior_var)))


def arrowood_scorer(hmm: Hmm) -> ArrowoodScorer:
    return ArrowoodScorer(hmm)


def dvc_scorer(hmm: Hmm) -> DvcScorer:
    return DvcScorer(hmm)


def splice_scorer(hmm: Hmm, spec: SpliceRegions, variant: str = "convolution") -> SpliceScorer:
    return SpliceScorer(hmm, spec, variant)


def jud_scorer(hmm: Hmm, assignment: RegressionAssignment) -> JudScorer:
    return JudScorer(hmm, assignment)


def ion_scorer(hmm: Hmm, prior_mean, prior_var) -> IonScorer:
    return IonScorer(hmm, prior_mean, prior_var)
