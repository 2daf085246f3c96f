"""Algebra shared by several compensation rules."""

from __future__ import annotations

import math

import numpy as np

from ..gauss import LOG_2PI, CovarianceError, Gaussian, Gmm
from ..hmm import Hmm


class MissingEvidenceError(ValueError):
    """A frame lacks the evidence field a technique needs."""


def require(frame, *names: str, technique: str):
    missing = [n for n in names if getattr(frame, n) is None]
    if missing:
        raise MissingEvidenceError(f"{technique} needs {', '.join(missing)} on every frame")
    return tuple(getattr(frame, n) for n in names)


def diag_var(g: Gaussian, technique: str) -> np.ndarray:
    if g.kind != "diagonal":
        raise CovarianceError(f"{technique} is defined for diagonal covariances only")
    return g.cov


def raw_var(v, dim: int, technique: str) -> np.ndarray:
    """Per-dimension variances from evidence; zero is allowed (a dirac)."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        v = np.full(dim, float(v))
    if v.ndim != 1:
        raise CovarianceError(f"{technique} expects diagonal uncertainty, got shape {v.shape}")
    if np.any(v < 0):
        raise CovarianceError("uncertainty variances must be non-negative")
    return v


def normal_logpdf(x, mean, var) -> np.ndarray:
    return -0.5 * (LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


def log_ratio_overlap(a, av, mu, cv, m, v) -> np.ndarray:
    """Per-dimension ``log int N(x; a, av) N(x; mu, cv) / N(x; m, v) dx``.

    ``av`` may be zero (a dirac numerator).  The quotient is integrable
    only when ``1/av + 1/cv > 1/v``; otherwise :class:`CovarianceError`.
    """
    a, av, mu, cv, m, v = np.broadcast_arrays(*(np.asarray(t, dtype=float) for t in (a, av, mu, cv, m, v)))
    out = np.empty(a.shape)
    dirac = av == 0
    if np.any(dirac):
        out[dirac] = (normal_logpdf(a[dirac], mu[dirac], cv[dirac])
                      - normal_logpdf(a[dirac], m[dirac], v[dirac]))
    g = ~dirac
    if np.any(g):
        a_, av_, mu_, cv_, m_, v_ = a[g], av[g], mu[g], cv[g], m[g], v[g]
        s = av_ + cv_
        log_z = normal_logpdf(a_, mu_, s)
        p_var = av_ * cv_ / s
        p_mean = mu_ + (cv_ / s) * (a_ - mu_)
        lam = 1.0 / p_var - 1.0 / v_
        if np.any(lam <= 0):
            raise CovarianceError("ratio of Gaussians is not normalisable: denominator too sharp")
        b = p_mean / p_var - m_ / v_
        rest = (-0.5 * np.log(p_var / v_) + 0.5 * np.log(2 * math.pi / lam)
                + b * b / (2 * lam) - 0.5 * (p_mean**2 / p_var - m_**2 / v_))
        out[g] = log_z + rest
    return out


def lognormal_sum(means, variances) -> tuple[np.ndarray, np.ndarray]:
    """Log-normal approximation of ``log sum_t exp(z_t)`` for independent normal ``z_t``.

    ``means``/``variances`` are (T, D).  The sum's linear-domain mean and
    variance are matched by a single log-normal.
    """
    mu = np.asarray(means, dtype=float)
    var = np.asarray(variances, dtype=float)
    shift = mu.max(axis=0)
    lin_mean = np.exp(mu - shift + var / 2)
    lin_var = np.exp(2 * (mu - shift) + var) * np.expm1(var)
    m_tot, v_tot = lin_mean.sum(axis=0), lin_var.sum(axis=0)
    out_var = np.log1p(v_tot / m_tot**2)
    out_mean = shift + np.log(m_tot) - out_var / 2
    return out_mean, out_var


def logsum_linearize(means, variances) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """First-order expansion of ``log sum_t exp(z_t)`` at the term means.

    Returns the expansion value, the propagated variance ``sum_t G_t^2 var_t``
    and the gains ``G_t = d y / d z_t`` (T, D).
    """
    mu = np.asarray(means, dtype=float)
    var = np.asarray(variances, dtype=float)
    shift = mu.max(axis=0)
    e = np.exp(mu - shift)
    total = e.sum(axis=0)
    gains = e / total
    return shift + np.log(total), np.sum(gains**2 * var, axis=0), gains


def stationary(transitions: np.ndarray) -> np.ndarray:
    """Stationary distribution of a row-stochastic matrix (uniform if not unique)."""
    s = transitions.shape[0]
    w, v = np.linalg.eig(transitions.T)
    idx = np.flatnonzero(np.abs(w - 1.0) < 1e-9)
    if idx.size != 1:
        return np.full(s, 1.0 / s)
    p = np.real(v[:, idx[0]])
    p = p / p.sum()
    if np.any(p < -1e-12):
        return np.full(s, 1.0 / s)
    return np.maximum(p, 0.0)


def backward_transitions(hmm: Hmm) -> np.ndarray:
    """``B[q, j] = p(q_{n-1} = j | q_n = q)`` under the stationary state distribution."""
    rho = stationary(hmm.transitions)
    joint = rho[:, None] * hmm.transitions  # [j, q]
    col = joint.sum(axis=0)
    s = hmm.num_states
    out = np.full((s, s), 1.0 / s)
    ok = col > 0
    out[ok] = (joint[:, ok] / col[ok]).T
    return out


def state_moments(hmm: Hmm, technique: str) -> tuple[np.ndarray, np.ndarray]:
    """Moment-matched mean and variance (S, D) of each state's mixture."""
    for gmm in hmm.emissions:
        for c in gmm.components:
            diag_var(c, technique)
    g = [gmm.moment_match() for gmm in hmm.emissions]
    return np.array([x.mean for x in g]), np.array([x.cov for x in g])


def predecessor_moments(hmm: Hmm, lags: int, technique: str) -> tuple[np.ndarray, np.ndarray]:
    """Clean-feature moments of ``x_{n-l}`` given ``q_n``, averaged over previous states.

    Returns means and variances of shape (lags, S, D); lag ``l`` mixes the
    state mixtures with the ``l``-step backward transition probabilities.
    """
    means, variances = state_moments(hmm, technique)
    b = backward_transitions(hmm)
    step = np.eye(hmm.num_states)
    out_m, out_v = [], []
    for _ in range(lags):
        step = step @ b
        m = step @ means
        second = step @ (variances + means**2)
        out_m.append(m)
        out_v.append(np.maximum(second - m**2, 0.0))
    shape = (lags, hmm.num_states, hmm.dim)
    return np.array(out_m).reshape(shape), np.array(out_v).reshape(shape)


def map_components(hmm: Hmm, fn) -> list[Gmm]:
    """Apply ``fn(q, k, component) -> Gaussian`` to every component, keeping weights."""
    return [Gmm(gmm.weights, tuple(fn(q, k, c) for k, c in enumerate(gmm.components)))
            for q, gmm in enumerate(hmm.emissions)]
