"""Gaussian and Gaussian-mixture primitives in the log domain.

Covariances are stored either as a length-D vector (diagonal mode, the
default) or as a D x D matrix (full mode).  Every constructed Gaussian has
its variances floored at ``VARIANCE_FLOOR``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

VARIANCE_FLOOR = 1e-8
LOG_2PI = float(np.log(2.0 * np.pi))

DIAGONAL = "diagonal"
FULL = "full"


class DimensionError(ValueError):
    """Shapes of means, covariances or observations disagree."""


class CovarianceError(ValueError):
    """A covariance (or combined precision) is not positive definite."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def floor_covariance(cov: np.ndarray, floor: float = VARIANCE_FLOOR) -> np.ndarray:
    """Return ``cov`` with variances (or eigenvalues) raised to ``floor``."""
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 1:
        if np.any(np.isnan(cov)):
            raise CovarianceError("covariance contains NaN")
        return np.maximum(cov, floor)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionError(f"covariance must be square, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise CovarianceError("covariance contains non-finite entries")
    if not np.array_equal(cov, cov.T):
        cov = 0.5 * (cov + cov.T)
    w, v = np.linalg.eigh(cov)
    if w.min() >= floor:
        return cov
    return (v * np.maximum(w, floor)) @ v.T


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Multivariate normal density with diagonal or full covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if cov.ndim == 0:
            cov = np.full(mean.shape, float(cov))
        if cov.shape not in ((mean.size,), (mean.size, mean.size)):
            raise DimensionError(
                f"mean has dimension {mean.size} but covariance has shape {cov.shape}"
            )
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(floor_covariance(cov)))

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def kind(self) -> str:
        return DIAGONAL if self.cov.ndim == 1 else FULL

    def full_cov(self) -> np.ndarray:
        return np.diag(self.cov) if self.cov.ndim == 1 else self.cov

    def variances(self) -> np.ndarray:
        return self.cov if self.cov.ndim == 1 else np.diag(self.cov)

    def to_full(self) -> "Gaussian":
        return self if self.kind == FULL else Gaussian(self.mean, np.diag(self.cov))

    def same_as(self, other: "Gaussian") -> bool:
        return (
            self.kind == other.kind
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.cov, other.cov)
        )

    def __repr__(self) -> str:
        return f"Gaussian(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


@dataclass(frozen=True, eq=False)
class Gmm:
    """Weighted mixture of Gaussians sharing one dimension and kind."""

    weights: np.ndarray
    components: tuple

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float).reshape(-1)
        comps = tuple(self.components)
        if len(comps) == 0 or len(comps) != w.size:
            raise DimensionError("need one weight per component and at least one component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must be non-negative and sum to 1, got {w}")
        dims = {c.dim for c in comps}
        kinds = {c.kind for c in comps}
        if len(dims) != 1 or len(kinds) != 1:
            raise DimensionError("all mixture components must share dimension and kind")
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "components", comps)

    @classmethod
    def single(cls, g: Gaussian) -> "Gmm":
        return cls(np.ones(1), (g,))

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def kind(self) -> str:
        return self.components[0].kind

    def __len__(self) -> int:
        return len(self.components)

    def moment_match(self) -> Gaussian:
        """Single Gaussian with the mixture's mean and covariance (kind preserved)."""
        means = np.array([c.mean for c in self.components])
        mu = self.weights @ means
        if self.kind == DIAGONAL:
            second = sum(w * (c.cov + c.mean**2) for w, c in zip(self.weights, self.components))
            return Gaussian(mu, second - mu**2)
        second = sum(
            w * (c.cov + np.outer(c.mean, c.mean)) for w, c in zip(self.weights, self.components)
        )
        return Gaussian(mu, second - np.outer(mu, mu))

    def same_as(self, other: "Gmm") -> bool:
        return (
            len(self) == len(other)
            and np.array_equal(self.weights, other.weights)
            and all(a.same_as(b) for a, b in zip(self.components, other.components))
        )


def log_sum_exp(values: Iterable[float]) -> float:
    """Overflow-safe ``log(sum(exp(values)))``; all ``-inf`` gives ``-inf``."""
    v = np.fromiter(values, dtype=float) if not isinstance(values, np.ndarray) else values
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty sequence")
    if np.any(np.isnan(v)):
        raise ValueError("log_sum_exp received NaN")
    m = v.max()
    if m == -np.inf:
        return -np.inf
    if m == np.inf:
        return np.inf
    return float(m + np.log(np.sum(np.exp(v - m))))


def lse_axis(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Vectorised log-sum-exp along ``axis`` with the same ``-inf`` handling."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(under="ignore"):
        s = np.sum(np.exp(a - safe), axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):
        out = np.log(s) + safe
    out = np.where(m == -np.inf, -np.inf, out)
    return np.squeeze(out, axis=axis)


def _check_dim(x: np.ndarray, d: int) -> None:
    if x.shape[-1] != d:
        raise DimensionError(f"expected dimension {d}, got {x.shape[-1]}")


def _mvn_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Log density for a batch of points ``x[..., D]``; no flooring applied."""
    d = mean.size
    diff = x - mean
    if cov.ndim == 1:
        if np.any(cov <= 0):
            raise CovarianceError("diagonal covariance has non-positive entries")
        return -0.5 * (d * LOG_2PI + np.sum(np.log(cov)) + np.sum(diff**2 / cov, axis=-1))
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise CovarianceError("covariance is not positive definite") from exc
    z = np.linalg.solve(chol, diff.reshape(-1, d).T).T.reshape(diff.shape)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (d * LOG_2PI + logdet + np.sum(z**2, axis=-1))


def gaussian_logpdf(x: Sequence[float] | np.ndarray, g: Gaussian) -> float:
    x = np.asarray(x, dtype=float)
    _check_dim(x, g.dim)
    return float(_mvn_logpdf(x, g.mean, g.cov))


def gaussian_logpdf_batch(x: np.ndarray, g: Gaussian) -> np.ndarray:
    """``gaussian_logpdf`` over the leading axes of ``x``."""
    x = np.asarray(x, dtype=float)
    _check_dim(x, g.dim)
    return _mvn_logpdf(x, g.mean, g.cov)


def gmm_logpdf(x: Sequence[float] | np.ndarray, m: Gmm) -> float:
    x = np.asarray(x, dtype=float)
    _check_dim(x, m.dim)
    with np.errstate(divide="ignore"):
        logw = np.log(m.weights)
    terms = [lw + _mvn_logpdf(x, c.mean, c.cov) for lw, c in zip(logw, m.components)]
    if len(terms) == 1 and logw[0] == 0.0:
        return float(terms[0])
    return log_sum_exp(np.array(terms, dtype=float))


def gaussian_convolve(g: Gaussian, cov_b, mean_b) -> Gaussian:
    """Density of ``x + b`` for ``x ~ g`` and independent ``b ~ N(mean_b, cov_b)``.

    ``cov_b`` may be a scalar, a vector of variances or a full matrix; a full
    ``cov_b`` promotes the result to full mode.
    """
    mean_b = np.broadcast_to(np.asarray(mean_b, dtype=float), g.mean.shape)
    cov_b = np.asarray(cov_b, dtype=float)
    if cov_b.ndim == 0:
        cov_b = np.full(g.dim, float(cov_b))
    if cov_b.shape[0] != g.dim:
        raise DimensionError(f"bias covariance shape {cov_b.shape} does not match dimension {g.dim}")
    if cov_b.ndim == 1 and g.kind == DIAGONAL:
        return Gaussian(g.mean + mean_b, g.cov + cov_b)
    cb = np.diag(cov_b) if cov_b.ndim == 1 else cov_b
    return Gaussian(g.mean + mean_b, g.full_cov() + cb)


def gaussian_product(g1: Gaussian, g2: Gaussian) -> tuple[float, Gaussian]:
    """Write ``N(x; g1) N(x; g2)`` as ``exp(log_scale) N(x; g)``.

    ``log_scale = log N(mu1; mu2, C1 + C2)``.  The combined moments are
    computed without inverting either covariance alone, so one of the two
    may be (numerically) degenerate.
    """
    if g1.dim != g2.dim:
        raise DimensionError(f"dimensions differ: {g1.dim} vs {g2.dim}")
    if g1.kind == DIAGONAL and g2.kind == DIAGONAL:
        s = g1.cov + g2.cov
        log_scale = float(_mvn_logpdf(g1.mean, g2.mean, s))
        mean = g2.mean + (g2.cov / s) * (g1.mean - g2.mean)
        cov = g1.cov * g2.cov / s
        return log_scale, Gaussian(mean, cov)
    c1, c2 = g1.full_cov(), g2.full_cov()
    s = c1 + c2
    try:
        gain = np.linalg.solve(s, c2).T  # C2 S^-1
    except np.linalg.LinAlgError as exc:
        raise CovarianceError("combined covariance is singular") from exc
    log_scale = float(_mvn_logpdf(g1.mean, g2.mean, s))
    mean = g2.mean + gain @ (g1.mean - g2.mean)
    cov = c1 - c1 @ np.linalg.solve(s, c1)
    return log_scale, Gaussian(mean, 0.5 * (cov + cov.T))


def gaussian_log_peak(g: Gaussian) -> float:
    """``log N(mu; mu, C)``, the log density at the mode."""
    if g.kind == DIAGONAL:
        return float(-0.5 * (g.dim * LOG_2PI + np.sum(np.log(g.cov))))
    sign, logdet = np.linalg.slogdet(g.cov)
    return float(-0.5 * (g.dim * LOG_2PI + logdet))
