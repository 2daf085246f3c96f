"""Slow, independent reference evaluators.

Nothing here calls into the compensation rules or the decoders: the
quadrature works on log-integrands built from plain normal densities, the
enumeration scores every state sequence by calling the scorer directly,
and the Monte-Carlo check draws from the observation models.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .gauss import lse_axis
from .hmm import PAST, PARTIAL_PATH, PREV_STATE, DecodeContext, EmissionScorer, Hmm, as_evidence
from .obsmodels import sample_utterance

MAX_PATHS = 1_000_000
BOUNDARY_MASS_TOL = 1e-10


class OracleError(ValueError):
    pass


def normal_logpdf(x, mean, var):
    """Elementwise univariate normal log density (broadcasting)."""
    x = np.asarray(x, dtype=float)
    return -0.5 * (math.log(2 * math.pi) + np.log(var) + (x - mean) ** 2 / var)


@dataclass(frozen=True)
class QuadratureConfig:
    bounds: Optional[Sequence[tuple]] = None
    points: int = 2048
    rule: str = "midpoint"

    def __post_init__(self):
        if self.points < 64:
            raise OracleError("quadrature needs at least 64 points per dimension")
        if self.rule not in ("midpoint", "trapezoid"):
            raise OracleError(f"unknown rule {self.rule!r}")


@dataclass(frozen=True)
class Integrand:
    """Log-integrand over ``dims`` variables.

    ``log_f(points, y)`` maps an (M, dims) array to M log values.  ``centers``
    and ``scales`` locate the mass; default bounds are ``center +- 10 scale``.
    """

    log_f: Callable
    centers: Sequence[float]
    scales: Sequence[float]

    @property
    def dims(self) -> int:
        return len(self.centers)


def _axis(lo: float, hi: float, m: int, rule: str):
    if rule == "midpoint":
        h = (hi - lo) / m
        return lo + h * (np.arange(m) + 0.5), np.full(m, h)
    x = np.linspace(lo, hi, m)
    h = (hi - lo) / (m - 1)
    w = np.full(m, h)
    w[0] = w[-1] = h / 2
    return x, w


def quadrature_emission(integrand: Integrand, y=None, cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """Log of the Riemann approximation of ``int exp(log_f(z, y)) dz``."""
    d = integrand.dims
    if d > 3:
        raise OracleError(f"quadrature limited to 3 dimensions, got {d}")
    if cfg.bounds is None:
        bounds = [(c - 10 * s, c + 10 * s) for c, s in zip(integrand.centers, integrand.scales)]
    else:
        bounds = list(cfg.bounds)
        for (lo, hi), c, s in zip(bounds, integrand.centers, integrand.scales):
            if lo > c - 8 * s or hi < c + 8 * s:
                raise OracleError("quadrature bounds must cover 8 standard deviations")
    axes = [_axis(lo, hi, cfg.points, cfg.rule) for lo, hi in bounds]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    logw = sum(np.log(g) for g in np.meshgrid(*[a[1] for a in axes], indexing="ij"))
    pts = np.stack([g.ravel() for g in grids], axis=1)
    vals = (np.asarray(integrand.log_f(pts, y), dtype=float) + logw.ravel()).reshape(grids[0].shape)
    if np.isnan(vals).any():
        raise OracleError("integrand produced NaN")
    total = float(lse_axis(vals.ravel()))
    if total == -np.inf:
        return total
    edge = []
    for ax in range(d):
        edge.append(np.take(vals, [0, -1], axis=ax).ravel())
    edge_mass = float(lse_axis(np.concatenate(edge)))
    if edge_mass - total > math.log(BOUNDARY_MASS_TOL):
        raise OracleError("integrand has significant mass at the quadrature boundary")
    return total


def conditional_integrand(state_mean: float, state_var: float, log_conditional: Callable,
                          scale: float | None = None) -> Integrand:
    """1-D ``int N(x; state) p(y | x) dx`` with ``log_conditional(x, y)``."""

    def log_f(pts, y):
        x = pts[:, 0]
        return normal_logpdf(x, state_mean, state_var) + log_conditional(x, y)

    return Integrand(log_f, [state_mean], [scale or math.sqrt(state_var)])


def dirac_emission(state_logpdf: Callable, inverse: Callable, log_abs_det: Callable, y) -> float:
    """Emission for ``y = f(x)`` with a deterministic invertible ``f`` by substitution."""
    return float(state_logpdf(inverse(y)) - log_abs_det(y))


def gaussian_expectation(fn: Callable, means: Sequence[float], variances: Sequence[float],
                         cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """``E[fn(z)]`` for independent normal ``z_i`` by grid quadrature.

    ``fn`` is vectorised over an (M, d) array.  Zero-variance variables are
    held at their mean.
    """
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    free = np.flatnonzero(variances > 0)
    if free.size > 3:
        raise OracleError("expectation limited to 3 random variables")
    if free.size == 0:
        return float(np.asarray(fn(means[None, :]))[0])
    axes = [_axis(means[i] - 10 * math.sqrt(variances[i]), means[i] + 10 * math.sqrt(variances[i]),
                  cfg.points, cfg.rule) for i in free]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    logp = np.zeros_like(grids[0])
    weight = np.ones_like(grids[0])
    for g, w, i in zip(grids, wgrids, free):
        logp = logp + normal_logpdf(g, means[i], variances[i])
        weight = weight * w
    p = np.exp(logp) * weight
    pts = np.tile(means, (grids[0].size, 1))
    for g, i in zip(grids, free):
        pts[:, i] = g.ravel()
    vals = np.asarray(fn(pts), dtype=float).reshape(grids[0].shape)
    return float(np.sum(p * vals) / np.sum(p))


def _path_scores_needed(scorer: EmissionScorer):
    if PARTIAL_PATH in scorer.consumes:
        raise OracleError("enumeration does not support partial-path scorers")


def brute_force_sequence_score(hmm: Hmm, scorer: EmissionScorer, evidence, mode: str = "sum",
                               shifts: Sequence[int] = ()):
    """Score every state sequence explicitly.

    ``mode="sum"`` returns the total log likelihood; ``mode="max"`` returns
    ``(best score, best path)``, breaking ties toward the path whose reversed
    state tuple is smallest (the Viterbi backtrace convention).  Scorers that
    read ``q_{n-1}`` or past observations are supported.
    """
    _path_scores_needed(scorer)
    frames = as_evidence(evidence)
    n_frames, s = len(frames), hmm.num_states
    if s ** n_frames > MAX_PATHS:
        raise OracleError(f"{s}^{n_frames} paths exceeds the enumeration limit")
    li, la = hmm.log_initial(), hmm.log_transitions()
    pair = PREV_STATE in scorer.consumes

    def ctx(n):
        if PAST in scorer.consumes or shifts:
            past = tuple(frames[n - p].observed if n - p >= 0 else None for p in shifts)
            return DecodeContext(sequence=frames, past=past)
        return DecodeContext(sequence=frames)

    cache: dict = {}

    def emit(n, q, qp):
        key = (n, q, qp if pair else None)
        if key not in cache:
            cache[key] = float(scorer.score(n, q, frames[n], ctx(n),
                                            q_prev=(qp if pair else None)))
        return cache[key]

    scores, paths = [], []
    for path in itertools.product(range(s), repeat=n_frames):
        total = li[path[0]] + emit(0, path[0], None)
        for n in range(1, n_frames):
            total = total + la[path[n - 1], path[n]] + emit(n, path[n], path[n - 1])
        scores.append(total)
        paths.append(path)
    scores = np.array(scores)
    if mode == "sum":
        return float(lse_axis(scores))
    if mode != "max":
        raise ValueError(f"unknown mode {mode!r}")
    best = scores.max()
    ties = [p for p, v in zip(paths, scores) if v == best]
    chosen = min(ties, key=lambda p: tuple(reversed(p)))
    return float(best), np.array(chosen)


@dataclass(frozen=True)
class MomentEstimate:
    estimate: np.ndarray
    stderr: np.ndarray


STATISTICS = {
    "y_minus_x": lambda utt: utt.observed - utt.clean,
    "y": lambda utt: utt.observed,
    "x": lambda utt: utt.clean,
}


def mc_moment_check(spec, hmm: Hmm, statistic, n_samples: int, seed: int) -> MomentEstimate:
    """Seeded Monte-Carlo mean of a per-frame statistic with its standard error.

    ``statistic`` is a callable on a :class:`SampledUtterance` returning an
    (N, ...) array, or one of the names in ``STATISTICS``.
    """
    if n_samples < 1000:
        raise OracleError("Monte-Carlo checks need at least 1000 samples")
    fn = STATISTICS[statistic] if isinstance(statistic, str) else statistic
    utt = sample_utterance(spec, hmm, n_samples, seed)
    vals = np.asarray(fn(utt), dtype=float)
    est = vals.mean(axis=0)
    err = vals.std(axis=0, ddof=1) / math.sqrt(vals.shape[0])
    return MomentEstimate(est, err)
