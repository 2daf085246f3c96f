"""Observation models ``y_n = f(x_n, b_n)`` with exact application and seeded sampling.

Each family is a frozen dataclass.  Per-frame parameters (bias tracks,
noise estimates) are given as (N, D) arrays; constant ones as (D,) vectors.
Log-sum families evaluate their formula with a per-dimension log-sum-exp.
A missing noise term is an explicit absent flag that drops the term;
``NO_NOISE_LOG`` is the finite stand-in used where a log-domain parameter
must express "no energy" (for instance a reverberation tap that is off).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .gauss import DimensionError, lse_axis
from .hmm import Hmm

NO_NOISE_LOG = -745.0


class InvalidObservation(ValueError):
    """The observation lies outside the region the inverse model is defined on."""


def _vec(v, name: str) -> np.ndarray:
    a = np.array(v, dtype=float)
    if a.ndim not in (1, 2):
        raise DimensionError(f"{name} must be a vector or an (N, D) track, got shape {a.shape}")
    a.setflags(write=False)
    return a


def _row(a: np.ndarray, n: int) -> np.ndarray:
    if a.ndim == 1:
        return a
    if n >= a.shape[0]:
        raise DimensionError(f"per-frame track has {a.shape[0]} frames, frame {n} requested")
    return a[n]


def _gauss_draw(rng: np.random.Generator, mean, var) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    z = rng.standard_normal(mean.shape)
    if var.ndim == 2:
        w, v = np.linalg.eigh(var)
        return mean + v @ (np.sqrt(np.maximum(w, 0.0)) * z)
    return mean + np.sqrt(var) * z


@dataclass(frozen=True)
class AffineTransform:
    """``y = A x + b`` with ``b ~ N(bias_mean, bias_cov)``; ``bias_cov=None`` is a dirac."""

    matrix: np.ndarray
    bias_mean: np.ndarray
    bias_cov: Optional[np.ndarray] = None

    def __post_init__(self):
        a = np.atleast_2d(np.array(self.matrix, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise DimensionError("affine transform matrix must be square")
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "bias_mean", np.array(self.bias_mean, dtype=float).reshape(-1))
        if self.bias_cov is not None:
            object.__setattr__(self, "bias_cov", np.array(self.bias_cov, dtype=float))
        if self.bias_mean.size != a.shape[0]:
            raise DimensionError("bias dimension does not match transform")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return np.array_equal(self.matrix, np.diag(np.diag(self.matrix)))

    @classmethod
    def identity(cls, dim: int) -> "AffineTransform":
        return cls(np.eye(dim), np.zeros(dim))


@dataclass(frozen=True)
class RegressionAssignment:
    """Maps each (state, component) to a regression class with its own transform.

    ``mapping=None`` puts every component in class 0 (one global class).
    """

    transforms: tuple
    mapping: Optional[dict] = None

    def __post_init__(self):
        object.__setattr__(self, "transforms", tuple(self.transforms))
        if not self.transforms:
            raise ValueError("at least one regression class is required")
        if self.mapping is not None:
            m = {(int(q), int(k)): int(c) for (q, k), c in self.mapping.items()}
            bad = [c for c in m.values() if not 0 <= c < len(self.transforms)]
            if bad:
                raise ValueError(f"regression class ids out of range: {bad}")
            object.__setattr__(self, "mapping", m)

    def class_of(self, q: int, k: int) -> int:
        if self.mapping is None:
            return 0
        try:
            return self.mapping[(q, k)]
        except KeyError:
            raise KeyError(f"component (state={q}, k={k}) has no regression class") from None

    def transform_for(self, q: int, k: int) -> AffineTransform:
        return self.transforms[self.class_of(q, k)]

    def validate_for(self, hmm: Hmm) -> None:
        for q, gmm in enumerate(hmm.emissions):
            for k in range(len(gmm)):
                t = self.transform_for(q, k)
                if t.dim != hmm.dim:
                    raise DimensionError("transform dimension does not match the model")


@dataclass(frozen=True)
class AdditiveGaussian:
    bias_mean: np.ndarray
    bias_cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bias_mean", _vec(self.bias_mean, "bias_mean"))
        object.__setattr__(self, "bias_cov", _vec(self.bias_cov, "bias_cov"))
        if np.any(self.bias_cov < 0):
            raise ValueError("bias variances must be non-negative")

    @property
    def dim(self) -> int:
        return self.bias_mean.shape[-1]


@dataclass(frozen=True)
class Affine:
    assignment: RegressionAssignment

    @property
    def dim(self) -> int:
        return self.assignment.transforms[0].dim


@dataclass(frozen=True)
class Algonquin:
    noise_estimate: np.ndarray
    residual_cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "noise_estimate", _vec(self.noise_estimate, "noise_estimate"))
        object.__setattr__(self, "residual_cov", _vec(self.residual_cov, "residual_cov"))

    @property
    def dim(self) -> int:
        return self.noise_estimate.shape[-1]


@dataclass(frozen=True)
class SpliceRegions:
    """Region-dependent additive bias ``b ~ N(-offsets[s], covs[s])``, ``s ~ priors``.

    ``prior_means``/``prior_covs`` describe the optional separate model
    ``p(y | s)`` used by the prior-model compensation rule.
    """

    priors: np.ndarray
    offsets: np.ndarray
    covs: np.ndarray
    prior_means: Optional[np.ndarray] = None
    prior_covs: Optional[np.ndarray] = None

    def __post_init__(self):
        p = np.array(self.priors, dtype=float).reshape(-1)
        r = np.atleast_2d(np.array(self.offsets, dtype=float))
        g = np.atleast_2d(np.array(self.covs, dtype=float))
        if abs(p.sum() - 1) > 1e-12 or np.any(p < 0):
            raise ValueError("region priors must form a probability vector")
        if r.shape != g.shape or r.shape[0] != p.size:
            raise DimensionError("need one offset and one covariance per region")
        object.__setattr__(self, "priors", p)
        object.__setattr__(self, "offsets", r)
        object.__setattr__(self, "covs", g)
        for name in ("prior_means", "prior_covs"):
            v = getattr(self, name)
            if v is not None:
                v = np.atleast_2d(np.array(v, dtype=float))
                if v.shape != r.shape:
                    raise DimensionError(f"{name} must have one row per region")
                object.__setattr__(self, name, v)

    @property
    def dim(self) -> int:
        return self.offsets.shape[1]

    @property
    def has_prior_model(self) -> bool:
        return self.prior_means is not None and self.prior_covs is not None


@dataclass(frozen=True)
class PmcLogSum:
    """``y = log(alpha exp(x) + exp(b))`` with stationary ``b`` or a noise HMM."""

    alpha: float
    noise_mean: Optional[np.ndarray] = None
    noise_cov: Optional[np.ndarray] = None
    noise_hmm: Optional[Hmm] = None
    noise_absent: bool = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("PMC level factor alpha must be positive")
        for name in ("noise_mean", "noise_cov"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.array(v, dtype=float).reshape(-1))
        if not self.noise_absent and self.noise_hmm is None and (
            self.noise_mean is None or self.noise_cov is None
        ):
            raise ValueError("PMC needs a noise pdf, a noise HMM, or noise_absent=True")

    @property
    def dim(self) -> Optional[int]:
        """Feature dimension, or None for a noise-free model that fits any dimension."""
        if self.noise_mean is not None:
            return self.noise_mean.size
        return self.noise_hmm.dim if self.noise_hmm is not None else None


@dataclass(frozen=True)
class VtsLogSum:
    """``y = log(exp(h + x) + exp(c))``, ``h ~ N(h_mean, h_cov)``, ``c ~ N(c_mean, c_cov)``."""

    h_mean: np.ndarray
    h_cov: np.ndarray
    c_mean: np.ndarray
    c_cov: np.ndarray
    noise_absent: bool = False

    def __post_init__(self):
        for name in ("h_mean", "h_cov", "c_mean", "c_cov"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float).reshape(-1))

    @property
    def dim(self) -> int:
        return self.h_mean.size


@dataclass(frozen=True)
class RemosLogSum:
    """Noise ``c``, early RIR ``h`` and late-tail weight ``a`` random; tail taps deterministic."""

    c_mean: np.ndarray
    c_cov: np.ndarray
    h_mean: np.ndarray
    h_cov: np.ndarray
    a_mean: np.ndarray
    a_cov: np.ndarray
    taps: np.ndarray  # (L, D): mu_1 .. mu_L

    def __post_init__(self):
        for name in ("c_mean", "c_cov", "h_mean", "h_cov", "a_mean", "a_cov"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float).reshape(-1))
        t = np.array(self.taps, dtype=float)
        object.__setattr__(self, "taps", t.reshape(-1, self.c_mean.size))

    @property
    def dim(self) -> int:
        return self.c_mean.size

    @property
    def tail_length(self) -> int:
        return self.taps.shape[0]


@dataclass(frozen=True)
class ReverbLogSum:
    """``y = log(sum_l exp(x_{n-l} + taps[l]) + exp(b))`` for l = 0..L.

    Without ``noise_mean`` the noise term is absent.
    """

    taps: np.ndarray  # (L + 1, D): mu_0 .. mu_L
    noise_mean: Optional[np.ndarray] = None
    noise_cov: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.atleast_2d(np.array(self.taps, dtype=float))
        object.__setattr__(self, "taps", t)
        for name in ("noise_mean", "noise_cov"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.array(v, dtype=float).reshape(-1))
        if (self.noise_mean is None) != (self.noise_cov is None):
            raise ValueError("noise needs both mean and covariance")

    @property
    def dim(self) -> int:
        return self.taps.shape[1]

    @property
    def tail_length(self) -> int:
        return self.taps.shape[0] - 1

    @property
    def noise_absent(self) -> bool:
        return self.noise_mean is None

    def to_vts(self) -> VtsLogSum:
        """Single-tap model as VTS with a deterministic channel ``h = taps[0]``."""
        if self.tail_length != 0:
            raise ValueError("only a single-tap model coincides with VTS")
        d = self.dim
        if self.noise_absent:
            return VtsLogSum(self.taps[0], np.zeros(d), np.full(d, NO_NOISE_LOG), np.zeros(d),
                             noise_absent=True)
        return VtsLogSum(self.taps[0], np.zeros(d), self.noise_mean, self.noise_cov)


@dataclass(frozen=True)
class TakiguchiAR:
    """``y_n = log(exp(h + x_n) + exp(alpha + y_{n-1}))``; the tail is absent at n = 1."""

    h: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "h", np.array(self.h, dtype=float).reshape(-1))
        object.__setattr__(self, "alpha", np.broadcast_to(
            np.array(self.alpha, dtype=float), self.h.shape).copy())

    @property
    def dim(self) -> int:
        return self.h.size


FAMILIES = {
    cls.__name__: cls
    for cls in (AdditiveGaussian, Affine, Algonquin, SpliceRegions, PmcLogSum, VtsLogSum,
                RemosLogSum, ReverbLogSum, TakiguchiAR)
}


def window_length(spec) -> int:
    if isinstance(spec, RemosLogSum):
        return spec.tail_length + 1
    if isinstance(spec, ReverbLogSum):
        return spec.tail_length + 1
    return 1


def _logsum(terms: list) -> np.ndarray:
    return lse_axis(np.array(terms, dtype=float), axis=0)


def apply_model(spec, x_window, latents: dict, y_prev=None) -> np.ndarray:
    """Evaluate ``y_n`` exactly from the clean window, the latent draws and ``y_{n-1}``.

    ``x_window`` holds ``x_{n-L} .. x_n`` (oldest first); rows equal to ``-inf``
    stand for frames before the start of the utterance.
    """
    xw = np.atleast_2d(np.asarray(x_window, dtype=float))
    if xw.shape[0] != window_length(spec):
        raise DimensionError(f"{type(spec).__name__} needs a window of {window_length(spec)} "
                             f"frames, got {xw.shape[0]}")
    if spec.dim is not None and xw.shape[1] != spec.dim:
        raise DimensionError(f"clean vector has dimension {xw.shape[1]}, model {spec.dim}")
    x = xw[-1]

    if isinstance(spec, (AdditiveGaussian, SpliceRegions)):
        return x + latents["b"]
    if isinstance(spec, Affine):
        t = spec.assignment.transforms[int(latents["k"])]
        return t.matrix @ x + latents["b"]
    if isinstance(spec, Algonquin):
        return x + np.logaddexp(0.0, latents["r"] - x) + latents["b"]
    if isinstance(spec, PmcLogSum):
        scaled = np.log(spec.alpha) + x
        return scaled if spec.noise_absent else np.logaddexp(scaled, latents["b"])
    if isinstance(spec, VtsLogSum):
        speech = latents["h"] + x
        return speech if spec.noise_absent else np.logaddexp(speech, latents["c"])
    if isinstance(spec, RemosLogSum):
        terms = [latents["c"], latents["h"] + x]
        for l in range(1, spec.tail_length + 1):
            terms.append(latents["a"] + spec.taps[l - 1] + xw[-1 - l])
        return _logsum(terms)
    if isinstance(spec, ReverbLogSum):
        terms = [xw[-1 - l] + spec.taps[l] for l in range(spec.tail_length + 1)]
        if not spec.noise_absent:
            terms.append(latents["b"])
        return terms[0] if len(terms) == 1 else _logsum(terms)
    if isinstance(spec, TakiguchiAR):
        speech = spec.h + x
        if y_prev is None:
            return speech
        return np.logaddexp(speech, spec.alpha + np.asarray(y_prev, dtype=float))
    raise TypeError(f"unknown observation model {type(spec).__name__}")


def jacobian_takiguchi(spec: TakiguchiAR, y_n, y_prev=None) -> tuple[np.ndarray, float]:
    """Invert the Takiguchi model: clean vector and ``log|det dy/dx|``.

    Raises :class:`InvalidObservation` when ``y_n`` does not exceed the
    reverberation-tail floor ``alpha + y_prev`` in every dimension.
    """
    y = np.asarray(y_n, dtype=float)
    if y_prev is None:
        return y - spec.h, 0.0
    t = spec.alpha + np.asarray(y_prev, dtype=float) - y
    if np.any(t >= 0):
        raise InvalidObservation(
            f"observation below the reverberation-tail floor in dims {np.flatnonzero(t >= 0).tolist()}"
        )
    log_dydx = np.log1p(-np.exp(t))
    return y + log_dydx - spec.h, float(np.sum(log_dydx))


def stream(seed: int, utterance: int, frame: int, name: str) -> np.random.Generator:
    """Counter-based generator for one named variable of one frame."""
    key = np.random.SeedSequence([int(seed), int(utterance), int(frame) + 1,
                                  zlib.crc32(name.encode())])
    return np.random.Generator(np.random.Philox(key))


def _categorical(rng: np.random.Generator, probs: np.ndarray) -> int:
    c = np.cumsum(probs)
    idx = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
    return min(idx, probs.size - 1)


@dataclass
class SampledUtterance:
    clean: np.ndarray
    observed: np.ndarray
    states: np.ndarray
    components: np.ndarray
    latents: dict = field(default_factory=dict)
    seed: int = 0
    utterance: int = 0
    noise_states: Optional[np.ndarray] = None


def _draw_latents(spec, n: int, q: int, k: int, rng_for, noise_state: Optional[int]) -> dict:
    if isinstance(spec, AdditiveGaussian):
        return {"b": _gauss_draw(rng_for("b"), _row(spec.bias_mean, n), _row(spec.bias_cov, n))}
    if isinstance(spec, Affine):
        cls = spec.assignment.class_of(q, k)
        t = spec.assignment.transforms[cls]
        if t.bias_cov is None:
            b = t.bias_mean.copy()
        else:
            b = _gauss_draw(rng_for("b"), t.bias_mean, t.bias_cov)
        return {"k": cls, "b": b}
    if isinstance(spec, Algonquin):
        return {"r": np.array(_row(spec.noise_estimate, n)),
                "b": _gauss_draw(rng_for("b"), np.zeros(spec.dim), _row(spec.residual_cov, n))}
    if isinstance(spec, SpliceRegions):
        s = _categorical(rng_for("s"), spec.priors)
        return {"s": s, "b": _gauss_draw(rng_for("b"), -spec.offsets[s], spec.covs[s])}
    if isinstance(spec, PmcLogSum):
        if spec.noise_absent:
            return {}
        if spec.noise_hmm is not None:
            gmm = spec.noise_hmm.emissions[noise_state]
            j = _categorical(rng_for("noise_component"), gmm.weights)
            c = gmm.components[j]
            return {"b": _gauss_draw(rng_for("b"), c.mean, c.cov)}
        return {"b": _gauss_draw(rng_for("b"), spec.noise_mean, spec.noise_cov)}
    if isinstance(spec, VtsLogSum):
        out = {"h": _gauss_draw(rng_for("h"), spec.h_mean, spec.h_cov)}
        if not spec.noise_absent:
            out["c"] = _gauss_draw(rng_for("c"), spec.c_mean, spec.c_cov)
        return out
    if isinstance(spec, RemosLogSum):
        return {"c": _gauss_draw(rng_for("c"), spec.c_mean, spec.c_cov),
                "a": _gauss_draw(rng_for("a"), spec.a_mean, spec.a_cov),
                "h": _gauss_draw(rng_for("h"), spec.h_mean, spec.h_cov)}
    if isinstance(spec, ReverbLogSum):
        if spec.noise_absent:
            return {}
        return {"b": _gauss_draw(rng_for("b"), spec.noise_mean, spec.noise_cov)}
    if isinstance(spec, TakiguchiAR):
        return {}
    raise TypeError(f"unknown observation model {type(spec).__name__}")


def sample_clean(hmm: Hmm, n_frames: int, seed: int, utterance: int = 0):
    """Ancestral draw of states, components and clean vectors."""
    states = np.zeros(n_frames, dtype=int)
    comps = np.zeros(n_frames, dtype=int)
    clean = np.zeros((n_frames, hmm.dim))
    for n in range(n_frames):
        probs = hmm.initial if n == 0 else hmm.transitions[states[n - 1]]
        states[n] = _categorical(stream(seed, utterance, n, "state"), probs)
        gmm = hmm.emissions[states[n]]
        comps[n] = _categorical(stream(seed, utterance, n, "component"), gmm.weights)
        c = gmm.components[comps[n]]
        clean[n] = _gauss_draw(stream(seed, utterance, n, "x"), c.mean, c.cov)
    return states, comps, clean


def sample_utterance(spec, clean_hmm: Hmm, n_frames: int, seed: int,
                     utterance: int = 0) -> SampledUtterance:
    """Draw q -> x -> latents -> y frame by frame from one seed.

    Every variable of every frame has its own named random stream, so the
    result does not depend on evaluation order.
    """
    if n_frames < 1:
        raise ValueError("an utterance needs at least one frame")
    if spec.dim is not None and spec.dim != clean_hmm.dim:
        raise DimensionError(f"model dimension {spec.dim} vs HMM dimension {clean_hmm.dim}")
    states, comps, clean = sample_clean(clean_hmm, n_frames, seed, utterance)

    noise_states = None
    if isinstance(spec, PmcLogSum) and spec.noise_hmm is not None and not spec.noise_absent:
        nh = spec.noise_hmm
        noise_states = np.zeros(n_frames, dtype=int)
        for n in range(n_frames):
            probs = nh.initial if n == 0 else nh.transitions[noise_states[n - 1]]
            noise_states[n] = _categorical(stream(seed, utterance, n, "noise_state"), probs)

    width = window_length(spec)
    observed = np.zeros_like(clean)
    per_frame = []
    for n in range(n_frames):
        lat = _draw_latents(
            spec, n, int(states[n]), int(comps[n]),
            lambda name, _n=n: stream(seed, utterance, _n, name),
            None if noise_states is None else int(noise_states[n]),
        )
        per_frame.append(lat)
        observed[n] = apply_model(spec, _window(clean, n, width), lat,
                                  observed[n - 1] if n > 0 else None)
    latents = {}
    for name in per_frame[0]:
        latents[name] = np.array([lat[name] for lat in per_frame])
    return SampledUtterance(clean, observed, states, comps, latents, int(seed), int(utterance),
                            noise_states)


def _window(clean: np.ndarray, n: int, width: int) -> np.ndarray:
    w = np.full((width, clean.shape[1]), -np.inf)
    lo = max(0, n - width + 1)
    w[width - (n - lo + 1):] = clean[lo:n + 1]
    return w


def replay(spec, utt: SampledUtterance) -> np.ndarray:
    """Recompute the observed track from the recorded clean vectors and latents."""
    width = window_length(spec)
    out = np.zeros_like(utt.observed)
    for n in range(len(utt.observed)):
        lat = {name: v[n] for name, v in utt.latents.items()}
        out[n] = apply_model(spec, _window(utt.clean, n, width), lat,
                             out[n - 1] if n > 0 else None)
    return out
