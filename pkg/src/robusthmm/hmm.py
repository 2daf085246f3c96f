"""HMM data model, per-frame evidence and the emission-scorer contract."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .gauss import Gmm, DimensionError, gmm_logpdf, lse_axis, _mvn_logpdf

LogProb = float


class IncompatibleScorerError(ValueError):
    """The scorer consumes an argument this decoder does not provide."""


@dataclass(frozen=True, eq=False)
class Hmm:
    """Hidden Markov model with one GMM emission per state."""

    initial: np.ndarray
    transitions: np.ndarray
    emissions: tuple
    model_id: str = "hmm"

    def __post_init__(self) -> None:
        pi = np.array(self.initial, dtype=float).reshape(-1)
        a = np.array(self.transitions, dtype=float)
        ems = tuple(e if isinstance(e, Gmm) else Gmm.single(e) for e in self.emissions)
        s = pi.size
        if s == 0:
            raise ValueError("an HMM needs at least one state")
        if a.shape != (s, s) or len(ems) != s:
            raise DimensionError(
                f"{s} initial probabilities, transitions {a.shape}, {len(ems)} emissions"
            )
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise ValueError("initial probabilities must sum to 1")
        if np.any(a < 0) or np.any(np.abs(a.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("transition rows must sum to 1")
        if len({e.dim for e in ems}) != 1:
            raise DimensionError("all emissions must share one feature dimension")
        pi.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "initial", pi)
        object.__setattr__(self, "transitions", a)
        object.__setattr__(self, "emissions", ems)

    @property
    def num_states(self) -> int:
        return self.initial.size

    @property
    def dim(self) -> int:
        return self.emissions[0].dim

    def log_initial(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.initial)

    def log_transitions(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.transitions)

    def with_emissions(self, emissions: Sequence[Gmm], model_id: Optional[str] = None) -> "Hmm":
        return Hmm(self.initial, self.transitions, tuple(emissions), model_id or self.model_id)

    def same_as(self, other: "Hmm") -> bool:
        return (
            np.array_equal(self.initial, other.initial)
            and np.array_equal(self.transitions, other.transitions)
            and all(a.same_as(b) for a, b in zip(self.emissions, other.emissions))
        )


@dataclass(frozen=True, eq=False)
class FrameEvidence:
    """Observed vector y_n plus optional uncertainty and reliability information.

    Exactly one uncertainty form may be present: posterior moments of the
    clean feature (``posterior_mean``/``posterior_cov``) or moments of the
    additive bias (``bias_mean``/``bias_cov``).  ``reliable`` is a boolean
    mask over dimensions; its complement is the unreliable set.
    """

    observed: np.ndarray
    posterior_mean: Optional[np.ndarray] = None
    posterior_cov: Optional[np.ndarray] = None
    bias_mean: Optional[np.ndarray] = None
    bias_cov: Optional[np.ndarray] = None
    reliable: Optional[np.ndarray] = None
    imputed: Optional[np.ndarray] = None
    region_posterior: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        y = np.array(self.observed, dtype=float).reshape(-1)
        object.__setattr__(self, "observed", y)
        for name in ("posterior_mean", "posterior_cov", "bias_mean", "bias_cov", "imputed",
                     "region_posterior"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.array(v, dtype=float))
        if self.reliable is not None:
            r = np.array(self.reliable, dtype=bool).reshape(-1)
            if r.size != y.size:
                raise DimensionError("reliability mask must cover every dimension")
            object.__setattr__(self, "reliable", r)
        has_post = self.posterior_mean is not None or self.posterior_cov is not None
        has_bias = self.bias_mean is not None or self.bias_cov is not None
        if has_post and has_bias:
            raise ValueError("a frame carries either posterior moments or bias moments, not both")

    @property
    def dim(self) -> int:
        return self.observed.size

    @property
    def unreliable(self) -> Optional[np.ndarray]:
        return None if self.reliable is None else ~self.reliable


def as_evidence(observations) -> list[FrameEvidence]:
    """Wrap an (N, D) array (or an existing evidence list) as FrameEvidence frames."""
    if len(observations) == 0:
        return []
    if isinstance(observations[0], FrameEvidence):
        return list(observations)
    arr = np.asarray(observations, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return [FrameEvidence(row) for row in arr]


@dataclass
class DecodeContext:
    """Decoder-published information a scorer may read.

    ``past`` holds the previous observations at the conditioning shifts
    (``None`` where the shift reaches before the first frame).  ``history``
    returns the best partial path's previous states ``[q_{n-1}, q_{n-2}, ...]``
    for a candidate current state; it is set only by decoders that publish
    partial-path context.
    """

    sequence: Sequence[FrameEvidence] = ()
    past: tuple = ()
    history: Optional[Callable[[int, int], list]] = None


@dataclass
class DecodeResult:
    path: np.ndarray
    total_log_score: float
    frame_scores: np.ndarray
    decoder_kind: str = "viterbi"
    diagnostics: list = field(default_factory=list)


# Optional arguments a scorer can consume.
COMPONENT = "component"
PREV_STATE = "prev_state"
PAST = "past"
PARTIAL_PATH = "partial_path"


class EmissionScorer:
    """Per-frame, per-state emission log score.

    Subclasses implement :meth:`score` and list in ``consumes`` which
    optional arguments they read, so decoders can refuse incompatible
    scorers.  Scorers are stateless: equal arguments give equal results.
    """

    consumes: frozenset = frozenset()

    def __init__(self, hmm: Hmm):
        self.hmm = hmm

    @property
    def num_states(self) -> int:
        return self.hmm.num_states

    def score(self, n: int, q: int, frame: FrameEvidence, context: Optional[DecodeContext] = None,
              k: Optional[int] = None, q_prev: Optional[int] = None) -> LogProb:
        raise NotImplementedError

    def frame_scores(self, n: int, frame: FrameEvidence,
                     context: Optional[DecodeContext] = None) -> np.ndarray:
        return np.array([self.score(n, q, frame, context) for q in range(self.num_states)])

    def diagnose(self, n: int, frame: FrameEvidence, context: Optional[DecodeContext] = None):
        """Return a message if frame ``n`` is invalid for this scorer, else None."""
        return None


class ComponentScorer(EmissionScorer):
    """Scorer that compensates each Gaussian component and keeps mixture weights.

    Subclasses implement :meth:`component_score`; :meth:`score` mixes the
    component scores with the unchanged weights, or returns the single
    component's score when ``k`` is given.
    """

    consumes = frozenset({COMPONENT})

    def component_score(self, n: int, q: int, k: int, frame: FrameEvidence,
                        context: Optional[DecodeContext]) -> LogProb:
        raise NotImplementedError

    def score(self, n, q, frame, context=None, k=None, q_prev=None):
        if k is not None:
            return self.component_score(n, q, k, frame, context)
        gmm = self.hmm.emissions[q]
        comps = np.array([self.component_score(n, q, j, frame, context) for j in range(len(gmm))])
        if comps.size == 1:
            return float(comps[0])
        with np.errstate(divide="ignore"):
            return float(lse_axis(np.log(gmm.weights) + comps))


class ConventionalScorer(EmissionScorer):
    """Plain GMM likelihood ``p(y_n | q_n)`` of the (possibly adapted) model."""

    consumes = frozenset({COMPONENT})

    def score(self, n, q, frame, context=None, k=None, q_prev=None):
        gmm = self.hmm.emissions[q]
        if k is not None:
            c = gmm.components[k]
            return float(_mvn_logpdf(frame.observed, c.mean, c.cov))
        return gmm_logpdf(frame.observed, gmm)


def require_compatible(scorer: EmissionScorer, allowed: frozenset, decoder: str) -> None:
    extra = set(scorer.consumes) - set(allowed) - {COMPONENT}
    if extra:
        raise IncompatibleScorerError(
            f"{decoder} cannot supply {sorted(extra)} required by {type(scorer).__name__}"
        )
