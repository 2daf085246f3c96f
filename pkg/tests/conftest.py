import numpy as np
import pytest

from robusthmm.gauss import Gaussian, Gmm
from robusthmm.hmm import PAST, PREV_STATE, EmissionScorer, FrameEvidence, Hmm


class TableScorer(EmissionScorer):
    """Emission scores read from an (N, S) table."""

    def __init__(self, hmm, table):
        super().__init__(hmm)
        self.table = np.asarray(table, dtype=float)

    def score(self, n, q, frame, context=None, k=None, q_prev=None):
        return float(self.table[n, q])


class PairTableScorer(EmissionScorer):
    """Scores ``first[q]`` at n = 0 and ``pair[n, q_prev, q]`` afterwards."""

    consumes = frozenset({PREV_STATE})

    def __init__(self, hmm, first, pair):
        super().__init__(hmm)
        self.first, self.pair = np.asarray(first), np.asarray(pair)

    def score(self, n, q, frame, context=None, k=None, q_prev=None):
        return float(self.first[q] if q_prev is None else self.pair[n, q_prev, q])


class PastIgnoringScorer(TableScorer):
    consumes = frozenset({PAST})


def dummy_hmm(initial, transitions, dim=1):
    s = len(initial)
    ems = tuple(Gmm.single(Gaussian(np.zeros(dim), np.ones(dim))) for _ in range(s))
    return Hmm(np.asarray(initial, float), np.asarray(transitions, float), ems)


def random_probs(rng, shape):
    p = rng.uniform(0.05, 1.0, shape)
    p /= p.sum(axis=-1, keepdims=True)
    return p


def frames_for(n_frames, dim=1):
    return [FrameEvidence(np.zeros(dim)) for _ in range(n_frames)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def single_gaussian_hmm(means, variances):
    """One single-Gaussian state per row of ``means``; uniform transitions."""
    means = np.atleast_2d(np.asarray(means, float))
    variances = np.atleast_2d(np.asarray(variances, float))
    s = len(means)
    ems = tuple(Gmm.single(Gaussian(m, v)) for m, v in zip(means, variances))
    return Hmm(np.full(s, 1 / s), np.full((s, s), 1 / s), ems)


def conventional_table(hmm, ys):
    from robusthmm.hmm import ConventionalScorer
    sc = ConventionalScorer(hmm)
    return np.array([sc.frame_scores(n, FrameEvidence(y)) for n, y in enumerate(ys)])


ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
