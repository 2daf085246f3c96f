import math

import numpy as np
import pytest

from robusthmm.compensation import (
    BayesianMllrScorer,
    MapPrior,
    MllrPrior,
    cmllr_transform,
    map_adapt_means,
    mllr_adapt_means,
)
from robusthmm.compensation.adaptation import AdaptedHmm
from robusthmm.hmm import ConventionalScorer, FrameEvidence
from robusthmm.obsmodels import AffineTransform, RegressionAssignment, sample_clean
from robusthmm.oracles import Integrand, QuadratureConfig, normal_logpdf, quadrature_emission
from robusthmm.synthetic import random_hmm

from conftest import single_gaussian_hmm


def _global(a, b):
    return RegressionAssignment((AffineTransform(a, b),))


def _hmm(seed, dim=2):
    return random_hmm(np.random.default_rng(seed), 3, dim, 2)


def test_identity_transforms_leave_model_unchanged():
    hmm = _hmm(0)
    asg = _global(np.eye(2), np.zeros(2))
    assert cmllr_transform(hmm, asg).hmm.same_as(hmm)
    assert mllr_adapt_means(hmm, asg).hmm.same_as(hmm)


def test_direct_formulas():
    hmm = single_gaussian_hmm([[3.0]], [[1.0]])
    c = cmllr_transform(hmm, _global([[2.0]], [1.0])).hmm.emissions[0].components[0]
    assert c.mean.tolist() == [7.0] and c.cov.tolist() == [4.0]
    m = mllr_adapt_means(hmm, _global([[2.0]], [1.0])).hmm.emissions[0].components[0]
    assert m.mean.tolist() == [7.0] and m.cov.tolist() == [1.0]


def test_mllr_differs_from_cmllr_only_in_covariance():
    hmm = _hmm(1)
    asg = _global([[1.2, 0.3], [0.0, 0.8]], [0.5, -0.1])
    c, m = cmllr_transform(hmm, asg).hmm, mllr_adapt_means(hmm, asg).hmm
    for gc, gm, gb in zip(c.emissions, m.emissions, hmm.emissions):
        assert np.array_equal(gc.weights, gm.weights)
        for a, b, base in zip(gc.components, gm.components, gb.components):
            assert np.array_equal(a.mean, b.mean)
            assert np.array_equal(b.cov, base.cov)
            assert not np.array_equal(a.full_cov(), b.full_cov())


def test_adapters_preserve_topology():
    hmm = _hmm(2)
    out = cmllr_transform(hmm, _global(2 * np.eye(2), np.ones(2)))
    assert np.array_equal(out.hmm.transitions, hmm.transitions)
    with pytest.raises(ValueError):
        AdaptedHmm(hmm, _hmm(3), "bogus")


def test_cmllr_rejects_random_bias():
    with pytest.raises(ValueError):
        cmllr_transform(_hmm(0), RegressionAssignment((AffineTransform(np.eye(2), np.zeros(2), [0.1, 0.1]),)))


def test_per_component_classes():
    hmm = _hmm(4)
    mapping = {(q, k): k for q in range(3) for k in range(2)}
    asg = RegressionAssignment((AffineTransform.identity(2), AffineTransform(np.eye(2), [1.0, 1.0])), mapping)
    out = mllr_adapt_means(hmm, asg).hmm
    for g, base in zip(out.emissions, hmm.emissions):
        assert np.array_equal(g.components[0].mean, base.components[0].mean)
        np.testing.assert_allclose(g.components[1].mean, base.components[1].mean + 1)


# --- MAP -------------------------------------------------------------------


def test_map_equal_weight_average():
    hmm = single_gaussian_hmm([[5.0]], [[1.0]])
    out = map_adapt_means(hmm, MapPrior(1.0, [[[0.0]]]), [([[2.0]], [0])])
    assert out.hmm.emissions[0].components[0].mean.tolist() == [1.0]


def _map_task(seed=0):
    truth = random_hmm(np.random.default_rng(seed), 2, 2, 1, mean_scale=3.0)
    data = []
    for u in range(5):
        states, _, clean = sample_clean(truth, 40, seed=seed, utterance=u)
        data.append((clean + 0.7, states))
    return truth, data


def test_map_infinite_tau_keeps_prior_means():
    truth, data = _map_task()
    prior_means = [[[1.0, 2.0]], [[-3.0, 0.5]]]
    out = map_adapt_means(truth, MapPrior(math.inf, prior_means), data)
    for q in range(2):
        assert out.hmm.emissions[q].components[0].mean.tolist() == prior_means[q][0]


def test_map_zero_tau_hard_alignment_gives_sample_means():
    truth, data = _map_task()
    out = map_adapt_means(truth, MapPrior(0.0), data)
    obs = np.concatenate([d[0] for d in data])
    states = np.concatenate([d[1] for d in data])
    for q in range(2):
        np.testing.assert_allclose(out.hmm.emissions[q].components[0].mean, obs[states == q].mean(axis=0),
                                   rtol=0, atol=1e-12)


def test_map_em_objective_non_decreasing():
    truth, data = _map_task(3)
    soft = [(o, None) for o, _ in data]
    out = map_adapt_means(truth, MapPrior(2.0), soft, iterations=10, tolerance=0.0)
    hist = out.params["objective"]
    assert len(hist) == 11
    assert all(b >= a - 1e-9 for a, b in zip(hist, hist[1:]))
    assert hist[-1] > hist[0]


def test_map_rejects_negative_tau():
    with pytest.raises(ValueError):
        MapPrior(-1.0)


# --- Bayesian MLLR ---------------------------------------------------------


def _table(scorer, ys):
    return np.array([scorer.frame_scores(n, FrameEvidence(y)) for n, y in enumerate(ys)])


def test_bayes_mllr_dirac_identity_is_conventional():
    hmm = _hmm(5)
    ys = np.random.default_rng(6).normal(0, 2, (5, 2))
    sc = BayesianMllrScorer(hmm, MllrPrior.dirac(np.ones(2), np.zeros(2)))
    assert np.array_equal(_table(sc, ys), _table(ConventionalScorer(hmm), ys))


def test_bayes_mllr_dirac_equals_mllr():
    hmm = _hmm(7)
    ys = np.random.default_rng(8).normal(0, 2, (5, 2))
    a, c = np.array([1.3, 0.6]), np.array([0.4, -0.2])
    sc = BayesianMllrScorer(hmm, MllrPrior.dirac(a, c))
    ml = mllr_adapt_means(hmm, _global(np.diag(a), c)).hmm
    assert np.array_equal(_table(sc, ys), _table(ConventionalScorer(ml), ys))


def test_bayes_mllr_quadrature_over_parameters():
    rng = np.random.default_rng(9)
    for _ in range(5):
        m, v, y = rng.normal(0, 1.5), rng.uniform(.3, 2), rng.normal(0, 2)
        sc = BayesianMllrScorer(single_gaussian_hmm([[m]], [[v]]), MllrPrior([1.0], [0.1], [0.0], [0.1]))

        def log_f(p, _y):
            a, c = p[:, 0], p[:, 1]
            return normal_logpdf(a, 1.0, 0.1) + normal_logpdf(c, 0.0, 0.1) + normal_logpdf(y, a * m + c, v)

        ref = quadrature_emission(Integrand(log_f, [1.0, 0.0], [math.sqrt(0.1)] * 2), cfg=QuadratureConfig(points=512))
        assert sc.score(0, 0, FrameEvidence([y])) == pytest.approx(ref, rel=1e-6)


def test_bayes_mllr_rejects_full_transform_prior():
    with pytest.raises(ValueError):
        MllrPrior(np.eye(2), np.ones((2, 2)), np.zeros(2), np.zeros(2))
