import math

import numpy as np
import pytest

from robusthmm.compensation import (
    ArrowoodScorer,
    DvcScorer,
    IonScorer,
    JudScorer,
    MissingEvidenceError,
    SpliceScorer,
    cmllr_transform,
)
from robusthmm.decode import viterbi
from robusthmm.gauss import CovarianceError
from robusthmm.hmm import ConventionalScorer, FrameEvidence
from robusthmm.obsmodels import AffineTransform, RegressionAssignment, SpliceRegions
from robusthmm.oracles import Integrand, normal_logpdf, quadrature_emission
from robusthmm.synthetic import random_hmm

from conftest import conventional_table, single_gaussian_hmm


def _rand_hmm(seed, dim=2, k=2):
    return random_hmm(np.random.default_rng(seed), 3, dim, k)


def _ys(seed, n=6, dim=2):
    return np.random.default_rng(seed + 100).normal(0, 2, (n, dim))


def _table(scorer, frames):
    return np.array([scorer.frame_scores(n, f) for n, f in enumerate(frames)])


def _quad(log_f, center, scale):
    return quadrature_emission(Integrand(lambda p, y: log_f(p[:, 0]), [center], [scale]))


# --- Arrowood --------------------------------------------------------------


def test_arrowood_zero_uncertainty_is_conventional():
    hmm, ys = _rand_hmm(1), _ys(1)
    frames = [FrameEvidence(y, bias_cov=np.zeros(2)) for y in ys]
    np.testing.assert_allclose(_table(ArrowoodScorer(hmm), frames), conventional_table(hmm, ys), atol=1e-12, rtol=0)


def test_arrowood_example_value():
    hmm = single_gaussian_hmm([[0.0]], [[1.0]])
    s = ArrowoodScorer(hmm).score(0, 0, FrameEvidence([1.0], bias_cov=[1.0]))
    assert math.exp(s) == pytest.approx(0.21969564473386, abs=1e-12)


def test_arrowood_large_uncertainty_flattens():
    hmm = single_gaussian_hmm([[-1.0], [2.0]], [[0.5], [1.0]])
    gaps = []
    for cb in (10.0, 100.0, 1e3, 1e4, 1e5):
        sc = ArrowoodScorer(hmm).frame_scores(0, FrameEvidence([0.3], bias_cov=[cb]))
        gaps.append(abs(sc[0] - sc[1]))
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-3


def test_arrowood_needs_uncertainty():
    hmm = single_gaussian_hmm([[0.0]], [[1.0]])
    with pytest.raises(MissingEvidenceError):
        ArrowoodScorer(hmm).score(0, 0, FrameEvidence([0.0]))


def test_arrowood_quadrature_random():
    rng = np.random.default_rng(3)
    for _ in range(10):
        m, v, cb, mb, y = rng.normal(), rng.uniform(0.2, 2), rng.uniform(0.1, 2), rng.normal(0, .5), rng.normal(0, 2)
        hmm = single_gaussian_hmm([[m]], [[v]])
        s = ArrowoodScorer(hmm).score(0, 0, FrameEvidence([y], bias_mean=[mb], bias_cov=[cb]))
        ref = _quad(lambda x: normal_logpdf(x, m, v) + normal_logpdf(y, x + mb, cb), m, math.sqrt(v))
        assert s == pytest.approx(ref, rel=1e-6)


# --- DVC -------------------------------------------------------------------


def test_dvc_dirac_posterior_is_plugin():
    hmm, ys = _rand_hmm(2), _ys(2)
    frames = [FrameEvidence(y, posterior_mean=y, posterior_cov=np.zeros(2)) for y in ys]
    np.testing.assert_allclose(_table(DvcScorer(hmm), frames), conventional_table(hmm, ys), atol=1e-12, rtol=0)


def test_dvc_symmetric_value_and_swap():
    hmm = single_gaussian_hmm([[0.0]], [[1.0]])
    s = DvcScorer(hmm).score(0, 0, FrameEvidence([9.0], posterior_mean=[1.0], posterior_cov=[1.0]))
    assert s == pytest.approx(-0.25 - 0.5 * math.log(4 * math.pi), abs=1e-14)
    a = DvcScorer(single_gaussian_hmm([[0.3]], [[0.7]])).score(
        0, 0, FrameEvidence([0.0], posterior_mean=[-1.1], posterior_cov=[2.5]))
    b = DvcScorer(single_gaussian_hmm([[-1.1]], [[2.5]])).score(
        0, 0, FrameEvidence([0.0], posterior_mean=[0.3], posterior_cov=[0.7]))
    assert a == b


def test_dvc_quadrature_random():
    rng = np.random.default_rng(4)
    for _ in range(10):
        m, v, pm, pv = rng.normal(), rng.uniform(.2, 2), rng.normal(), rng.uniform(.2, 2)
        s = DvcScorer(single_gaussian_hmm([[m]], [[v]])).score(
            0, 0, FrameEvidence([0.0], posterior_mean=[pm], posterior_cov=[pv]))
        ref = _quad(lambda x: normal_logpdf(x, m, v) + normal_logpdf(x, pm, pv), m, math.sqrt(min(v, pv)))
        assert s == pytest.approx(ref, rel=1e-6)


# --- SPLICE ----------------------------------------------------------------


def test_splice_single_neutral_region_is_conventional():
    hmm, ys = _rand_hmm(5), _ys(5)
    spec = SpliceRegions([1.0], [[0.0, 0.0]], [[0.0, 0.0]])
    frames = [FrameEvidence(y) for y in ys]
    np.testing.assert_allclose(_table(SpliceScorer(hmm, spec), frames), conventional_table(hmm, ys), atol=1e-12, rtol=0)


def test_splice_dirac_offset_scores_shifted_observation():
    hmm, ys = _rand_hmm(6), _ys(6)
    r0 = np.array([0.4, -1.3])
    spec = SpliceRegions([1.0], [r0], [[0.0, 0.0]])
    frames = [FrameEvidence(y) for y in ys]
    np.testing.assert_allclose(_table(SpliceScorer(hmm, spec), frames), conventional_table(hmm, ys + r0),
                               atol=1e-12, rtol=0)


def test_splice_two_regions_quadrature():
    rng = np.random.default_rng(7)
    for _ in range(10):
        m, v, y = rng.normal(), rng.uniform(.3, 2), rng.normal(0, 2)
        p = rng.uniform(.2, .8)
        r, g = rng.normal(0, 1, 2), rng.uniform(.1, 1, 2)
        spec = SpliceRegions([p, 1 - p], r[:, None], g[:, None])
        s = SpliceScorer(single_gaussian_hmm([[m]], [[v]]), spec).score(0, 0, FrameEvidence([y]))

        def log_f(x):
            cond = np.logaddexp(math.log(p) + normal_logpdf(y, x - r[0], g[0]),
                                math.log(1 - p) + normal_logpdf(y, x - r[1], g[1]))
            return normal_logpdf(x, m, v) + cond

        assert s == pytest.approx(_quad(log_f, m, math.sqrt(v)), rel=1e-6)


def test_splice_prior_model_single_region_quadrature():
    # with one region the moment-matched denominator is exact
    rng = np.random.default_rng(8)
    for _ in range(10):
        m, v, y = rng.normal(), rng.uniform(.3, 1.5), rng.normal()
        r, g, pm, pv = rng.normal(), rng.uniform(.2, 1), rng.normal(), rng.uniform(1, 3)
        spec = SpliceRegions([1.0], [[r]], [[g]], prior_means=[[pm]], prior_covs=[[pv]])
        s = SpliceScorer(single_gaussian_hmm([[m]], [[v]]), spec, "prior_model").score(0, 0, FrameEvidence([y]))

        def log_f(x):
            joint = normal_logpdf(x, y + r, g) + normal_logpdf(y, pm, pv)
            return normal_logpdf(x, m, v) + joint - normal_logpdf(x, pm + r, pv + g)

        lam = 1 / v + 1 / g - 1 / (pv + g)
        center = (m / v + (y + r) / g - (pm + r) / (pv + g)) / lam
        assert s == pytest.approx(_quad(log_f, center, math.sqrt(1 / lam)), rel=1e-6)


def test_splice_prior_model_requires_prior():
    with pytest.raises(ValueError):
        SpliceScorer(_rand_hmm(0), SpliceRegions([1.0], [[0, 0]], [[1, 1]]), "prior_model")


# --- JUD -------------------------------------------------------------------


def _assign(a, b, cb=None):
    return RegressionAssignment((AffineTransform(a, b, cb),))


def test_jud_neutral_is_conventional():
    hmm, ys = _rand_hmm(9), _ys(9)
    sc = JudScorer(hmm, _assign(np.eye(2), np.zeros(2), np.zeros(2)))
    frames = [FrameEvidence(y) for y in ys]
    np.testing.assert_allclose(_table(sc, frames), conventional_table(hmm, ys), atol=1e-12, rtol=0)


def test_jud_example_value():
    s = JudScorer(single_gaussian_hmm([[0.0]], [[1.0]]), _assign([[2.0]], [0.0])).score(0, 0, FrameEvidence([0.0]))
    assert s == pytest.approx(-0.5 * math.log(8 * math.pi), abs=1e-14)


def test_jud_equals_cmllr_with_deterministic_bias():
    rng = np.random.default_rng(10)
    for _ in range(10):
        hmm = random_hmm(rng, 2, 1, 2)
        a, b = rng.normal(1, .5, (1, 1)), rng.normal(0, 1, 1)
        asg = _assign(a, b)
        ys = rng.normal(0, 2, (4, 1))
        frames = [FrameEvidence(y) for y in ys]
        jud = _table(JudScorer(hmm, asg), frames)
        cm = _table(ConventionalScorer(cmllr_transform(hmm, asg).hmm), frames)
        assert np.array_equal(jud, cm)


def test_jud_per_class_transforms_and_quadrature():
    hmm = single_gaussian_hmm([[0.5], [-1.0]], [[0.8], [1.2]])
    asg = RegressionAssignment((AffineTransform([[1.5]], [0.2], [0.3]), AffineTransform([[0.7]], [-0.4], [0.5])),
                               {(0, 0): 0, (1, 0): 1})
    sc = JudScorer(hmm, asg)
    y = 0.9
    for q, (a, mb, cb) in enumerate([(1.5, 0.2, 0.3), (0.7, -0.4, 0.5)]):
        m, v = hmm.emissions[q].components[0].mean[0], hmm.emissions[q].components[0].cov[0]
        ref = _quad(lambda x: normal_logpdf(x, m, v) + normal_logpdf(y, a * x + mb, cb), m, math.sqrt(v))
        assert sc.score(0, q, FrameEvidence([y])) == pytest.approx(ref, rel=1e-6)


def test_jud_unassigned_component():
    hmm = single_gaussian_hmm([[0.0], [1.0]], [[1.0], [1.0]])
    with pytest.raises(KeyError):
        JudScorer(hmm, RegressionAssignment((AffineTransform.identity(1),), {(0, 0): 0}))


def test_jud_full_transform_2d():
    hmm = single_gaussian_hmm([[0.5, -0.5]], [[1.0, 2.0]])
    a = np.array([[1.0, 0.5], [0.2, 1.5]])
    sc = JudScorer(hmm, _assign(a, [0.1, 0.2], [0.3, 0.4]))
    y = np.array([0.2, 0.7])
    cov = a @ np.diag([1.0, 2.0]) @ a.T + np.diag([0.3, 0.4])
    mean = a @ np.array([0.5, -0.5]) + [0.1, 0.2]
    d = y - mean
    ref = -0.5 * (2 * math.log(2 * math.pi) + math.log(np.linalg.det(cov)) + d @ np.linalg.solve(cov, d))
    assert sc.score(0, 0, FrameEvidence(y)) == pytest.approx(ref, abs=1e-12)


# --- Ion -------------------------------------------------------------------


def test_ion_posterior_equal_prior_is_state_independent():
    hmm = _rand_hmm(11)
    sc = IonScorer(hmm, [0.2, -0.1], [3.0, 4.0])
    frames = [FrameEvidence(y, posterior_mean=[0.2, -0.1], posterior_cov=[3.0, 4.0]) for y in _ys(11)]
    table = _table(sc, frames)
    np.testing.assert_allclose(table, 0.0, atol=1e-12)
    res = viterbi(hmm, sc, frames)
    from robusthmm.oracles import brute_force_sequence_score
    from conftest import TableScorer
    _, path = brute_force_sequence_score(hmm, TableScorer(hmm, np.zeros_like(table)), frames, "max")
    assert res.path.tolist() == path.tolist()


def test_ion_flat_prior_limit_is_dvc_plus_constant():
    hmm, ys = _rand_hmm(12), _ys(12)
    pm, pv = np.array([0.5, 0.1]), np.array([0.7, 1.3])
    frames = [FrameEvidence(y, posterior_mean=pm + y, posterior_cov=pv) for y in ys]
    big = 1e8
    ion = _table(IonScorer(hmm, [0.0, 0.0], [big, big]), frames)
    dvc = _table(DvcScorer(hmm), frames)
    diff = ion - dvc
    assert np.ptp(diff) < 1e-6
    assert diff.mean() == pytest.approx(math.log(2 * math.pi * big), rel=1e-6)


def test_ion_quadrature_random():
    rng = np.random.default_rng(13)
    for _ in range(10):
        m, v = rng.normal(), rng.uniform(.3, 2)
        pm, pv = rng.normal(), rng.uniform(.2, 1)
        prm, prv = rng.normal(), rng.uniform(1.5, 4)
        s = IonScorer(single_gaussian_hmm([[m]], [[v]]), [prm], [prv]).score(
            0, 0, FrameEvidence([0.0], posterior_mean=[pm], posterior_cov=[pv]))
        ref = _quad(lambda x: normal_logpdf(x, pm, pv) - normal_logpdf(x, prm, prv) + normal_logpdf(x, m, v),
                    pm, math.sqrt(min(v, pv)))
        assert s == pytest.approx(ref, rel=1e-6)


def test_ion_rejects_sharp_prior():
    sc = IonScorer(single_gaussian_hmm([[0.0]], [[1.0]]), [0.0], [0.5])
    with pytest.raises(CovarianceError, match="dims \\[0\\]"):
        sc.score(0, 0, FrameEvidence([0.0], posterior_mean=[0.0], posterior_cov=[1.0]))
