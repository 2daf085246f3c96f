import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robusthmm import _core
from robusthmm.decode import (
    NumericError,
    StateSpaceTooLarge,
    decode_combined_order,
    decode_conditional,
    forward_log_score,
    product_log_params,
    state_posteriors,
    viterbi,
    viterbi_3d,
)
from robusthmm.hmm import ConventionalScorer, IncompatibleScorerError
from robusthmm.oracles import brute_force_sequence_score
from robusthmm.synthetic import random_hmm

from conftest import (
    PairTableScorer,
    PastIgnoringScorer,
    TableScorer,
    dummy_hmm,
    frames_for,
    random_probs,
)


def test_single_state_two_frames():
    hmm = dummy_hmm([1.0], [[1.0]])
    scorer = TableScorer(hmm, np.log([[0.5], [0.5]]))
    assert forward_log_score(hmm, scorer, frames_for(2)) == pytest.approx(math.log(0.25), abs=1e-15)


def test_base_case_single_frame():
    hmm = dummy_hmm([0.3, 0.7], [[0.5, 0.5], [0.5, 0.5]])
    table = np.log([[0.2, 0.9]])
    expected = math.log(0.3 * 0.2 + 0.7 * 0.9)
    assert forward_log_score(hmm, TableScorer(hmm, table), frames_for(1)) == pytest.approx(expected, abs=1e-15)


def test_hand_computed_two_state_two_frame():
    # cross-check of the enumeration oracle itself
    pi = np.array([0.6, 0.4])
    a = np.array([[0.7, 0.3], [0.2, 0.8]])
    e = np.array([[0.5, 0.1], [0.2, 0.6]])
    hmm = dummy_hmm(pi, a)
    scorer = TableScorer(hmm, np.log(e))
    total = sum(pi[i] * e[0, i] * a[i, j] * e[1, j] for i in range(2) for j in range(2))
    assert brute_force_sequence_score(hmm, scorer, frames_for(2)) == pytest.approx(math.log(total), abs=1e-14)
    best, path = brute_force_sequence_score(hmm, scorer, frames_for(2), mode="max")
    cands = {(i, j): pi[i] * e[0, i] * a[i, j] * e[1, j] for i in range(2) for j in range(2)}
    assert tuple(path) == max(cands, key=cands.get)
    assert best == pytest.approx(math.log(max(cands.values())), abs=1e-14)


@pytest.mark.parametrize("backend", _core.available_backends())
def test_dp_matches_enumeration_random(backend):
    prev = _core.use_backend(backend)
    try:
        rng = np.random.default_rng(7)
        for _ in range(40):
            s, n = int(rng.integers(1, 5)), int(rng.integers(1, 7))
            hmm = dummy_hmm(random_probs(rng, s), random_probs(rng, (s, s)))
            scorer = TableScorer(hmm, rng.normal(-2, 3, (n, s)))
            fw = forward_log_score(hmm, scorer, frames_for(n))
            bf = brute_force_sequence_score(hmm, scorer, frames_for(n))
            assert fw == pytest.approx(bf, rel=1e-10)
            res = viterbi(hmm, scorer, frames_for(n))
            best, path = brute_force_sequence_score(hmm, scorer, frames_for(n), mode="max")
            assert res.total_log_score == pytest.approx(best, rel=1e-10)
            assert res.path.tolist() == path.tolist()
            assert res.total_log_score <= fw + 1e-12
    finally:
        _core.use_backend(prev)


def test_backends_agree():
    if len(_core.available_backends()) < 2:
        pytest.skip("compiled core not built")
    rng = np.random.default_rng(3)
    li, la = np.log(random_probs(rng, 6)), np.log(random_probs(rng, (6, 6)))
    em = rng.normal(0, 2, (50, 6))
    pair = rng.normal(0, 2, (50, 6, 6))
    out = {}
    for b in ("compiled", "python"):
        _core.use_backend(b)
        out[b] = (_core.viterbi(li, la, em), _core.forward_matrix(li, la, em),
                  _core.backward_matrix(la, em), _core.viterbi_pair(li, la, em[0], pair))
    _core.use_backend("compiled")
    c, p = out["compiled"], out["python"]
    assert c[0][0].tolist() == p[0][0].tolist() and c[0][1] == p[0][1]
    np.testing.assert_allclose(c[1], p[1], rtol=1e-13)
    np.testing.assert_allclose(c[2], p[2], rtol=1e-13)
    assert c[3][0].tolist() == p[3][0].tolist() and c[3][1] == p[3][1]


def test_total_score_decomposes_along_path(rng):
    hmm = random_hmm(rng, 3, 2, 2)
    y = rng.normal(0, 2, (8, 2))
    res = viterbi(hmm, ConventionalScorer(hmm), y)
    li, la = hmm.log_initial(), hmm.log_transitions()
    recon = li[res.path[0]] + res.frame_scores.sum() + sum(
        la[res.path[n - 1], res.path[n]] for n in range(1, len(res.path)))
    assert res.total_log_score == pytest.approx(recon, abs=1e-10)


def test_deterministic_chain_forces_path():
    perm = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], float)
    hmm = dummy_hmm([0, 0, 1.0], perm)
    table = np.random.default_rng(1).normal(0, 5, (5, 3))
    res = viterbi(hmm, TableScorer(hmm, table), frames_for(5))
    assert res.path.tolist() == [2, 0, 1, 2, 0]


def test_state_independent_emissions_follow_transitions():
    hmm = dummy_hmm([0.2, 0.8], [[0.9, 0.1], [0.4, 0.6]])
    table = np.tile(np.array([[-1.3], [0.2], [5.0]]), (1, 2))
    res = viterbi(hmm, TableScorer(hmm, table), frames_for(3))
    _, path = brute_force_sequence_score(hmm, TableScorer(hmm, np.zeros((3, 2))), frames_for(3), "max")
    assert res.path.tolist() == path.tolist()


def test_tie_breaking_prefers_lower_index():
    hmm = dummy_hmm([0.5, 0.5], [[0.5, 0.5], [0.5, 0.5]])
    res = viterbi(hmm, TableScorer(hmm, np.zeros((4, 2))), frames_for(4))
    assert res.path.tolist() == [0, 0, 0, 0]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_scaled_likelihood_argmax_invariance(seed):
    rng = np.random.default_rng(seed)
    s, n = 3, 6
    hmm = dummy_hmm(random_probs(rng, s), random_probs(rng, (s, s)))
    table = rng.normal(0, 2, (n, s))
    shift = rng.normal(0, 50, (n, 1))
    a = viterbi(hmm, TableScorer(hmm, table), frames_for(n))
    b = viterbi(hmm, TableScorer(hmm, table - shift), frames_for(n))
    assert a.path.tolist() == b.path.tolist()


def test_neg_inf_emissions_are_legal():
    hmm = dummy_hmm([0.5, 0.5], [[0.5, 0.5], [0.5, 0.5]])
    table = np.array([[0.0, -np.inf], [-np.inf, 0.0]])
    res = viterbi(hmm, TableScorer(hmm, table), frames_for(2))
    assert res.path.tolist() == [0, 1]
    assert math.isfinite(forward_log_score(hmm, TableScorer(hmm, table), frames_for(2)))


def test_nan_emission_raises():
    hmm = dummy_hmm([1.0], [[1.0]])
    with pytest.raises(NumericError):
        viterbi(hmm, TableScorer(hmm, [[np.nan]]), frames_for(1))


def test_empty_sequence_rejected():
    hmm = dummy_hmm([1.0], [[1.0]])
    with pytest.raises(ValueError):
        forward_log_score(hmm, TableScorer(hmm, [[0.0]]), [])


def test_incompatible_scorer_rejected():
    hmm = dummy_hmm([1.0], [[1.0]])
    pair = PairTableScorer(hmm, [0.0], np.zeros((2, 1, 1)))
    with pytest.raises(IncompatibleScorerError):
        forward_log_score(hmm, pair, frames_for(2))
    with pytest.raises(IncompatibleScorerError):
        viterbi(hmm, PastIgnoringScorer(hmm, [[0.0]]), frames_for(1))


def test_state_posteriors_sum_to_one(rng):
    hmm = random_hmm(rng, 3, 2)
    y = rng.normal(0, 1, (7, 2))
    gamma, total = state_posteriors(hmm, ConventionalScorer(hmm), y)
    np.testing.assert_allclose(gamma.sum(axis=1), 1.0, atol=1e-12)
    assert total == pytest.approx(forward_log_score(hmm, ConventionalScorer(hmm), y), abs=1e-12)


# --- 3D decoder -----------------------------------------------------------


def _joint_table(rng, n, s, r):
    table = rng.normal(0, 2, (n, s, r))
    return table, (lambda k, q, qn, frame: float(table[k, q, qn]))


def test_viterbi_3d_matches_enumeration():
    rng = np.random.default_rng(11)
    for _ in range(10):
        speech = dummy_hmm(random_probs(rng, 2), random_probs(rng, (2, 2)))
        noise = dummy_hmm(random_probs(rng, 2), random_probs(rng, (2, 2)))
        table, joint = _joint_table(rng, 3, 2, 2)
        res = viterbi_3d(speech, noise, joint, frames_for(3))
        best, best_paths = -np.inf, None
        import itertools
        for qs in itertools.product(range(2), repeat=3):
            for rs in itertools.product(range(2), repeat=3):
                v = math.log(speech.initial[qs[0]]) + math.log(noise.initial[rs[0]]) + table[0, qs[0], rs[0]]
                for n in range(1, 3):
                    v += (math.log(speech.transitions[qs[n - 1], qs[n]])
                          + math.log(noise.transitions[rs[n - 1], rs[n]]) + table[n, qs[n], rs[n]])
                if v > best:
                    best, best_paths = v, (qs, rs)
        assert res.log_score == pytest.approx(best, rel=1e-12)
        assert tuple(res.speech_path) == best_paths[0]
        assert tuple(res.noise_path) == best_paths[1]


def test_viterbi_3d_equals_product_chain():
    rng = np.random.default_rng(5)
    for _ in range(20):
        s, r, n = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 7))
        speech = dummy_hmm(random_probs(rng, s), random_probs(rng, (s, s)))
        noise = dummy_hmm(random_probs(rng, r), random_probs(rng, (r, r)))
        table, joint = _joint_table(rng, n, s, r)
        res = viterbi_3d(speech, noise, joint, frames_for(n))
        li, lt = product_log_params(speech, noise)
        path, score = _core.viterbi(li, lt, table.reshape(n, s * r))
        assert (res.speech_path * r + res.noise_path).tolist() == path.tolist()
        assert res.log_score == pytest.approx(score, rel=1e-12)


def test_viterbi_3d_single_noise_state_reduces():
    rng = np.random.default_rng(2)
    speech = dummy_hmm(random_probs(rng, 3), random_probs(rng, (3, 3)))
    noise = dummy_hmm([1.0], [[1.0]])
    table = rng.normal(0, 2, (5, 3))
    res3 = viterbi_3d(speech, noise, lambda n, q, qn, f: float(table[n, q]), frames_for(5))
    res = viterbi(speech, TableScorer(speech, table), frames_for(5))
    assert res3.speech_path.tolist() == res.path.tolist()
    assert res3.log_score == pytest.approx(res.total_log_score, abs=1e-12)


def test_viterbi_3d_separable_uniform():
    rng = np.random.default_rng(9)
    u2 = np.full((2, 2), 0.5)
    speech, noise = dummy_hmm([0.5, 0.5], u2), dummy_hmm([0.5, 0.5], u2)
    f, g = rng.normal(0, 2, (4, 2)), rng.normal(0, 2, (4, 2))
    res3 = viterbi_3d(speech, noise, lambda n, q, qn, fr: float(f[n, q] + g[n, qn]), frames_for(4))
    assert res3.speech_path.tolist() == viterbi(speech, TableScorer(speech, f), frames_for(4)).path.tolist()


def test_viterbi_3d_size_guard():
    big = dummy_hmm(np.full(400, 1 / 400), np.full((400, 400), 1 / 400))
    with pytest.raises(StateSpaceTooLarge):
        viterbi_3d(big, big, lambda *a: 0.0, frames_for(1))


# --- conditional / combined-order -----------------------------------------


def test_conditional_without_shifts_is_viterbi():
    rng = np.random.default_rng(4)
    hmm = dummy_hmm(random_probs(rng, 3), random_probs(rng, (3, 3)))
    table = rng.normal(0, 1, (6, 3))
    a = decode_conditional(hmm, TableScorer(hmm, table), frames_for(6), shifts=())
    b = decode_conditional(hmm, PastIgnoringScorer(hmm, table), frames_for(6), shifts=(1, 2))
    c = viterbi(hmm, TableScorer(hmm, table), frames_for(6))
    assert a.path.tolist() == b.path.tolist() == c.path.tolist()
    assert a.total_log_score == c.total_log_score


def test_conditional_rejects_nonpositive_shift():
    hmm = dummy_hmm([1.0], [[1.0]])
    with pytest.raises(ValueError):
        decode_conditional(hmm, TableScorer(hmm, [[0.0]]), frames_for(1), shifts=(0,))


def test_combined_order_reduces_to_viterbi():
    rng = np.random.default_rng(8)
    hmm = dummy_hmm(random_probs(rng, 3), random_probs(rng, (3, 3)))
    table = rng.normal(0, 1, (5, 3))
    pair = np.broadcast_to(table[:, None, :], (5, 3, 3)).copy()
    a = decode_combined_order(hmm, PairTableScorer(hmm, table[0], pair), frames_for(5))
    b = viterbi(hmm, TableScorer(hmm, table), frames_for(5))
    assert a.path.tolist() == b.path.tolist()
    assert a.total_log_score == pytest.approx(b.total_log_score, abs=1e-12)


def test_combined_order_matches_enumeration():
    rng = np.random.default_rng(21)
    for _ in range(20):
        hmm = dummy_hmm(random_probs(rng, 2), random_probs(rng, (2, 2)))
        first, pair = rng.normal(0, 2, 2), rng.normal(0, 2, (3, 2, 2))
        scorer = PairTableScorer(hmm, first, pair)
        res = decode_combined_order(hmm, scorer, frames_for(3))
        best, path = brute_force_sequence_score(hmm, scorer, frames_for(3), mode="max")
        assert res.path.tolist() == path.tolist()
        assert res.total_log_score == pytest.approx(best, rel=1e-12)
        assert res.total_log_score == pytest.approx(
            hmm.log_initial()[res.path[0]] + res.frame_scores.sum()
            + sum(hmm.log_transitions()[res.path[n - 1], res.path[n]] for n in (1, 2)), abs=1e-10)


def test_combined_order_neg_inf_pair_never_used():
    hmm = dummy_hmm([0.5, 0.5], np.full((2, 2), 0.5))
    pair = np.zeros((3, 2, 2))
    pair[:, 0, 1] = -np.inf
    pair[:, 0, 0] = 1.0
    pair[:, 1, 1] = 5.0
    res = decode_combined_order(hmm, PairTableScorer(hmm, [1.0, 0.0], pair), frames_for(3))
    for n in range(1, 3):
        assert (res.path[n - 1], res.path[n]) != (0, 1)


def test_backends_agree_across_extreme_score_ranges():
    # the best predecessor cannot reach state 1, the others sit ~800 nats lower
    if len(_core.available_backends()) < 2:
        pytest.skip("compiled core not built")
    li = np.log([0.5, 0.25, 0.25])
    with np.errstate(divide="ignore"):
        la = np.log(np.array([[1.0, 0.0, 0.0], [0.2, 0.5, 0.3], [0.3, 0.3, 0.4]]))
    em = np.array([[0.0, -800.0, -805.0], [0.0, 0.0, -2000.0], [-900.0, 0.0, 0.0], [0.0, -np.inf, 0.0]])
    out = {}
    for b in ("compiled", "python"):
        prev = _core.use_backend(b)
        try:
            out[b] = (_core.forward_matrix(li, la, em), _core.backward_matrix(la, em))
        finally:
            _core.use_backend(prev)
    for c, p in zip(out["compiled"], out["python"]):
        assert np.array_equal(np.isinf(c), np.isinf(p))
        fin = np.isfinite(p)
        np.testing.assert_allclose(c[fin], p[fin], rtol=1e-13)
    assert np.isfinite(out["compiled"][0][1, 1])
