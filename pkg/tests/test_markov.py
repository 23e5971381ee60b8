import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from botforecast import synth
from botforecast.errors import InsufficientDataError, StructuralError, ValidationError
from botforecast.events import DEFAULT_ALPHABET, StateAlphabet, collapse
from botforecast.markov import (
    TransitionMatrix,
    diagnostics,
    estimate,
    is_aperiodic,
    is_irreducible,
    periods,
    reversibility_report,
    stationary,
)

from .conftest import A, B, C, E, PUBLISHED_T, PUBLISHED_T_NOSELF, PUBLISHED_P, make_trace

TWO = StateAlphabet(("x", "y"), "y")
THREE = StateAlphabet(("x", "y", "z"), "z")


def _walk(states):
    return make_trace("h", [(k, s) for k, s in enumerate(states)])


def test_estimate_alternating(alphabet):
    m = estimate([_walk([C, A, C, A, C])], alphabet)
    assert m.probs[C, A] == 1.0 and m.probs[A, C] == 1.0
    assert m.empty_rows == [E, B]
    assert m.predict_next([E]) is None
    assert m.predict_next([C]) == (A, 1.0)


def test_estimate_invariants(alphabet):
    rng = np.random.default_rng(0)
    traces = [_walk(rng.integers(0, 4, 50).tolist()) for _ in range(5)]
    m = estimate(traces, alphabet)
    assert (np.diag(m.counts) == 0).all() and (np.diag(m.probs) == 0).all()
    rows = m.counts.sum(axis=1)
    for i in range(4):
        if rows[i]:
            assert m.probs[i].sum() == pytest.approx(1, abs=1e-9)
            assert np.allclose(m.probs[i], m.counts[i] / rows[i])


def test_include_self_on_raw_and_collapsed_agree(alphabet):
    tr = _walk([C, C, C, A, A, C, E])
    raw = estimate([tr], alphabet, include_self=True)
    col = estimate([collapse(tr)], alphabet, include_self=True)
    assert (raw.counts == col.counts).all()
    assert raw.counts[C, C] == 2 and raw.counts[A, A] == 1
    # excluding self-transitions: raw and collapsed inputs give the same counts
    assert (estimate([tr], alphabet).counts == estimate([collapse(tr)], alphabet).counts).all()


def test_no_cross_host_transitions(alphabet):
    m = estimate([_walk([E, B]), make_trace("g", [(0, C), (1, A)])], alphabet)
    assert m.counts[B, C] == 0
    assert m.total_transitions == 2


def test_count_additivity(alphabet):
    rng = np.random.default_rng(1)
    s1 = [_walk(rng.integers(0, 4, 40).tolist()) for _ in range(3)]
    s2 = [_walk(rng.integers(0, 4, 40).tolist()) for _ in range(4)]
    pooled = estimate(s1 + s2, alphabet)
    assert (pooled.counts == estimate(s1, alphabet).counts + estimate(s2, alphabet).counts).all()


def test_estimate_needs_transitions(alphabet):
    with pytest.raises(InsufficientDataError):
        estimate([make_trace("h", [(0, A)])], alphabet)


def test_smoothing_fills_empty_rows(alphabet):
    m = estimate([_walk([C, A, C])], alphabet, alpha=1.0)
    assert m.probs[E].tolist() == pytest.approx([0, 1 / 3, 1 / 3, 1 / 3])
    assert m.empty_rows == [E, B]  # still flagged: no observed data
    assert m.probs[C, A] == pytest.approx(2 / 4)


def test_estimate_recovers_generator(alphabet):
    t = np.array([[0, 0.3, 0.3, 0.4], [0.2, 0, 0.5, 0.3], [0.3, 0.3, 0, 0.4], [0.25, 0.35, 0.4, 0]])
    spec = synth.GeneratorSpec(t, synth.interval_masses(t, [1] * 8), n_hosts=10, events_per_host=10_000, seed=5)
    m = estimate(synth.generate(spec), alphabet)
    assert np.abs(m.probs - t).max() <= 0.02


# -- stationary -------------------------------------------------------------


def test_stationary_two_state():
    p = stationary(TransitionMatrix.from_probs(TWO, [[0, 1], [1, 0]]))
    assert p.p.tolist() == pytest.approx([0.5, 0.5])


def test_stationary_published_matrix(alphabet):
    p = stationary(TransitionMatrix.from_probs(alphabet, PUBLISHED_T))
    for got, want in zip(p, PUBLISHED_P):
        assert abs(got - want) <= 0.01


def _power_oracle(t, k=10_000):
    # repeated squaring: T^(2^14) >= T^(10^4) rows converge to p
    m = t.copy()
    for _ in range(14):
        m = m @ m
    return m[0]


def test_stationary_matches_power_iteration(alphabet):
    rng = np.random.default_rng(2)
    for _ in range(20):
        t = rng.random((4, 4)) + 0.01
        t /= t.sum(axis=1, keepdims=True)
        p = stationary(TransitionMatrix.from_probs(alphabet, t))
        assert np.allclose(p.p, _power_oracle(t), atol=1e-9)


def _irreducible_matrices():
    return arrays(np.float64, (4, 4), elements=st.floats(0.0, 1.0)).map(
        lambda m: (m + 1e-3) / (m + 1e-3).sum(axis=1, keepdims=True)
    )


@settings(max_examples=200, deadline=None)
@given(_irreducible_matrices())
def test_stationary_flow_balance(t):
    p = stationary(TransitionMatrix.from_probs(DEFAULT_ALPHABET, t)).p
    assert p.sum() == pytest.approx(1, abs=1e-9)
    assert (p >= 0).all()
    assert np.abs(p @ t - p).max() <= 1e-9


def test_stationary_reducible_names_pair(alphabet):
    t = np.eye(4)[[1, 0, 3, 2]]  # two disjoint 2-cycles
    with pytest.raises(StructuralError) as info:
        stationary(TransitionMatrix.from_probs(alphabet, t))
    assert info.value.pair == (0, 2)
    assert "CncCommunication" in str(info.value) and "Exploit" in str(info.value)


# -- structure --------------------------------------------------------------


def test_full_mesh(alphabet):
    m = TransitionMatrix.from_probs(alphabet, np.full((4, 4), 0.25))
    assert is_irreducible(m) and is_aperiodic(m)


def test_two_cycle_has_period_two():
    m = TransitionMatrix.from_probs(TWO, [[0, 1], [1, 0]])
    assert is_irreducible(m) and not is_aperiodic(m)
    assert periods(m) == [2, 2]


def test_three_cycle_period():
    m = TransitionMatrix.from_probs(THREE, [[0, 1, 0], [0, 0, 1], [1, 0, 0]])
    assert periods(m) == [3, 3, 3]


def test_no_self_matrix_aperiodic(alphabet):
    m = TransitionMatrix.from_probs(alphabet, PUBLISHED_T_NOSELF)
    assert is_irreducible(m) and is_aperiodic(m)


def test_period_oracle_on_random_sparse_graphs():
    # period = gcd of return lengths k <= 2n^2 with (A^k)_ii > 0
    from math import gcd

    rng = np.random.default_rng(3)
    alpha5 = StateAlphabet(tuple("abcde"), "e")
    for _ in range(100):
        adj = (rng.random((5, 5)) < 0.3).astype(float)
        m = TransitionMatrix.from_probs(alpha5, adj)
        want = [0] * 5
        power = np.eye(5)
        for k in range(1, 51):
            power = np.minimum(power @ adj, 1)
            for i in range(5):
                if power[i, i] > 0:
                    want[i] = gcd(want[i], k)
        assert periods(m) == want


# -- reversibility -----------------------------------------------------------


def test_reversibility_symmetric():
    m = TransitionMatrix.from_probs(TWO, [[0.3, 0.7], [0.7, 0.3]])
    (row,) = reversibility_report(m, stationary(m))
    assert row[:2] == (0, 1) and row[2] == pytest.approx(0) and row[3]


def test_reversibility_published_dominant_pair(alphabet):
    m = TransitionMatrix.from_probs(alphabet, PUBLISHED_T)
    report = {(i, j): (r, ok) for i, j, r, ok in reversibility_report(m, PUBLISHED_P, tol=0.001)}
    r, ok = report[C, A]
    # hand arithmetic on the published values: |0.5739*0.073 - 0.4222*0.099| = 0.0000969;
    # rows are renormalised first (they sum to 1 +- 1e-4), which moves it by < 1e-4
    assert abs(0.5739 * 0.073 - 0.4222 * 0.099) == pytest.approx(0.0000969, abs=1e-9)
    assert r == pytest.approx(0.0000969, abs=1e-4)
    assert ok


def test_reversibility_three_cycle():
    # flow goes one way round: P_i t_ij = 0.8/3, P_j t_ji = 0.2/3
    m = TransitionMatrix.from_probs(THREE, [[0, 0.8, 0.2], [0.2, 0, 0.8], [0.8, 0.2, 0]])
    p = stationary(m)
    assert p.p.tolist() == pytest.approx([1 / 3] * 3)
    for _, _, r, ok in reversibility_report(m, p, tol=1e-3):
        assert r == pytest.approx(0.6 / 3) and not ok


def test_reversibility_dimension_mismatch(alphabet):
    m = TransitionMatrix.from_probs(alphabet, PUBLISHED_T)
    with pytest.raises(ValidationError):
        reversibility_report(m, [0.5, 0.5])


def test_diagnostics_block(alphabet):
    d = diagnostics(TransitionMatrix.from_probs(alphabet, PUBLISHED_T_NOSELF))
    assert d["irreducible"] and d["aperiodic"]
    assert sum(d["stationary"]) == pytest.approx(1)
    assert len(d["reversibility"]) == 6
