import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from botforecast import synth
from botforecast.errors import InsufficientDataError, ValidationError
from botforecast.events import collapse
from botforecast.markov import estimate
from botforecast.semi_markov import (
    DEFAULT_INTERVALS,
    IntervalSet,
    SemiMarkovModel,
    classify_interval,
    estimate_smc,
    holding_time_cdf,
    interval_error,
    predict_holding_interval,
)

from .conftest import A, B, C, E, make_trace, random_spec


def _linear_scan(boundaries, dt):
    for k, b in enumerate(boundaries, start=1):
        if dt <= b:
            return k
    return len(boundaries) + 1


@pytest.mark.parametrize("dt, want", [(0.5, 1), (1.0, 1), (10.0, 2), (65, 8), (0.0, 1), (60.0, 7), (60.0001, 8)])
def test_classify_examples(dt, want):
    assert classify_interval(DEFAULT_INTERVALS, dt) == want


def test_classify_boundaries_agree_with_scan():
    b = DEFAULT_INTERVALS.boundaries
    for x in b:
        for dt in (x - 1e-9, x, x + 1e-9, np.nextafter(x, 0), np.nextafter(x, np.inf)):
            assert classify_interval(DEFAULT_INTERVALS, dt) == _linear_scan(b, dt)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e6, allow_nan=False))
def test_classify_total(dt):
    assert classify_interval(DEFAULT_INTERVALS, dt) == _linear_scan(DEFAULT_INTERVALS.boundaries, dt)


def test_classify_negative():
    with pytest.raises(ValidationError):
        classify_interval(DEFAULT_INTERVALS, -0.1)


@pytest.mark.parametrize("b", [(), (0, 1), (2, 1), (1, 1), (1, float("inf"))])
def test_interval_set_invariants(b):
    with pytest.raises(ValidationError):
        IntervalSet(b)


def test_interval_bounds():
    assert len(DEFAULT_INTERVALS) == 8
    assert DEFAULT_INTERVALS.bounds(1) == (0.0, 1.0)
    assert DEFAULT_INTERVALS.bounds(8) == (60.0, float("inf"))


def test_single_transition_model(alphabet):
    smc = estimate_smc([collapse(make_trace("h", [(0, C), (5, A)]))], alphabet)
    expected = np.zeros((8, 4, 4))
    expected[1, C, A] = 1.0  # interval 2
    assert (smc.q == expected).all()
    assert holding_time_cdf(smc, C, 1) == 0.0
    assert holding_time_cdf(smc, C, 10) == 1.0
    assert holding_time_cdf(smc, A, 10) is None
    assert predict_holding_interval(smc, C) == 2
    assert predict_holding_interval(smc, A) is None


def test_estimate_smc_needs_transitions(alphabet):
    with pytest.raises(InsufficientDataError):
        estimate_smc([collapse(make_trace("h", [(0, C), (5, C)]))], alphabet)


def _model_from_mass(alphabet, state, masses):
    counts = np.zeros((8, 4, 4), dtype=np.int64)
    for n, c in masses.items():
        counts[n - 1, state, A if state != A else C] = c
    return SemiMarkovModel.from_counts(alphabet, DEFAULT_INTERVALS, counts)


def test_predict_mode(alphabet):
    assert predict_holding_interval(_model_from_mass(alphabet, C, {1: 7, 2: 3}), C) == 1


def test_predict_tie_goes_earliest(alphabet):
    assert predict_holding_interval(_model_from_mass(alphabet, C, {2: 5, 5: 5}), C) == 2


def test_predict_conditioned(alphabet):
    counts = np.zeros((8, 4, 4), dtype=np.int64)
    counts[0, C, A] = 6
    counts[3, C, E] = 4
    counts[4, C, E] = 1
    smc = SemiMarkovModel.from_counts(alphabet, DEFAULT_INTERVALS, counts)
    assert predict_holding_interval(smc, C) == 1
    assert predict_holding_interval(smc, C, condition_on=E) == 4
    assert predict_holding_interval(smc, C, condition_on=B) is None


def _random_counts(rng):
    counts = rng.integers(0, 20, (8, 4, 4)) * (rng.random((8, 4, 4)) < 0.5)
    counts[:, np.arange(4), np.arange(4)] = 0
    return counts


def test_partition_identity_and_cdf_properties(alphabet):
    rng = np.random.default_rng(4)
    for _ in range(50):
        smc = SemiMarkovModel.from_counts(alphabet, DEFAULT_INTERVALS, _random_counts(rng))
        assert np.abs(smc.q.sum(axis=0) - smc.embedded.probs).max() <= 1e-9
        assert (smc.q >= 0).all()
        for s in range(4):
            if not smc.has_data(s):
                continue
            # brute-force cumulative CDF at each right edge
            grid = [0.5, *DEFAULT_INTERVALS.boundaries, 61, 1e9]
            hs = [holding_time_cdf(smc, s, t) for t in grid]
            assert all(x <= y + 1e-12 for x, y in zip(hs, hs[1:]))
            tot = smc.counts_q[:, s, :].sum()
            for t, h in zip(grid, hs):
                n = classify_interval(DEFAULT_INTERVALS, t)
                assert h == pytest.approx(smc.counts_q[:n, s, :].sum() / tot, abs=1e-12)
            assert hs[-1] == pytest.approx(1, abs=1e-9)


def test_prediction_scale_invariant(alphabet):
    rng = np.random.default_rng(5)
    for _ in range(50):
        counts = _random_counts(rng)
        a = SemiMarkovModel.from_counts(alphabet, DEFAULT_INTERVALS, counts)
        b = SemiMarkovModel.from_counts(alphabet, DEFAULT_INTERVALS, counts * 7)
        for s in range(4):
            assert predict_holding_interval(a, s) == predict_holding_interval(b, s)
            for j in range(4):
                if s != j:
                    assert predict_holding_interval(a, s, j) == predict_holding_interval(b, s, j)


def test_embedded_matches_markov_estimate(alphabet):
    spec = random_spec(np.random.default_rng(6), n_hosts=4, events_per_host=500)
    traces = [collapse(t) for t in synth.generate(spec)]
    smc = estimate_smc(traces, alphabet)
    assert (smc.embedded.counts == estimate(traces, alphabet).counts).all()


def test_empirical_mode_recovered(alphabet):
    # each state's interval mass has a clear mode the generator knows
    rng = np.random.default_rng(7)
    hits = total = 0
    for seed in range(5):
        spec = random_spec(rng, n_hosts=10, events_per_host=1000, seed=seed)
        truth = spec.q.sum(axis=2)  # (intervals, N)
        smc = estimate_smc([collapse(t) for t in synth.generate(spec)], alphabet)
        for s in range(4):
            if smc.counts_q[:, s, :].sum() < 100:
                continue
            ordered = np.sort(truth[:, s])
            if ordered[-1] - ordered[-2] < 0.05 * truth[:, s].sum():
                continue  # no clear mode
            total += 1
            hits += predict_holding_interval(smc, s) == int(np.argmax(truth[:, s])) + 1
    assert total >= 10
    assert hits / total >= 0.95


@pytest.mark.parametrize("p, a, want", [(3, 5, -2), (4, 4, 0), (8, 1, 7)])
def test_interval_error(p, a, want):
    assert interval_error(p, a) == want


def test_state_check(alphabet):
    smc = estimate_smc([collapse(make_trace("h", [(0, C), (5, A)]))], alphabet)
    with pytest.raises(ValidationError):
        predict_holding_interval(smc, 9)
    with pytest.raises(ValidationError):
        holding_time_cdf(smc, -1, 1.0)


def test_shape_mismatch(alphabet):
    with pytest.raises(ValidationError):
        SemiMarkovModel.from_counts(alphabet, IntervalSet((1.0, 2.0)), np.zeros((8, 4, 4)))
