"""Discrete-time semi-Markov chain with per-interval transition matrices.

The interval matrices ``q[n][i][j]`` hold the fraction of all transitions
leaving state i that went to j with a holding time in interval n, so summing
them over n gives the embedded (self-transition-free) matrix.

Two readings of the holding-time formula exist. Taking the interval matrices
themselves as F_ij and multiplying by P_ij again counts the embedded
probability twice, so :func:`holding_time_cdf` uses the conditional form
F_ij = cumulative q_ij / P_ij. A cumulative H is maximal at the last
interval by construction, so interval prediction takes the argmax of the
per-interval mass instead.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InsufficientDataError, ValidationError
from .events import CollapsedTrace, StateAlphabet
from .markov import TransitionMatrix

DEFAULT_BOUNDARIES = (1.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0)


@dataclass(frozen=True)
class IntervalSet:
    """Left-open, right-closed bins over (0, inf) given by their right edges.

    The last bin is unbounded, so ``len(self)`` is one more than the number
    of boundaries. Indices are 1-based.
    """

    boundaries: tuple[float, ...] = DEFAULT_BOUNDARIES

    def __post_init__(self):
        b = tuple(float(x) for x in self.boundaries)
        object.__setattr__(self, "boundaries", b)
        if not b or b[0] <= 0:
            raise ValidationError("first interval boundary must be > 0")
        if any(y <= x for x, y in zip(b, b[1:])):
            raise ValidationError("interval boundaries must be strictly increasing")
        if not all(math.isfinite(x) for x in b):
            raise ValidationError("interval boundaries must be finite")

    def __len__(self) -> int:
        return len(self.boundaries) + 1

    def bounds(self, index: int) -> tuple[float, float]:
        """(lower, upper] edges of 1-based interval ``index``; upper may be inf."""
        if not 1 <= index <= len(self):
            raise ValidationError(f"interval index {index} out of range")
        lo = 0.0 if index == 1 else self.boundaries[index - 2]
        hi = math.inf if index == len(self) else self.boundaries[index - 1]
        return lo, hi


DEFAULT_INTERVALS = IntervalSet()


def classify_interval(intervals: IntervalSet, dt: float) -> int:
    """1-based interval containing ``dt``; a zero gap falls in interval 1."""
    if dt < 0 or math.isnan(dt):
        raise ValidationError(f"negative holding time {dt}")
    return bisect.bisect_left(intervals.boundaries, dt) + 1


@dataclass
class SemiMarkovModel:
    embedded: TransitionMatrix
    intervals: IntervalSet
    counts_q: np.ndarray  # (n_intervals, N, N) integers
    q: np.ndarray

    def __post_init__(self):
        self.counts_q = np.asarray(self.counts_q, dtype=np.int64)
        self.q = np.asarray(self.q, dtype=float)
        n = len(self.embedded.alphabet)
        if self.q.shape != (len(self.intervals), n, n) or self.counts_q.shape != self.q.shape:
            raise ValidationError(f"interval matrices must have shape {(len(self.intervals), n, n)}")
        # per-state interval mass and its earliest argmax, used on every prediction
        self.mass = self.q.sum(axis=2)  # (n_intervals, N)
        self._mode = {}
        for i in range(n):
            if self.mass[:, i].sum() > 0:
                self._mode[i] = int(np.argmax(self.mass[:, i])) + 1

    @classmethod
    def from_counts(cls, alphabet: StateAlphabet, intervals: IntervalSet, counts_q) -> "SemiMarkovModel":
        counts_q = np.asarray(counts_q, dtype=np.int64)
        pooled = counts_q.sum(axis=0)
        embedded = TransitionMatrix.from_counts(alphabet, pooled, include_self=False)
        totals = pooled.sum(axis=1)[None, :, None].astype(float)
        q = np.divide(counts_q, totals, out=np.zeros(counts_q.shape), where=totals > 0)
        return cls(embedded, intervals, counts_q, q)

    @property
    def alphabet(self) -> StateAlphabet:
        return self.embedded.alphabet

    def has_data(self, state: int) -> bool:
        return state in self._mode


def estimate_smc(
    traces: Sequence[CollapsedTrace],
    alphabet: StateAlphabet,
    intervals: IntervalSet = DEFAULT_INTERVALS,
) -> SemiMarkovModel:
    """Bin every within-host transition of collapsed traces by its holding time."""
    n = len(alphabet)
    counts = np.zeros((len(intervals), n, n), dtype=np.int64)
    bounds = intervals.boundaries
    for tr in traces:
        evs = tr.events
        for a, b in zip(evs, evs[1:]):
            if a.state == b.state:
                continue
            dt = b.t - a.t
            counts[bisect.bisect_left(bounds, dt), a.state, b.state] += 1
    if counts.sum() < 1:
        raise InsufficientDataError("no transitions in the training traces")
    return SemiMarkovModel.from_counts(alphabet, intervals, counts)


def holding_time_cdf(model: SemiMarkovModel, state: int, t_x: float) -> float | None:
    """P(holding time in ``state`` <= t_x), resolved to interval granularity.

    Returns None when the state was never left in training.
    """
    model.alphabet.check(state)
    if not model.has_data(state):
        return None
    n = classify_interval(model.intervals, t_x)
    p = model.embedded.probs[state]
    cum = model.q[:n, state, :].sum(axis=0)
    # F_ij conditional on the transition going to j
    f = np.divide(cum, p, out=np.zeros_like(cum), where=p > 0)
    return float(min(1.0, (f * p).sum()))


def predict_holding_interval(model: SemiMarkovModel, state: int, condition_on: int | None = None) -> int | None:
    """Most probable holding interval for ``state``, earliest on ties.

    By default the mass is marginalised over next states; ``condition_on``
    restricts it to transitions into that state. None means no prediction.
    """
    model.alphabet.check(state)
    if condition_on is None:
        return model._mode.get(state)
    col = model.q[:, state, condition_on]
    if col.sum() <= 0:
        return None
    return int(np.argmax(col)) + 1


def interval_error(predicted: int, actual: int) -> int:
    """Signed interval error; negative means the prediction was early."""
    return predicted - actual
