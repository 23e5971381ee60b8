"""Order-1 Markov chain: estimation, stationary distribution, structural checks."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from math import gcd
from typing import Sequence

import numpy as np

from .errors import InsufficientDataError, StructuralError, ValidationError
from .events import CollapsedTrace, HostTrace, StateAlphabet

ROW_TOL = 1e-9


@dataclass
class TransitionMatrix:
    """Row-stochastic transition probabilities with the counts they came from.

    Rows whose state was never left in training are all zero and listed in
    ``empty_rows``; they yield no prediction.
    """

    alphabet: StateAlphabet
    counts: np.ndarray
    probs: np.ndarray
    include_self: bool = False
    alpha: float = 0.0
    empty_rows: list[int] = field(default_factory=list)

    order = 1

    def __post_init__(self):
        n = len(self.alphabet)
        self.counts = np.asarray(self.counts)
        self.probs = np.asarray(self.probs, dtype=float)
        if self.counts.shape != (n, n) or self.probs.shape != (n, n):
            raise ValidationError(f"matrix shape must be {(n, n)}")
        self._argmax = {}
        for i in range(n):
            row = self.probs[i]
            if row.sum() > 0:
                j = int(np.argmax(row))  # first maximum = lowest index
                self._argmax[i] = (j, float(row[j]))

    @classmethod
    def from_counts(
        cls, alphabet: StateAlphabet, counts, include_self: bool = False, alpha: float = 0.0
    ) -> "TransitionMatrix":
        counts = np.asarray(counts, dtype=np.int64)
        n = len(alphabet)
        if alpha < 0:
            raise ValidationError("alpha must be >= 0")
        smoothed = counts.astype(float)
        if alpha:
            mask = np.ones((n, n)) if include_self else 1 - np.eye(n)
            smoothed = smoothed + alpha * mask
        totals = smoothed.sum(axis=1, keepdims=True)
        probs = np.divide(smoothed, totals, out=np.zeros_like(smoothed), where=totals > 0)
        empty = [i for i in range(n) if counts[i].sum() == 0]
        return cls(alphabet, counts, probs, include_self, alpha, empty)

    @classmethod
    def from_probs(cls, alphabet: StateAlphabet, probs, include_self: bool = True) -> "TransitionMatrix":
        """Wrap a published probability matrix; rows are renormalised to sum to 1."""
        probs = np.asarray(probs, dtype=float)
        if (probs < 0).any():
            raise ValidationError("probabilities must be non-negative")
        totals = probs.sum(axis=1, keepdims=True)
        probs = np.divide(probs, totals, out=np.zeros_like(probs), where=totals > 0)
        n = len(alphabet)
        empty = [i for i in range(n) if totals[i, 0] == 0]
        return cls(alphabet, np.zeros((n, n), dtype=np.int64), probs, include_self, 0.0, empty)

    def predict_next(self, context: Sequence[int]) -> tuple[int, float] | None:
        """Most likely next state after ``context[-1]``; ties go to the lowest index."""
        return self._argmax.get(context[-1]) if len(context) else None

    @property
    def total_transitions(self) -> int:
        return int(self.counts.sum())


def count_pairs(traces: Sequence[HostTrace | CollapsedTrace], n: int, include_self: bool = False) -> np.ndarray:
    counts = np.zeros((n, n), dtype=np.int64)
    for tr in traces:
        states = [e.state for e in tr.events]
        for a, b in zip(states, states[1:]):
            if a != b or include_self:
                counts[a, b] += 1
        if include_self and isinstance(tr, CollapsedTrace):
            # a run of k alerts holds k-1 self-transitions
            for ev, k in zip(tr.events, tr.run_lengths):
                counts[ev.state, ev.state] += k - 1
    return counts


def estimate(
    traces: Sequence[HostTrace | CollapsedTrace],
    alphabet: StateAlphabet,
    include_self: bool = False,
    alpha: float = 0.0,
) -> TransitionMatrix:
    """Maximum-likelihood transition matrix pooled over per-host counts.

    Transitions never cross host boundaries. With ``include_self=False``
    consecutive equal states are not counted, which gives the same counts as
    estimating on collapsed traces.
    """
    counts = count_pairs(traces, len(alphabet), include_self)
    if counts.sum() < 1:
        raise InsufficientDataError("no transitions in the training traces")
    return TransitionMatrix.from_counts(alphabet, counts, include_self, alpha)


# -- structure --------------------------------------------------------------


def _successors(probs: np.ndarray) -> list[list[int]]:
    return [list(np.flatnonzero(row > 0)) for row in probs]


def _reachable(adj: list[list[int]], start: int) -> set[int]:
    seen = {start}
    todo = [start]
    while todo:
        u = todo.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                todo.append(v)
    return seen


def unreachable_pair(matrix: TransitionMatrix) -> tuple[int, int] | None:
    """First (i, j) such that j cannot be reached from i, or None."""
    adj = _successors(matrix.probs)
    n = len(adj)
    for i in range(n):
        reach = _reachable(adj, i)
        for j in range(n):
            if j not in reach:
                return (i, j)
    return None


def is_irreducible(matrix: TransitionMatrix) -> bool:
    adj = _successors(matrix.probs)
    n = len(adj)
    if len(_reachable(adj, 0)) != n:
        return False
    radj: list[list[int]] = [[] for _ in range(n)]
    for u, vs in enumerate(adj):
        for v in vs:
            radj[v].append(u)
    return len(_reachable(radj, 0)) == n


def periods(matrix: TransitionMatrix) -> list[int]:
    """Period of every state; 0 for states that can never return to themselves.

    Computed per strongly connected class as the GCD of ``level[u] + 1 -
    level[v]`` over the class's edges, where ``level`` is BFS depth.
    """
    adj = _successors(matrix.probs)
    n = len(adj)
    reach = [_reachable(adj, i) for i in range(n)]
    result = [0] * n
    done: set[int] = set()
    for s in range(n):
        if s in done:
            continue
        scc = {v for v in reach[s] if s in reach[v]}
        done |= scc
        level = {s: 0}
        queue = deque([s])
        g = 0
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in scc:
                    continue
                if v not in level:
                    level[v] = level[u] + 1
                    queue.append(v)
                else:
                    g = gcd(g, level[u] + 1 - level[v])
        for v in scc:
            result[v] = abs(g)
    return result


def is_aperiodic(matrix: TransitionMatrix) -> bool:
    return all(p == 1 for p in periods(matrix))


# -- stationary distribution ------------------------------------------------


@dataclass(frozen=True)
class StationaryDistribution:
    p: np.ndarray

    def __iter__(self):
        return iter(self.p)

    def __len__(self) -> int:
        return len(self.p)


def stationary(matrix: TransitionMatrix, check: bool = True) -> StationaryDistribution:
    """Solve the flow-balance equations with total probability 1.

    The balance equation of the last state is redundant and is replaced by
    ``sum(p) = 1``; near-singular systems fall back to least squares over
    all N+1 equations.
    """
    if check and not is_irreducible(matrix):
        pair = unreachable_pair(matrix)
        names = tuple(matrix.alphabet.name(k) for k in pair) if pair else ("?", "?")
        raise StructuralError(
            f"chain is reducible: {names[1]} is unreachable from {names[0]}", pair
        )
    t = matrix.probs
    n = t.shape[0]
    a = t.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        p = np.linalg.solve(a, b)
        ok = np.all(np.isfinite(p)) and np.abs(p @ t - p).max() <= ROW_TOL
    except np.linalg.LinAlgError:
        ok = False
    if not ok:
        full = np.vstack([t.T - np.eye(n), np.ones(n)])
        rhs = np.zeros(n + 1)
        rhs[-1] = 1.0
        p = np.linalg.lstsq(full, rhs, rcond=None)[0]
    p = np.clip(p, 0.0, None)
    return StationaryDistribution(p / p.sum())


def reversibility_report(
    matrix: TransitionMatrix, p: StationaryDistribution | Sequence[float], tol: float = 1e-3
) -> list[tuple[int, int, float, bool]]:
    """Detailed-balance residuals ``|P_i t_ij - P_j t_ji|`` for every unordered pair.

    This is a diagnostic: estimated chains need not be reversible.
    """
    pv = np.asarray(p.p if isinstance(p, StationaryDistribution) else p, dtype=float)
    t = matrix.probs
    if pv.shape != (t.shape[0],):
        raise ValidationError(f"distribution has {pv.shape} entries, matrix has {t.shape[0]} states")
    out = []
    for i in range(len(pv)):
        for j in range(i + 1, len(pv)):
            r = abs(pv[i] * t[i, j] - pv[j] * t[j, i])
            out.append((i, j, float(r), bool(r <= tol)))
    return out


def diagnostics(matrix: TransitionMatrix, tol: float = 1e-3) -> dict:
    irreducible = is_irreducible(matrix)
    diag = {
        "irreducible": irreducible,
        "aperiodic": is_aperiodic(matrix),
        "periods": periods(matrix),
        "stationary": None,
        "reversibility": None,
        "empty_rows": [matrix.alphabet.name(i) for i in matrix.empty_rows],
    }
    if irreducible:
        p = stationary(matrix, check=False)
        diag["stationary"] = [float(x) for x in p.p]
        diag["reversibility"] = [
            {"i": matrix.alphabet.name(i), "j": matrix.alphabet.name(j), "residual": r, "pass": ok}
            for i, j, r, ok in reversibility_report(matrix, p, tol)
        ]
    return diag
