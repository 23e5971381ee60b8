"""Order-m Markov chains over sparse context tables."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InsufficientDataError, ValidationError
from .events import CollapsedTrace, HostTrace, StateAlphabet

MAX_ORDER = 9


@dataclass
class ContextMatrix:
    """Next-state counts and probabilities keyed by the last ``order`` states.

    Only contexts seen in training are stored. With ``lower`` set (back-off
    mode) an unseen context is retried with its oldest state dropped.
    """

    order: int
    alphabet: StateAlphabet
    rows: dict[tuple[int, ...], np.ndarray]
    lower: "ContextMatrix | None" = None
    _argmax: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        n = len(self.alphabet)
        for ctx, counts in self.rows.items():
            if len(ctx) != self.order or any(not 0 <= s < n for s in ctx):
                raise ValidationError(f"bad context {ctx} for order {self.order}")
            j = int(np.argmax(counts))
            self._argmax[ctx] = (j, float(counts[j] / counts.sum()))

    def probs(self, context: Sequence[int]) -> np.ndarray | None:
        counts = self.rows.get(tuple(context))
        return None if counts is None else counts / counts.sum()

    def predict_next(self, context: Sequence[int]) -> tuple[int, float] | None:
        ctx = tuple(context)
        if len(ctx) > self.order:
            ctx = ctx[-self.order:]
        if len(ctx) == self.order:
            hit = self._argmax.get(ctx)
            if hit is not None:
                return hit
        if self.lower is not None:
            return self.lower.predict_next(ctx)
        return None

    @property
    def total_transitions(self) -> int:
        return int(sum(int(c.sum()) for c in self.rows.values()))


def count_contexts(traces: Sequence[HostTrace | CollapsedTrace], n: int, m: int) -> dict[tuple[int, ...], np.ndarray]:
    rows: dict[tuple[int, ...], np.ndarray] = {}
    for tr in traces:
        states = [e.state for e in tr.events]
        for k in range(m, len(states)):
            ctx = tuple(states[k - m:k])
            row = rows.get(ctx)
            if row is None:
                row = rows[ctx] = np.zeros(n, dtype=np.int64)
            row[states[k]] += 1
    return rows


def estimate_m(
    traces: Sequence[CollapsedTrace | HostTrace],
    alphabet: StateAlphabet,
    m: int,
    backoff: bool = False,
    max_order: int = MAX_ORDER,
) -> ContextMatrix:
    """Count every window of ``m + 1`` consecutive events within each host trace.

    Traces should already be collapsed; uncollapsed input is counted as is.
    """
    if not 1 <= m <= max_order:
        raise ValidationError(f"order must be in [1, {max_order}], got {m}")
    rows = count_contexts(traces, len(alphabet), m)
    if not rows:
        raise InsufficientDataError(f"no trace has more than {m} events")
    lower = estimate_m(traces, alphabet, m - 1, backoff=True) if backoff and m > 1 else None
    return ContextMatrix(m, alphabet, rows, lower)


def predict_next(matrix: ContextMatrix, context: Sequence[int]) -> tuple[int, float] | None:
    """Argmax next state for an exactly order-length context, or None if unseen."""
    if len(context) != matrix.order:
        raise ValidationError(f"context length {len(context)} != order {matrix.order}")
    for s in context:
        matrix.alphabet.check(s)
    return matrix.predict_next(context)
