"""Ground-truth semi-Markov trace generator.

Random numbers come from numpy's PCG64 bit generator (PCG XSL RR 128/64).
Host ``k`` draws from its own stream seeded with
``SeedSequence([seed, k])``, so a host's trace does not depend on how many
other hosts are generated or in which order.
"""
from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from itertools import accumulate
from pathlib import Path

import numpy as np

from .errors import SchemaError, ValidationError
from .events import DEFAULT_ALPHABET, HostTrace, StateAlphabet, TraceEvent
from .markov import TransitionMatrix, is_irreducible, stationary
from .semi_markov import DEFAULT_INTERVALS, IntervalSet

SPEC_SCHEMA = "1.0"
TOL = 1e-9


def interval_masses(embedded, weights) -> np.ndarray:
    """Spread every transition's probability over intervals in fixed proportions."""
    w = np.asarray(weights, dtype=float)
    if (w < 0).any() or w.sum() <= 0:
        raise ValidationError("interval weights must be non-negative with positive sum")
    w = w / w.sum()
    return w[:, None, None] * np.asarray(embedded, dtype=float)[None, :, :]


@dataclass
class GeneratorSpec:
    embedded: np.ndarray
    q: np.ndarray
    alphabet: StateAlphabet = DEFAULT_ALPHABET
    intervals: IntervalSet = DEFAULT_INTERVALS
    n_hosts: int = 10
    events_per_host: int = 1000
    seed: int = 0
    # fixed-length context -> next-state row; overrides the embedded row
    context_overrides: dict[tuple[int, ...], np.ndarray] = field(default_factory=dict)
    point_fraction: float | None = None
    unbounded_upper: float = 120.0

    def __post_init__(self):
        self.embedded = np.asarray(self.embedded, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.context_overrides = {
            tuple(int(s) for s in k): np.asarray(v, dtype=float) for k, v in self.context_overrides.items()
        }
        self.validate()

    def validate(self) -> None:
        n = len(self.alphabet)
        e = self.embedded
        if e.shape != (n, n):
            raise ValidationError(f"embedded matrix must be {n}x{n}")
        if (e < 0).any() or np.abs(e.sum(axis=1) - 1).max() > TOL:
            raise ValidationError("embedded rows must be non-negative and sum to 1")
        if self.q.shape != (len(self.intervals), n, n):
            raise ValidationError(f"q must have shape {(len(self.intervals), n, n)}")
        if (self.q < 0).any():
            raise ValidationError("q entries must be non-negative")
        if np.abs(self.q.sum(axis=0) - e).max() > TOL:
            raise ValidationError("interval masses must sum to the embedded matrix")
        if not is_irreducible(TransitionMatrix.from_probs(self.alphabet, e)):
            raise ValidationError("embedded matrix must be irreducible (initial state uses its stationary distribution)")
        if self.n_hosts < 1 or self.events_per_host < 1:
            raise ValidationError("n_hosts and events_per_host must be >= 1")
        if self.point_fraction is not None and not 0 < self.point_fraction <= 1:
            raise ValidationError("point_fraction must be in (0, 1]")
        if self.unbounded_upper <= self.intervals.boundaries[-1]:
            raise ValidationError("unbounded_upper must exceed the last interval boundary")
        lengths = {len(k) for k in self.context_overrides}
        if len(lengths) > 1:
            raise ValidationError("all context overrides must have the same length")
        for ctx, row in self.context_overrides.items():
            if any(not 0 <= s < n for s in ctx):
                raise ValidationError(f"context override {ctx} has an invalid state")
            if row.shape != (n,) or (row < 0).any() or abs(row.sum() - 1) > TOL:
                raise ValidationError(f"context override {ctx} must be a probability row")
            last = ctx[-1]
            bad = np.flatnonzero((row > 0) & (e[last] <= 0))
            if bad.size:
                raise ValidationError(
                    f"context override {ctx} uses transition {last}->{bad[0]} with no embedded mass"
                )

    # -- JSON ----------------------------------------------------------------

    def to_dict(self) -> dict:
        a = self.alphabet
        return {
            "schema_version": SPEC_SCHEMA,
            "alphabet": a.to_dict(),
            "intervals": list(self.intervals.boundaries),
            "embedded": self.embedded.tolist(),
            "q": self.q.tolist(),
            "n_hosts": self.n_hosts,
            "events_per_host": self.events_per_host,
            "seed": self.seed,
            "context_overrides": [
                {"context": [a.name(s) for s in k], "probs": v.tolist()}
                for k, v in self.context_overrides.items()
            ],
            "point_fraction": self.point_fraction,
            "unbounded_upper": self.unbounded_upper,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        version = str(d.get("schema_version", SPEC_SCHEMA))
        if version.split(".")[0] != SPEC_SCHEMA.split(".")[0]:
            raise SchemaError(f"unsupported generator spec version {version}")
        alphabet = StateAlphabet.from_dict(d["alphabet"]) if "alphabet" in d else DEFAULT_ALPHABET
        intervals = IntervalSet(tuple(d["intervals"])) if "intervals" in d else DEFAULT_INTERVALS
        try:
            embedded = np.asarray(d["embedded"], dtype=float)
        except KeyError:
            raise ValidationError("generator spec needs an 'embedded' matrix") from None
        if "q" in d:
            q = d["q"]
        elif "interval_weights" in d:
            q = interval_masses(embedded, d["interval_weights"])
        else:
            raise ValidationError("generator spec needs 'q' or 'interval_weights'")
        overrides = {
            tuple(alphabet.index(s) for s in o["context"]): o["probs"]
            for o in d.get("context_overrides", [])
        }
        return cls(
            embedded=embedded,
            q=q,
            alphabet=alphabet,
            intervals=intervals,
            n_hosts=int(d.get("n_hosts", 10)),
            events_per_host=int(d.get("events_per_host", 1000)),
            seed=int(d.get("seed", 0)),
            context_overrides=overrides,
            point_fraction=d.get("point_fraction"),
            unbounded_upper=float(d.get("unbounded_upper", 120.0)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "GeneratorSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _cumulative(row) -> list[float]:
    return list(accumulate(float(x) for x in row))


def _pick(cum: list[float], u: float) -> int:
    # scaled by the row total: never lands on a zero-probability entry
    return min(bisect.bisect_right(cum, u * cum[-1]), len(cum) - 1)


def generate(spec: GeneratorSpec) -> list[HostTrace]:
    """Sample ``spec.n_hosts`` traces of ``spec.events_per_host`` events each.

    The first state is drawn from the embedded chain's stationary
    distribution at t=0. Each gap picks an interval in proportion to
    q[n][i][j] / embedded[i][j], then a time uniform within it (or at
    ``point_fraction`` of its width); the unbounded last interval uses
    ``(last boundary, unbounded_upper]``.
    """
    spec.validate()
    n = len(spec.alphabet)
    p0 = stationary(TransitionMatrix.from_probs(spec.alphabet, spec.embedded), check=False).p
    init_cum = _cumulative(p0)
    row_cum = [_cumulative(r) for r in spec.embedded]
    override_cum = {k: _cumulative(v) for k, v in spec.context_overrides.items()}
    m = len(next(iter(override_cum))) if override_cum else 0

    edges = [0.0, *spec.intervals.boundaries, spec.unbounded_upper]
    gap_cum: dict[tuple[int, int], list[float]] = {}
    for i in range(n):
        for j in range(n):
            if spec.embedded[i, j] > 0:
                gap_cum[i, j] = _cumulative(spec.q[:, i, j])
    frac = spec.point_fraction

    traces = []
    for h in range(spec.n_hosts):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, h])))
        u = rng.random((spec.events_per_host, 3)).tolist()
        state = _pick(init_cum, u[0][0])
        t = 0.0
        history = [state]
        events = [TraceEvent(0.0, state)]
        for k in range(1, spec.events_per_host):
            us, ui, ud = u[k]
            cum = override_cum.get(tuple(history[-m:])) if m and len(history) >= m else None
            nxt = _pick(cum or row_cum[state], us)
            b = _pick(gap_cum[state, nxt], ui)
            lo, hi = edges[b], edges[b + 1]
            # uniform on (lo, hi]
            t += lo + frac * (hi - lo) if frac is not None else hi - ud * (hi - lo)
            state = nxt
            history.append(state)
            events.append(TraceEvent(t, state))
        traces.append(HostTrace(f"h{h:04d}", events))
    return traces
