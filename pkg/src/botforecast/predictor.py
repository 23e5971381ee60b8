"""Online next-state and holding-time prediction over per-host event streams."""
from __future__ import annotations

import csv
import enum
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Iterable, Protocol, Sequence

from .errors import TemporalOrderError, ValidationError
from .events import CollapsedTrace, HostTrace, StateAlphabet, TraceEvent
from .semi_markov import SemiMarkovModel


class Chain(Protocol):
    order: int
    alphabet: StateAlphabet

    def predict_next(self, context: Sequence[int]) -> tuple[int, float] | None: ...


class WarningKind(str, enum.Enum):
    NONE = "none"
    ATTACK = "attack_warning"
    PRECURSOR = "precursor_warning"


@dataclass(frozen=True, slots=True)
class PredictionRecord:
    host: str
    t_pred: float
    current_state: int
    predicted_state: int | None
    predicted_prob: float | None
    predicted_interval: int | None
    warning: WarningKind
    model_order: int


@dataclass
class HostCursor:
    host: str
    order: int
    last_state: int | None = None
    context: deque = field(default_factory=deque)
    last_change_t: float = 0.0
    last_t: float | None = None

    def __post_init__(self):
        self.context = deque(self.context, maxlen=self.order)


def classify_warning(alphabet: StateAlphabet, predicted: int | None) -> WarningKind:
    if predicted is None:
        return WarningKind.NONE
    if predicted == alphabet.attack:
        return WarningKind.ATTACK
    if predicted in alphabet.warning:
        return WarningKind.PRECURSOR
    return WarningKind.NONE


def _interval(smc: SemiMarkovModel | None, state: int, predicted: int | None, mode: str) -> int | None:
    if smc is None or predicted is None:
        return None
    if mode == "marginal":
        return smc._mode.get(state)
    col = smc.q[:, state, predicted]
    if col.sum() <= 0:
        return None
    return int(col.argmax()) + 1


def feed(
    cursor: HostCursor,
    event: TraceEvent,
    chain: Chain,
    smc: SemiMarkovModel | None = None,
    interval_mode: str = "marginal",
    tolerance: float = 0.0,
) -> PredictionRecord | None:
    """Advance one host's cursor by one alert.

    Repeats of the current state are absorbed and return None. A state change
    yields a record predicting the next state from the last ``chain.order``
    states; until that many states have been seen the record carries no
    prediction.
    """
    alphabet = chain.alphabet
    state = event.state
    alphabet.check(state)
    if cursor.last_t is not None and event.t < cursor.last_t - tolerance:
        raise TemporalOrderError(
            f"host {cursor.host}: event at t={event.t} precedes t={cursor.last_t}"
        )
    cursor.last_t = event.t if cursor.last_t is None else max(cursor.last_t, event.t)
    if state == cursor.last_state:
        return None
    cursor.last_state = state
    cursor.last_change_t = event.t
    cursor.context.append(state)

    hit = chain.predict_next(cursor.context) if len(cursor.context) == chain.order or _backs_off(chain) else None
    predicted, prob = hit if hit is not None else (None, None)
    return PredictionRecord(
        cursor.host,
        event.t,
        state,
        predicted,
        prob,
        _interval(smc, state, predicted, interval_mode),
        classify_warning(alphabet, predicted),
        chain.order,
    )


def _backs_off(chain: Chain) -> bool:
    return getattr(chain, "lower", None) is not None


class Predictor:
    """One cursor per host over shared, read-only models."""

    def __init__(
        self,
        chain: Chain,
        smc: SemiMarkovModel | None = None,
        interval_mode: str = "marginal",
        tolerance: float = 0.0,
    ):
        if interval_mode not in ("marginal", "conditional"):
            raise ValidationError(f"unknown interval mode {interval_mode!r}")
        if smc is not None and len(smc.alphabet) != len(chain.alphabet):
            raise ValidationError("chain and semi-Markov model use different alphabets")
        self.chain = chain
        self.smc = smc
        self.interval_mode = interval_mode
        self.tolerance = tolerance
        self.cursors: dict[str, HostCursor] = {}

    @property
    def alphabet(self) -> StateAlphabet:
        return self.chain.alphabet

    def feed(self, host: str, event: TraceEvent) -> PredictionRecord | None:
        cursor = self.cursors.get(host)
        if cursor is None:
            cursor = self.cursors[host] = HostCursor(host, self.chain.order)
        return feed(cursor, event, self.chain, self.smc, self.interval_mode, self.tolerance)

    def replay(self, trace: HostTrace | CollapsedTrace) -> list[PredictionRecord]:
        """Stream a trace event by event through a fresh cursor."""
        self.cursors.pop(trace.host, None)
        out = []
        for ev in trace.events:
            rec = self.feed(trace.host, ev)
            if rec is not None:
                out.append(rec)
        return out

    def predict_batch(self, trace: CollapsedTrace) -> list[PredictionRecord]:
        """One record per collapsed event, computed from the trace as a whole."""
        m = self.chain.order
        states = trace.states
        backoff = _backs_off(self.chain)
        out = []
        for k, ev in enumerate(trace.events):
            ctx = states[max(0, k - m + 1):k + 1]
            hit = self.chain.predict_next(ctx) if len(ctx) == m or backoff else None
            predicted, prob = hit if hit is not None else (None, None)
            out.append(
                PredictionRecord(
                    trace.host,
                    ev.t,
                    ev.state,
                    predicted,
                    prob,
                    _interval(self.smc, ev.state, predicted, self.interval_mode),
                    classify_warning(self.alphabet, predicted),
                    m,
                )
            )
        return out


def warning_lead_time(
    records: Sequence[PredictionRecord],
    trace: CollapsedTrace,
    alphabet: StateAlphabet,
    kind: str = "attack",
) -> list[float]:
    """Minutes from each warning to the next actual attack onset.

    ``kind="attack"`` takes correct attack predictions (the next state really
    is the attack); ``kind="precursor"`` takes every precursor warning and
    pairs it with the first attack that follows.
    """
    if kind not in ("attack", "precursor"):
        raise ValidationError(f"unknown lead-time kind {kind!r}")
    attack = alphabet.attack
    events = trace.events
    # next attack onset strictly after position k
    next_attack: list[float | None] = [None] * len(events)
    upcoming = None
    for k in range(len(events) - 1, -1, -1):
        next_attack[k] = upcoming
        if events[k].state == attack:
            upcoming = events[k].t
    leads = []
    for k, rec in enumerate(_align(records, trace)):
        if kind == "attack":
            if rec.warning is WarningKind.ATTACK and k + 1 < len(events) and events[k + 1].state == attack:
                leads.append(events[k + 1].t - rec.t_pred)
        elif rec.warning is WarningKind.PRECURSOR and next_attack[k] is not None:
            leads.append(next_attack[k] - rec.t_pred)
    return leads


def _align(records: Sequence[PredictionRecord], trace: CollapsedTrace) -> Sequence[PredictionRecord]:
    if len(records) != len(trace.events):
        raise ValidationError(
            f"{len(records)} records for {len(trace.events)} collapsed events of host {trace.host}"
        )
    for rec, ev in zip(records, trace.events):
        if rec.host != trace.host:
            raise ValidationError(f"record for host {rec.host} paired with trace of {trace.host}")
        if rec.current_state != ev.state or rec.t_pred != ev.t:
            raise ValidationError(f"record at t={rec.t_pred} does not match trace event at t={ev.t}")
    return records


# -- prediction log CSV -------------------------------------------------------

CSV_COLUMNS = ("host", "t_pred", "current_state", "predicted_state", "prob", "interval", "warning")


def write_records(records: Iterable[PredictionRecord], fh: IO[str], alphabet: StateAlphabet) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([
            r.host,
            repr(r.t_pred),
            alphabet.name(r.current_state),
            "" if r.predicted_state is None else alphabet.name(r.predicted_state),
            "" if r.predicted_prob is None else repr(r.predicted_prob),
            "" if r.predicted_interval is None else r.predicted_interval,
            r.warning.value,
        ])


def read_records(fh: IO[str], alphabet: StateAlphabet, model_order: int = 1) -> list[PredictionRecord]:
    out = []
    for row in csv.DictReader(fh):
        out.append(
            PredictionRecord(
                row["host"],
                float(row["t_pred"]),
                alphabet.index(row["current_state"]),
                alphabet.index(row["predicted_state"]) if row["predicted_state"] else None,
                float(row["prob"]) if row["prob"] else None,
                int(row["interval"]) if row["interval"] else None,
                WarningKind(row["warning"]),
                model_order,
            )
        )
    return out
