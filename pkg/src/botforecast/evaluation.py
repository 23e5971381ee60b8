"""Temporal train/test evaluation: confusion rates, lead times, interval errors."""
from __future__ import annotations

import logging
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from . import higher_order, markov
from .errors import ValidationError
from .events import CollapsedTrace, HostTrace, StateAlphabet, collapse
from .predictor import PredictionRecord, Predictor, _align, warning_lead_time
from .semi_markov import DEFAULT_INTERVALS, IntervalSet, SemiMarkovModel, classify_interval, estimate_smc

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitSpec:
    train_minutes: float = 85.0

    def __post_init__(self):
        if not self.train_minutes > 0:
            raise ValidationError("train_minutes must be > 0")


def temporal_split(trace: HostTrace, spec: SplitSpec = SplitSpec()) -> tuple[HostTrace, HostTrace]:
    """Events at or before ``spec.train_minutes`` train; later ones test."""
    cut = spec.train_minutes
    train = [e for e in trace.events if e.t <= cut]
    test = [e for e in trace.events if e.t > cut]
    return HostTrace(trace.host, train), HostTrace(trace.host, test)


def _rate(num: int, den: int) -> float | None:
    return num / den if den else None


@dataclass
class Confusion:
    """One-vs-rest outcome counts for a single target state."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    no_prediction: int = 0

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(
            self.tp + other.tp,
            self.fp + other.fp,
            self.tn + other.tn,
            self.fn + other.fn,
            self.no_prediction + other.no_prediction,
        )

    @property
    def labeled(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def tpr(self) -> float | None:
        return _rate(self.tp, self.tp + self.fn)

    @property
    def fnr(self) -> float | None:
        return _rate(self.fn, self.tp + self.fn)

    @property
    def fpr(self) -> float | None:
        return _rate(self.fp, self.fp + self.tn)

    @property
    def tnr(self) -> float | None:
        return _rate(self.tn, self.fp + self.tn)

    @property
    def accuracy(self) -> float | None:
        return _rate(self.tp + self.tn, self.labeled)

    def to_dict(self) -> dict:
        return {
            "counts": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "no_prediction": self.no_prediction,
            "tpr": self.tpr,
            "fpr": self.fpr,
            "tnr": self.tnr,
            "fnr": self.fnr,
            "accuracy": self.accuracy,
        }


def label_outcomes(
    records: Sequence[PredictionRecord],
    test: CollapsedTrace,
    target: int,
    no_prediction_as_fn: bool = False,
) -> Confusion:
    """Label each prediction against the actual next state of the test trace.

    The last record of a host has no successor and is dropped. Records
    without a prediction are counted apart unless ``no_prediction_as_fn``,
    in which case those whose actual next state is the target become FN.
    """
    _align(records, test)
    c = Confusion()
    events = test.events
    for k in range(len(events) - 1):
        rec, actual = records[k], events[k + 1].state
        if rec.predicted_state is None:
            c.no_prediction += 1
            if no_prediction_as_fn and actual == target:
                c.fn += 1
            continue
        hit = rec.predicted_state == target
        if hit and actual == target:
            c.tp += 1
        elif hit:
            c.fp += 1
        elif actual == target:
            c.fn += 1
        else:
            c.tn += 1
    return c


def cdf_series(values: Sequence[float]) -> list[tuple[float, float]]:
    """(value, fraction of values <= value) at each distinct value."""
    if not values:
        return []
    n = len(values)
    counts = Counter(values)
    out, running = [], 0
    for v in sorted(counts):
        running += counts[v]
        out.append((v, running / n))
    return out


@dataclass
class IntervalErrorReport:
    per_state: dict[int, Counter] = field(default_factory=dict)
    preceding_attack: Counter = field(default_factory=Counter)

    def merge(self, other: "IntervalErrorReport") -> None:
        for s, cnt in other.per_state.items():
            self.per_state.setdefault(s, Counter()).update(cnt)
        self.preceding_attack.update(other.preceding_attack)

    @property
    def all(self) -> Counter:
        total: Counter = Counter()
        for cnt in self.per_state.values():
            total.update(cnt)
        return total

    @staticmethod
    def _expand(cnt: Counter) -> list[int]:
        return sorted(cnt.elements())

    def cdf(self, state: int | None = None, attack_only: bool = False) -> list[tuple[float, float]]:
        if attack_only:
            cnt = self.preceding_attack
        elif state is None:
            cnt = self.all
        else:
            cnt = self.per_state.get(state, Counter())
        return cdf_series(self._expand(cnt))


def interval_error_report(
    records: Sequence[PredictionRecord],
    test: CollapsedTrace,
    smc: SemiMarkovModel,
) -> IntervalErrorReport:
    """Predicted minus actual holding interval for every record with a successor."""
    _align(records, test)
    attack = smc.alphabet.attack
    rep = IntervalErrorReport()
    events = test.events
    for k in range(len(events) - 1):
        rec = records[k]
        if rec.predicted_interval is None:
            continue
        actual = classify_interval(smc.intervals, events[k + 1].t - events[k].t)
        err = rec.predicted_interval - actual
        rep.per_state.setdefault(rec.current_state, Counter())[err] += 1
        if events[k + 1].state == attack:
            rep.preceding_attack[err] += 1
    return rep


@dataclass
class EvalReport:
    alphabet: StateAlphabet
    order: int
    split: SplitSpec
    confusion: dict[int, Confusion] = field(default_factory=dict)
    lead_times: dict[str, list[float]] = field(default_factory=lambda: {"attack": [], "precursor": []})
    interval_errors: IntervalErrorReport | None = None
    hosts_tested: list[str] = field(default_factory=list)
    excluded_hosts: list[str] = field(default_factory=list)
    test_transitions: int = 0
    train_ms: float | None = None
    smc_train_ms: float | None = None
    per_prediction_us: float | None = None

    def to_dict(self) -> dict:
        a = self.alphabet
        ie = self.interval_errors
        return {
            "order": self.order,
            "split_minutes": self.split.train_minutes,
            "hosts_tested": self.hosts_tested,
            "excluded_hosts": self.excluded_hosts,
            "test_transitions": self.test_transitions,
            "targets": {a.name(s): c.to_dict() for s, c in self.confusion.items()},
            "lead_times": self.lead_times,
            "interval_errors": None if ie is None else {
                "per_state": {a.name(s): _hist(c) for s, c in sorted(ie.per_state.items())},
                "all": _hist(ie.all),
                "preceding_attack": _hist(ie.preceding_attack),
            },
            "runtime": {
                "train_ms": self.train_ms,
                "smc_train_ms": self.smc_train_ms,
                "per_prediction_us": self.per_prediction_us,
            },
        }


def _hist(cnt: Counter) -> dict[str, int]:
    return {str(k): cnt[k] for k in sorted(cnt)}


def train_chain(
    traces: Sequence[CollapsedTrace], alphabet: StateAlphabet, order: int, backoff: bool = False
):
    if order == 1 and not backoff:
        return markov.estimate(traces, alphabet, include_self=False)
    return higher_order.estimate_m(traces, alphabet, order, backoff=backoff)


def evaluate(
    traces: Sequence[HostTrace],
    alphabet: StateAlphabet,
    order: int = 1,
    split: SplitSpec = SplitSpec(),
    intervals: IntervalSet | None = DEFAULT_INTERVALS,
    targets: Sequence[int] | None = None,
    backoff: bool = False,
    interval_mode: str = "marginal",
    no_prediction_as_fn: bool = False,
) -> EvalReport:
    """Train on each host's first ``split.train_minutes`` and replay the rest.

    ``intervals=None`` skips the semi-Markov model. Targets default to the
    attack state followed by the warning states. Hosts with an empty test
    part are excluded and listed in the report.
    """
    if targets is None:
        targets = [alphabet.attack, *sorted(alphabet.warning)]
    report = EvalReport(alphabet, order, split, {t: Confusion() for t in targets})

    train_parts, test_parts = [], []
    for tr in traces:
        train, test = temporal_split(tr, split)
        if train.events:
            train_parts.append(collapse(train))
        if test.events:
            test_parts.append(test)
        else:
            report.excluded_hosts.append(tr.host)
    if not test_parts:
        log.warning("all hosts excluded: no events after %s minutes", split.train_minutes)
        return report

    t0 = time.perf_counter()
    chain = train_chain(train_parts, alphabet, order, backoff)
    report.train_ms = (time.perf_counter() - t0) * 1e3
    smc = None
    if intervals is not None:
        t0 = time.perf_counter()
        smc = estimate_smc(train_parts, alphabet, intervals)
        report.smc_train_ms = (time.perf_counter() - t0) * 1e3
        report.interval_errors = IntervalErrorReport()

    predictor = Predictor(chain, smc, interval_mode)
    elapsed, n_records = 0.0, 0
    for test in test_parts:
        t0 = time.perf_counter()
        records = predictor.replay(test)
        elapsed += time.perf_counter() - t0
        n_records += len(records)
        ctest = collapse(test)
        report.hosts_tested.append(test.host)
        report.test_transitions += len(ctest) - 1
        for target in targets:
            report.confusion[target] = report.confusion[target] + label_outcomes(
                records, ctest, target, no_prediction_as_fn
            )
        report.lead_times["attack"] += warning_lead_time(records, ctest, alphabet, "attack")
        report.lead_times["precursor"] += warning_lead_time(records, ctest, alphabet, "precursor")
        if smc is not None:
            report.interval_errors.merge(interval_error_report(records, ctest, smc))
    report.per_prediction_us = elapsed / n_records * 1e6 if n_records else None
    return report


def _sweep_row(args) -> dict:
    traces, alphabet, order, target, split = args
    rep = evaluate(traces, alphabet, order, split, intervals=None, targets=[target])
    c = rep.confusion[target]
    return {"order": order, "tpr": c.tpr, "fpr": c.fpr, "accuracy": c.accuracy, "train_ms": rep.train_ms}


def order_sweep(
    traces: Sequence[HostTrace],
    alphabet: StateAlphabet,
    orders: Sequence[int],
    target: int | None = None,
    split: SplitSpec = SplitSpec(),
    threads: int = 1,
) -> list[dict]:
    """Evaluate one chain per order on the same split."""
    if not orders:
        raise ValidationError("orders must not be empty")
    target = alphabet.attack if target is None else target
    jobs = [(list(traces), alphabet, m, target, split) for m in orders]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            return list(pool.map(_sweep_row, jobs))
    return [_sweep_row(j) for j in jobs]
