"""Lifecycle state alphabet, timestamped traces and self-transition collapsing.

Every other module works on :class:`HostTrace` / :class:`CollapsedTrace`
objects whose events carry integer state ids into a :class:`StateAlphabet`.
Times are minutes from the start of the host's trace.
"""
from __future__ import annotations

import json
import math
import statistics
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, NamedTuple, Sequence

from .errors import EmptyInputError, ValidationError

DEFAULT_STATES = ("Exploit", "BinaryDownload", "CncCommunication", "Attack")

# The unreduced eight-stage lifecycle, for users whose IDS can see every stage.
FULL_STATES = (
    "InboundScan",
    "SocialEngineering",
    "DriveByDownload",
    "Exploit",
    "BinaryDownload",
    "CncDiscovery",
    "CncCommunication",
    "Attack",
)


def _default_warning_states(states: Sequence[str]) -> frozenset[str]:
    # the C&C state(s), recognised by name
    return frozenset(
        s for s in states if "cnc" in s.lower() and "discovery" not in s.lower()
    )


@dataclass(frozen=True)
class StateAlphabet:
    """Ordered, named lifecycle states with a designated attack state.

    ``warning_states`` are precursor states whose prediction raises an early
    warning. When omitted it defaults to the C&C communication state.
    """

    states: tuple[str, ...] = DEFAULT_STATES
    attack_state: str = "Attack"
    warning_states: frozenset[str] | None = None

    def __post_init__(self):
        states = tuple(self.states)
        object.__setattr__(self, "states", states)
        if len(states) < 2:
            raise ValidationError("alphabet needs at least 2 states")
        if any(not isinstance(s, str) or not s for s in states):
            raise ValidationError("state names must be non-empty strings")
        if len(set(states)) != len(states):
            raise ValidationError(f"duplicate state names in {states}")
        if self.attack_state not in states:
            raise ValidationError(f"attack state {self.attack_state!r} is not in the alphabet")
        if self.warning_states is None:
            warn = _default_warning_states(states)
        else:
            warn = frozenset(self.warning_states)
        unknown = sorted(warn - set(states))
        if unknown:
            raise ValidationError(f"unknown warning state {unknown[0]!r}")
        object.__setattr__(self, "warning_states", warn)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(states)})

    def __len__(self) -> int:
        return len(self.states)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ValidationError(f"unknown state {name!r}") from None

    def name(self, state: int) -> str:
        return self.states[state]

    def check(self, state: int) -> int:
        if not isinstance(state, (int,)) or isinstance(state, bool) or not 0 <= state < len(self.states):
            raise ValidationError(f"invalid state id {state!r}")
        return state

    @property
    def attack(self) -> int:
        return self._index[self.attack_state]

    @property
    def warning(self) -> frozenset[int]:
        return frozenset(self._index[s] for s in self.warning_states)

    def to_dict(self) -> dict:
        return {
            "states": list(self.states),
            "attack_state": self.attack_state,
            "warning_states": sorted(self.warning_states, key=self._index.__getitem__),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StateAlphabet":
        try:
            states = data["states"]
        except (KeyError, TypeError):
            raise ValidationError("alphabet must have a 'states' list") from None
        warn = data.get("warning_states")
        return cls(
            tuple(states),
            data.get("attack_state", "Attack"),
            None if warn is None else frozenset(warn),
        )

    @classmethod
    def load(cls, path: str | Path) -> "StateAlphabet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


DEFAULT_ALPHABET = StateAlphabet()
FULL_ALPHABET = StateAlphabet(FULL_STATES)


class TraceEvent(NamedTuple):
    t: float
    state: int


def _check_events(events: Sequence[TraceEvent]) -> None:
    prev = -math.inf
    for ev in events:
        if not ev.t >= 0:
            raise ValidationError(f"event time must be >= 0, got {ev.t}")
        if ev.t < prev:
            raise ValidationError("events must be sorted by time")
        prev = ev.t


@dataclass
class HostTrace:
    host: str
    events: list[TraceEvent] = field(default_factory=list)

    def __post_init__(self):
        self.events = [e if isinstance(e, TraceEvent) else TraceEvent(*e) for e in self.events]
        _check_events(self.events)

    def __len__(self) -> int:
        return len(self.events)

    @property
    def states(self) -> list[int]:
        return [e.state for e in self.events]


@dataclass
class CollapsedTrace:
    """A trace whose consecutive same-state alerts have been merged into runs.

    Each event's ``t`` is the time of the first alert in its run.
    ``run_durations`` hold last-alert minus first-alert time per run.
    """

    host: str
    events: list[TraceEvent] = field(default_factory=list)
    run_lengths: list[int] = field(default_factory=list)
    run_durations: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not (len(self.events) == len(self.run_lengths) == len(self.run_durations)):
            raise ValidationError("events, run_lengths and run_durations differ in length")

    def __len__(self) -> int:
        return len(self.events)

    @property
    def states(self) -> list[int]:
        return [e.state for e in self.events]


def collapse(trace: HostTrace | CollapsedTrace, max_gap: float = math.inf) -> CollapsedTrace:
    """Merge runs of consecutive identical states into single events.

    With the default ``max_gap`` runs merge whatever the time between alerts.
    A finite ``max_gap`` starts a new run when the gap since the previous
    alert of the run exceeds it.
    """
    if not trace.events:
        raise EmptyInputError(f"cannot collapse empty trace for host {trace.host!r}")
    if isinstance(trace, CollapsedTrace):
        lengths, durations = trace.run_lengths, trace.run_durations
    else:
        lengths = [1] * len(trace.events)
        durations = [0.0] * len(trace.events)

    events: list[TraceEvent] = []
    out_len: list[int] = []
    out_dur: list[float] = []
    last_t = 0.0
    for ev, n, d in zip(trace.events, lengths, durations):
        if events and ev.state == events[-1].state and ev.t - last_t <= max_gap:
            out_len[-1] += n
            out_dur[-1] = ev.t + d - events[-1].t
        else:
            events.append(ev)
            out_len.append(n)
            out_dur.append(d)
        last_t = ev.t + d
    return CollapsedTrace(trace.host, events, out_len, out_dur)


@dataclass
class RunStats:
    state: str
    present: bool
    runs: int = 0
    duration_min: float | None = None
    duration_max: float | None = None
    duration_mode: float | None = None
    duration_mean: float | None = None
    duration_stdev: float | None = None
    length_min: int | None = None
    length_max: int | None = None
    length_mode: int | None = None
    length_mean: float | None = None
    length_stdev: float | None = None


def _mode(values: Iterable) -> float | int:
    counts = Counter(values)
    top = max(counts.values())
    return min(v for v, c in counts.items() if c == top)


def self_transition_stats(
    traces: Sequence[HostTrace], alphabet: StateAlphabet = DEFAULT_ALPHABET
) -> dict[str, RunStats]:
    """Summarise self-transition runs (two or more consecutive alerts) per state.

    Duration mode is the lower edge of the modal whole-minute bin, so 0.0
    reads as "under a minute". States with no such run are flagged
    ``present=False``.
    """
    if not traces:
        raise EmptyInputError("self_transition_stats needs at least one trace")
    durations: dict[int, list[float]] = {i: [] for i in range(len(alphabet))}
    lengths: dict[int, list[int]] = {i: [] for i in range(len(alphabet))}
    for tr in traces:
        if not tr.events:
            continue
        c = collapse(tr)
        for ev, n, d in zip(c.events, c.run_lengths, c.run_durations):
            if n >= 2:
                durations[ev.state].append(d)
                lengths[ev.state].append(n)

    out = {}
    for i, name in enumerate(alphabet.states):
        ds, ls = durations[i], lengths[i]
        if not ls:
            out[name] = RunStats(name, present=False)
            continue
        out[name] = RunStats(
            name,
            present=True,
            runs=len(ls),
            duration_min=min(ds),
            duration_max=max(ds),
            duration_mode=float(_mode(math.floor(d) for d in ds)),
            duration_mean=statistics.fmean(ds),
            duration_stdev=statistics.stdev(ds) if len(ds) > 1 else None,
            length_min=min(ls),
            length_max=max(ls),
            length_mode=_mode(ls),
            length_mean=statistics.fmean(ls),
            length_stdev=statistics.stdev(ls) if len(ls) > 1 else None,
        )
    return out


# -- canonical JSON-lines trace format ------------------------------------


def read_traces(source: str | Path | IO[str], alphabet: StateAlphabet = DEFAULT_ALPHABET) -> list[HostTrace]:
    """Read canonical trace JSON-lines into per-host traces.

    Hosts keep first-appearance order; events are stably sorted by time.
    """
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            return read_traces(fh, alphabet)
    grouped: dict[str, list[TraceEvent]] = {}
    for lineno, line in enumerate(source, 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            host, t, state = str(obj["host"]), float(obj["t"]), obj["state"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ValidationError(f"line {lineno}: bad trace record ({exc})") from None
        if not t >= 0:
            raise ValidationError(f"line {lineno}: negative time {t}")
        grouped.setdefault(host, []).append(TraceEvent(t, alphabet.index(state)))
    return [HostTrace(h, sorted(evs, key=lambda e: e.t)) for h, evs in grouped.items()]


def format_traces(traces: Iterable[HostTrace | CollapsedTrace], alphabet: StateAlphabet = DEFAULT_ALPHABET) -> str:
    lines = []
    for tr in traces:
        for ev in tr.events:
            lines.append(json.dumps({"host": tr.host, "t": ev.t, "state": alphabet.name(ev.state)}))
    return "".join(line + "\n" for line in lines)


def write_traces(traces: Iterable[HostTrace | CollapsedTrace], fh: IO[str], alphabet: StateAlphabet = DEFAULT_ALPHABET) -> None:
    fh.write(format_traces(traces, alphabet))
