"""Snort fast-alert parsing and alert-to-lifecycle-state mapping.

A fast-alert line looks like::

    08/17/11-17:16:18.349371  [**] [1:2001581:13] ET SCAN ... [**] [Classification: Misc activity] [Priority: 3] {TCP} 147.32.84.130:2888 -> 147.32.82.18:135

The year is optional (Snort without ``-y``), the classification and priority
blocks may be absent, and portless protocols (ICMP) omit the ``:port``.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import IO, Iterable, Iterator

from .errors import ParseError, ValidationError
from .events import HostTrace, StateAlphabet, TraceEvent

log = logging.getLogger(__name__)

_TS = re.compile(r"(\d{2})/(\d{2})(?:/(\d{2}))?-(\d{2}):(\d{2}):(\d{2})\.(\d{6})")
_GID = re.compile(r"(\s+)\[\*\*\] \[(\d+):(\d+):(\d+)\] ")
_MSG_END = " [**]"
_CLASS = re.compile(r" \[Classification: ([^\]]*)\]")
_PRIO = re.compile(r" \[Priority: (\d+)\]")
_PROTO = re.compile(r" \{([^}]*)\} ")
_ENDPOINTS = re.compile(r"([0-9A-Fa-f.:]+?)(?::(\d+))? -> ([0-9A-Fa-f.:]+?)(?::(\d+))?$")

# year used when the log line carries none
NO_YEAR = 2000


@dataclass(frozen=True)
class RawAlert:
    timestamp: datetime
    gid: int
    sid: int
    rev: int
    message: str
    classification: str | None
    priority: int | None
    protocol: str
    src_ip: str
    src_port: int | None
    dst_ip: str
    dst_port: int | None
    has_year: bool = True
    sep: str = "  "  # whitespace between timestamp and the first [**]


def parse_fast_alert(line: str) -> RawAlert:
    """Parse one fast-alert line; raises :class:`ParseError` with a byte offset."""
    line = line.rstrip("\r\n")
    if not line:
        raise ParseError("empty line", 0, line)
    m = _TS.match(line)
    if not m:
        raise ParseError("bad timestamp", 0, line)
    mon, day, yy, hh, mi, ss, us = m.groups()
    if yy is None:
        year = NO_YEAR
    else:
        year = int(yy) + (2000 if int(yy) < 70 else 1900)
    try:
        ts = datetime(year, int(mon), int(day), int(hh), int(mi), int(ss), int(us))
    except ValueError as exc:
        raise ParseError(f"bad timestamp ({exc})", 0, line) from None
    pos = m.end()

    g = _GID.match(line, pos)
    if not g:
        raise ParseError("expected '[**] [gid:sid:rev]'", pos, line)
    sep = g.group(1)
    gid, sid, rev = (int(x) for x in g.groups()[1:])
    if sid <= 0:
        raise ParseError("sid must be positive", g.start(3), line)
    pos = g.end()

    end = line.find(_MSG_END, pos)
    if end < 0:
        raise ParseError("unterminated message", pos, line)
    message = line[pos:end]
    pos = end + len(_MSG_END)

    classification = None
    c = _CLASS.match(line, pos)
    if c:
        classification = c.group(1)
        pos = c.end()
    priority = None
    p = _PRIO.match(line, pos)
    if p:
        priority = int(p.group(1))
        pos = p.end()

    pr = _PROTO.match(line, pos)
    if not pr:
        raise ParseError("expected '{PROTO}'", pos, line)
    protocol = pr.group(1)
    pos = pr.end()

    e = _ENDPOINTS.match(line, pos)
    if not e:
        raise ParseError("expected 'src[:port] -> dst[:port]'", pos, line)
    src_ip, sport, dst_ip, dport = e.groups()
    ports = []
    for port, group in ((sport, 2), (dport, 4)):
        if port is not None and not 0 <= int(port) <= 65535:
            raise ParseError("port out of range", e.start(group), line)
        ports.append(None if port is None else int(port))

    return RawAlert(
        ts, gid, sid, rev, message, classification, priority, protocol,
        src_ip, ports[0], dst_ip, ports[1], has_year=yy is not None, sep=sep,
    )


def format_fast_alert(alert: RawAlert) -> str:
    ts = alert.timestamp
    date = f"{ts.month:02d}/{ts.day:02d}"
    if alert.has_year:
        date += f"/{ts.year % 100:02d}"
    parts = [
        f"{date}-{ts.hour:02d}:{ts.minute:02d}:{ts.second:02d}.{ts.microsecond:06d}",
        f"{alert.sep}[**] [{alert.gid}:{alert.sid}:{alert.rev}] {alert.message} [**]",
    ]
    if alert.classification is not None:
        parts.append(f" [Classification: {alert.classification}]")
    if alert.priority is not None:
        parts.append(f" [Priority: {alert.priority}]")
    src = alert.src_ip if alert.src_port is None else f"{alert.src_ip}:{alert.src_port}"
    dst = alert.dst_ip if alert.dst_port is None else f"{alert.dst_ip}:{alert.dst_port}"
    parts.append(f" {{{alert.protocol}}} {src} -> {dst}")
    return "".join(parts)


@dataclass
class ParseStats:
    lines: int = 0
    parsed: int = 0
    errors: list[ParseError] = field(default_factory=list)


def iter_alerts(lines: Iterable[str], stats: ParseStats | None = None) -> Iterator[RawAlert]:
    """Parse lines, skipping blanks; malformed lines are counted, not fatal."""
    stats = stats if stats is not None else ParseStats()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        stats.lines += 1
        try:
            alert = parse_fast_alert(line)
        except ParseError as exc:
            log.debug("line %d: %s", lineno, exc)
            stats.errors.append(exc)
            continue
        stats.parsed += 1
        yield alert


# -- state mapping -------------------------------------------------------------


@dataclass(frozen=True)
class Matcher:
    state: str
    sids: frozenset[int] | None = None
    classification: re.Pattern | None = None
    message: re.Pattern | None = None
    direction: str = "src"

    def matches(self, alert: RawAlert) -> bool:
        if self.sids is not None:
            return alert.sid in self.sids
        if self.classification is not None:
            return alert.classification is not None and bool(self.classification.search(alert.classification))
        return bool(self.message.search(alert.message))


@dataclass
class StateMappingConfig:
    """Ordered alert matchers; the first matching rule decides the state.

    JSON schema::

        {"schema_version": "1.0",
         "unmatched_policy": "discard",
         "rules": [{"sids": [2001581], "state": "Attack"},
                   {"classification": "regex", "state": "Exploit", "direction": "dst"},
                   {"message": "regex", "state": "CncCommunication"}]}

    Each rule has exactly one of ``sids``, ``classification`` or ``message``
    (regexes use ``re.search``). ``direction`` picks the host an alert is
    attributed to: ``src`` (default) or ``dst``.
    """

    rules: list[Matcher]
    unmatched_policy: str = "discard"

    def validate(self, alphabet: StateAlphabet) -> None:
        for rule in self.rules:
            if rule.state not in alphabet.states:
                raise ValidationError(f"mapping targets unknown state {rule.state!r}")
        if not any(r.state == alphabet.attack_state for r in self.rules):
            log.warning("no mapping rule targets the attack state %r", alphabet.attack_state)

    def match(self, alert: RawAlert) -> Matcher | None:
        for rule in self.rules:
            if rule.matches(alert):
                return rule
        return None

    @classmethod
    def from_dict(cls, data: dict) -> "StateMappingConfig":
        policy = data.get("unmatched_policy", "discard")
        if policy != "discard":
            raise ValidationError(f"unsupported unmatched_policy {policy!r}")
        rules = []
        for k, r in enumerate(data.get("rules", [])):
            keys = [key for key in ("sids", "classification", "message") if key in r]
            if len(keys) != 1:
                raise ValidationError(f"rule {k}: needs exactly one of sids/classification/message")
            direction = r.get("direction", "src")
            if direction not in ("src", "dst"):
                raise ValidationError(f"rule {k}: direction must be 'src' or 'dst'")
            try:
                rules.append(
                    Matcher(
                        state=r["state"],
                        sids=frozenset(int(s) for s in r["sids"]) if "sids" in r else None,
                        classification=re.compile(r["classification"]) if "classification" in r else None,
                        message=re.compile(r["message"]) if "message" in r else None,
                        direction=direction,
                    )
                )
            except KeyError:
                raise ValidationError(f"rule {k}: missing 'state'") from None
            except re.error as exc:
                raise ValidationError(f"rule {k}: bad regex ({exc})") from None
        return cls(rules, policy)

    @classmethod
    def load(cls, path: str | Path) -> "StateMappingConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class IngestResult:
    traces: list[HostTrace]
    matched: int = 0
    discarded: int = 0


def alerts_to_traces(
    alerts: Iterable[RawAlert], config: StateMappingConfig, alphabet: StateAlphabet
) -> IngestResult:
    """Group mapped alerts per host into traces in minutes from that host's first alert.

    Alerts may arrive interleaved and out of order; each host's alerts are
    stably sorted by timestamp. Hosts are emitted in sorted order.
    """
    config.validate(alphabet)
    per_host: dict[str, list[tuple[datetime, int]]] = {}
    matched = discarded = 0
    for alert in alerts:
        rule = config.match(alert)
        if rule is None:
            discarded += 1
            continue
        matched += 1
        host = alert.src_ip if rule.direction == "src" else alert.dst_ip
        per_host.setdefault(host, []).append((alert.timestamp, alphabet.index(rule.state)))

    traces = []
    for host in sorted(per_host):
        items = sorted(per_host[host], key=lambda x: x[0])
        t0 = items[0][0]
        traces.append(
            HostTrace(host, [TraceEvent((ts - t0).total_seconds() / 60.0, s) for ts, s in items])
        )
    return IngestResult(traces, matched, discarded)


def read_alert_file(path: str | Path | IO[str], stats: ParseStats | None = None) -> list[RawAlert]:
    if isinstance(path, (str, Path)):
        with open(path) as fh:
            return list(iter_alerts(fh, stats))
    return list(iter_alerts(path, stats))
