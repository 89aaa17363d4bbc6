"""Bookkeeping over machine histories: channels, echo counts and graphs."""

from __future__ import annotations

import csv
import io
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .errors import InconsistentEvidenceError, NoEchoError
from .openmachine import HistoryRecord, Reading


@dataclass(frozen=True, order=True)
class ChannelPair:
    sent: Reading
    received: Reading


PhaseSpec = Mapping[int, tuple[float, float]] | Callable[[int], tuple[float, float]] | None


@dataclass(frozen=True)
class RepeatingChannel:
    """Pairs ``(m + l*j . phi_A(l), n + l*k . phi_B(l))`` for ``l`` in ``ell_range``.

    ``ell_range`` is an inclusive ``(l1, l2)`` or ``None`` for an endless
    channel. Phases default to null for every ``l`` not given.
    """

    sender: str
    receiver: str
    m: int
    n: int
    j: int = 1
    k: int = 1
    phases: PhaseSpec = None
    ell_range: tuple[int, int] | None = (0, 0)

    def __post_init__(self):
        if self.j <= 0 or self.k <= 0:
            raise ValueError("cycle strides must be positive")
        if self.ell_range is not None and self.ell_range[0] > self.ell_range[1]:
            raise ValueError("empty ell range")

    @property
    def endless(self) -> bool:
        return self.ell_range is None

    def phase_at(self, ell: int) -> tuple[float, float]:
        if self.phases is None:
            return (0.0, 0.0)
        if callable(self.phases):
            return self.phases(ell)
        return self.phases.get(ell, (0.0, 0.0))

    def ells(self, window: tuple[int, int] | None = None) -> range:
        if window is None:
            if self.endless:
                raise ValueError("endless channel needs an explicit window")
            window = self.ell_range
        lo, hi = window
        if not self.endless:
            lo, hi = max(lo, self.ell_range[0]), min(hi, self.ell_range[1])
        return range(lo, hi + 1)

    def pair(self, ell: int) -> ChannelPair:
        pa, pb = self.phase_at(ell)
        return ChannelPair(Reading(self.m + ell * self.j, pa), Reading(self.n + ell * self.k, pb))

    def pairs(self, window: tuple[int, int] | None = None) -> list[ChannelPair]:
        return [self.pair(ell) for ell in self.ells(window)]

    @property
    def has_null_phases(self) -> bool:
        if self.phases is None:
            return True
        if callable(self.phases):
            return False
        return all(pa == 0.0 and pb == 0.0 for pa, pb in self.phases.values())


def pairs_to_csv(pairs: Iterable[ChannelPair]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sent_cycle", "sent_phase", "received_cycle", "received_phase"])
    for p in pairs:
        w.writerow([p.sent.cycle, repr(p.sent.phase), p.received.cycle, repr(p.received.phase)])
    return buf.getvalue()


def pairs_to_json(pairs: Iterable[ChannelPair]) -> str:
    return json.dumps([
        {"sent": [p.sent.cycle, p.sent.phase], "received": [p.received.cycle, p.received.phase]}
        for p in pairs
    ])


# ----------------------------------------------------------------------------
# Echo counts and audits


def echo_count(history: Sequence[HistoryRecord], m: int, party: str | None = None,
               partner: Sequence[HistoryRecord] | None = None, name: str | None = None) -> float:
    """Reading of the first reception from ``party`` after the send at ``m.0``, minus ``m``.

    With ``party=None`` the send at cycle ``m`` decides the party; several
    sends in that cycle are disambiguated by name order.

    Given the partner's history, only receptions of signals the partner
    sent once it had received the send at ``m`` count. ``name`` is this
    machine's name in the partner's records. Without it, receptions of
    earlier signals still in flight count too.
    """
    sends = sorted(
        (r for r in history if r.event == "send" and r.own_cycle == m and r.party is not None
         and not r.phase_or_rate),
        key=lambda r: r.party,
    )
    if party is None:
        if not sends:
            raise NoEchoError(f"no send at reading {m}.0")
        party = sends[0].party
    elif not any(r.party == party for r in sends):
        raise NoEchoError(f"no send to {party} at reading {m}.0")
    later = [r for r in history
             if r.event == "received" and r.party == party and r.reading > m]
    if partner is not None:
        got = [r.reading for r in partner if r.event == "received" and r.cycle_sent == m
               and (name is None or r.party == name)]
        if not got:
            raise NoEchoError(f"partner has no reception of the send at {m}.0")
        arrived = min(got)
        later = [r for r in later if r.cycle_sent is not None and r.cycle_sent >= arrived]
    if not later:
        raise NoEchoError(f"no reception from {party} after reading {m}.0")
    first = min(later, key=lambda r: (r.reading, r.party))
    return first.reading - m


def phase_threshold(eta: float) -> float:
    if not (0.0 < eta < 1.0):
        raise ValueError("eta must lie in (0, 1)")
    return (1.0 - eta) / 2.0


def check_phase_constraint(channel: RepeatingChannel, eta: float,
                           window: tuple[int, int] | None = None) -> list[int]:
    """Every ``l`` whose reception phase breaks |phi| < (1 - eta)/2.

    Endless channels with mapped phases are checked on the mapped ``l``
    only (all other phases are null) unless a window is given.
    """
    limit = phase_threshold(eta)
    if window is None and channel.endless:
        if channel.phases is None:
            return []
        if callable(channel.phases):
            raise ValueError("endless channel with phase function needs a window")
        ells: Iterable[int] = sorted(channel.phases)
    else:
        ells = channel.ells(window)
    return [ell for ell in ells if abs(channel.phase_at(ell)[1]) >= limit]


def audit_history(history: Iterable[HistoryRecord], eta: float) -> list[HistoryRecord]:
    """Received records whose phase breaks the writing-phase constraint."""
    limit = phase_threshold(eta)
    return [r for r in history if r.event == "received" and abs(r.phase_or_rate) >= limit]


def is_order_preserving(pairs: Sequence[ChannelPair]) -> bool:
    """True iff a later transmission is always received later."""
    if len(pairs) < 2:
        raise ValueError("order preservation needs at least two pairs")
    ordered = sorted(pairs, key=lambda p: p.sent)
    prev_max = None  # max received over strictly earlier sends
    i = 0
    while i < len(ordered):
        j = i
        while j < len(ordered) and ordered[j].sent == ordered[i].sent:
            j += 1
        group = ordered[i:j]
        if prev_max is not None and min(p.received for p in group) <= prev_max:
            return False
        gmax = max(p.received for p in group)
        prev_max = gmax if prev_max is None else max(prev_max, gmax)
        i = j
    return True


# ----------------------------------------------------------------------------
# Occurrence graphs


@dataclass(frozen=True, order=True)
class Node:
    machine: str
    cycle: int

    @property
    def id(self) -> str:
        return f"{self.machine}:{self.cycle}"


@dataclass(frozen=True, order=True)
class Edge:
    src: Node
    dst: Node
    kind: str  # "trail" or "signal"
    label: float | None


@dataclass
class OccurrenceGraph:
    trails: dict[str, list[Node]]
    trail_edges: list[Edge]
    signal_edges: list[Edge]
    external: set[str] = field(default_factory=set)

    @property
    def nodes(self) -> list[Node]:
        return sorted(n for trail in self.trails.values() for n in trail)

    @property
    def edges(self) -> list[Edge]:
        return self.trail_edges + self.signal_edges

    def is_acyclic(self) -> bool:
        succ: dict[Node, list[Node]] = {}
        for e in self.edges:
            succ.setdefault(e.src, []).append(e.dst)
        state: dict[Node, int] = {}

        def visit(n):
            stack = [(n, iter(succ.get(n, ())))]
            state[n] = 1
            while stack:
                node, it = stack[-1]
                nxt = next(it, None)
                if nxt is None:
                    state[node] = 2
                    stack.pop()
                elif state.get(nxt) == 1:
                    return False
                elif nxt not in state:
                    state[nxt] = 1
                    stack.append((nxt, iter(succ.get(nxt, ()))))
            return True

        return all(visit(n) for n in self.nodes if n not in state)

    def to_dot(self) -> str:
        return graph_to_dot(self)


def _rate_in_effect(records: Sequence[HistoryRecord], cycle: int) -> float | None:
    rate = None
    for r in records:
        if r.event == "rate" and r.own_cycle <= cycle:
            rate = r.phase_or_rate
    return rate


def occurrence_graph(histories: Mapping[str, Sequence[HistoryRecord]]) -> OccurrenceGraph:
    """One trail per machine, linked by dashed signal edges labeled with phase.

    Receptions from machines without a history become stub nodes; a
    reception from a machine whose history lacks the matching send is an
    inconsistency.
    """
    cycles: dict[str, set[int]] = {name: {r.own_cycle for r in recs} for name, recs in histories.items()}
    signals = []
    external = set()
    for rcv, recs in histories.items():
        for r in recs:
            if r.event != "received":
                continue
            snd = r.party
            if snd in histories:
                match = [s for s in histories[snd]
                         if s.event == "send" and s.own_cycle == r.cycle_sent and s.party == rcv]
                if not match:
                    raise InconsistentEvidenceError(
                        f"{rcv} received from {snd} sent at {r.cycle_sent}, but no such send"
                    )
            else:
                external.add(snd)
                cycles.setdefault(snd, set()).add(r.cycle_sent)
            signals.append(Edge(Node(snd, r.cycle_sent), Node(rcv, r.own_cycle), "signal",
                                float(r.phase_or_rate)))

    trails: dict[str, list[Node]] = {}
    trail_edges = []
    for name in sorted(cycles):
        cs = cycles[name]
        if name in external:
            trails[name] = [Node(name, c) for c in sorted(cs)]
            continue
        lo, hi = min(cs), max(cs) + 1
        trails[name] = [Node(name, c) for c in range(lo, hi + 1)]
        recs = sorted(histories[name], key=lambda r: r.own_cycle)
        for c in range(lo, hi):
            trail_edges.append(Edge(Node(name, c), Node(name, c + 1), "trail", _rate_in_effect(recs, c)))
    signals.sort()
    return OccurrenceGraph(trails, trail_edges, signals, external)


def _fmt(label: float | None) -> str:
    return "" if label is None else repr(float(label))


def graph_to_dot(graph: OccurrenceGraph, name: str = "occurrence") -> str:
    lines = [f"digraph {name} {{", "  rankdir=LR;"]
    for machine in sorted(graph.trails):
        style = ' style=dotted' if machine in graph.external else ''
        lines.append(f'  subgraph "cluster_{machine}" {{ label="{machine}";{style}')
        for n in graph.trails[machine]:
            lines.append(f'    "{n.id}";')
        lines.append("  }")
    for e in graph.trail_edges:
        lines.append(f'  "{e.src.id}" -> "{e.dst.id}" [label="{_fmt(e.label)}"];')
    for e in graph.signal_edges:
        lines.append(f'  "{e.src.id}" -> "{e.dst.id}" [style=dashed, label="{_fmt(e.label)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


_NODE_RE = re.compile(r'^\s*"([^"]+):(-?\d+)";\s*$')
_EDGE_RE = re.compile(r'^\s*"([^"]+):(-?\d+)" -> "([^"]+):(-?\d+)" \[(style=dashed, )?label="([^"]*)"\];\s*$')


def parse_dot(text: str) -> tuple[Counter, Counter]:
    """Node and edge multisets of a graph written by :func:`graph_to_dot`."""
    nodes, edges = Counter(), Counter()
    for line in text.splitlines():
        if m := _EDGE_RE.match(line):
            src = Node(m[1], int(m[2]))
            dst = Node(m[3], int(m[4]))
            label = float(m[6]) if m[6] else None
            edges[Edge(src, dst, "signal" if m[5] else "trail", label)] += 1
        elif m := _NODE_RE.match(line):
            nodes[Node(m[1], int(m[2]))] += 1
    return nodes, edges


# ----------------------------------------------------------------------------
# Marked graphs from endless channels


@dataclass
class MarkedGraph:
    """Transitions are machine ticks; each place links two transitions."""

    transitions: list[str]
    places: dict[str, tuple[str, str]]
    marking: dict[str, int]

    def inputs(self, t: str) -> list[str]:
        return [p for p, (_, dst) in self.places.items() if dst == t]

    def outputs(self, t: str) -> list[str]:
        return [p for p, (src, _) in self.places.items() if src == t]

    def enabled(self, t: str) -> bool:
        return all(self.marking[p] > 0 for p in self.inputs(t))

    def fire(self, t: str) -> None:
        if not self.enabled(t):
            raise ValueError(f"{t} is not enabled")
        for p in self.inputs(t):
            self.marking[p] -= 1
        for p in self.outputs(t):
            self.marking[p] += 1

    def step(self) -> list[str]:
        """Fire every transition enabled at the start of the step once."""
        ready = [t for t in self.transitions if self.enabled(t)]
        for t in ready:
            self.fire(t)
        return ready

    def circuit_tokens(self, circuit: Sequence[str]) -> int:
        """Tokens on the places of a directed circuit of transitions."""
        total = 0
        for a, b in zip(circuit, list(circuit[1:]) + [circuit[0]]):
            total += sum(self.marking[p] for p, ends in self.places.items() if ends == (a, b))
        return total

    def to_dot(self, name: str = "marked") -> str:
        lines = [f"digraph {name} {{"]
        for t in sorted(self.transitions):
            lines.append(f'  "{t}" [shape=box];')
        for p in sorted(self.places):
            src, dst = self.places[p]
            lines.append(f'  "{p}" [shape=circle, label="{self.marking[p]}"];')
            lines.append(f'  "{src}" -> "{p}";')
            lines.append(f'  "{p}" -> "{dst}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


def wrap_marked_graph(channels: Sequence[RepeatingChannel], *, forget_phases: bool = False) -> MarkedGraph:
    """Wrap endless one-signal-per-cycle channels into a marked graph.

    Each machine gets a one-token self loop; the place for a channel
    carries ``n - m`` tokens, so the tokens on the circuit ``A -> B -> A``
    equal the echo count at A.
    """
    names = set()
    places = {}
    marking = {}
    for ch in channels:
        if not ch.endless:
            raise ValueError("only endless channels wrap into a marked graph")
        if not ch.has_null_phases and not forget_phases:
            raise ValueError("channel has non-null phases; pass forget_phases=True to drop them")
        if ch.j != 1 or ch.k != 1:
            raise ValueError("wrapping needs one signal per cycle (j = k = 1)")
        offset = ch.n - ch.m
        if offset < 0:
            raise ValueError("negative reading offset; relabel the receiver's readings first")
        names.update((ch.sender, ch.receiver))
        key = f"{ch.sender}->{ch.receiver}"
        places[key] = (ch.sender, ch.receiver)
        marking[key] = offset
    for t in sorted(names):
        places[f"{t}->{t}"] = (t, t)
        marking[f"{t}->{t}"] = 1
    return MarkedGraph(sorted(names), places, marking)


# ----------------------------------------------------------------------------
# Synthetic two-machine histories


def ping_histories(delay: float, period_a: float, period_b: float, n_pings: int,
                   names: tuple[str, str] = ("A", "B"), start: float = 0.0) -> dict[str, list[HistoryRecord]]:
    """Histories when the first machine pings at each of its ticks and the second echoes at once.

    ``delay`` is the one-way coordinate delay between the static machines
    and ``start`` is the coordinate time of the pinger's reading 0.
    Readings of the echoing machine are ``t / period``.
    """
    a, b = names
    hist = {a: [], b: []}
    for kk in range(n_pings):
        t0 = start + kk * period_a
        hist[a].append(HistoryRecord(kk, "send", b))
        rb = Reading.from_value((t0 + delay) / period_b)
        hist[b].append(HistoryRecord(rb.cycle, "received", a, rb.phase, kk))
        hist[b].append(HistoryRecord(rb.cycle, "send", a, rb.phase or None))
        ra = Reading.from_value((t0 + 2 * delay - start) / period_a)
        hist[a].append(HistoryRecord(ra.cycle, "received", b, ra.phase, rb.cycle))
    for h in hist.values():
        h.sort(key=lambda r: (r.own_cycle, r.event != "received"))
    return hist
