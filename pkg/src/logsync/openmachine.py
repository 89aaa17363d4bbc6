"""Clock-stepped tape machines that send, receive and log phases.

A machine is an immutable value; every operation returns a new machine.
The tape program is a plain 5-tuple transition table, so the logical
result of a run depends only on program and initial tape, never on the
periods the clock happened to use.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from functools import total_ordering
from typing import Iterable, Mapping, Sequence

from .errors import ConfigError, LogicalSyncViolation, PhaseDisciplineError, ProgramError

LEFT, RIGHT, STAY = "L", "R", "N"
HALT = "halt"
BLANK = "_"


@total_ordering
@dataclass(frozen=True)
class Reading:
    """Clock reading m.phi with -1/2 < phi <= 1/2."""

    cycle: int
    phase: float = 0.0

    def __post_init__(self):
        if not (-0.5 < self.phase <= 0.5):
            raise ValueError(f"phase {self.phase} outside (-1/2, 1/2]")

    @classmethod
    def from_value(cls, value: float) -> "Reading":
        cycle = math.ceil(value - 0.5)
        phase = value - cycle
        # float rounding can land exactly on -1/2
        if phase <= -0.5:
            cycle -= 1
            phase += 1.0
        return cls(int(cycle), float(phase))

    @property
    def value(self) -> float:
        return self.cycle + self.phase

    def __float__(self) -> float:
        return self.value

    def __lt__(self, other: "Reading") -> bool:
        return (self.cycle, self.phase) < (other.cycle, other.phase)

    def __str__(self):
        return f"{self.cycle}.{self.phase:+.6g}"


@dataclass(frozen=True)
class HistoryRecord:
    """One row of a machine's history log.

    ``phase_or_rate`` is the reception phase for ``received`` rows, the
    rate value for ``rate`` rows and an optional transmit phase for
    ``send`` rows (``None`` means a null phase).
    """

    own_cycle: int
    event: str
    party: str | None = None
    phase_or_rate: float | None = None
    cycle_sent: int | None = None

    def __post_init__(self):
        if self.event not in ("send", "received", "rate"):
            raise ValueError(f"unknown event {self.event!r}")
        if self.event == "received" and (self.phase_or_rate is None or self.cycle_sent is None):
            raise ValueError("received records need a phase and cycle_sent")
        if self.event == "rate" and (self.phase_or_rate is None or self.party is not None):
            raise ValueError("rate records carry a rate and no party")

    @property
    def reading(self) -> float:
        if self.event == "rate":
            return float(self.own_cycle)
        return self.own_cycle + (self.phase_or_rate or 0.0)


HISTORY_COLUMNS = ("own_cycle", "event", "party", "phase_or_rate", "cycle_sent")


def history_to_csv(history: Iterable[HistoryRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_COLUMNS)
    for rec in history:
        w.writerow([
            rec.own_cycle,
            rec.event,
            "" if rec.party is None else rec.party,
            "" if rec.phase_or_rate is None else repr(float(rec.phase_or_rate)),
            "" if rec.cycle_sent is None else rec.cycle_sent,
        ])
    return buf.getvalue()


def history_from_csv(text: str) -> list[HistoryRecord]:
    rows = csv.DictReader(io.StringIO(text))
    missing = set(HISTORY_COLUMNS) - set(rows.fieldnames or ())
    if missing:
        raise ValueError(f"history CSV missing columns {sorted(missing)}")
    out = []
    for row in rows:
        event = row["event"].strip()
        if event == "rec'd":
            event = "received"
        out.append(HistoryRecord(
            own_cycle=int(row["own_cycle"]),
            event=event,
            party=row["party"].strip() or None,
            phase_or_rate=float(row["phase_or_rate"]) if row["phase_or_rate"].strip() else None,
            cycle_sent=int(row["cycle_sent"]) if row["cycle_sent"].strip() else None,
        ))
    return out


def history_to_json(history: Iterable[HistoryRecord]) -> str:
    return json.dumps([{k: getattr(r, k) for k in HISTORY_COLUMNS} for r in history], indent=1)


def history_from_json(text: str) -> list[HistoryRecord]:
    return [HistoryRecord(**row) for row in json.loads(text)]


def sample_history() -> list[HistoryRecord]:
    """The cycle 17-19 fragment of machine A's log."""
    return [
        HistoryRecord(17, "send", "B"),
        HistoryRecord(17, "rate", None, 3.14),
        HistoryRecord(18, "send", "D"),
        HistoryRecord(18, "rate", None, 3.14),
        HistoryRecord(19, "received", "B", 0.17, 24),
        HistoryRecord(19, "rate", None, 3.07),
        HistoryRecord(19, "send", "B"),
    ]


# ----------------------------------------------------------------------------
# Tape programs


@dataclass(frozen=True)
class Program:
    """Transition table ``(state, symbol) -> (write, move, next_state)``."""

    transitions: Mapping[tuple[str, str], tuple[str, str, str]]
    start: str = "q0"
    alphabet: frozenset = frozenset({BLANK, "1"})

    def __post_init__(self):
        for (state, sym), (write, move, nxt) in self.transitions.items():
            if sym not in self.alphabet or write not in self.alphabet:
                raise ProgramError(f"symbol outside alphabet in ({state}, {sym})")
            if move not in (LEFT, RIGHT, STAY):
                raise ProgramError(f"bad move {move!r}")
            if state == HALT:
                raise ProgramError("no transitions out of the halt state")


def unary_increment() -> Program:
    """Scan right over 1s and append one more."""
    return Program({
        ("q0", "1"): ("1", RIGHT, "q0"),
        ("q0", BLANK): ("1", STAY, HALT),
    })


def unary_addition() -> Program:
    """``1^a + 1^b`` -> ``1^(a+b)``: fill the plus, then erase the last 1."""
    return Program(
        {
            ("q0", "1"): ("1", RIGHT, "q0"),
            ("q0", "+"): ("1", RIGHT, "q1"),
            ("q1", "1"): ("1", RIGHT, "q1"),
            ("q1", BLANK): (BLANK, LEFT, "q2"),
            ("q2", "1"): (BLANK, STAY, HALT),
        },
        alphabet=frozenset({BLANK, "1", "+"}),
    )


def binary_increment() -> Program:
    """Add one to a binary number with the head on its last digit."""
    return Program(
        {
            ("q0", "1"): ("0", LEFT, "q0"),
            ("q0", "0"): ("1", STAY, HALT),
            ("q0", BLANK): ("1", STAY, HALT),
        },
        alphabet=frozenset({BLANK, "0", "1"}),
    )


# ----------------------------------------------------------------------------
# The machine


@dataclass(frozen=True)
class Emission:
    sender: str
    to: str
    payload: str
    own_cycle: int
    phase: float
    time: float


@dataclass(frozen=True)
class OpenMachine:
    name: str
    program: Program
    tape: tuple[str, ...]
    head: int = 0
    state: str = "q0"
    cycle: int = 0
    phase: float = 0.0
    period: float = 1.0
    time: float = 0.0
    history: tuple[HistoryRecord, ...] = ()
    eta: float = 0.1
    input_cell: int = -1
    allow_midcycle_transmit: bool = False
    moves: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.period <= 0:
            raise ConfigError("period must be positive")
        if not (0.0 < self.eta < 1.0):
            raise ConfigError("eta must lie in (0, 1)")
        bad = set(self.tape) - set(self.program.alphabet)
        if bad:
            raise ProgramError(f"tape symbols {sorted(bad)} outside program alphabet")

    @classmethod
    def create(cls, name: str, program: Program, tape: str | Sequence[str], *,
               head: int = 0, width: int | None = None, **kw) -> "OpenMachine":
        """Build a machine with ``tape`` left-aligned on ``width`` cells of blanks."""
        cells = list(tape)
        width = max(width or len(cells) + 8, len(cells))
        cells += [BLANK] * (width - len(cells))
        return cls(name=name, program=program, tape=tuple(cells), head=head,
                   state=program.start, **kw)

    @property
    def halted(self) -> bool:
        return self.state == HALT

    @property
    def reading(self) -> Reading:
        return Reading(self.cycle, self.phase)

    def tape_string(self) -> str:
        return "".join(self.tape).strip(BLANK)


def step(machine: OpenMachine) -> OpenMachine:
    """Execute one move and advance the clock by one cycle."""
    m = machine
    advance = dict(cycle=m.cycle + 1, time=m.time + m.period)
    if m.halted:
        return replace(m, **advance)
    sym = m.tape[m.head]
    try:
        write, move, nxt = m.program.transitions[(m.state, sym)]
    except KeyError:
        raise ProgramError(f"{m.name}: no transition for ({m.state}, {sym!r})") from None
    tape = m.tape[:m.head] + (write,) + m.tape[m.head + 1:]
    head = m.head + {LEFT: -1, RIGHT: 1, STAY: 0}[move]
    if not 0 <= head < len(tape):
        raise ProgramError(f"{m.name}: head moved to {head}, outside [0, {len(tape)})")
    return replace(m, tape=tape, head=head, state=nxt, moves=m.moves + 1, **advance)


def run(machine: OpenMachine, tick_schedule: Iterable[float], *, stop_on_halt: bool = True) -> OpenMachine:
    """Step once per entry of ``tick_schedule``, each entry being that cycle's period."""
    m = machine
    for period in tick_schedule:
        if stop_on_halt and m.halted:
            break
        if period <= 0:
            raise ConfigError(f"non-positive period {period} in schedule")
        m = step(replace(m, period=float(period)))
    return m


def receive(machine: OpenMachine, sender: str, payload: str, arrival_phase: float,
            cycle_sent: int) -> OpenMachine:
    """Accept a character only inside the writing phase |phi| < (1 - eta)/2."""
    if not (-0.5 < arrival_phase <= 0.5):
        raise ValueError(f"arrival phase {arrival_phase} outside (-1/2, 1/2]")
    if abs(arrival_phase) >= (1.0 - machine.eta) / 2.0:
        raise LogicalSyncViolation(arrival_phase, machine.eta, sender)
    if payload not in machine.program.alphabet:
        raise ProgramError(f"payload {payload!r} outside alphabet")
    idx = machine.input_cell % len(machine.tape)
    tape = machine.tape[:idx] + (payload,) + machine.tape[idx + 1:]
    rec = HistoryRecord(machine.cycle, "received", sender, float(arrival_phase), int(cycle_sent))
    return replace(machine, tape=tape, history=machine.history + (rec,))


def transmit(machine: OpenMachine, to: str, payload: str) -> tuple[OpenMachine, Emission]:
    if machine.phase != 0.0 and not machine.allow_midcycle_transmit:
        raise PhaseDisciplineError(
            f"{machine.name}: transmit at phase {machine.phase}; transmissions occur at ticks"
        )
    rec = HistoryRecord(machine.cycle, "send", to,
                        machine.phase if machine.phase != 0.0 else None)
    ev = Emission(machine.name, to, payload, machine.cycle, machine.phase, machine.time)
    return replace(machine, history=machine.history + (rec,)), ev


def set_rate(machine: OpenMachine, new_period: float) -> OpenMachine:
    """Change the clock period from the next move on and log it."""
    if not (new_period > 0) or not math.isfinite(new_period):
        raise ConfigError(f"period must be positive, got {new_period}")
    rec = HistoryRecord(machine.cycle, "rate", None, float(new_period))
    return replace(machine, period=float(new_period), history=machine.history + (rec,))
