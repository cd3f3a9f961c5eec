"""Trace model: events, the on-disk format, well-formedness, transactions.

Events carry interned integer ids for threads, variables and locks; the
:class:`Trace` owns the id-to-name tables.  Ids are dense and assigned in
order of first appearance (a fork/join target counts as an appearance of
the named thread).

On-disk format, one event per line::

    thread|op

where ``op`` is one of ``r(x)``, ``w(x)``, ``acq(l)``, ``rel(l)``,
``fork(t)``, ``join(t)``, ``begin``, ``end``; ``begin``/``end`` accept an
optional method label, e.g. ``begin(put)``.  Lines starting with ``#`` are
comments; blank lines are ignored.  Event indices are 1-based counts of
event lines.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, NamedTuple


class Op(IntEnum):
    READ = 0
    WRITE = 1
    ACQUIRE = 2
    RELEASE = 3
    FORK = 4
    JOIN = 5
    BEGIN = 6
    END = 7


_OP_NAMES = {
    Op.READ: "r",
    Op.WRITE: "w",
    Op.ACQUIRE: "acq",
    Op.RELEASE: "rel",
    Op.FORK: "fork",
    Op.JOIN: "join",
    Op.BEGIN: "begin",
    Op.END: "end",
}
_NAME_OPS = {v: k for k, v in _OP_NAMES.items()}

# r/w take a variable, acq/rel a lock, fork/join a thread; begin/end take
# an optional label and carry no interned operand.
_VAR_OPS = (Op.READ, Op.WRITE)
_LOCK_OPS = (Op.ACQUIRE, Op.RELEASE)
_THREAD_OPS = (Op.FORK, Op.JOIN)

_IDENT = r"[A-Za-z0-9_.]+"
_LINE_RE = re.compile(rf"^({_IDENT})\|([a-z]+)(?:\(({_IDENT})\))?$")


class Event(NamedTuple):
    idx: int                # 1-based position in the trace
    thread: int             # thread id
    kind: Op
    arg: int | None         # var/lock/thread id depending on kind
    label: str | None = None  # method label on begin/end


class TraceError(Exception):
    """Malformed input: syntax errors or well-formedness violations."""


class TraceParseError(TraceError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class Trace:
    events: list[Event] = field(default_factory=list)
    threads: list[str] = field(default_factory=list)
    variables: list[str] = field(default_factory=list)
    locks: list[str] = field(default_factory=list)

    @property
    def thread_count(self) -> int:
        return len(self.threads)

    @property
    def var_count(self) -> int:
        return len(self.variables)

    @property
    def lock_count(self) -> int:
        return len(self.locks)

    def __len__(self) -> int:
        return len(self.events)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trace):
            return NotImplemented
        return (self.events == other.events and self.threads == other.threads
                and self.variables == other.variables and self.locks == other.locks)


class _Interner:
    def __init__(self) -> None:
        self.names: list[str] = []
        self._ids: dict[str, int] = {}

    def intern(self, name: str) -> int:
        i = self._ids.get(name)
        if i is None:
            i = len(self.names)
            self._ids[name] = i
            self.names.append(name)
        return i


class TraceBuilder:
    """Incremental construction of a trace from (thread, op, operand) triples."""

    def __init__(self) -> None:
        self._threads = _Interner()
        self._vars = _Interner()
        self._locks = _Interner()
        self.events: list[Event] = []

    def add(self, thread: str, kind: Op, operand: str | None = None,
            label: str | None = None) -> Event:
        t = self._threads.intern(thread)
        arg: int | None = None
        if kind in _VAR_OPS:
            arg = self._vars.intern(operand)  # type: ignore[arg-type]
        elif kind in _LOCK_OPS:
            arg = self._locks.intern(operand)  # type: ignore[arg-type]
        elif kind in _THREAD_OPS:
            arg = self._threads.intern(operand)  # type: ignore[arg-type]
        ev = Event(len(self.events) + 1, t, kind, arg, label)
        self.events.append(ev)
        return ev

    def build(self) -> Trace:
        return Trace(self.events, self._threads.names, self._vars.names,
                     self._locks.names)


def parse_trace(source: str | io.TextIOBase) -> Trace:
    """Parse the line-oriented trace format.

    Raises :class:`TraceParseError` with a line number on syntax errors,
    unknown operation kinds, and missing/extra operands.
    """
    if isinstance(source, str):
        lines: Iterable[str] = source.splitlines()
    else:
        lines = (ln.rstrip("\n") for ln in source)
    builder = TraceBuilder()
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _LINE_RE.match(line)
        if m is None:
            if "|" in line:
                op_part = line.split("|", 1)[1]
                op_name = op_part.split("(", 1)[0]
                if op_name not in _NAME_OPS:
                    raise TraceParseError(line_no, f"unknown operation kind {op_name!r}")
            raise TraceParseError(line_no, f"cannot parse event line {line!r}")
        thread, op_name, operand = m.groups()
        kind = _NAME_OPS.get(op_name)
        if kind is None:
            raise TraceParseError(line_no, f"unknown operation kind {op_name!r}")
        if kind in (Op.BEGIN, Op.END):
            builder.add(thread, kind, label=operand)
            continue
        if operand is None:
            raise TraceParseError(line_no, f"operand missing for {op_name!r}")
        builder.add(thread, kind, operand)
    return builder.build()


def serialize_trace(trace: Trace) -> str:
    """Inverse of :func:`parse_trace`: ``parse(serialize(t)) == t``."""
    out: list[str] = []
    for ev in trace.events:
        name = _OP_NAMES[ev.kind]
        if ev.kind in _VAR_OPS:
            op = f"{name}({trace.variables[ev.arg]})"
        elif ev.kind in _LOCK_OPS:
            op = f"{name}({trace.locks[ev.arg]})"
        elif ev.kind in _THREAD_OPS:
            op = f"{name}({trace.threads[ev.arg]})"
        elif ev.label is not None:
            op = f"{name}({ev.label})"
        else:
            op = name
        out.append(f"{trace.threads[ev.thread]}|{op}")
    return "\n".join(out) + ("\n" if out else "")


# ---------------------------------------------------------------------------
# Well-formedness

RULE_LOCK = "lock-discipline"
RULE_NESTING = "begin-end-nesting"
RULE_FORK = "fork-order"
RULE_JOIN = "join-order"


@dataclass(frozen=True)
class WfViolation:
    rule: str
    idx: int  # first offending event
    message: str

    def __str__(self) -> str:
        return f"{self.rule} at event {self.idx}: {self.message}"


def validate(trace: Trace) -> list[WfViolation]:
    """Check the four well-formedness rules; empty list means well-formed.

    Traces may end with open transactions and held locks (those are active,
    not malformed); only the orderings below are enforced:

    * lock discipline: release only by the current holder, no acquire of a
      held lock;
    * per-thread begin/end nesting counter never goes negative;
    * fork targets have not run yet, and nobody forks itself;
    * join targets have finished (no later events), were actually started,
      and nobody joins itself.
    """
    out: list[WfViolation] = []
    holder: dict[int, int] = {}
    depth: dict[int, int] = {}
    has_events: set[int] = set()
    forked: set[int] = set()
    joined_at: dict[int, int] = {}

    for ev in trace.events:
        t = ev.thread
        j = joined_at.get(t)
        if j is not None:
            out.append(WfViolation(
                RULE_JOIN, ev.idx,
                f"thread {trace.threads[t]} acts after being joined at event {j}"))
            del joined_at[t]  # report once per thread
        if ev.kind is Op.ACQUIRE:
            h = holder.get(ev.arg)
            if h is not None:
                out.append(WfViolation(
                    RULE_LOCK, ev.idx,
                    f"lock {trace.locks[ev.arg]} acquired while held by "
                    f"{trace.threads[h]}"))
            else:
                holder[ev.arg] = t
        elif ev.kind is Op.RELEASE:
            h = holder.get(ev.arg)
            if h != t:
                out.append(WfViolation(
                    RULE_LOCK, ev.idx,
                    f"release of {trace.locks[ev.arg]} without a matching "
                    f"acquire by {trace.threads[t]}"))
            else:
                del holder[ev.arg]
        elif ev.kind is Op.BEGIN:
            depth[t] = depth.get(t, 0) + 1
        elif ev.kind is Op.END:
            d = depth.get(t, 0)
            if d == 0:
                out.append(WfViolation(
                    RULE_NESTING, ev.idx,
                    f"end without a matching begin in {trace.threads[t]}"))
            else:
                depth[t] = d - 1
        elif ev.kind is Op.FORK:
            u = ev.arg
            if u == t:
                out.append(WfViolation(RULE_FORK, ev.idx, "thread forks itself"))
            elif u in has_events:
                out.append(WfViolation(
                    RULE_FORK, ev.idx,
                    f"fork of {trace.threads[u]} after it already ran"))
            else:
                forked.add(u)
        elif ev.kind is Op.JOIN:
            u = ev.arg
            if u == t:
                out.append(WfViolation(RULE_JOIN, ev.idx, "thread joins itself"))
            elif u not in has_events and u not in forked:
                out.append(WfViolation(
                    RULE_JOIN, ev.idx,
                    f"join of {trace.threads[u]} which never started"))
            else:
                joined_at.setdefault(u, ev.idx)
        has_events.add(t)
    return out


def is_complete(trace: Trace) -> bool:
    """True when every begun transaction has ended (no active blocks)."""
    depth: dict[int, int] = {}
    for ev in trace.events:
        if ev.kind is Op.BEGIN:
            depth[ev.thread] = depth.get(ev.thread, 0) + 1
        elif ev.kind is Op.END:
            depth[ev.thread] = depth.get(ev.thread, 0) - 1
    return all(d == 0 for d in depth.values())


# ---------------------------------------------------------------------------
# Transactions

@dataclass
class Transaction:
    """A maximal outermost begin..end span, or a single unguarded event."""

    thread: int
    begin_idx: int
    end_idx: int | None        # None while the block is still active
    events: list[int]          # member event indices, 1-based
    unary: bool = False
    label: str | None = None   # outermost begin's method label

    @property
    def completed(self) -> bool:
        return self.unary or self.end_idx is not None


def transactions_of(trace: Trace) -> list[Transaction]:
    """Partition the events into outermost transactions and unary ones.

    Nested begin/end events are members of the enclosing outermost block
    and do not open transactions of their own.  Every event belongs to
    exactly one returned transaction.
    """
    out: list[Transaction] = []
    open_txn: dict[int, Transaction] = {}
    depth: dict[int, int] = {}
    for ev in trace.events:
        t = ev.thread
        d = depth.get(t, 0)
        if ev.kind is Op.BEGIN:
            if d == 0:
                txn = Transaction(t, ev.idx, None, [ev.idx], label=ev.label)
                open_txn[t] = txn
                out.append(txn)
            else:
                open_txn[t].events.append(ev.idx)
            depth[t] = d + 1
        elif ev.kind is Op.END:
            if d == 0:
                raise TraceError(f"end without begin at event {ev.idx}")
            txn = open_txn[t]
            txn.events.append(ev.idx)
            if d == 1:
                txn.end_idx = ev.idx
                del open_txn[t]
            depth[t] = d - 1
        elif d > 0:
            open_txn[t].events.append(ev.idx)
        else:
            out.append(Transaction(t, ev.idx, ev.idx, [ev.idx], unary=True))
    return out
