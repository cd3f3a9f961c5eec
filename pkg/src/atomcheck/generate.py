"""Deterministic random generation of well-formed traces.

Each thread alternates transactional blocks (length drawn from
``txn_length_range``) with unary events; forks and joins are emitted only
when structurally legal (targets not yet started / already finished).  The
requested ``events`` count is exact: the generator reserves budget for the
closing releases and ends, so every produced trace is complete (no active
transactions or held locks at the end) as well as well-formed.

Identical configuration and seed yield a byte-identical trace.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .trace import Op, Trace, TraceBuilder


class InfeasibleConfig(ValueError):
    """The requested cardinalities cannot fill the event budget legally."""


@dataclass
class _ThreadState:
    name: str
    born: bool
    terminated: bool = False
    depth: int = 0
    held: list[str] = field(default_factory=list)
    txn_left: int = 0          # planned interior events before closing
    event_count: int = 0
    joined: bool = False


def generate_trace(threads: int, events: int, variables: int = 1,
                   locks: int = 0, txn_length_range: tuple[int, int] = (1, 6),
                   seed: int = 0) -> Trace:
    """Generate a complete well-formed trace with exactly ``events`` events.

    ``threads``/``variables``/``locks`` are upper bounds on the distinct
    names used.  Raises :class:`InfeasibleConfig` when the budget cannot be
    filled (e.g. an odd event count with no variables or locks to touch).
    """
    if threads < 1:
        raise InfeasibleConfig("at least one thread is required")
    if events < 0:
        raise InfeasibleConfig("negative event budget")
    lo, hi = txn_length_range
    if lo < 0 or hi < lo:
        raise InfeasibleConfig(f"bad txn_length_range {txn_length_range!r}")

    rng = random.Random(seed)
    builder = TraceBuilder()
    var_names = [f"x{i}" for i in range(1, variables + 1)]
    lock_names = [f"l{i}" for i in range(1, locks + 1)]

    states = [_ThreadState(f"T{i}", born=True) for i in range(1, threads + 1)]
    # Some non-initial threads start life as fork children.
    for st in states[1:]:
        if rng.random() < 0.35:
            st.born = False

    lock_holder: dict[str, _ThreadState] = {}
    emitted = 0

    def deficit() -> int:
        return sum(len(st.held) + st.depth for st in states)

    def emit(st: _ThreadState, kind: Op, operand: str | None = None) -> None:
        nonlocal emitted
        builder.add(st.name, kind, operand)
        st.event_count += 1
        emitted += 1

    while emitted < events:
        remaining = events - emitted
        need = deficit()
        if remaining <= need:
            # Close mode: releases first, then ends, until the books balance.
            for st in states:
                if st.held:
                    lock = st.held.pop()
                    del lock_holder[lock]
                    emit(st, Op.RELEASE, lock)
                    break
                if st.depth > 0:
                    st.depth -= 1
                    emit(st, Op.END)
                    break
            continue

        runnable = [st for st in states if st.born and not st.terminated]
        if not runnable:
            raise InfeasibleConfig(
                "all threads terminated or unborn with budget remaining")
        st = rng.choice(runnable)
        headroom = remaining - need  # > 0 here

        # Structural actions first, with small probability.
        unborn = [u for u in states if not u.born]
        if unborn and rng.random() < 0.12:
            child = rng.choice(unborn)
            child.born = True
            emit(st, Op.FORK, child.name)
            continue
        finished = [u for u in states
                    if u.terminated and not u.joined and u is not st
                    and u.event_count > 0]
        if finished and rng.random() < 0.15:
            target = rng.choice(finished)
            target.joined = True
            emit(st, Op.JOIN, target.name)
            continue
        if (len(runnable) > 1 and st.depth == 0 and not st.held
                and st.event_count > 0 and rng.random() < 0.06):
            st.terminated = True
            continue

        if st.depth == 0 and headroom >= 2 and rng.random() < 0.45:
            st.depth = 1
            st.txn_left = rng.randint(lo, hi)
            emit(st, Op.BEGIN)
            continue
        if st.depth > 0 and st.txn_left <= 0:
            st.depth -= 1
            emit(st, Op.END)
            continue

        choices: list[tuple[str, str | None]] = []
        if var_names:
            choices.append(("read", None))
            choices.append(("write", None))
        free = [l for l in lock_names if l not in lock_holder]
        if free and headroom >= 2:
            choices.append(("acquire", rng.choice(free)))
        if st.held:
            choices.append(("release", None))
        if st.depth > 0 and headroom >= 2 and rng.random() < 0.04:
            choices.append(("nest", None))
        if not choices:
            if st.depth == 0 and headroom >= 2:
                st.depth = 1
                st.txn_left = rng.randint(lo, hi)
                emit(st, Op.BEGIN)
                continue
            if st.depth > 0:
                st.depth -= 1
                emit(st, Op.END)
                continue
            raise InfeasibleConfig(
                f"cannot fill {events} events with variables={variables} "
                f"locks={locks} threads={threads}")

        action, arg = rng.choice(choices)
        if st.depth > 0:
            st.txn_left -= 1
        if action == "read":
            emit(st, Op.READ, rng.choice(var_names))
        elif action == "write":
            emit(st, Op.WRITE, rng.choice(var_names))
        elif action == "acquire":
            lock_holder[arg] = st
            st.held.append(arg)
            emit(st, Op.ACQUIRE, arg)
        elif action == "release":
            lock = st.held.pop(rng.randrange(len(st.held)))
            del lock_holder[lock]
            emit(st, Op.RELEASE, lock)
        else:  # nested begin; the matching end comes out of the same budget
            st.depth += 1
            emit(st, Op.BEGIN)

    return builder.build()
