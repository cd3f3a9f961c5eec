"""Single-pass vector-clock engine for conflict-serializability checking.

The engine assigns implicit vector timestamps to events as they stream in,
keeping one clock per thread (``C``), the timestamp of each thread's last
outermost begin (``Cb``), and per-lock / per-variable clocks recording the
last release, last write, and last read per thread.  A violation is
declared the moment a clock that dominates the checking thread's begin
timestamp flows into it while its transaction is still active.

State after ``n`` fed events depends only on those events (streaming
contract).  After a violation the engine refuses further events.
"""

from __future__ import annotations

from .trace import Event, Op, Trace, TraceError, validate
from .vclock import OpCounters, join_ip, leq
from .verdict import (DETAIL_ACQUIRE, DETAIL_END, DETAIL_JOIN, DETAIL_READ,
                      DETAIL_WRITE_READ, DETAIL_WRITE_WRITE, Verdict)


class EngineHalted(RuntimeError):
    """An event was fed after the engine already declared a violation."""


class Engine:
    def __init__(self) -> None:
        self.counters = OpCounters()
        self._C: list[list[int]] = []
        self._Cb: list[list[int]] = []
        self._depth: list[int] = []
        self._txn_serial: list[int] = []
        self._L: dict[int, list[int]] = {}
        self._last_rel: dict[int, int] = {}
        self._W: dict[int, list[int]] = {}
        self._last_w: dict[int, int] = {}
        self._R: dict[int, dict[int, list[int]]] = {}
        # child -> (parent, parent txn serial) when forked inside a
        # transaction; kept for parity with the optimized engine's GC.
        self._fork_origin: dict[int, tuple[int, int] | None] = {}
        self._joined: set[int] = set()
        self._verdict: Verdict | None = None

    # -- state inspection ---------------------------------------------------

    @property
    def thread_count(self) -> int:
        return len(self._C)

    @property
    def verdict(self) -> Verdict | None:
        return self._verdict

    def _pad(self, v: list[int], dim: int | None) -> tuple[int, ...]:
        n = dim if dim is not None else self.thread_count
        if len(v) >= n:
            return tuple(v)
        return tuple(v) + (0,) * (n - len(v))

    def clock(self, t: int, dim: int | None = None) -> tuple[int, ...]:
        return self._pad(self._C[t], dim)

    def begin_clock(self, t: int, dim: int | None = None) -> tuple[int, ...]:
        return self._pad(self._Cb[t], dim)

    def write_clock(self, x: int, dim: int | None = None) -> tuple[int, ...]:
        return self._pad(self._W.get(x, []), dim)

    def read_clock(self, t: int, x: int, dim: int | None = None) -> tuple[int, ...]:
        return self._pad(self._R.get(x, {}).get(t, []), dim)

    def lock_clock(self, l: int, dim: int | None = None) -> tuple[int, ...]:
        return self._pad(self._L.get(l, []), dim)

    def depth(self, t: int) -> int:
        return self._depth[t] if t < len(self._depth) else 0

    def last_writer(self, x: int) -> int | None:
        return self._last_w.get(x)

    def read_aggregate(self, x: int, dim: int | None = None) -> tuple[int, ...]:
        """Join of all per-thread read clocks of ``x``."""
        agg: list[int] = []
        for c in self._R.get(x, {}).values():
            join_ip(agg, c)
        return self._pad(agg, dim)

    # -- event processing ---------------------------------------------------

    def _ensure_thread(self, t: int) -> None:
        while len(self._C) <= t:
            u = len(self._C)
            c = [0] * (u + 1)
            c[u] = 1
            self._C.append(c)
            self._Cb.append([])
            self._depth.append(0)
            self._txn_serial.append(0)

    def _check_and_get(self, clk: list[int] | None, t: int, idx: int,
                       detail: str) -> Verdict | None:
        """Violation check against ``clk`` followed by ``C[t] ⊔= clk``."""
        if clk is None:
            return None
        ctr = self.counters
        ctr.compares += 1
        if self._depth[t] > 0 and leq(self._Cb[t], clk):
            self._verdict = Verdict.violation(idx, detail)
            return self._verdict
        ctr.joins += 1
        join_ip(self._C[t], clk)
        return None

    def feed(self, ev: Event) -> Verdict | None:
        """Process one event; returns the violation verdict if one fired."""
        if self._verdict is not None:
            raise EngineHalted(f"engine halted at event {self._verdict.at_idx}")
        t = ev.thread
        self._ensure_thread(t)
        if t in self._joined:
            raise TraceError(
                f"event {ev.idx}: thread acts after being joined")
        kind = ev.kind

        if kind is Op.READ:
            x = ev.arg
            if self._last_w.get(x) != t:
                if self._check_and_get(self._W.get(x), t, ev.idx, DETAIL_READ):
                    return self._verdict
            self.counters.copies += 1
            self._R.setdefault(x, {})[t] = list(self._C[t])
        elif kind is Op.WRITE:
            x = ev.arg
            if self._last_w.get(x) != t:
                if self._check_and_get(self._W.get(x), t, ev.idx,
                                       DETAIL_WRITE_WRITE):
                    return self._verdict
            reads = self._R.get(x)
            if reads:
                for u in sorted(reads):
                    if u != t:
                        if self._check_and_get(reads[u], t, ev.idx,
                                               DETAIL_WRITE_READ):
                            return self._verdict
            self.counters.copies += 1
            self._W[x] = list(self._C[t])
            self._last_w[x] = t
        elif kind is Op.ACQUIRE:
            l = ev.arg
            if self._last_rel.get(l) != t:
                if self._check_and_get(self._L.get(l), t, ev.idx,
                                       DETAIL_ACQUIRE):
                    return self._verdict
        elif kind is Op.RELEASE:
            l = ev.arg
            self.counters.copies += 1
            self._L[l] = list(self._C[t])
            self._last_rel[l] = t
        elif kind is Op.FORK:
            u = ev.arg
            self._ensure_thread(u)
            active = self._depth[t] > 0
            self._fork_origin[u] = (t, self._txn_serial[t]) if active else None
            self.counters.joins += 1
            join_ip(self._C[u], self._C[t])
        elif kind is Op.JOIN:
            u = ev.arg
            self._ensure_thread(u)
            if self._check_and_get(self._C[u], t, ev.idx, DETAIL_JOIN):
                return self._verdict
            self._joined.add(u)
        elif kind is Op.BEGIN:
            d = self._depth[t]
            if d == 0:
                c = self._C[t]
                if len(c) <= t:
                    c.extend([0] * (t + 1 - len(c)))
                c[t] += 1
                self.counters.copies += 1
                self._Cb[t] = list(c)
                self._txn_serial[t] += 1
            self._depth[t] = d + 1
        elif kind is Op.END:
            d = self._depth[t]
            if d == 0:
                raise TraceError(f"event {ev.idx}: end without begin")
            if d == 1:
                if self._handle_end(t, ev.idx):
                    return self._verdict
            self._depth[t] = d - 1
        return None

    def _handle_end(self, t: int, idx: int) -> Verdict | None:
        ctr = self.counters
        cb = self._Cb[t]
        ct = self._C[t]
        for u in range(len(self._C)):
            if u == t:
                continue
            ctr.compares += 1
            if leq(cb, self._C[u]):
                if self._check_and_get(ct, u, idx, DETAIL_END):
                    return self._verdict
        for l in sorted(self._L):
            ctr.compares += 1
            if leq(cb, self._L[l]):
                ctr.joins += 1
                join_ip(self._L[l], ct)
        xs = sorted(set(self._W) | set(self._R))
        for x in xs:
            w = self._W.get(x)
            if w is not None:
                ctr.compares += 1
                if leq(cb, w):
                    ctr.joins += 1
                    join_ip(w, ct)
            reads = self._R.get(x)
            if reads:
                for u in sorted(reads):
                    ctr.compares += 1
                    if leq(cb, reads[u]):
                        ctr.joins += 1
                        join_ip(reads[u], ct)
        return None

    def run(self, trace: Trace, *, validate_first: bool = True) -> Verdict:
        """Analyse a whole trace; raises :class:`TraceError` if malformed."""
        if validate_first:
            problems = validate(trace)
            if problems:
                raise TraceError("; ".join(str(p) for p in problems))
        for ev in trace.events:
            v = self.feed(ev)
            if v is not None:
                return v
        return Verdict.ok()


def run(trace: Trace, *, validate_first: bool = True) -> Verdict:
    return Engine().run(trace, validate_first=validate_first)
