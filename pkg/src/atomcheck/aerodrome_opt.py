"""Optimized vector-clock engine.

Three refinements over :mod:`atomcheck.aerodrome`, preserving its verdicts
and violation indices exactly:

* **Read-clock reduction** — instead of one clock per (thread, variable),
  each variable keeps two aggregates: ``Rx`` (join of all last-read
  timestamps, used to advance writers) and ``chR`` (the same join with
  each contributor's own component zeroed, used for the violation check).

* **Lazy updates** — a read only records its thread in ``staleR[x]``; the
  aggregates absorb the reader clocks at the next write of ``x``.  A write
  defers the ``W`` copy by flagging the variable stale: while the flag is
  set the writer's own clock is the authoritative last-write clock.  Both
  deferrals rely on the owner's clock not having advanced since the
  deferred event, so any pending entries are flushed immediately before a
  thread's clock is about to change (begin increment or an incoming
  join).  Runs of reads or same-thread rewrites therefore cost set
  operations instead of vector joins.

* **End-event narrowing and GC** — per-thread update sets record which
  variables can possibly satisfy the end handler's propagation condition,
  so the end event only touches those instead of every variable.  When a
  transaction provably carries no incoming dependency (its thread has
  never absorbed foreign clock components and its forking transaction is
  finished), the end handler skips propagation entirely and just clears
  the bookkeeping; such a transaction's clock joins would all be no-ops.
"""

from __future__ import annotations

from .trace import Event, Op, Trace, TraceError, validate
from .vclock import OpCounters, join_ip, join_ip_zeroed, leq
from .verdict import (DETAIL_ACQUIRE, DETAIL_END, DETAIL_JOIN, DETAIL_READ,
                      DETAIL_WRITE_READ, DETAIL_WRITE_WRITE, Verdict)
from .aerodrome import EngineHalted


class OptEngine:
    def __init__(self, *, gc_enabled: bool = True) -> None:
        self.gc_enabled = gc_enabled
        self.counters = OpCounters()
        self._C: list[list[int]] = []
        self._Cb: list[list[int]] = []
        self._depth: list[int] = []
        self._txn_serial: list[int] = []
        self._L: dict[int, list[int]] = {}
        self._last_rel: dict[int, int] = {}
        self._W: dict[int, list[int]] = {}
        self._last_w: dict[int, int] = {}
        self._stale_w: dict[int, bool] = {}
        self._owned_stale_w: list[set[int]] = []
        self._Rx: dict[int, list[int]] = {}
        self._chR: dict[int, list[int]] = {}
        self._stale_r: dict[int, set[int]] = {}
        self._stale_r_inv: list[set[int]] = []
        self._upd_r: list[set[int]] = []
        self._upd_w: list[set[int]] = []
        self._fork_origin: dict[int, tuple[int, int] | None] = {}
        # Sticky per-thread liveness: set once the thread has ever absorbed
        # a foreign clock component (or was forked); while False, every
        # clock this thread produces has all-zero foreign components, which
        # is what makes the GC branch safe.
        self._prev_live: list[bool] = []
        self._joined: set[int] = set()
        self._verdict: Verdict | None = None

    # -- inspection -----------------------------------------------------------

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

    def lock_clock(self, l: int, dim: int | None = None) -> tuple[int, ...]:
        return self._pad(self._L.get(l, []), dim)

    def depth(self, t: int) -> int:
        return self._depth[t] if t < len(self._depth) else 0

    def last_writer(self, x: int) -> int | None:
        return self._last_w.get(x)

    def write_clock(self, x: int, dim: int | None = None) -> tuple[int, ...]:
        """The authoritative last-write clock (the owner's clock while the
        variable is flagged stale, the materialised copy otherwise)."""
        if self._stale_w.get(x):
            return self._pad(self._C[self._last_w[x]], dim)
        return self._pad(self._W.get(x, []), dim)

    def read_aggregate(self, x: int, dim: int | None = None) -> tuple[int, ...]:
        """Semantic value of ``Rx``: stored aggregate plus pending readers."""
        agg = list(self._Rx.get(x, []))
        for u in self._stale_r.get(x, ()):  # unflushed readers
            join_ip(agg, self._C[u])
        return self._pad(agg, dim)

    def check_read_aggregate(self, x: int, dim: int | None = None) -> tuple[int, ...]:
        """Semantic value of ``chR`` (contributors' own components zeroed)."""
        agg = list(self._chR.get(x, []))
        for u in self._stale_r.get(x, ()):
            join_ip_zeroed(agg, self._C[u], u)
        return self._pad(agg, dim)

    # -- internals ------------------------------------------------------------

    def _ensure_thread(self, t: int) -> None:
        while len(self._C) <= t:
            u = len(self._C)
            c = [0] * (u + 1)
            c[u] = 1
            self._C.append(c)
            self._Cb.append([])
            self._depth.append(0)
            self._txn_serial.append(0)
            self._owned_stale_w.append(set())
            self._stale_r_inv.append(set())
            self._upd_r.append(set())
            self._upd_w.append(set())
            self._prev_live.append(False)

    def _flush(self, t: int) -> None:
        """Materialise everything whose validity depends on ``C[t]`` not
        having moved yet; must run before any mutation of ``C[t]``."""
        ct = self._C[t]
        ctr = self.counters
        pending = self._stale_r_inv[t]
        if pending:
            for x in sorted(pending):
                ctr.joins += 2
                join_ip(self._Rx.setdefault(x, []), ct)
                join_ip_zeroed(self._chR.setdefault(x, []), ct, t)
                self._stale_r[x].discard(t)
            pending.clear()
        owned = self._owned_stale_w[t]
        if owned:
            for x in sorted(owned):
                ctr.copies += 1
                self._W[x] = list(ct)
                self._stale_w[x] = False
            owned.clear()

    def _cag(self, clk_check: list[int] | None, clk_join: list[int] | None,
             t: int, idx: int, detail: str) -> Verdict | None:
        ctr = self.counters
        if clk_check is not None and self._depth[t] > 0:
            ctr.compares += 1
            if leq(self._Cb[t], clk_check):
                self._verdict = Verdict.violation(idx, detail)
                return self._verdict
        if clk_join is not None:
            ctr.compares += 1
            if not leq(clk_join, self._C[t]):
                self._flush(t)
                ctr.joins += 1
                join_ip(self._C[t], clk_join)
                if self._depth[t] == 0:
                    self._prev_live[t] = True
        return None

    def _write_check_clock(self, x: int) -> list[int] | None:
        if self._stale_w.get(x):
            return self._C[self._last_w[x]]
        return self._W.get(x)

    def _register(self, sets: list[set[int]], x: int, t: int) -> None:
        """Add ``x`` to the update set of every thread whose active
        transaction's begin is dominated by the accessing clock."""
        ct = self._C[t]
        ctr = self.counters
        for u in range(len(self._C)):
            if self._depth[u] > 0:
                ctr.compares += 1
                if leq(self._Cb[u], ct):
                    sets[u].add(x)

    def has_incoming_edge(self, t: int) -> bool:
        """The end-event test: forking transaction still active, or some
        foreign component of the clock grew during the transaction."""
        origin = self._fork_origin.get(t)
        if origin is not None:
            p, serial = origin
            if self._depth[p] > 0 and self._txn_serial[p] == serial:
                return True
        cb, ct = self._Cb[t], self._C[t]
        self.counters.compares += 1
        for u, v in enumerate(ct):
            if u != t and v and v > (cb[u] if u < len(cb) else 0):
                return True
        return False

    # -- event processing -------------------------------------------------------

    def feed(self, ev: Event) -> Verdict | None:
        if self._verdict is not None:
            raise EngineHalted(f"engine halted at event {self._verdict.at_idx}")
        t = ev.thread
        self._ensure_thread(t)
        if t in self._joined:
            raise TraceError(f"event {ev.idx}: thread acts after being joined")
        kind = ev.kind

        if kind is Op.READ:
            x = ev.arg
            if self._last_w.get(x) != t:
                clk = self._write_check_clock(x)
                if self._cag(clk, clk, t, ev.idx, DETAIL_READ):
                    return self._verdict
            self._stale_r.setdefault(x, set()).add(t)
            self._stale_r_inv[t].add(x)
            self._register(self._upd_r, x, t)
        elif kind is Op.WRITE:
            x = ev.arg
            prev_owner = self._last_w.get(x)
            if prev_owner != t:
                clk = self._write_check_clock(x)
                if self._cag(clk, clk, t, ev.idx, DETAIL_WRITE_WRITE):
                    return self._verdict
            readers = self._stale_r.get(x)
            if readers:
                ctr = self.counters
                rx = self._Rx.setdefault(x, [])
                chr_ = self._chR.setdefault(x, [])
                for u in sorted(readers):
                    ctr.joins += 2
                    join_ip(rx, self._C[u])
                    join_ip_zeroed(chr_, self._C[u], u)
                    self._stale_r_inv[u].discard(x)
                readers.clear()
            if self._cag(self._chR.get(x), self._Rx.get(x), t, ev.idx,
                         DETAIL_WRITE_READ):
                return self._verdict
            if self._stale_w.get(x):
                self._owned_stale_w[self._last_w[x]].discard(x)
            self._stale_w[x] = True
            self._last_w[x] = t
            self._owned_stale_w[t].add(x)
            self._register(self._upd_w, x, t)
        elif kind is Op.ACQUIRE:
            l = ev.arg
            if self._last_rel.get(l) != t:
                clk = self._L.get(l)
                if self._cag(clk, clk, t, ev.idx, DETAIL_ACQUIRE):
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
            self._prev_live[u] = True  # the fork is an incoming dependency
            self.counters.compares += 1
            if not leq(self._C[t], self._C[u]):
                self.counters.joins += 1
                join_ip(self._C[u], self._C[t])
        elif kind is Op.JOIN:
            u = ev.arg
            self._ensure_thread(u)
            cu = self._C[u]
            if self._cag(cu, cu, t, ev.idx, DETAIL_JOIN):
                return self._verdict
            self._joined.add(u)
        elif kind is Op.BEGIN:
            d = self._depth[t]
            if d == 0:
                self._flush(t)
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
        live = self._prev_live[t] or self.has_incoming_edge(t)
        self._prev_live[t] = live

        if not live and self.gc_enabled:
            # No incoming dependency: every propagation below would be a
            # no-op join, so only the bookkeeping is cleared.
            for x in sorted(self._upd_r[t]):
                readers = self._stale_r.get(x)
                if readers is not None:
                    readers.discard(t)
                self._stale_r_inv[t].discard(x)
            self._upd_r[t].clear()
            for x in sorted(self._upd_w[t]):
                if self._last_w.get(x) == t:
                    self._stale_w[x] = False
                    self._owned_stale_w[t].discard(x)
                    del self._last_w[x]
            self._upd_w[t].clear()
            for l in [l for l, u in self._last_rel.items() if u == t]:
                del self._last_rel[l]
            return None

        for u in range(len(self._C)):
            if u == t:
                continue
            ctr.compares += 1
            if leq(cb, self._C[u]):
                if self._cag(ct, ct, u, idx, DETAIL_END):
                    return self._verdict
        for l in sorted(self._L):
            ctr.compares += 1
            if leq(cb, self._L[l]):
                ctr.joins += 1
                join_ip(self._L[l], ct)
        # Threads whose active transaction observes this one: propagated
        # clock growth re-registers the touched variables for them.
        observers = []
        for u in range(len(self._C)):
            if u != t and self._depth[u] > 0:
                ctr.compares += 1
                if leq(self._Cb[u], ct):
                    observers.append(u)
        for x in sorted(self._upd_w[t]):
            if self._stale_w.get(x):
                if self._last_w.get(x) == t:
                    ctr.copies += 1
                    self._W[x] = list(ct)
                    self._stale_w[x] = False
                    self._owned_stale_w[t].discard(x)
                    for u in observers:
                        self._upd_w[u].add(x)
                # A stale entry owned by someone else has superseded this
                # thread's write; nothing to propagate.
            else:
                w = self._W.get(x)
                if w is not None:
                    ctr.compares += 1
                    if leq(cb, w):
                        ctr.joins += 1
                        join_ip(w, ct)
                        for u in observers:
                            self._upd_w[u].add(x)
        self._upd_w[t].clear()
        for x in sorted(self._upd_r[t]):
            ctr.joins += 2
            join_ip(self._Rx.setdefault(x, []), ct)
            join_ip_zeroed(self._chR.setdefault(x, []), ct, t)
            readers = self._stale_r.get(x)
            if readers is not None and t in readers:
                readers.discard(t)
                self._stale_r_inv[t].discard(x)
            for u in observers:
                self._upd_r[u].add(x)
        self._upd_r[t].clear()
        return None

    def run(self, trace: Trace, *, validate_first: bool = True) -> Verdict:
        if validate_first:
            problems = validate(trace)
            if problems:
                raise TraceError("; ".join(str(p) for p in problems))
        for ev in trace.events:
            v = self.feed(ev)
            if v is not None:
                return v
        return Verdict.ok()


def run(trace: Trace, *, gc_enabled: bool = True,
        validate_first: bool = True) -> Verdict:
    return OptEngine(gc_enabled=gc_enabled).run(
        trace, validate_first=validate_first)
