"""Transaction-graph baseline checker.

Builds the happens-before graph over transactions incrementally: one node
per (outermost or unary) transaction, one directed edge per conflicting
pair recorded in the last-access tables.  Every new edge triggers a
reverse reachability search from its source, so the total cost is
superlinear in the number of live transactions; this is the baseline the
clock engines are benchmarked against.

Garbage collection deletes completed nodes without incoming edges (they
can never lie on a cycle, since a completed transaction's in-degree is
frozen); removal cascades.  Records that point at deleted nodes simply
stop producing edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .trace import Event, Op, Trace, TraceError, validate
from .verdict import Verdict


@dataclass(eq=False)
class _Node:
    serial: int
    thread: int
    active: bool
    alive: bool = True
    preds: set["_Node"] = field(default_factory=set)
    succs: set["_Node"] = field(default_factory=set)


@dataclass
class GraphCounters:
    edges_added: int = 0
    cycle_visits: int = 0
    nodes_removed: int = 0

    def reset(self) -> None:
        self.edges_added = self.cycle_visits = self.nodes_removed = 0


class VelodromeEngine:
    def __init__(self, *, gc_enabled: bool = True):
        self.gc_enabled = gc_enabled
        self.counters = GraphCounters()
        self._serial = 0
        self._open: dict[int, _Node] = {}
        self._depth: dict[int, int] = {}
        self._prev: dict[int, _Node] = {}       # thread -> its latest node
        self._last_write: dict[int, _Node] = {}
        self._last_read: dict[int, dict[int, _Node]] = {}  # var -> thread -> node
        self._last_release: dict[int, _Node] = {}
        self._pending_fork: dict[int, _Node] = {}
        self._seen_thread: set[int] = set()
        self._gc_queue: list[_Node] = []
        self._verdict: Verdict | None = None

    @property
    def verdict(self) -> Verdict | None:
        return self._verdict

    @property
    def live_nodes(self) -> int:
        return self._serial - self.counters.nodes_removed

    def _new_node(self, thread: int, active: bool) -> _Node:
        self._serial += 1
        return _Node(self._serial, thread, active)

    def _creates_cycle(self, src: _Node, dst: _Node) -> bool:
        """Would edge src -> dst close a cycle (i.e. can dst reach src)?"""
        ctr = self.counters
        seen: set[_Node] = {src}
        stack = [src]
        while stack:
            u = stack.pop()
            ctr.cycle_visits += 1
            for p in u.preds:
                if p is dst:
                    return True
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return False

    def _add_edge(self, src: _Node | None, dst: _Node, idx: int) -> bool:
        """Insert src -> dst; returns True when it closes a cycle."""
        if src is None or src is dst or not src.alive or src in dst.preds:
            return False
        if self._creates_cycle(src, dst):
            self._verdict = Verdict.violation(idx, "graph-cycle")
            return True
        dst.preds.add(src)
        src.succs.add(dst)
        self.counters.edges_added += 1
        return False

    def _complete(self, node: _Node) -> None:
        node.active = False
        if not node.preds:
            self._gc_queue.append(node)

    def collect(self) -> int:
        """Cascading removal of completed in-degree-0 nodes; returns the
        number of nodes removed."""
        removed = 0
        queue = self._gc_queue
        while queue:
            node = queue.pop()
            if not node.alive or node.active or node.preds:
                continue
            node.alive = False
            removed += 1
            for succ in node.succs:
                succ.preds.discard(node)
                if not succ.active and not succ.preds and succ.alive:
                    queue.append(succ)
            node.succs.clear()
        self.counters.nodes_removed += removed
        return removed

    def feed(self, ev: Event) -> Verdict | None:
        if self._verdict is not None:
            raise RuntimeError("checker halted after a violation")
        t = ev.thread
        kind = ev.kind
        d = self._depth.get(t, 0)

        if kind is Op.BEGIN and d == 0:
            node = self._new_node(t, active=True)
            self._open[t] = node
        elif d > 0:
            node = self._open[t]
        elif kind is Op.END:
            raise TraceError(f"event {ev.idx}: end without begin")
        else:
            node = self._new_node(t, active=False)

        if self._add_edge(self._prev.get(t), node, ev.idx):
            return self._verdict
        if t not in self._seen_thread:
            self._seen_thread.add(t)
            if self._add_edge(self._pending_fork.pop(t, None), node, ev.idx):
                return self._verdict

        if kind is Op.READ:
            if self._add_edge(self._last_write.get(ev.arg), node, ev.idx):
                return self._verdict
            self._last_read.setdefault(ev.arg, {})[t] = node
        elif kind is Op.WRITE:
            if self._add_edge(self._last_write.get(ev.arg), node, ev.idx):
                return self._verdict
            readers = self._last_read.get(ev.arg)
            if readers:
                for u in sorted(readers):
                    if self._add_edge(readers[u], node, ev.idx):
                        return self._verdict
            self._last_write[ev.arg] = node
        elif kind is Op.ACQUIRE:
            if self._add_edge(self._last_release.get(ev.arg), node, ev.idx):
                return self._verdict
        elif kind is Op.RELEASE:
            self._last_release[ev.arg] = node
        elif kind is Op.FORK:
            if ev.arg not in self._seen_thread:
                self._pending_fork[ev.arg] = node
        elif kind is Op.JOIN:
            if self._add_edge(self._prev.get(ev.arg), node, ev.idx):
                return self._verdict
        elif kind is Op.BEGIN:
            pass
        elif kind is Op.END:
            pass

        self._prev[t] = node
        if kind is Op.BEGIN:
            self._depth[t] = d + 1
        elif kind is Op.END:
            self._depth[t] = d - 1
            if d == 1:
                del self._open[t]
                self._complete(node)
        elif d == 0:
            self._complete(node)  # unary node completes immediately

        if self.gc_enabled:
            self.collect()
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
    return VelodromeEngine(gc_enabled=gc_enabled).run(
        trace, validate_first=validate_first)
