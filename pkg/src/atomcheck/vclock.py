"""Vector timestamps and the primitive operations on them.

A vector time maps thread indices to non-negative integer counters.  The
value form used throughout the public API is a plain tuple of ints; a
missing component reads as 0, so clocks of different logical dimensions
compare and join transparently (the short one is implicitly zero-padded).

The engines keep their clocks as mutable ``list[int]`` for speed and use
the ``*_ip`` in-place helpers; those are semantically the same operations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

Clock = tuple[int, ...]

BOTTOM: Clock = ()


def component(v: Sequence[int], t: int) -> int:
    """Component ``t`` of ``v``; absent components are 0."""
    return v[t] if 0 <= t < len(v) else 0


def leq(a: Sequence[int], b: Sequence[int]) -> bool:
    """Componentwise ``a <= b`` (the partial order on vector times)."""
    la, lb = len(a), len(b)
    if la <= lb:
        return all(a[i] <= b[i] for i in range(la))
    # The tail of ``a`` beyond ``b`` must be all zero.
    return all(a[i] <= b[i] for i in range(lb)) and all(a[i] == 0 for i in range(lb, la))


def join(a: Sequence[int], b: Sequence[int]) -> Clock:
    """Componentwise maximum (least upper bound)."""
    if len(a) < len(b):
        a, b = b, a
    out = list(a)
    for i, x in enumerate(b):
        if x > out[i]:
            out[i] = x
    return tuple(out)


def with_component(v: Sequence[int], t: int, c: int) -> Clock:
    """Copy of ``v`` with component ``t`` set to ``c``."""
    if c < 0:
        raise ValueError("clock components are non-negative")
    out = list(v)
    if t >= len(out):
        out.extend([0] * (t + 1 - len(out)))
    out[t] = c
    return tuple(out)


def increment_local(v: Sequence[int], t: int) -> Clock:
    """Copy of ``v`` with component ``t`` increased by one."""
    return with_component(v, t, component(v, t) + 1)


def fmt(v: Sequence[int], dim: int | None = None) -> str:
    """Debug rendering used by verbose CLI output, e.g. ``⟨2,0,1⟩``."""
    vals = list(v)
    if dim is not None and dim > len(vals):
        vals.extend([0] * (dim - len(vals)))
    return "⟨" + ",".join(str(x) for x in vals) + "⟩"


# ---------------------------------------------------------------------------
# In-place helpers for the engines.  ``dst`` lists are exclusively owned by
# one engine instance; these never alias their ``src`` argument.

def ensure_dim(dst: list[int], dim: int) -> None:
    if len(dst) < dim:
        dst.extend([0] * (dim - len(dst)))


def join_ip(dst: list[int], src: Sequence[int]) -> bool:
    """``dst := dst ⊔ src``; returns whether ``dst`` changed."""
    ensure_dim(dst, len(src))
    changed = False
    for i, x in enumerate(src):
        if x > dst[i]:
            dst[i] = x
            changed = True
    return changed


def join_ip_zeroed(dst: list[int], src: Sequence[int], zero_at: int) -> bool:
    """``dst := dst ⊔ src[0/zero_at]`` without materialising the copy."""
    ensure_dim(dst, len(src))
    changed = False
    for i, x in enumerate(src):
        if i != zero_at and x > dst[i]:
            dst[i] = x
            changed = True
    return changed


def copy_of(src: Iterable[int]) -> list[int]:
    return list(src)


@dataclass
class OpCounters:
    """Instrumentation shared by all engines: vector-level op counts."""

    joins: int = 0
    compares: int = 0
    copies: int = 0

    def reset(self) -> None:
        self.joins = self.compares = self.copies = 0
