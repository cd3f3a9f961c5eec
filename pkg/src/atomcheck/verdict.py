"""Analysis outcome shared by every checker."""

from __future__ import annotations

from dataclasses import dataclass

SERIALIZABLE = "serializable"
VIOLATION = "violation"

# Which check fired, for violation verdicts produced by the clock engines.
DETAIL_ACQUIRE = "acquire"
DETAIL_READ = "read"
DETAIL_WRITE_WRITE = "write-vs-write"
DETAIL_WRITE_READ = "write-vs-read"
DETAIL_JOIN = "join"
DETAIL_END = "end-handshake"


@dataclass(frozen=True)
class Verdict:
    """Result of analysing one trace.

    ``at_idx`` is the 1-based index of the event at which the violation was
    declared; it is ``None`` for serializable traces and for checkers that
    do not localise the violation (the brute-force oracle reports a witness
    cycle instead).
    """

    outcome: str
    at_idx: int | None = None
    detail: str | None = None

    @property
    def is_violation(self) -> bool:
        return self.outcome == VIOLATION

    @staticmethod
    def ok() -> "Verdict":
        return Verdict(SERIALIZABLE)

    @staticmethod
    def violation(at_idx: int | None, detail: str | None = None) -> "Verdict":
        return Verdict(VIOLATION, at_idx, detail)

    def __str__(self) -> str:
        if not self.is_violation:
            return SERIALIZABLE
        where = f" at event {self.at_idx}" if self.at_idx is not None else ""
        why = f" ({self.detail})" if self.detail else ""
        return f"violation{where}{why}"
