"""Bit-level accounting of tester state against a memory budget."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field


class BudgetExceeded(RuntimeError):
    def __init__(self, label: str, overshoot: int, budget: int) -> None:
        super().__init__(
            f"charging {label!r} exceeds the {budget}-bit budget by {overshoot} bits"
        )
        self.label = label
        self.overshoot = overshoot
        self.budget = budget


def bits_for_counter(max_value: int) -> int:
    """Bits needed to store any integer in ``[0, max_value]`` (at least 1)."""
    if max_value < 0:
        raise ValueError(f"max_value must be nonnegative, got {max_value}")
    return max(1, int(max_value).bit_length())


@dataclass(frozen=True)
class LedgerEvent:
    label: str
    bits: int
    event: str
    running_total: int


@dataclass
class BitLedger:
    """Running account of live registers; every charge and release is logged.

    A failed charge raises :class:`BudgetExceeded` and leaves the live set
    untouched.
    """

    budget_bits: int
    entries: dict[str, int] = field(default_factory=dict)
    peak_bits: int = 0
    log: list[LedgerEvent] = field(default_factory=list)

    @property
    def current_bits(self) -> int:
        return sum(self.entries.values())

    def charge(self, label: str, bits: int) -> "BitLedger":
        if bits < 0:
            raise ValueError(f"cannot charge a negative number of bits ({bits})")
        if label in self.entries:
            raise ValueError(f"register {label!r} is already charged")
        total = self.current_bits + bits
        if total > self.budget_bits:
            self.log.append(LedgerEvent(label, bits, "breach", total))
            raise BudgetExceeded(label, total - self.budget_bits, self.budget_bits)
        self.entries[label] = bits
        self.peak_bits = max(self.peak_bits, total)
        self.log.append(LedgerEvent(label, bits, "charge", total))
        return self

    def release(self, label: str) -> "BitLedger":
        try:
            bits = self.entries.pop(label)
        except KeyError:
            raise KeyError(f"register {label!r} is not charged") from None
        self.log.append(LedgerEvent(label, bits, "release", self.current_bits))
        return self

    def release_all(self) -> "BitLedger":
        for label in list(self.entries):
            self.release(label)
        return self

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["label", "bits", "event", "running_total"])
        for ev in self.log:
            writer.writerow([ev.label, ev.bits, ev.event, ev.running_total])
        return buf.getvalue()
