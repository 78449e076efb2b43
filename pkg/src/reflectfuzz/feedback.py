"""Translate raw VM signals and oracle verdicts into agent feedback.

The digest produced by :func:`summarize` is line oriented::

    feedback-digest v1
    tx0 invest{value: 1}() from 0x...0101: ok
    tx1 setPhase(1) from 0x...0a11: RequireFailed [guard: ...]
    verdict: VulnerabilityNotFound
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .contract_vm.chain import RAW_KINDS, RawSignal
from .oracles import OracleReport, VulnClass
from .txmodel import TransactionSequence

DIGEST_VERSION = "feedback-digest v1"
DEFAULT_SUMMARY_CAP = 2000
MIN_SUMMARY_CAP = 200

__all__ = ["RawSignal", "FeedbackKind", "Feedback", "translate", "summarize", "KIND_MAP"]


class FeedbackKind(str, Enum):
    FunctionNotFound = "FunctionNotFound"
    ArgumentMismatch = "ArgumentMismatch"
    SenderError = "SenderError"
    NonPayableFunction = "NonPayableFunction"
    IncorrectTransactionValue = "IncorrectTransactionValue"
    RequireFailed = "RequireFailed"

    def __str__(self) -> str:
        return self.value


KIND_MAP = {
    "unknown_function": FeedbackKind.FunctionNotFound,
    "arity_or_type_mismatch": FeedbackKind.ArgumentMismatch,
    "insufficient_balance": FeedbackKind.SenderError,
    "bad_nonce": FeedbackKind.SenderError,
    "value_to_nonpayable": FeedbackKind.NonPayableFunction,
    "value_constraint_violation": FeedbackKind.IncorrectTransactionValue,
    "require_failed": FeedbackKind.RequireFailed,
    "reverted": FeedbackKind.RequireFailed,
}
assert set(KIND_MAP) == set(RAW_KINDS)

NOT_FOUND = "VulnerabilityNotFound"


def vulnerability_found(cls: VulnClass) -> str:
    return f"VulnerabilityFound({cls.value})"


@dataclass(frozen=True)
class Feedback:
    per_tx: dict = field(default_factory=dict)
    vulnerability: str = NOT_FOUND
    found_class: VulnClass | None = None
    found_classes: tuple[VulnClass, ...] = ()
    signals: tuple[RawSignal, ...] = ()
    summary_text: str = ""

    @property
    def stop(self) -> bool:
        return self.found_class is not None

    @property
    def clean(self) -> bool:
        return not self.per_tx

    def kinds_at(self, index: int) -> list[FeedbackKind]:
        return self.per_tx.get(index, [])

    def signals_at(self, index: int) -> list[RawSignal]:
        return [s for s in self.signals if s.tx_index == index]

    def first_index(self, kind: FeedbackKind) -> int | None:
        hits = [i for i, kinds in self.per_tx.items() if kind in kinds]
        return min(hits) if hits else None

    def to_dict(self) -> dict:
        return {
            "per_tx": {str(i): [k.value for k in kinds] for i, kinds in sorted(self.per_tx.items())},
            "vulnerability": self.vulnerability,
            "found_classes": [c.value for c in self.found_classes],
            "summary": self.summary_text,
        }


def translate(raw, report: OracleReport, seq: TransactionSequence | None = None,
              cap: int = DEFAULT_SUMMARY_CAP) -> Feedback:
    per_tx: dict[int, list[FeedbackKind]] = {}
    for sig in raw:
        kinds = per_tx.setdefault(sig.tx_index, [])
        kind = KIND_MAP[sig.kind]
        if kind not in kinds:
            kinds.append(kind)
    first = report.first
    fb = Feedback(
        per_tx=per_tx,
        vulnerability=vulnerability_found(first) if first else NOT_FOUND,
        found_class=first,
        found_classes=tuple(report.found),
        signals=tuple(raw),
    )
    if seq is None:
        return fb
    return Feedback(fb.per_tx, fb.vulnerability, fb.found_class, fb.found_classes, fb.signals, summarize(fb, seq, cap))


def _short(addr: str) -> str:
    return addr[:6] + "..." + addr[-4:] if len(addr) > 12 else addr


def summarize(feedback: Feedback, seq: TransactionSequence, cap: int = DEFAULT_SUMMARY_CAP) -> str:
    lines = []
    for i, tx in enumerate(seq.txs):
        kinds = feedback.kinds_at(i)
        if not kinds:
            status = "ok"
        else:
            parts = []
            for k in kinds:
                guards = [s.guard for s in feedback.signals_at(i) if KIND_MAP[s.kind] is k and s.guard]
                parts.append(f"{k.value} [guard: {guards[0]}]" if guards else k.value)
            status = ", ".join(parts)
        lines.append(f"tx{i} {tx.call_text()} from {_short(tx.sender)}: {status}")
    verdict = f"verdict: {feedback.vulnerability}"
    if feedback.found_classes:
        verdict += " classes=" + ",".join(c.value for c in feedback.found_classes)

    text = "\n".join([DIGEST_VERSION, *lines, verdict])
    if len(text) <= cap:
        return text
    if cap < MIN_SUMMARY_CAP:
        raise ValueError(f"summary cap must be at least {MIN_SUMMARY_CAP}")
    # two newlines separate the header and verdict from the body
    budget = cap - len(DIGEST_VERSION) - len(verdict) - 2
    kept: list[str] = []
    for n, line in enumerate(lines):
        marker = f"... ({len(lines) - n} more transactions)"
        if len(line) + len(marker) + 2 > budget:
            kept.append(marker)
            break
        kept.append(line)
        budget -= len(line) + 1
    return "\n".join([DIGEST_VERSION, *kept, verdict])
