"""Backend interface shared by the heuristic and LLM policies."""

from __future__ import annotations

from typing import Protocol

from ..feedback import Feedback
from ..txmodel import ProgramContext, TransactionSequence
from .actions import AgentAction, AgentId


class NoRepairAvailable(Exception):
    """The global reflector has nothing new to try."""


class EmptyInterface(Exception):
    """The contract has no callable function to draft against."""


class PolicyBackend(Protocol):
    name: str

    def draft(self, ctx: ProgramContext) -> TransactionSequence: ...

    def reflect_global(self, ctx: ProgramContext, seq: TransactionSequence, feedback: Feedback,
                       round_index: int = 0) -> AgentAction: ...

    def check_element(self, agent: AgentId, ctx: ProgramContext, seq: TransactionSequence, feedback: Feedback,
                      round_index: int = 0) -> AgentAction: ...
