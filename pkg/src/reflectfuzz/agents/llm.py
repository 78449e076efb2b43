"""LLM-backed policy over a chat-completion endpoint.

Any failure (network, timeout, unparseable reply) degrades to the
heuristic policy for that one call, so the loop always completes.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from string import Template

import httpx

from ..feedback import Feedback
from ..txmodel import DecodeError, ProgramContext, TransactionSequence, encode_sequence, sequence_from_dict
from .actions import PROFILES, AgentAction, AgentId, StructEdit, action_from_dict, enforce_permissions
from .heuristic import HeuristicBackend

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 60.0
PARSE_RETRIES = 2
RETRY_NUDGE = "Your reply could not be parsed. Reply again with only the JSON record and nothing else."


class BackendUnavailable(Exception):
    pass


class ParseExhausted(Exception):
    pass


class ParseError(ValueError):
    pass


def request_digest(messages: list[dict]) -> str:
    """Stable key for a chat request, used by recorded transcripts."""
    blob = json.dumps(messages, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _template(name: str) -> Template:
    return Template(resources.files(__package__).joinpath("prompts", f"{name}.txt").read_text())


def _field_name(agent: AgentId) -> str:
    perms = PROFILES[agent].permissions
    return next(iter(perms)) if len(perms) == 1 else "any"


def build_messages(agent: AgentId, ctx: ProgramContext, seq: TransactionSequence | None = None,
                   feedback: Feedback | None = None, max_len: int = 10) -> list[dict]:
    profile = PROFILES[agent]
    interface = "\n".join(
        f"- {d.signature()}{' payable' if d.payable else ''}" for d in ctx.interface if d.callable
    )
    pool = ctx.seed_pool
    pool_text = json.dumps(
        {"deployer": pool.deployer, "users": list(pool.users), "attackers": list(pool.attackers),
         "amounts": [str(a) for a in pool.amounts]},
        sort_keys=True,
    )
    system = _template("_common").substitute(
        agent=agent.value,
        goal=profile.goal_text,
        permissions=", ".join(sorted(profile.permissions)),
        source=ctx.source_text,
        interface=interface or "(none)",
        pool=pool_text,
    )
    user = _template(agent.value).safe_substitute(
        sequence=encode_sequence(seq) if seq is not None else "",
        feedback=feedback.summary_text if feedback is not None else "",
        permissions=", ".join(sorted(profile.permissions)),
        field=_field_name(agent),
        max_len=max_len,
    )
    return [{"role": "system", "content": system}, {"role": "user", "content": user}]


def extract_record(text: str) -> dict:
    """First JSON object in ``text`` that looks like a sequence or action record."""
    decoder = json.JSONDecoder()
    pos = text.find("{")
    while pos != -1:
        try:
            doc, _ = decoder.raw_decode(text, pos)
        except json.JSONDecodeError:
            doc = None
        if isinstance(doc, dict) and ({"txs", "edits", "structural"} & doc.keys()):
            return doc
        pos = text.find("{", pos + 1)
    raise ParseError("no sequence or action record in reply")


def parse_sequence(text: str) -> TransactionSequence:
    doc = extract_record(text)
    if "txs" not in doc:
        raise ParseError("expected a sequence record")
    try:
        return sequence_from_dict({"txs": doc["txs"]})
    except DecodeError as e:
        raise ParseError(str(e)) from None


def parse_action(agent: AgentId, text: str, seq: TransactionSequence) -> AgentAction:
    doc = extract_record(text)
    if "txs" in doc:
        # a full sequence is read as "replace everything"
        try:
            new = sequence_from_dict({"txs": doc["txs"]})
        except DecodeError as e:
            raise ParseError(str(e)) from None
        structural = [StructEdit("delete", i) for i in reversed(range(len(seq)))]
        structural += [StructEdit("insert", i, tx) for i, tx in enumerate(new.txs)]
        return AgentAction(agent, (), tuple(structural), "rewrite sequence")
    try:
        return action_from_dict(agent, doc)
    except (DecodeError, KeyError, TypeError, ValueError) as e:
        raise ParseError(f"bad action record: {e}") from None


class ChatClient:
    """Blocking client for ``{model, messages, stream: false}`` chat endpoints."""

    def __init__(self, endpoint: str, model: str, timeout: float = DEFAULT_TIMEOUT, temperature: float = 0.0):
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self.temperature = temperature

    def chat(self, messages: list[dict]) -> str:
        payload = {
            "model": self.model,
            "messages": messages,
            "stream": False,
            "options": {"temperature": self.temperature},
        }
        try:
            resp = httpx.post(self.endpoint, json=payload, timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()["message"]["content"]
        except httpx.HTTPError as e:
            raise BackendUnavailable(f"{type(e).__name__}: {e}") from e
        except (ValueError, KeyError, TypeError) as e:
            raise BackendUnavailable(f"malformed response: {e}") from e


@dataclass
class Fallback:
    agent: str
    reason: str


@dataclass
class LlmBackend:
    """Policy backend that asks a model and falls back to the heuristic rules."""

    client: ChatClient
    fallback: HeuristicBackend
    parse_retries: int = PARSE_RETRIES
    max_len: int = 10
    fallbacks: list[Fallback] = field(default_factory=list)
    name: str = "llm"

    def _ask(self, agent: AgentId, messages: list[dict], parse):
        for attempt in range(self.parse_retries + 1):
            try:
                reply = self.client.chat(messages)
            except BackendUnavailable as e:
                log.warning("%s: backend unavailable (%s); using heuristic", agent, e)
                self.fallbacks.append(Fallback(agent.value, "BackendUnavailable"))
                return None
            try:
                return parse(reply)
            except ParseError as e:
                log.info("%s: unparseable reply on attempt %d: %s", agent, attempt + 1, e)
                messages = messages + [
                    {"role": "assistant", "content": reply},
                    {"role": "user", "content": RETRY_NUDGE},
                ]
        log.warning("%s: ParseExhausted after %d attempts; using heuristic", agent, self.parse_retries + 1)
        self.fallbacks.append(Fallback(agent.value, "ParseExhausted"))
        return None

    def draft(self, ctx: ProgramContext) -> TransactionSequence:
        agent = AgentId.TxSeqDrafter
        seq = self._ask(agent, build_messages(agent, ctx, max_len=self.max_len), parse_sequence)
        if seq is None or not seq.txs:
            if seq is not None:
                self.fallbacks.append(Fallback(agent.value, "EmptyDraft"))
            return self.fallback.draft(ctx)
        return seq.with_txs(seq.txs[: self.max_len], "drafted")

    def reflect_global(self, ctx, seq, feedback, round_index: int = 0) -> AgentAction:
        return self._reflect(AgentId.TxSeqRefiner, ctx, seq, feedback, round_index)

    def check_element(self, agent, ctx, seq, feedback, round_index: int = 0) -> AgentAction:
        return self._reflect(agent, ctx, seq, feedback, round_index)

    def _reflect(self, agent, ctx, seq, feedback, round_index):
        messages = build_messages(agent, ctx, seq, feedback, self.max_len)
        action = self._ask(agent, messages, lambda text: parse_action(agent, text, seq))
        if action is None:
            if agent == AgentId.TxSeqRefiner:
                return self.fallback.reflect_global(ctx, seq, feedback, round_index)
            return self.fallback.check_element(agent, ctx, seq, feedback, round_index)
        return enforce_permissions(action, PROFILES[agent])
