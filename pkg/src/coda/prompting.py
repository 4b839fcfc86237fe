"""Prompt rendering: codebook + passage -> a two-message chat request.

Every prompt follows the same four-part structure: a role-assignment
preamble, a task section carrying code titles and definitions, an optional
justification instruction, and a decision/formatting block that pins the
machine-readable output contract (the ``Codes Applied:`` tag). The task
description travels as the system message; the passage is the user message,
verbatim. Rendering is pure: identical inputs give identical bytes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .codebook import Code, Codebook
from .corpus import Passage

__all__ = [
    "Scope",
    "Reasoning",
    "Role",
    "PromptConfig",
    "ChatMessage",
    "ChatRequest",
    "decision_format_block",
    "per_code_messages",
    "full_codebook_messages",
    "format_reminder",
]

DECISION_TAG = "Codes Applied:"


class Scope(str, enum.Enum):
    PER_CODE = "per-code"
    FULL_CODEBOOK = "full-codebook"


class Reasoning(str, enum.Enum):
    CHAIN_OF_THOUGHT = "cot"
    DIRECT = "direct"


class Role(str, enum.Enum):
    SYSTEM = "system"
    USER = "user"


@dataclass(frozen=True)
class PromptConfig:
    model: str
    scope: Scope = Scope.PER_CODE
    reasoning: Reasoning = Reasoning.CHAIN_OF_THOUGHT
    temperature: float = 0.0
    top_p: float = 1.0

    def __post_init__(self) -> None:
        if not self.model:
            raise ValueError("model identifier must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError(f"top_p {self.top_p} outside (0, 1]")


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str

    def __post_init__(self) -> None:
        if not self.content:
            raise ValueError("message content must be non-empty")


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[ChatMessage, ...]
    temperature: float
    top_p: float

    def __post_init__(self) -> None:
        roles = [m.role for m in self.messages]
        if roles != [Role.SYSTEM, Role.USER]:
            raise ValueError(
                "a chat request is exactly one system message followed by one user message"
            )

    @property
    def system(self) -> ChatMessage:
        return self.messages[0]

    @property
    def user(self) -> ChatMessage:
        return self.messages[1]


_PROHIBITION = f'Do not write anything after the "{DECISION_TAG}" list.'


def decision_format_block(scope: Scope, reasoning: Reasoning) -> str:
    """The decision/formatting instructions for one scope x reasoning pair."""
    cot = reasoning is Reasoning.CHAIN_OF_THOUGHT
    if scope is Scope.PER_CODE:
        lines = ["When you respond, use exactly this format:", ""]
        if cot:
            lines += [
                "Justification: [2-3 sentences explaining why you did or did not apply the code]",
                "",
            ]
        lines += [
            DECISION_TAG,
            "- [the code title, if you applied it]",
            "",
            "If the code does not apply, end your reply with:",
            "",
            DECISION_TAG,
            "- None",
            "",
            _PROHIBITION,
        ]
        return "\n".join(lines)

    lines = []
    if cot:
        lines += [
            "When you respond, first write one line per code, in the order the codes"
            " are listed above, each of the form:",
            "",
            "Justification: [2-3 sentences explaining why you did or did not apply that code]",
            "",
            "Then finish with a single list naming every code you applied:",
            "",
        ]
    else:
        lines += ["When you respond, reply with a single list naming every code you applied:", ""]
    lines += [
        DECISION_TAG,
        "- [one applied code title per line]",
        "",
        "If no codes apply, the list must be exactly:",
        "",
        DECISION_TAG,
        "- None",
        "",
        _PROHIBITION,
    ]
    return "\n".join(lines)


def format_reminder(scope: Scope, reasoning: Reasoning) -> str:
    """Appended to the passage when a reply could not be parsed."""
    return (
        "Reminder: your previous reply could not be read by the interpreting"
        " script. " + decision_format_block(scope, reasoning)
    )


def _code_section(code: Code) -> str:
    return f"Code: {code.title}\nDefinition: {code.definition}"


def per_code_messages(
    cb: Codebook, code: Code, passage: Passage, cfg: PromptConfig
) -> ChatRequest:
    """Render the single-code prompt: one code's definition, nothing else."""
    if cfg.scope is not Scope.PER_CODE:
        raise ValueError("per_code_messages requires a per-code scope")
    if cb.get(code.id) != code:
        raise ValueError(f"code {code.id!r} is not part of codebook {cb.name!r}")
    parts = [
        cb.preamble,
        "Consider the following code and decide whether it applies to the passage"
        " supplied by the user.",
        _code_section(code),
    ]
    if cfg.reasoning is Reasoning.CHAIN_OF_THOUGHT:
        parts.append(
            "When you evaluate the passage, provide a justification of why you did"
            " or did not apply the code."
        )
    parts.append(decision_format_block(cfg.scope, cfg.reasoning))
    return ChatRequest(
        model=cfg.model,
        messages=(
            ChatMessage(Role.SYSTEM, "\n\n".join(parts)),
            ChatMessage(Role.USER, passage.text),
        ),
        temperature=cfg.temperature,
        top_p=cfg.top_p,
    )


def full_codebook_messages(cb: Codebook, passage: Passage, cfg: PromptConfig) -> ChatRequest:
    """Render the whole-codebook prompt: every definition, in codebook order."""
    if cfg.scope is not Scope.FULL_CODEBOOK:
        raise ValueError("full_codebook_messages requires a full-codebook scope")
    parts = [
        cb.preamble,
        "Consider the following codebook and decide, for every code in the order"
        " listed, whether it applies to the passage supplied by the user.",
    ]
    parts.extend(_code_section(code) for code in cb.codes)
    if cfg.reasoning is Reasoning.CHAIN_OF_THOUGHT:
        parts.append(
            "When you evaluate the passage, provide a justification of why you did"
            " or did not apply each code."
        )
    parts.append(decision_format_block(cfg.scope, cfg.reasoning))
    return ChatRequest(
        model=cfg.model,
        messages=(
            ChatMessage(Role.SYSTEM, "\n\n".join(parts)),
            ChatMessage(Role.USER, passage.text),
        ),
        temperature=cfg.temperature,
        top_p=cfg.top_p,
    )
