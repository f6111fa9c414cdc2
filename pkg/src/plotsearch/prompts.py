"""Prompt templates for plot-direction proposal and outline expansion.

All builders are pure functions of the story state, so the same state
always produces the same prompt.  The miner re-renders search-time
policy prompts from a finished tree through these builders, which is why
nothing here may depend on ambient configuration or clocks.
"""

from __future__ import annotations

from typing import Sequence

POLICY_PROMPT_TEMPLATE = """You are plotting a story one step at a time.

Premise: {premise}

Outline so far:
{outline}

Directions already taken, in order:
{history}

Propose the single next plot development as one sentence.  It should
raise or resolve tension, follow from what has happened, and stay
concrete: name who acts and what changes.  Reply with the sentence only.
"""

SIMULATOR_PROMPT_TEMPLATE = """You are expanding a story outline.

Premise: {premise}

Outline so far:
{outline}

The next development to realize: {direction}

Write exactly {count} new bullet points continuing the outline through
this development.  One concrete event per bullet.  Reply with the
bullets only, one per line, each starting with "- ".
"""

_EMPTY_OUTLINE = "(the story has not started yet)"
_EMPTY_HISTORY = "(none yet)"


def render_outline(bullets: Sequence[str]) -> str:
    """Bullet list as markdown; a placeholder keeps empty states explicit."""
    if not bullets:
        return _EMPTY_OUTLINE
    return "\n".join(f"- {b}" for b in bullets)


def render_history(cot_history: Sequence[str]) -> str:
    if not cot_history:
        return _EMPTY_HISTORY
    return "\n".join(f"{i + 1}. {step}" for i, step in enumerate(cot_history))


def policy_prompt(premise: str, bullets: Sequence[str], cot_history: Sequence[str]) -> str:
    """The action-proposal prompt; also the mined pairs' prompt context."""
    return POLICY_PROMPT_TEMPLATE.format(
        premise=premise or "(open; invent freely)",
        outline=render_outline(bullets),
        history=render_history(cot_history),
    )


def simulator_prompt(
    premise: str, bullets: Sequence[str], direction: str, count: int
) -> str:
    if count < 1:
        raise ValueError("bullet count must be positive")
    return SIMULATOR_PROMPT_TEMPLATE.format(
        premise=premise or "(open; invent freely)",
        outline=render_outline(bullets),
        direction=direction,
        count=count,
    )


def parse_bullets(text: str) -> list[str]:
    """Extract bullet lines from a simulator reply, tolerating stray prose."""
    out = []
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("- ") and len(stripped) > 2:
            out.append(stripped[2:].strip())
        elif stripped.startswith("* ") and len(stripped) > 2:
            out.append(stripped[2:].strip())
    return out
