"""Policy prompting: render the skeleton-guided prompt and parse the
LLM's system action and delexicalized response.

One prompt is built per generation stage. The output convention (lines
marked "Action:" / "Response:") is fixed jointly by the formatting
example shipped with the engine and the parsers here.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .belief import BeliefState, DialogHistory, render_belief_sql, render_history
from .errors import MissingAction, ParseFailure
from .schema import DbCondition, TaskSchema, TemplateTurn, scan_placeholders
from .textnorm import canonical_ident

ACTION_STAGE = "action"
RESPONSE_STAGE = "response"

_MATCH_COUNT_TEXT = {
    "zero": "no matching entries",
    "one": "1 matching entry",
    "many": "multiple matching entries",
    "any": "any number of matching entries",
}


@dataclass(frozen=True)
class SystemAction:
    """One or more canonical action labels, duplicates removed."""

    labels: tuple[str, ...]

    def __post_init__(self):
        if not self.labels:
            raise ValueError("a system action needs at least one label")

    @classmethod
    def from_labels(cls, labels) -> "SystemAction":
        seen: list[str] = []
        for label in labels:
            token = canonical_ident(str(label)).replace("-", "_")
            if token and token not in seen:
                seen.append(token)
        if not seen:
            raise ValueError("no usable action labels")
        return cls(labels=tuple(seen))

    def render(self) -> str:
        return " ".join(self.labels)


@dataclass(frozen=True)
class DelexResponse:
    """Response text whose slot values are placeholders in brackets."""

    text: str

    def __post_init__(self):
        scan_placeholders(self.text)  # raises MalformedPlaceholder

    def placeholders(self) -> list[str]:
        return scan_placeholders(self.text)


@dataclass(frozen=True)
class PolicyPrompt:
    """The four policy prompt sections, in their fixed order."""

    task_instruction: str
    formatting_example: str
    skeleton_rendering: str
    test_input: str

    def render(self) -> str:
        return "\n\n".join(
            [
                self.task_instruction,
                "Example:\n" + self.formatting_example,
                "Policy skeleton:\n" + self.skeleton_rendering,
                "Input:\n" + self.test_input,
            ]
        )


def render_condition(cond: DbCondition) -> str:
    text = _MATCH_COUNT_TEXT.get(cond.match_count, cond.match_count)
    if cond.constraints:
        tests = " ; ".join(f"{s} = {v}" for s, v in cond.constraints)
        text += f" with {tests}"
    return text


def render_turn(turn: TemplateTurn) -> str:
    if turn.user_utterance is not None:
        trigger = f"User: {turn.user_utterance}"
    else:
        trigger = f"DB: {render_condition(turn.db_condition)}"
    return f"{trigger}\nAction: {turn.action}\nResponse: {turn.response}"


def render_skeleton(schema: TaskSchema) -> str:
    """Every template turn exactly once, in skeleton order."""
    return "\n\n".join(render_turn(t) for t in schema.policy.turns)


def build_policy_prompt(
    schema: TaskSchema,
    history: DialogHistory,
    belief: BeliefState,
    db_summary: str,
    formatting_example: str,
    stage: str,
    action: SystemAction | None = None,
) -> PolicyPrompt:
    """Assemble the policy prompt for one generation stage.

    The response stage additionally embeds the already-chosen action, so
    `action` is required there.
    """
    if stage not in (ACTION_STAGE, RESPONSE_STAGE):
        raise ValueError(f"stage must be '{ACTION_STAGE}' or '{RESPONSE_STAGE}'")
    if stage == RESPONSE_STAGE and action is None:
        raise MissingAction("the response stage needs the generated system action")
    lines = []
    rendered_history = render_history(history)
    if rendered_history:
        lines.append(rendered_history)
    lines.append(f"Belief: {render_belief_sql(belief)}")
    if db_summary:
        lines.append(f"DB: {db_summary}")
    if stage == RESPONSE_STAGE:
        lines.append(f"Action: {action.render()}")
    return PolicyPrompt(
        task_instruction=schema.task_instruction_policy,
        formatting_example=formatting_example,
        skeleton_rendering=render_skeleton(schema),
        test_input="\n".join(lines),
    )


# ---------------------------------------------------------------------------
# Completion parsing

_ACTION_RE = re.compile(r"\baction\s*:[ \t]*(.*)", re.IGNORECASE)
_RESPONSE_RE = re.compile(r"\bresponse\s*:[ \t]*(.*)", re.IGNORECASE)


def parse_action(text: str) -> SystemAction:
    """Extract action labels from the first "Action:"-marked line."""
    m = _ACTION_RE.search(text)
    if m is None:
        raise ParseFailure(f"no 'Action:' line in {text!r:.200}")
    raw = m.group(1)
    labels = [tok.strip(".,!?:;\"'") for tok in re.split(r"[\s,]+", raw) if tok.strip(".,!?:;\"'")]
    if not labels:
        raise ParseFailure("empty action line")
    return SystemAction.from_labels(labels)


def parse_response(text: str) -> DelexResponse:
    """Extract the first "Response:"-marked line and check its placeholders."""
    m = _RESPONSE_RE.search(text)
    if m is None:
        raise ParseFailure(f"no 'Response:' line in {text!r:.200}")
    line = m.group(1).strip()
    if not line:
        raise ParseFailure("empty response line")
    return DelexResponse(text=line)
