"""Dialog state tracking: DST prompt assembly and the SQL belief format.

A belief state is the active domain plus the slot=value constraints
accumulated so far, written as `select * from <domain> where <slot> =
<value> ; ...`. The prompter renders a four-part prompt (task
instruction, belief instructions, formatting example, test input); the
parser recovers a belief state from a raw LLM completion, ignoring any
prose around the first well-formed statement.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import EmptySchemaSet, ParseFailure, UnknownDomain, UnknownSlot, UnknownValue
from .schema import TaskSchema
from .textnorm import canonical_ident, canonical_value

SPEAKERS = ("user", "system")


@dataclass(frozen=True)
class Turn:
    speaker: str
    text: str

    def __post_init__(self):
        if self.speaker not in SPEAKERS:
            raise ValueError(f"speaker must be one of {SPEAKERS}, got {self.speaker!r}")
        if not self.text.strip():
            raise ValueError("turn text must be non-empty")


@dataclass(frozen=True)
class DialogHistory:
    turns: tuple[Turn, ...] = ()

    def with_turn(self, speaker: str, text: str) -> "DialogHistory":
        return DialogHistory(self.turns + (Turn(speaker, text),))

    def capped(self, max_turns: int) -> "DialogHistory":
        """Drop oldest user/system pairs until at most `max_turns` remain."""
        turns = self.turns
        while len(turns) > max_turns:
            turns = turns[2:]
        return DialogHistory(turns)

    def last_speaker(self) -> str | None:
        return self.turns[-1].speaker if self.turns else None

    def __len__(self) -> int:
        return len(self.turns)


def render_history(history: DialogHistory) -> str:
    """One turn per line, labeled "User:" / "System:"."""
    labels = {"user": "User", "system": "System"}
    return "\n".join(f"{labels[t.speaker]}: {t.text}" for t in history.turns)


@dataclass(frozen=True)
class BeliefState:
    """Active domain plus ordered (slot, value) constraints."""

    domain: str
    pairs: tuple[tuple[str, str], ...] = ()

    @classmethod
    def empty(cls, domain: str) -> "BeliefState":
        return cls(domain=domain, pairs=())

    def value(self, slot: str) -> str | None:
        for s, v in self.pairs:
            if s == slot:
                return v
        return None

    def __bool__(self) -> bool:
        return bool(self.pairs)


@dataclass(frozen=True)
class DstPrompt:
    """The four DST prompt sections, in their fixed order."""

    task_instruction: str
    belief_instructions: str
    formatting_example: str
    test_input: str

    def render(self) -> str:
        return "\n\n".join(
            [
                self.task_instruction,
                "Belief instructions:\n" + self.belief_instructions,
                "Example:\n" + self.formatting_example,
                "Input:\n" + self.test_input,
            ]
        )


def render_belief_instruction(schema: TaskSchema) -> str:
    """Slot ontology of one domain: all values for categorical slots,
    a few examples for noncategorical ones."""
    lines = [f"domain: {schema.domain}", "slots:"]
    for slot in schema.belief.slots:
        if slot.categorical:
            values = list(slot.values)
            if "dontcare" not in values:
                values.append("dontcare")
            lines.append(f"- {slot.name}: one of {', '.join(values)}")
        elif slot.values:
            lines.append(f"- {slot.name}: e.g. {', '.join(slot.values[:5])}, etc.")
        else:
            lines.append(f"- {slot.name}: any text value")
    return "\n".join(lines)


def build_dst_prompt(
    schemas: list[TaskSchema],
    history: DialogHistory,
    formatting_example: str,
) -> DstPrompt:
    """Assemble the DST prompt.

    Each schema's belief instruction appears exactly once, in list
    order; pass a single schema for single-domain deployments and the
    full set for multi-domain ones. The task instruction is taken from
    the first schema.
    """
    if not schemas:
        raise EmptySchemaSet("at least one schema is required")
    if history.turns and history.last_speaker() != "user":
        raise ValueError("history must end with a user turn for belief prediction")
    instructions = "\n\n".join(render_belief_instruction(s) for s in schemas)
    rendered = render_history(history)
    test_input = (rendered + "\n" if rendered else "") + "Belief:"
    return DstPrompt(
        task_instruction=schemas[0].task_instruction_dst,
        belief_instructions=instructions,
        formatting_example=formatting_example,
        test_input=test_input,
    )


# ---------------------------------------------------------------------------
# SQL belief-state text format

_SELECT_RE = re.compile(r"select\s+\*\s+from\s+([A-Za-z][A-Za-z0-9_]*)", re.IGNORECASE)
_WHERE_RE = re.compile(r"[ \t]+where[ \t]+", re.IGNORECASE)
_PAIR_RE = re.compile(r"^\s*([A-Za-z][A-Za-z0-9_]*)\s*=\s*(.+?)\s*$")

# Sentence punctuation an LLM may tack onto a bare value.
_TRAILING_JUNK = ".!?,:;\"')"


class _NotAStatement(Exception):
    """Candidate text after 'select' is not grammatical; try the next one."""


def _split_pairs(clause: str) -> list[str]:
    """Split a where clause on ';', respecting quoted values."""
    parts: list[str] = []
    buf: list[str] = []
    quote = ""
    for ch in clause:
        if quote:
            buf.append(ch)
            if ch == quote:
                quote = ""
        elif ch in "\"'":
            quote = ch
            buf.append(ch)
        elif ch == ";":
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    parts.append("".join(buf))
    return parts


def _parse_value(raw: str) -> str:
    raw = raw.strip()
    if not raw:
        raise _NotAStatement("empty value")
    if raw[0] in "\"'":
        closing = raw.rfind(raw[0])
        if closing > 0:
            return raw[1:closing]
        raise _NotAStatement(f"unterminated quote in {raw!r}")
    value = raw.rstrip(_TRAILING_JUNK).strip()
    if not value:
        raise _NotAStatement(f"no value left in {raw!r}")
    return value


def _parse_statement(text: str, match: re.Match) -> BeliefState:
    domain = canonical_ident(match.group(1))
    rest = text[match.end():]
    where = _WHERE_RE.match(rest)
    if where is None:
        return BeliefState(domain=domain)
    clause = rest[where.end():].split("\n", 1)[0]
    pairs: dict[str, str] = {}
    segments = _split_pairs(clause)
    if not any(seg.strip() for seg in segments):
        raise _NotAStatement("empty where clause")
    for segment in segments:
        m = _PAIR_RE.match(segment)
        if m is None:
            raise _NotAStatement(f"not a slot = value pair: {segment!r}")
        slot = canonical_ident(m.group(1))
        value = canonical_value(_parse_value(m.group(2)))
        pairs[slot] = value
    return BeliefState(domain=domain, pairs=tuple(pairs.items()))


def parse_belief_sql(text: str, schemas: list[TaskSchema] | None = None) -> BeliefState:
    """Extract a belief state from an LLM completion.

    Scans for the first well-formed `select * from ...` statement and
    ignores surrounding prose. With `schemas` given, the domain, slots,
    and categorical values are checked; violations raise UnknownDomain /
    UnknownSlot / UnknownValue rather than being dropped silently.
    """
    state: BeliefState | None = None
    for match in _SELECT_RE.finditer(text):
        try:
            state = _parse_statement(text, match)
            break
        except _NotAStatement:
            continue
    if state is None:
        raise ParseFailure(f"no well-formed belief statement in {text!r:.200}")
    if schemas is not None:
        by_domain = {s.domain: s for s in schemas}
        schema = by_domain.get(state.domain)
        if schema is None:
            raise UnknownDomain(state.domain)
        for slot_name, value in state.pairs:
            slot = schema.slot(slot_name)
            if slot is None:
                raise UnknownSlot(slot_name, state.domain)
            if not slot.accepts(value):
                raise UnknownValue(slot_name, value)
    return state


def _render_value(value: str) -> str:
    if not value:
        raise ValueError("cannot render an empty value")
    if any(c in value for c in ";\"'") or value[-1] in _TRAILING_JUNK or value[0] in "\"'":
        if '"' not in value:
            return f'"{value}"'
        if "'" not in value:
            return f"'{value}'"
        raise ValueError(f"value not representable in belief SQL: {value!r}")
    return value


def render_belief_sql(state: BeliefState) -> str:
    """Canonical SQL text; parse_belief_sql(render_belief_sql(b)) == b."""
    base = f"select * from {state.domain}"
    if not state.pairs:
        return base
    clause = " ; ".join(f"{slot} = {_render_value(value)}" for slot, value in state.pairs)
    return f"{base} where {clause}"
