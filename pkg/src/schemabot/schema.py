"""Task schemas: the symbolic knowledge a bot is built from.

A schema bundles a belief instruction (the slot ontology used for state
tracking) with a policy skeleton (ordered template turns encoding the
dialog policy). Schemas are stored as JSON documents; parsing produces
immutable values whose canonical serialization is a fixpoint, so edits
can be diffed byte-for-byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from .errors import (
    InputSyntaxError,
    MalformedPlaceholder,
    UnknownTurnId,
    ValidationFailure,
)
from .textnorm import canonical_ident, canonical_value, is_canonical_ident

SLOT_KINDS = ("categorical", "noncategorical")
MATCH_COUNTS = ("zero", "one", "many", "any")

# Placeholders every schema may use without declaring a slot for them.
RESERVED_PLACEHOLDERS = ("value_count", "choice")

# Turn id reserved for degraded-mode responses.
FALLBACK_TURN_ID = "fallback"

RECOMMENDED_TURNS = (10, 20)


def default_placeholder(slot_name: str) -> str:
    return "value_" + slot_name


def scan_placeholders(text: str) -> list[str]:
    """Return the bracketed tokens in `text`, in order.

    Raises MalformedPlaceholder on unbalanced, nested, or empty brackets.
    """
    tokens: list[str] = []
    start = -1
    for i, ch in enumerate(text):
        if ch == "[":
            if start >= 0:
                raise MalformedPlaceholder(f"nested '[' at index {i} in {text!r}")
            start = i + 1
        elif ch == "]":
            if start < 0:
                raise MalformedPlaceholder(f"unmatched ']' at index {i} in {text!r}")
            token = text[start:i]
            if not token:
                raise MalformedPlaceholder(f"empty placeholder at index {i} in {text!r}")
            tokens.append(token)
            start = -1
    if start >= 0:
        raise MalformedPlaceholder(f"unclosed '[' in {text!r}")
    return tokens


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding; severity is 'error' or 'warning'."""

    severity: str
    element: str
    message: str

    def __str__(self) -> str:
        return f"[{self.severity}] {self.element}: {self.message}"


@dataclass(frozen=True)
class SlotSpec:
    """One slot of a belief instruction.

    `values` lists every legal value for categorical slots and a few
    illustrative examples for noncategorical ones. `placeholder` is the
    token used in delexicalized text, default "value_<name>".
    """

    name: str
    kind: str
    values: tuple[str, ...] = ()
    placeholder: str = ""

    def __post_init__(self):
        if not self.placeholder:
            object.__setattr__(self, "placeholder", default_placeholder(self.name))

    @property
    def categorical(self) -> bool:
        return self.kind == "categorical"

    def accepts(self, value: str) -> bool:
        """True if `value` (already canonical) is legal for this slot.

        "dontcare" is implicitly legal for every slot.
        """
        if not self.categorical or value == "dontcare":
            return True
        return value in self.values


@dataclass(frozen=True)
class BeliefInstruction:
    domain: str
    slots: tuple[SlotSpec, ...] = ()

    def slot(self, name: str) -> SlotSpec | None:
        name = name.lower()
        for s in self.slots:
            if s.name.lower() == name:
                return s
        return None


@dataclass(frozen=True)
class DbCondition:
    """A DB-state trigger: how many entries matched, plus optional
    slot=value tests on the retrieved set."""

    match_count: str
    constraints: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class TemplateTurn:
    """One policy rule: a trigger (user utterance or DB condition), the
    system action it maps to, and the delexicalized response."""

    id: str
    action: str
    response: str
    user_utterance: str | None = None
    db_condition: DbCondition | None = None

    @property
    def trigger_kind(self) -> str:
        return "user" if self.user_utterance is not None else "db"


@dataclass(frozen=True)
class PolicySkeleton:
    turns: tuple[TemplateTurn, ...] = ()

    def turn(self, turn_id: str) -> TemplateTurn | None:
        for t in self.turns:
            if t.id == turn_id:
                return t
        return None

    def __len__(self) -> int:
        return len(self.turns)


@dataclass(frozen=True)
class TaskSchema:
    domain: str
    belief: BeliefInstruction
    policy: PolicySkeleton
    task_instruction_dst: str = ""
    task_instruction_policy: str = ""

    def slot(self, name: str) -> SlotSpec | None:
        return self.belief.slot(name)

    def slot_names(self) -> list[str]:
        return [s.name for s in self.belief.slots]

    def placeholder_map(self) -> dict[str, str]:
        """Placeholder token -> slot name, for lexicalization."""
        return {s.placeholder: s.name for s in self.belief.slots}

    def turn(self, turn_id: str) -> TemplateTurn | None:
        return self.policy.turn(turn_id)

    def fallback_turn(self) -> TemplateTurn | None:
        return self.policy.turn(FALLBACK_TURN_ID)


# ---------------------------------------------------------------------------
# JSON reading

def _err(path: str, message: str) -> InputSyntaxError:
    return InputSyntaxError(f"{path}: {message}")


def _expect_obj(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise _err(path, f"expected an object, got {type(value).__name__}")
    return value


def _expect_str(obj: dict, key: str, path: str, default: str | None = None) -> str:
    if key not in obj:
        if default is not None:
            return default
        raise _err(path, f"missing required key {key!r}")
    value = obj[key]
    if not isinstance(value, str):
        raise _err(f"{path}.{key}", f"expected a string, got {type(value).__name__}")
    return value


def _reject_unknown_keys(obj: dict, allowed: set[str], path: str) -> None:
    unknown = [k for k in obj if k not in allowed]
    if unknown:
        raise _err(path, f"unknown key(s): {', '.join(sorted(unknown))}")


def _slot_from_json(obj, path: str) -> SlotSpec:
    obj = _expect_obj(obj, path)
    _reject_unknown_keys(obj, {"name", "kind", "values", "placeholder"}, path)
    name = canonical_ident(_expect_str(obj, "name", path))
    kind = _expect_str(obj, "kind", path).strip().lower()
    raw_values = obj.get("values", [])
    if not isinstance(raw_values, list) or any(not isinstance(v, (str, int, float)) for v in raw_values):
        raise _err(f"{path}.values", "expected a list of strings")
    values = tuple(canonical_value(str(v)) for v in raw_values)
    placeholder = obj.get("placeholder", "")
    if not isinstance(placeholder, str):
        raise _err(f"{path}.placeholder", "expected a string")
    placeholder = canonical_ident(placeholder) if placeholder else default_placeholder(name)
    return SlotSpec(name=name, kind=kind, values=values, placeholder=placeholder)


def _condition_from_json(obj, path: str) -> DbCondition:
    obj = _expect_obj(obj, path)
    _reject_unknown_keys(obj, {"match_count", "constraints"}, path)
    match_count = _expect_str(obj, "match_count", path).strip().lower()
    raw = obj.get("constraints", {})
    if not isinstance(raw, dict):
        raise _err(f"{path}.constraints", "expected an object of slot: value pairs")
    constraints = tuple(
        (canonical_ident(k), canonical_value(str(v))) for k, v in raw.items()
    )
    return DbCondition(match_count=match_count, constraints=constraints)


def _turn_from_json(obj, path: str, fallback_id: str = "") -> TemplateTurn:
    obj = _expect_obj(obj, path)
    _reject_unknown_keys(obj, {"id", "user", "db", "action", "response"}, path)
    turn_id = _expect_str(obj, "id", path, default=fallback_id)
    if not turn_id:
        raise _err(path, "missing required key 'id'")
    turn_id = canonical_ident(turn_id)
    has_user = "user" in obj
    has_db = "db" in obj
    if has_user == has_db:
        raise _err(path, "exactly one of 'user' or 'db' must be set")
    user = None
    condition = None
    if has_user:
        user = _expect_str(obj, "user", path)
    else:
        condition = _condition_from_json(obj["db"], f"{path}.db")
    action = _expect_str(obj, "action", path)
    response = _expect_str(obj, "response", path)
    return TemplateTurn(
        id=turn_id,
        action=" ".join(canonical_ident(a) for a in action.split()),
        response=response.strip(),
        user_utterance=user.strip() if user is not None else None,
        db_condition=condition,
    )


def schema_from_json(doc, path: str = "schema") -> TaskSchema:
    """Build a TaskSchema from decoded JSON without validating invariants."""
    doc = _expect_obj(doc, path)
    _reject_unknown_keys(
        doc,
        {"domain", "task_instruction_dst", "task_instruction_policy", "slots", "policy"},
        path,
    )
    domain = canonical_ident(_expect_str(doc, "domain", path))
    slots_raw = doc.get("slots", [])
    if not isinstance(slots_raw, list):
        raise _err(f"{path}.slots", "expected a list")
    slots = tuple(_slot_from_json(s, f"{path}.slots[{i}]") for i, s in enumerate(slots_raw))
    policy_raw = doc.get("policy", [])
    if not isinstance(policy_raw, list):
        raise _err(f"{path}.policy", "expected a list")
    turns = tuple(
        _turn_from_json(t, f"{path}.policy[{i}]") for i, t in enumerate(policy_raw)
    )
    return TaskSchema(
        domain=domain,
        belief=BeliefInstruction(domain=domain, slots=slots),
        policy=PolicySkeleton(turns=turns),
        task_instruction_dst=_expect_str(doc, "task_instruction_dst", path, default=""),
        task_instruction_policy=_expect_str(doc, "task_instruction_policy", path, default=""),
    )


def parse_schema(text: str) -> TaskSchema:
    """Parse one schema file; raises InputSyntaxError or ValidationFailure."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputSyntaxError(e.msg, e.lineno, e.colno) from None
    if isinstance(doc, list):
        raise InputSyntaxError("expected a single schema object (got a list; see parse_schema_bundle)")
    s = schema_from_json(doc)
    errors = [d for d in validate_schema(s) if d.severity == "error"]
    if errors:
        raise ValidationFailure(errors)
    return s


def parse_schema_bundle(text: str) -> list[TaskSchema]:
    """Parse a file holding either one schema or a list of schemas."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputSyntaxError(e.msg, e.lineno, e.colno) from None
    docs = doc if isinstance(doc, list) else [doc]
    schemas = []
    seen: set[str] = set()
    for i, item in enumerate(docs):
        s = schema_from_json(item, path=f"schema[{i}]")
        errors = [d for d in validate_schema(s) if d.severity == "error"]
        if errors:
            raise ValidationFailure(errors)
        if s.domain in seen:
            raise ValidationFailure(
                [Diagnostic("error", s.domain, "duplicate domain in bundle")]
            )
        seen.add(s.domain)
        schemas.append(s)
    return schemas


# ---------------------------------------------------------------------------
# Canonical serialization

def _slot_to_json(s: SlotSpec) -> dict:
    return {
        "name": s.name,
        "kind": s.kind,
        "values": list(s.values),
        "placeholder": s.placeholder,
    }


def _turn_to_json(t: TemplateTurn) -> dict:
    out: dict = {"id": t.id}
    if t.user_utterance is not None:
        out["user"] = t.user_utterance
    else:
        cond: dict = {"match_count": t.db_condition.match_count}
        if t.db_condition.constraints:
            cond["constraints"] = {k: v for k, v in t.db_condition.constraints}
        out["db"] = cond
    out["action"] = t.action
    out["response"] = t.response
    return out


def schema_to_json(s: TaskSchema) -> dict:
    return {
        "domain": s.domain,
        "task_instruction_dst": s.task_instruction_dst,
        "task_instruction_policy": s.task_instruction_policy,
        "slots": [_slot_to_json(x) for x in s.belief.slots],
        "policy": [_turn_to_json(t) for t in s.policy.turns],
    }


def serialize_schema(s: TaskSchema) -> str:
    """Canonical text form; parse_schema(serialize_schema(s)) == s."""
    return json.dumps(schema_to_json(s), indent=2, ensure_ascii=False) + "\n"


def serialize_turn(t: TemplateTurn) -> str:
    """Canonical text form of a single template turn (for edit diffs)."""
    return json.dumps(_turn_to_json(t), indent=2, ensure_ascii=False)


# ---------------------------------------------------------------------------
# Validation

def _check_ident(name: str, element: str, what: str, out: list[Diagnostic]) -> None:
    if not is_canonical_ident(name):
        out.append(Diagnostic("error", element, f"{what} {name!r} is not a lowercase_ascii identifier"))


def validate_schema(s: TaskSchema) -> list[Diagnostic]:
    """Check every schema invariant; returns [] iff the schema is valid.

    All violations are reported, not just the first; warnings do not
    make a schema invalid.
    """
    out: list[Diagnostic] = []
    _check_ident(s.domain, s.domain or "<domain>", "domain", out)
    if s.belief.domain != s.domain:
        out.append(Diagnostic("error", s.domain, f"belief instruction domain {s.belief.domain!r} differs from schema domain"))

    seen_slots: set[str] = set()
    placeholders: dict[str, str] = {}
    for slot in s.belief.slots:
        _check_ident(slot.name, slot.name or "<slot>", "slot name", out)
        low = slot.name.lower()
        if low in seen_slots:
            out.append(Diagnostic("error", slot.name, "duplicate slot name"))
        seen_slots.add(low)
        if slot.kind not in SLOT_KINDS:
            out.append(Diagnostic("error", slot.name, f"unknown slot kind {slot.kind!r}"))
        if slot.categorical:
            if not slot.values:
                out.append(Diagnostic("error", slot.name, "categorical slot declares no values"))
            lowered = [v.lower() for v in slot.values]
            if len(set(lowered)) != len(lowered):
                out.append(Diagnostic("error", slot.name, "duplicate values (case-insensitive)"))
        _check_ident(slot.placeholder, slot.name, "placeholder", out)
        if slot.placeholder in RESERVED_PLACEHOLDERS:
            out.append(Diagnostic("error", slot.name, f"placeholder {slot.placeholder!r} is reserved"))
        if slot.placeholder in placeholders:
            out.append(
                Diagnostic("error", slot.name,
                           f"placeholder {slot.placeholder!r} already used by slot {placeholders[slot.placeholder]!r}")
            )
        else:
            placeholders[slot.placeholder] = slot.name

    known_tokens = set(placeholders) | set(RESERVED_PLACEHOLDERS)

    n = len(s.policy.turns)
    if n < 1:
        out.append(Diagnostic("error", "policy", "policy skeleton must contain at least one turn"))
    elif not RECOMMENDED_TURNS[0] <= n <= RECOMMENDED_TURNS[1]:
        out.append(
            Diagnostic("warning", "policy",
                       f"{n} template turns, outside the recommended 10-20 range")
        )

    seen_ids: set[str] = set()
    for turn in s.policy.turns:
        _check_ident(turn.id, turn.id or "<turn>", "turn id", out)
        if turn.id in seen_ids:
            out.append(Diagnostic("error", turn.id, "duplicate turn id"))
        seen_ids.add(turn.id)
        if (turn.user_utterance is None) == (turn.db_condition is None):
            out.append(Diagnostic("error", turn.id, "exactly one of user utterance / db condition must be set"))
        if turn.db_condition is not None:
            cond = turn.db_condition
            if cond.match_count not in MATCH_COUNTS:
                out.append(Diagnostic("error", turn.id, f"unknown match_count {cond.match_count!r}"))
            for slot_name, _ in cond.constraints:
                if slot_name.lower() not in seen_slots:
                    out.append(Diagnostic("error", turn.id, f"db condition references undeclared slot {slot_name!r}"))
        if not turn.action.strip():
            out.append(Diagnostic("error", turn.id, "empty system action"))
        try:
            tokens = scan_placeholders(turn.response)
        except MalformedPlaceholder as e:
            out.append(Diagnostic("error", turn.id, str(e)))
            tokens = []
        for token in tokens:
            if token not in known_tokens:
                out.append(Diagnostic("error", turn.id, f"placeholder [{token}] does not resolve to any slot"))
    return out


# ---------------------------------------------------------------------------
# Skeleton editing

def edit_skeleton(s: TaskSchema, edits: list[dict]) -> TaskSchema:
    """Apply insert/amend/remove edits (plus add_slot, for extensions that
    introduce new placeholders) and return a new, validated schema.

    Edits are atomic: either the full edit set applies and the result
    validates, or the original schema is left untouched. Turns not named
    by any edit serialize byte-identically before and after.
    """
    turns = list(s.policy.turns)
    slots = list(s.belief.slots)

    def index_of(turn_id: str) -> int:
        for i, t in enumerate(turns):
            if t.id == turn_id:
                return i
        raise UnknownTurnId(turn_id)

    for i, edit in enumerate(edits):
        edit = _expect_obj(edit, f"edits[{i}]")
        op = _expect_str(edit, "op", f"edits[{i}]").strip().lower()
        if op == "insert":
            _reject_unknown_keys(edit, {"op", "turn", "at"}, f"edits[{i}]")
            turn = _turn_from_json(edit.get("turn"), f"edits[{i}].turn")
            at = edit.get("at", len(turns))
            if not isinstance(at, int) or not 0 <= at <= len(turns):
                raise _err(f"edits[{i}].at", f"insert position {at!r} out of range 0..{len(turns)}")
            turns.insert(at, turn)
        elif op == "amend":
            _reject_unknown_keys(edit, {"op", "id", "turn"}, f"edits[{i}]")
            target = canonical_ident(_expect_str(edit, "id", f"edits[{i}]"))
            pos = index_of(target)
            turn = _turn_from_json(edit.get("turn"), f"edits[{i}].turn", fallback_id=target)
            turns[pos] = turn
        elif op == "remove":
            _reject_unknown_keys(edit, {"op", "id"}, f"edits[{i}]")
            target = canonical_ident(_expect_str(edit, "id", f"edits[{i}]"))
            turns.pop(index_of(target))
        elif op == "add_slot":
            _reject_unknown_keys(edit, {"op", "slot"}, f"edits[{i}]")
            slots.append(_slot_from_json(edit.get("slot"), f"edits[{i}].slot"))
        else:
            raise _err(f"edits[{i}].op", f"unknown op {op!r} (expected insert/amend/remove/add_slot)")

    edited = replace(
        s,
        belief=replace(s.belief, slots=tuple(slots)),
        policy=PolicySkeleton(turns=tuple(turns)),
    )
    errors = [d for d in validate_schema(edited) if d.severity == "error"]
    if errors:
        raise ValidationFailure(errors)
    return edited


def parse_edits(text: str) -> list[dict]:
    """Read an edit file: either a bare list or {"edits": [...]}."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputSyntaxError(e.msg, e.lineno, e.colno) from None
    if isinstance(doc, dict):
        doc = doc.get("edits")
    if not isinstance(doc, list):
        raise InputSyntaxError("edit file must be a list of edits or {\"edits\": [...]}")
    return doc
