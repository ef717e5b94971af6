"""Task databases: loading, belief-state queries, and prompt summaries.

Matching is exact equality after canonicalization; fuzziness lives in
the value canonicalization table, not here, so retrieval stays
auditable. Entries keep their original surface forms (`display`) for
lexicalization alongside the canonical attributes used for matching.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .belief import BeliefState
from .errors import DomainMismatch, InputSyntaxError
from .schema import TaskSchema
from .textnorm import canonical_ident, canonical_value


@dataclass(frozen=True)
class DbEntry:
    domain: str
    attributes: dict[str, str]
    display: dict[str, str] = field(default_factory=dict)

    def get(self, slot: str) -> str | None:
        return self.attributes.get(slot)

    def get_display(self, slot: str) -> str | None:
        return self.display.get(slot, self.attributes.get(slot))


@dataclass(frozen=True)
class DbTable:
    domain: str
    entries: tuple[DbEntry, ...] = ()
    warnings: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class DbState:
    """Result of resolving a belief state against a table."""

    count: int
    entries: tuple[DbEntry, ...] = ()

    def __post_init__(self):
        if self.count != len(self.entries):
            raise ValueError("count must equal the number of entries")

    @property
    def top(self) -> DbEntry | None:
        return self.entries[0] if self.entries else None

    @classmethod
    def empty(cls) -> "DbState":
        return cls(count=0, entries=())


def _entry_from_json(obj, index: int, domain: str, schema: TaskSchema | None,
                     warnings: list[str]) -> DbEntry:
    if not isinstance(obj, dict):
        raise InputSyntaxError(f"entries[{index}]: expected an object, got {type(obj).__name__}")
    display: dict[str, str] = {}
    attributes: dict[str, str] = {}
    for key, value in obj.items():
        if not isinstance(key, str):
            raise InputSyntaxError(f"entries[{index}]: attribute keys must be strings")
        if isinstance(value, (dict, list)):
            raise InputSyntaxError(f"entries[{index}].{key}: expected a scalar value")
        slot = canonical_ident(key)
        display[slot] = str(value).strip()
        attributes[slot] = canonical_value(str(value))
    if schema is not None:
        declared = [s.name for s in schema.belief.slots]
        unknown = [k for k in attributes if k not in declared]
        for k in unknown:
            warnings.append(f"entries[{index}]: attribute {k!r} is not a declared slot")
        ordered = [k for k in declared if k in attributes] + [k for k in attributes if k not in declared]
        attributes = {k: attributes[k] for k in ordered}
        display = {k: display[k] for k in ordered}
    return DbEntry(domain=domain, attributes=attributes, display=display)


def load_db(text: str, schema: TaskSchema | None = None) -> DbTable:
    """Parse a DB file: {"domain": "...", "entries": [{...}, ...]}.

    With a schema bound, entries are checked against the declared slots;
    unknown attributes are retained but flagged as warnings on the table.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputSyntaxError(e.msg, e.lineno, e.colno) from None
    if not isinstance(doc, dict):
        raise InputSyntaxError("DB file must be an object with 'domain' and 'entries'")
    if "domain" not in doc or not isinstance(doc["domain"], str):
        raise InputSyntaxError("DB file missing string key 'domain'")
    domain = canonical_ident(doc["domain"])
    if schema is not None and schema.domain != domain:
        raise DomainMismatch(f"DB domain {domain!r} does not match schema domain {schema.domain!r}")
    raw_entries = doc.get("entries")
    if not isinstance(raw_entries, list):
        raise InputSyntaxError("DB file missing list key 'entries'")
    warnings: list[str] = []
    entries = tuple(
        _entry_from_json(e, i, domain, schema, warnings) for i, e in enumerate(raw_entries)
    )
    return DbTable(domain=domain, entries=entries, warnings=tuple(warnings))


def entry_matches(entry: DbEntry, belief: BeliefState) -> bool:
    """True iff the entry satisfies every non-dontcare constraint."""
    for slot, value in belief.pairs:
        if value == "dontcare":
            continue
        have = entry.attributes.get(slot)
        if have is None or have != value:
            return False
    return True


def query(table: DbTable, belief: BeliefState) -> DbState:
    """Resolve a belief state into the matching DB entries, file order."""
    if belief.domain != table.domain:
        raise DomainMismatch(
            f"belief domain {belief.domain!r} does not match table domain {table.domain!r}"
        )
    matched = tuple(e for e in table.entries if entry_matches(e, belief))
    return DbState(count=len(matched), entries=matched)


def render_entry(entry: DbEntry) -> str:
    return " ; ".join(f"{k} = {v}" for k, v in entry.attributes.items())


def summarize(db: DbState, k: int = 1) -> str:
    """Deterministic text for prompts: match count plus up to k entries."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if db.count == 0:
        return "no matching entries"
    head = "1 matching entry" if db.count == 1 else f"{db.count} matching entries"
    lines = [head]
    for entry in db.entries[:k]:
        lines.append(render_entry(entry))
    return "\n".join(lines)
