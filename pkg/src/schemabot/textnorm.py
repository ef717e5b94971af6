"""Canonicalization of identifiers and slot values.

Identifiers (domains, slots, placeholders, action labels) are lowercased
ASCII with underscores; comparisons everywhere are case-insensitive.
Values are lowercased and whitespace-collapsed, then passed through a
surface-form table (shipped as data, not code) that unifies spellings
such as "don't care" -> "dontcare".
"""

from __future__ import annotations

import json
import re
from functools import lru_cache

from . import bundled

IDENT_RE = re.compile(r"^[a-z][a-z0-9_]*$")

_WS_RE = re.compile(r"\s+")


def canonical_ident(name: str) -> str:
    """Lowercase and trim an identifier; spaces become underscores."""
    return _WS_RE.sub("_", name.strip().lower())


def is_canonical_ident(name: str) -> bool:
    return bool(IDENT_RE.match(name))


@lru_cache(maxsize=1)
def variant_table() -> dict[str, str]:
    """Surface-form -> canonical-value map bundled with the package."""
    table = json.loads(bundled.read_text("value_canonicalization.json"))
    return {k.strip().lower(): v for k, v in table.items()}


def canonical_value(value: str, table: dict[str, str] | None = None) -> str:
    """Lowercase, trim, collapse whitespace, then unify surface variants."""
    out = _WS_RE.sub(" ", str(value).strip().lower())
    if table is None:
        table = variant_table()
    return table.get(out, out)
