"""Structural rule: only the llm module talks to LLM providers over the
network. Everything else must stay transport-free so scripted runs are
hermetic (the serve module hosts HTTP but never initiates it)."""

from __future__ import annotations

import ast
from pathlib import Path

import schemabot

PACKAGE_ROOT = Path(schemabot.__file__).parent

OUTBOUND_MODULES = {"httpx", "requests", "urllib", "urllib3", "http.client", "socket", "aiohttp"}
ALLOWED = {"llm.py"}


def _imports(path: Path) -> set[str]:
    tree = ast.parse(path.read_text(encoding="utf-8"))
    found = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            found.update(alias.name for alias in node.names)
        elif isinstance(node, ast.ImportFrom) and node.module and node.level == 0:
            found.add(node.module)
    return found


def test_only_llm_module_performs_outbound_io():
    offenders = {}
    for path in sorted(PACKAGE_ROOT.glob("*.py")):
        if path.name in ALLOWED:
            continue
        hits = {
            mod for mod in _imports(path)
            if mod in OUTBOUND_MODULES or mod.split(".")[0] in OUTBOUND_MODULES
        }
        if hits:
            offenders[path.name] = hits
    assert not offenders, f"outbound transport imports outside llm.py: {offenders}"
