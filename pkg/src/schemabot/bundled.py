"""Access to the data files bundled with the package: example schemas,
toy databases and corpora, formatting examples, and the value
canonicalization table."""

from __future__ import annotations

from importlib import resources

DEFAULT_SCHEMAS = (
    "schemas/restaurant_ext.json",
    "schemas/hotel.json",
    "schemas/attraction.json",
)
DEFAULT_DBS = (
    "dbs/restaurant_ext_db.json",
    "dbs/hotel_db.json",
    "dbs/attraction_db.json",
)
TOY_CORPUS = "corpora/toy_corpus.jsonl"
ORACLE_SCRIPT = "corpora/oracle_completions.json"


def data_root():
    return resources.files("schemabot") / "data"


def read_text(name: str) -> str:
    return (data_root() / name).read_text(encoding="utf-8")
