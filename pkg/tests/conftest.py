from __future__ import annotations

import pytest

from schemabot import bundled
from schemabot.dbkit import load_db
from schemabot.evalkit import load_corpus
from schemabot.pipeline import Engine, PipelineConfig
from schemabot.schema import parse_schema


@pytest.fixture(scope="session")
def restaurant_schema():
    return parse_schema(bundled.read_text("schemas/restaurant.json"))


@pytest.fixture(scope="session")
def restaurant_ext_schema():
    return parse_schema(bundled.read_text("schemas/restaurant_ext.json"))


@pytest.fixture(scope="session")
def hotel_schema():
    return parse_schema(bundled.read_text("schemas/hotel.json"))


@pytest.fixture(scope="session")
def attraction_schema():
    return parse_schema(bundled.read_text("schemas/attraction.json"))


@pytest.fixture(scope="session")
def restaurant_table(restaurant_schema):
    return load_db(bundled.read_text("dbs/restaurant_db.json"), restaurant_schema)


@pytest.fixture(scope="session")
def restaurant_ext_table(restaurant_ext_schema):
    return load_db(bundled.read_text("dbs/restaurant_ext_db.json"), restaurant_ext_schema)


@pytest.fixture(scope="session")
def hotel_table(hotel_schema):
    return load_db(bundled.read_text("dbs/hotel_db.json"), hotel_schema)


@pytest.fixture(scope="session")
def attraction_table(attraction_schema):
    return load_db(bundled.read_text("dbs/attraction_db.json"), attraction_schema)


@pytest.fixture(scope="session")
def toy_corpus():
    return load_corpus(bundled.read_text(bundled.TOY_CORPUS))


@pytest.fixture
def toy_engine_factory(restaurant_ext_schema, hotel_schema, attraction_schema,
                       restaurant_ext_table, hotel_table, attraction_table):
    """Engine over the bundled toy bundle with a caller-chosen backend."""

    def make(backend=None, backend_factory=None, config: PipelineConfig | None = None) -> Engine:
        return Engine(
            schemas=[restaurant_ext_schema, hotel_schema, attraction_schema],
            tables=[restaurant_ext_table, hotel_table, attraction_table],
            backend=backend,
            backend_factory=backend_factory,
            config=config,
        )

    return make
