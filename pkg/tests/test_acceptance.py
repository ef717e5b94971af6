"""Acceptance suite: one test per release criterion, each printing a
PASS line on success (run with -s to see them).

Expected values are frozen from independent oracles: the combined-score
rows come from published end-to-end dialog benchmarks, the BLEU and
next-action numbers from hand-tallied worksheets, and the retriever
cases from a naive linear-scan reference implementation.
"""

from __future__ import annotations

import json
import random
import socket
import subprocess
import sys
import time

import pytest

from harness import oracle_backend_factory, rule_backend_factory
from schemabot import bundled
from schemabot.belief import BeliefState, parse_belief_sql, render_belief_sql
from schemabot.dbkit import DbEntry, DbTable, query
from schemabot.evalkit import EvalRunConfig, combined, corpus_bleu, next_action_scores, run_e2e_eval
from schemabot.llm import ScriptedBackend
from schemabot.pipeline import PipelineConfig, step
from schemabot.policy import build_policy_prompt, render_turn
from schemabot.schema import edit_skeleton, parse_edits, parse_schema, serialize_schema, serialize_turn
from schemabot.textnorm import canonical_value


def report(name: str) -> None:
    print(f"ACCEPTANCE {name}: PASS")


# ---------------------------------------------------------------------------
# 1. Combined-metric reproduction

# Published (inform, success, bleu, combined) rows; the combined column
# must be re-derivable from its own components to within half of the
# last printed digit. One multiwoz2.2 row is internally inconsistent
# (its rounded components give 70.52 against a printed 70.53, because
# the aggregate was computed upstream from unrounded scores); it stays
# in the table as a strict xfail so the discrepancy is documented.
REPORTED_ROWS = [
    ("multiwoz2.0-chatgpt", 64.56, 54.05, 7.17, 66.48),
    ("multiwoz2.2-chatgpt", 64.70, 54.70, 6.96, 66.66),
    ("multiwoz2.0-codex", 71.67, 52.55, 7.91, 70.02),
    ("multiwoz2.2-codex", 75.50, 52.30, 6.62, 70.53),
    ("multiwoz2.0-gpt3.5", 83.88, 69.87, 9.09, 85.97),
    ("multiwoz2.2-gpt3.5", 82.00, 72.50, 9.22, 86.47),
    ("attraction-chatgpt", 95.00, 94.00, 7.13, 101.63),
    ("attraction-codex", 98.00, 93.00, 10.45, 105.95),
    ("attraction-gpt3.5", 96.00, 93.00, 9.53, 104.03),
    ("train-chatgpt", 76.77, 74.24, 6.75, 82.26),
    ("train-codex", 78.79, 70.20, 8.56, 83.06),
    ("train-gpt3.5", 82.83, 77.27, 8.72, 88.77),
    ("hotel-chatgpt", 76.50, 57.00, 5.16, 71.91),
    ("hotel-codex", 83.50, 69.50, 7.86, 84.36),
    ("hotel-gpt3.5", 82.50, 71.50, 7.05, 84.05),
    ("restaurant-chatgpt", 90.00, 82.50, 6.72, 92.97),
    ("restaurant-codex", 91.00, 85.00, 10.50, 98.50),
    ("restaurant-gpt3.5", 91.50, 84.00, 12.90, 100.65),
]

INCONSISTENT_LABELS = {"multiwoz2.2-codex"}


def _parametrized_rows():
    out = []
    for row in REPORTED_ROWS:
        if row[0] in INCONSISTENT_LABELS:
            out.append(pytest.param(row, id=row[0], marks=pytest.mark.xfail(
                strict=True,
                reason="published combined value is 0.01 off its own rounded components",
            )))
        else:
            out.append(pytest.param(row, id=row[0]))
    return out


@pytest.mark.parametrize("row", _parametrized_rows())
def test_combined_metric_reproduction(row):
    _, inform, success, bleu, reported = row
    assert abs(combined(inform, success, bleu) - reported) <= 0.005 + 1e-9


def test_combined_metric_reproduction_runtime():
    started = time.perf_counter()
    consistent = [r for r in REPORTED_ROWS if r[0] not in INCONSISTENT_LABELS]
    for _ in range(100):
        for _, inform, success, bleu, reported in consistent:
            assert abs(combined(inform, success, bleu) - reported) <= 0.005 + 1e-9
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0
    report(f"combined-metric-reproduction ({len(consistent)}/{len(REPORTED_ROWS)} rows "
           "reproduce within ±0.005; 1 published row is 0.01 off its own components, "
           "kept as a documented xfail)")


# ---------------------------------------------------------------------------
# 2. Oracle end-to-end

def test_oracle_end_to_end(toy_engine_factory, toy_corpus):
    started = time.perf_counter()
    assert len(toy_corpus) >= 5
    domains = {domain for d in toy_corpus for domain, _ in d.goal}
    assert len(domains) >= 3
    ext_dialog = next(d for d in toy_corpus if d.id == "d2_restaurant_ext")
    ext_requests = set(ext_dialog.goal_map()["restaurant"].requests)
    assert ext_requests == {"restaurant_dish", "delivery_fee", "start_time", "end_time"}

    engine = toy_engine_factory(backend_factory=oracle_backend_factory(toy_corpus))
    result = run_e2e_eval(toy_corpus, engine, EvalRunConfig(workers=4))
    assert result.inform == 100.0
    assert result.success == 100.0
    assert result.bleu == pytest.approx(100.0)
    assert result.combined == pytest.approx(200.0)
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0
    report(f"oracle-end-to-end (inform={result.inform:.0f} success={result.success:.0f} "
           f"bleu={result.bleu:.0f} combined={result.combined:.0f} in {elapsed:.2f}s)")


# ---------------------------------------------------------------------------
# 3. Ablation ordering

ABLATIONS = [
    ("full", PipelineConfig()),
    ("-policy", PipelineConfig(use_policy_prompter=False)),
    ("-policy-db", PipelineConfig(use_policy_prompter=False, use_db=False)),
    ("-policy-db-belief", PipelineConfig(use_policy_prompter=False, use_db=False,
                                         use_dst_prompter=False)),
]


def test_ablation_ordering(toy_engine_factory, toy_corpus):
    started = time.perf_counter()
    scores = {}
    for name, config in ABLATIONS:
        engine = toy_engine_factory(
            backend_factory=rule_backend_factory(toy_corpus), config=config
        )
        scores[name] = run_e2e_eval(toy_corpus, engine, EvalRunConfig(workers=4)).combined
    assert scores["full"] > scores["-policy"] > scores["-policy-db"] > scores["-policy-db-belief"]
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0
    ordered = " > ".join(f"{name}={scores[name]:.2f}" for name, _ in ABLATIONS)
    report(f"ablation-ordering ({ordered} in {elapsed:.2f}s)")


# ---------------------------------------------------------------------------
# 4. Retriever oracle equivalence

def naive_scan(entries, pairs):
    kept = []
    for entry in entries:
        ok = True
        for slot, value in pairs:
            if value == "dontcare":
                continue
            if slot not in entry.attributes or entry.attributes[slot] != value:
                ok = False
                break
        if ok:
            kept.append(entry)
    return kept


def test_retriever_oracle_equivalence():
    started = time.perf_counter()
    rng = random.Random(20240517)
    slots = ["food", "area", "pricerange", "name", "stars", "parking"]
    values = ["korean", "thai", "centre", "north", "cheap", "a", "b", "3", "yes"]
    cases = 0
    for _ in range(1000):
        entries = []
        for _ in range(rng.randint(0, 50)):
            keys = rng.sample(slots, rng.randint(0, len(slots)))
            attrs = {k: rng.choice(values) for k in keys}
            entries.append(DbEntry("restaurant", attrs, dict(attrs)))
        table = DbTable("restaurant", tuple(entries))
        chosen = rng.sample(slots, rng.randint(0, 5))
        pairs = tuple((s, rng.choice(values + ["dontcare"])) for s in chosen)
        belief = BeliefState("restaurant", pairs)

        state = query(table, belief)
        assert list(state.entries) == naive_scan(entries, pairs)
        assert state.count == len(state.entries)

        # dontcare neutrality on a fresh unconstrained slot
        free = [s for s in slots if s not in chosen]
        if free:
            widened = BeliefState("restaurant", pairs + ((free[0], "dontcare"),))
            assert query(table, widened) == state
            # constraint monotonicity
            tightened = BeliefState("restaurant", pairs + ((free[0], rng.choice(values)),))
            assert query(table, tightened).count <= state.count
        cases += 1
    elapsed = time.perf_counter() - started
    assert cases >= 1000
    assert elapsed < 5.0
    report(f"retriever-oracle-equivalence ({cases} cases in {elapsed:.2f}s)")


# ---------------------------------------------------------------------------
# 5. Belief SQL round-trip and prose robustness

def _random_state(rng: random.Random) -> BeliefState:
    letters = "abcdefghijklmnopqrstuvwxyz0123456789"
    domain = rng.choice("abcdefghijklmnopqrstuvwxyz") + "".join(
        rng.choice(letters + "_") for _ in range(rng.randint(0, 7))
    )
    n = rng.randint(0, 5)
    taken = []
    pairs = []
    while len(pairs) < n:
        slot = rng.choice("abcdefghijklmnopqrstuvwxyz") + "".join(
            rng.choice(letters + "_") for _ in range(rng.randint(0, 6))
        )
        if slot in taken:
            continue
        taken.append(slot)
        value = canonical_value(
            " ".join(
                "".join(rng.choice(letters + "':.") for _ in range(rng.randint(1, 6)))
                for _ in range(rng.randint(1, 3))
            )
        )
        if not value:
            continue
        pairs.append((slot, value))
    return BeliefState(domain, tuple(pairs))


def _random_noise(rng: random.Random, max_len: int) -> str:
    alphabet = "abcdefghijklmnopqrtuvwxyz ,.!?\n"
    while True:
        noise = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, max_len)))
        if "select" not in noise.lower():
            return noise


def test_belief_sql_roundtrip_and_fuzz():
    started = time.perf_counter()
    rng = random.Random(7041776)
    for _ in range(1000):
        state = _random_state(rng)
        assert parse_belief_sql(render_belief_sql(state)) == state
    for _ in range(500):
        state = _random_state(rng)
        before = _random_noise(rng, 250)
        after = _random_noise(rng, 249)
        embedded = f"{before} {render_belief_sql(state)}\n{after}"
        assert len(before) + len(after) <= 500
        assert parse_belief_sql(embedded) == state
    elapsed = time.perf_counter() - started
    report(f"belief-sql-roundtrip (1000 round-trips + 500 fuzz cases in {elapsed:.2f}s)")


# ---------------------------------------------------------------------------
# 6. Domain-extension locality

DELIVERY_QUESTION = "does the restaurant offer delivery service? how much does the delivery charge?"


def test_domain_extension_locality(restaurant_schema, restaurant_ext_schema,
                                   restaurant_table, restaurant_ext_table):
    from schemabot.belief import DialogHistory
    from schemabot.pipeline import Engine
    from schemabot.policy import render_skeleton

    # the bundled extension is exactly the base schema plus the edit file
    edits = parse_edits(bundled.read_text("schemas/restaurant_ext_edits.json"))
    rebuilt = edit_skeleton(restaurant_schema, edits)
    assert serialize_schema(rebuilt) == serialize_schema(restaurant_ext_schema)

    # canonical serialization of every pre-existing turn is byte-identical
    for turn in restaurant_schema.policy.turns:
        assert serialize_turn(restaurant_ext_schema.turn(turn.id)) == serialize_turn(turn)

    # rendered policy prompts change only by the added turn blocks
    history = DialogHistory().with_turn("user", DELIVERY_QUESTION)
    belief = BeliefState("restaurant", (("food", "korean"),))
    base_prompt = build_policy_prompt(restaurant_schema, history, belief, "", "EX", stage="action").render()
    ext_prompt = build_policy_prompt(restaurant_ext_schema, history, belief, "", "EX", stage="action").render()
    added = [t for t in restaurant_ext_schema.policy.turns if restaurant_schema.turn(t.id) is None]
    base_skeleton = render_skeleton(restaurant_schema)
    ext_skeleton = render_skeleton(restaurant_ext_schema)
    assert ext_skeleton == base_skeleton + "\n\n" + "\n\n".join(render_turn(t) for t in added)
    assert ext_prompt == base_prompt.replace(base_skeleton, ext_skeleton, 1)
    # the delivery rule exists only in the extended skeleton
    assert DELIVERY_QUESTION in ext_skeleton
    assert DELIVERY_QUESTION not in base_skeleton

    # extended bot answers the delivery-fee request with the DB value
    belief_sql = "select * from restaurant where food = korean"
    ext_engine = Engine([restaurant_ext_schema], [restaurant_ext_table],
                        backend=ScriptedBackend([
                            belief_sql,
                            "Action: inform_delivery_fee",
                            "Response: yes, they offer delivery service and the delivery charge is [value_price]. can i help you with anything else?",
                        ]))
    ext_record = step(ext_engine.new_session(), DELIVERY_QUESTION)

    # unextended bot: the only skeleton turn covering the request is the
    # reserved fallback turn, and a skeleton-following model lands on it
    fallback = restaurant_schema.turn("fallback")
    base_engine = Engine([restaurant_schema], [restaurant_table],
                         backend=ScriptedBackend([
                             belief_sql,
                             f"Action: {fallback.action}",
                             f"Response: {fallback.response}",
                         ]))
    base_record = step(base_engine.new_session(), DELIVERY_QUESTION)

    assert ext_record.action.labels == ("inform_delivery_fee",)
    assert "4 pounds" in ext_record.final
    assert base_record.action.labels == (fallback.action,)
    assert base_record.delex.text == fallback.response
    assert "delivery" not in base_record.final
    report("domain-extension-locality (pre-existing turns byte-identical; "
           "ext bot quotes the delivery fee, base bot falls back)")


# ---------------------------------------------------------------------------
# 7. Metric unit identities

def test_metric_unit_identities(toy_engine_factory, toy_corpus):
    texts = ["the cat sat on the mat", "no matching entries"]
    assert corpus_bleu(texts, texts) == pytest.approx(100.0)
    assert corpus_bleu(["aa bb cc dd"], ["ww xx yy zz"]) == 0.0
    # hand-tallied worksheet: 1g 5/6, 2g 3/5, 3g 2/4, 4g 1/3, bp=1
    assert corpus_bleu(["the cat sat on the mat"], ["the cat sat on a mat"]) == pytest.approx(
        53.7284965911771, abs=1e-6
    )
    # hand-tallied worksheet with a zero 4-gram order: unsmoothed score is 0
    assert corpus_bleu(["the cat sat on the mat"], ["the cat is on the mat"]) == pytest.approx(
        0.0, abs=1e-6
    )
    # hand-computed confusion oracle: F1(a)=2/3, F1(b)=4/5, support 2/2
    wf1, acc = next_action_scores([["a"], ["a"], ["b"], ["b"]], [["a"], ["b"], ["b"], ["b"]])
    assert wf1 == pytest.approx(100 * 11 / 15)
    assert acc == pytest.approx(75.0)

    # success implies inform on every evaluated dialog, degraded runs included
    rows = []
    oracle_engine = toy_engine_factory(backend_factory=oracle_backend_factory(toy_corpus))
    rows += run_e2e_eval(toy_corpus, oracle_engine, EvalRunConfig(workers=2)).per_dialog
    for _, config in ABLATIONS:
        engine = toy_engine_factory(backend_factory=rule_backend_factory(toy_corpus), config=config)
        rows += run_e2e_eval(toy_corpus, engine, EvalRunConfig(workers=2)).per_dialog
    assert rows
    assert all(row["inform"] for row in rows if row["success"])
    report(f"metric-unit-identities (bleu + next-action oracles exact; "
           f"success=>inform over {len(rows)} dialog rows)")


# ---------------------------------------------------------------------------
# 8. Service contract against a fresh process

def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def _serve_once(tmp_path, tag: str) -> list:
    import httpx

    script = [
        "select * from restaurant where food = korean",
        "Action: inform_name_phone",
        "Response: [value_name] is a [value_food] restaurant. Their phone number is [value_phone].",
    ]
    script_path = tmp_path / f"script_{tag}.json"
    script_path.write_text(json.dumps(script))
    config_path = tmp_path / f"config_{tag}.json"
    config_path.write_text(json.dumps({
        "backend": f"scripted:{script_path.name}",
        "server": {"cors_origin": "*"},
    }))
    port = _free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "schemabot", "serve", "--config", str(config_path),
         "--port", str(port)],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE,
    )
    base = f"http://127.0.0.1:{port}"
    bodies = []
    try:
        deadline = time.time() + 20
        while True:
            try:
                if httpx.get(f"{base}/v1/health", timeout=1.0).status_code == 200:
                    break
            except Exception:
                pass
            if time.time() > deadline:
                raise RuntimeError(f"service did not come up: {proc.stderr.read()!r}")
            time.sleep(0.15)

        with httpx.Client(base_url=base, timeout=10.0) as client:
            health = client.get("/v1/health")
            assert health.status_code == 200 and health.headers.get("x-request-id")
            schemas = client.get("/v1/schemas")
            assert schemas.status_code == 200
            created = client.post("/v1/sessions", json={"schema_ids": ["restaurant"]})
            assert created.status_code == 201
            session_id = created.json()["session_id"]
            reply = client.post(f"/v1/sessions/{session_id}/messages",
                                json={"text": "i want korean food"})
            assert reply.status_code == 200
            session_state = client.get(f"/v1/sessions/{session_id}")
            assert session_state.status_code == 200
            missing = client.get("/v1/sessions/unknown")
            assert missing.status_code == 404
            assert missing.json()["error"]["code"] == "session_not_found"

            for body in (health.json(), schemas.json(), created.json(), reply.json(),
                         session_state.json(), missing.json()):
                bodies.append(_normalize(body))
    finally:
        proc.terminate()
        try:
            proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            proc.kill()
    return bodies


def _normalize(value):
    """Strip ids and timings so two fresh runs can be compared bit-for-bit."""
    volatile = {"session_id", "request_id", "latency_ms"}
    if isinstance(value, dict):
        return {k: _normalize(v) for k, v in value.items() if k not in volatile}
    if isinstance(value, list):
        return [_normalize(v) for v in value]
    return value


def test_service_contract_fresh_process(tmp_path):
    first = _serve_once(tmp_path, "a")
    second = _serve_once(tmp_path, "b")
    assert first == second
    reply = first[3]
    assert reply["belief_sql"] == "select * from restaurant where food = korean"
    assert reply["db_count"] == 1
    assert reply["action"] == ["inform_name_phone"]
    assert reply["response"].startswith("Little Seoul")
    report("service-contract (documented endpoints pass on a fresh process; "
           "two identical runs agree modulo ids/timings)")
