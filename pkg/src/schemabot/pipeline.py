"""End-to-end turn orchestration.

Each user turn runs up to three LLM stages in a fixed order: belief
state prediction, then (after the DB lookup) system action
determination and delexicalized response generation. The delexicalized
response is post-processed into the final reply by filling placeholders
from the retrieved entry, the belief state, and the reserved count
tokens. Parse failures re-query the same prompt up to a retry budget
and then degrade to the schema's reserved "fallback" turn, so failure
behavior stays auditable.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass

from . import bundled
from .belief import BeliefState, DialogHistory, build_dst_prompt, parse_belief_sql, render_belief_sql, render_history
from .dbkit import DbState, query, summarize
from .errors import (
    ConfigError,
    EmptySchemaSet,
    MalformedPlaceholder,
    ParseFailure,
    SessionClosed,
    TurnInProgress,
    UnknownDomain,
    UnknownSlot,
    UnknownValue,
)
from .llm import CompletionRequest, complete
from .policy import ACTION_STAGE, RESPONSE_STAGE, DelexResponse, SystemAction, build_policy_prompt, parse_action, parse_response
from .schema import RESERVED_PLACEHOLDERS, TaskSchema, scan_placeholders
from .textnorm import canonical_ident


def default_dst_formatting_example() -> str:
    return bundled.read_text("dst_formatting_example.txt").strip()


def default_policy_formatting_example() -> str:
    return bundled.read_text("policy_formatting_example.txt").strip()


@dataclass
class PipelineConfig:
    """Stage toggles and knobs; the ablation flags mirror the engine's
    three prompting components."""

    use_dst_prompter: bool = True
    use_db: bool = True
    use_policy_prompter: bool = True
    combined_action_response: bool = False
    db_summary_k: int = 1
    parse_retry_budget: int = 2
    history_turn_cap: int = 20
    dst_formatting_example: str = ""
    policy_formatting_example: str = ""
    out_of_scope_response: str = "i am sorry, i cannot help with that request."
    fallback_response: str = "i am sorry, i did not catch that. could you say it again?"

    def dst_example(self) -> str:
        return self.dst_formatting_example or default_dst_formatting_example()

    def policy_example(self) -> str:
        return self.policy_formatting_example or default_policy_formatting_example()


@dataclass
class TurnRecord:
    """Everything one turn produced, including the exact prompts."""

    user_text: str
    belief: BeliefState
    belief_sql: str
    db: DbState
    db_summary: str
    action: SystemAction
    delex: DelexResponse
    final: str
    unresolved: bool
    prompts: tuple[tuple[str, str], ...] = ()
    completions: tuple[tuple[str, str], ...] = ()
    timings: tuple[tuple[str, float], ...] = ()
    retries: int = 0
    failures: tuple[str, ...] = ()
    out_of_scope: bool = False
    degraded: bool = False
    prompt_tokens: int = 0
    completion_tokens: int = 0


class DialogSession:
    """One live dialog: bound schemas, history, and per-turn records.

    Sessions are independent; a single session runs turns strictly
    serially (a second concurrent step raises TurnInProgress).
    """

    def __init__(self, schemas, tables=(), backend=None, config: PipelineConfig | None = None,
                 session_id: str | None = None):
        schemas = list(schemas)
        if not schemas:
            raise EmptySchemaSet("a session needs at least one schema")
        self.id = session_id or uuid.uuid4().hex
        self.schemas = schemas
        self.schema_by_domain = {s.domain: s for s in schemas}
        if isinstance(tables, dict):
            self.tables = dict(tables)
        else:
            self.tables = {t.domain: t for t in tables}
        self.backend = backend
        self.config = config or PipelineConfig()
        self.history = DialogHistory()
        self.records: list[TurnRecord] = []
        self.active_domain = schemas[0].domain
        self.closed = False
        self.created_at = time.time()
        self._turn_lock = threading.Lock()

    def close(self):
        self.closed = True


class _StageLog:
    """Collects prompts/completions/timings/failures across one turn."""

    def __init__(self):
        self.prompts: list[tuple[str, str]] = []
        self.completions: list[tuple[str, str]] = []
        self.timings: list[tuple[str, float]] = []
        self.failures: list[str] = []
        self.retries = 0
        self.prompt_tokens = 0
        self.completion_tokens = 0

    def call(self, session: DialogSession, stage: str, prompt_text: str):
        started = time.perf_counter()
        result = complete(session.backend, CompletionRequest(prompt=prompt_text))
        self.timings.append((stage, time.perf_counter() - started))
        self.completions.append((stage, result.text))
        self.prompt_tokens += result.prompt_tokens
        self.completion_tokens += result.completion_tokens
        return result


def _attempts(budget: int) -> int:
    return max(0, budget) + 1


def _fallback_turn(schema: TaskSchema, config: PipelineConfig) -> tuple[SystemAction, DelexResponse]:
    turn = schema.fallback_turn()
    if turn is not None:
        return SystemAction.from_labels(turn.action.split()), DelexResponse(turn.response)
    return SystemAction(labels=("fallback",)), DelexResponse(config.fallback_response)


def _freeform_prompt(history: DialogHistory, belief_sql: str, db_summary: str) -> str:
    lines = ["You are a helpful assistant for completing user tasks. Reply to the last user message.", ""]
    rendered = render_history(history)
    if rendered:
        lines.append(rendered)
    if belief_sql:
        lines.append(f"Belief: {belief_sql}")
    if db_summary:
        lines.append(f"DB: {db_summary}")
    lines.append("System:")
    return "\n".join(lines)


def _freeform_delex(text: str) -> DelexResponse:
    reply = text.strip()
    if reply.lower().startswith("system:"):
        reply = reply[len("system:"):].strip()
    reply = " ".join(reply.split())
    if not reply:
        raise ParseFailure("empty freeform reply")
    try:
        return DelexResponse(reply)
    except MalformedPlaceholder:
        return DelexResponse(reply.replace("[", "").replace("]", ""))


def _predict_belief(session: DialogSession, history: DialogHistory, log: _StageLog):
    """Run the DST stage; returns (belief, out_of_scope)."""
    cfg = session.config
    prompt = build_dst_prompt(session.schemas, history, cfg.dst_example())
    text = prompt.render()
    log.prompts.append(("dst", text))
    for _ in range(_attempts(cfg.parse_retry_budget)):
        result = log.call(session, "dst", text)
        try:
            state = parse_belief_sql(result.text)
        except ParseFailure as e:
            log.failures.append(f"dst: {e}")
            log.retries += 1
            continue
        schema = session.schema_by_domain.get(state.domain)
        if schema is None:
            log.failures.append(f"dst: {UnknownDomain(state.domain)}")
            return state, True
        try:
            _check_belief(state, schema)
        except ParseFailure as e:
            log.failures.append(f"dst: {e}")
            log.retries += 1
            continue
        return state, False
    log.retries -= 1  # final attempt is a degradation, not a retry
    return BeliefState.empty(session.active_domain), False


def _check_belief(state: BeliefState, schema: TaskSchema) -> None:
    for slot_name, value in state.pairs:
        slot = schema.slot(slot_name)
        if slot is None:
            raise UnknownSlot(slot_name, state.domain)
        if not slot.accepts(value):
            raise UnknownValue(slot_name, value)


def _run_policy(session: DialogSession, schema: TaskSchema, history: DialogHistory,
                belief: BeliefState, db_summary: str, log: _StageLog):
    """Run action + response stages; returns (action, delex, degraded)."""
    cfg = session.config

    if not cfg.use_policy_prompter:
        belief_sql = render_belief_sql(belief) if cfg.use_dst_prompter else ""
        prompt_text = _freeform_prompt(history, belief_sql, db_summary)
        log.prompts.append(("freeform_response", prompt_text))
        result = log.call(session, "freeform_response", prompt_text)
        try:
            return SystemAction(labels=("respond",)), _freeform_delex(result.text), False
        except ParseFailure as e:
            log.failures.append(f"freeform_response: {e}")
            action, delex = _fallback_turn(schema, cfg)
            return action, delex, True

    if cfg.combined_action_response:
        prompt = build_policy_prompt(schema, history, belief, db_summary,
                                     cfg.policy_example(), stage=ACTION_STAGE)
        text = prompt.render()
        log.prompts.append(("policy_combined", text))
        for _ in range(_attempts(cfg.parse_retry_budget)):
            result = log.call(session, "policy_combined", text)
            try:
                return parse_action(result.text), parse_response(result.text), False
            except (ParseFailure, MalformedPlaceholder) as e:
                log.failures.append(f"policy_combined: {e}")
                log.retries += 1
        log.retries -= 1
        action, delex = _fallback_turn(schema, cfg)
        return action, delex, True

    action = None
    prompt = build_policy_prompt(schema, history, belief, db_summary,
                                 cfg.policy_example(), stage=ACTION_STAGE)
    text = prompt.render()
    log.prompts.append(("policy_action", text))
    for _ in range(_attempts(cfg.parse_retry_budget)):
        result = log.call(session, "policy_action", text)
        try:
            action = parse_action(result.text)
            break
        except ParseFailure as e:
            log.failures.append(f"policy_action: {e}")
            log.retries += 1
    if action is None:
        log.retries -= 1
        action, delex = _fallback_turn(schema, cfg)
        return action, delex, True

    prompt = build_policy_prompt(schema, history, belief, db_summary,
                                 cfg.policy_example(), stage=RESPONSE_STAGE, action=action)
    text = prompt.render()
    log.prompts.append(("policy_response", text))
    for _ in range(_attempts(cfg.parse_retry_budget)):
        result = log.call(session, "policy_response", text)
        try:
            return action, parse_response(result.text), False
        except (ParseFailure, MalformedPlaceholder) as e:
            log.failures.append(f"policy_response: {e}")
            log.retries += 1
    log.retries -= 1
    _, delex = _fallback_turn(schema, cfg)
    return action, delex, True


def lexicalize(delex: DelexResponse, db: DbState, belief: BeliefState,
               placeholders: dict[str, str] | None = None) -> tuple[str, bool]:
    """Fill placeholders into natural language.

    Resolution order per placeholder: the top retrieved entry, then the
    belief state, then the reserved count tokens (value_count/choice ->
    match count). Unresolvable placeholders stay verbatim and flip the
    unresolved flag.
    """
    mapping = placeholders or {}
    unresolved = False
    out: list[str] = []
    cursor = 0
    text = delex.text
    for token in scan_placeholders(text):
        start = text.index("[", cursor)
        end = text.index("]", start) + 1
        out.append(text[cursor:start])
        cursor = end
        ident = canonical_ident(token)
        slot = mapping.get(ident)
        if slot is None:
            slot = ident[len("value_"):] if ident.startswith("value_") and ident not in RESERVED_PLACEHOLDERS else ident
        value = None
        if db.top is not None:
            value = db.top.get_display(slot)
        if value is None:
            value = belief.value(slot)
        if value is None and ident in RESERVED_PLACEHOLDERS:
            value = str(db.count)
        if value is None:
            unresolved = True
            out.append(text[start:end])
        else:
            out.append(value)
    out.append(text[cursor:])
    return "".join(out), unresolved


def step(session: DialogSession, user_utterance: str, forced_belief: BeliefState | None = None) -> TurnRecord:
    """Run one full dialog turn and append it to the session.

    `forced_belief` bypasses the DST stage (gold-belief teacher forcing
    for diagnostics). On LLM transport failure the session is left
    unchanged and the backend error propagates.
    """
    if session.closed:
        raise SessionClosed(f"session {session.id} is closed")
    if not user_utterance or not user_utterance.strip():
        raise ValueError("user utterance must be non-empty")
    if session.backend is None:
        raise ConfigError("session has no LLM backend configured")
    if not session._turn_lock.acquire(blocking=False):
        raise TurnInProgress(f"session {session.id} is already processing a turn")
    try:
        return _step_locked(session, user_utterance.strip(), forced_belief)
    finally:
        session._turn_lock.release()


def _step_locked(session: DialogSession, user_text: str, forced_belief: BeliefState | None) -> TurnRecord:
    cfg = session.config
    log = _StageLog()
    history = session.history.with_turn("user", user_text)
    prompt_history = history.capped(cfg.history_turn_cap)

    out_of_scope = False
    if forced_belief is not None:
        belief = forced_belief
        out_of_scope = belief.domain not in session.schema_by_domain
    elif cfg.use_dst_prompter:
        belief, out_of_scope = _predict_belief(session, prompt_history, log)
    else:
        belief = BeliefState.empty(session.active_domain)

    if out_of_scope:
        action = SystemAction(labels=("out_of_scope",))
        delex = DelexResponse(cfg.out_of_scope_response)
        record = TurnRecord(
            user_text=user_text,
            belief=belief,
            belief_sql=render_belief_sql(belief),
            db=DbState.empty(),
            db_summary="",
            action=action,
            delex=delex,
            final=delex.text,
            unresolved=False,
            prompts=tuple(log.prompts),
            completions=tuple(log.completions),
            timings=tuple(log.timings),
            retries=log.retries,
            failures=tuple(log.failures),
            out_of_scope=True,
            prompt_tokens=log.prompt_tokens,
            completion_tokens=log.completion_tokens,
        )
        session.history = history.with_turn("system", record.final)
        session.records.append(record)
        return record

    session.active_domain = belief.domain
    schema = session.schema_by_domain[belief.domain]

    started = time.perf_counter()
    if cfg.use_db:
        table = session.tables.get(belief.domain)
        db = query(table, belief) if table is not None else DbState.empty()
        db_summary = summarize(db, cfg.db_summary_k)
    else:
        db = DbState.empty()
        db_summary = ""
    log.timings.append(("db", time.perf_counter() - started))

    action, delex, degraded = _run_policy(session, schema, prompt_history, belief, db_summary, log)

    final, unresolved = lexicalize(delex, db, belief, schema.placeholder_map())

    record = TurnRecord(
        user_text=user_text,
        belief=belief,
        belief_sql=render_belief_sql(belief),
        db=db,
        db_summary=db_summary,
        action=action,
        delex=delex,
        final=final,
        unresolved=unresolved,
        prompts=tuple(log.prompts),
        completions=tuple(log.completions),
        timings=tuple(log.timings),
        retries=log.retries,
        failures=tuple(log.failures),
        degraded=degraded,
        prompt_tokens=log.prompt_tokens,
        completion_tokens=log.completion_tokens,
    )
    session.history = history.with_turn("system", record.final)
    session.records.append(record)
    return record


class Engine:
    """Bundles schemas, databases, a backend, and a pipeline config, and
    mints independent sessions from them."""

    def __init__(self, schemas, tables=(), backend=None, backend_factory=None,
                 config: PipelineConfig | None = None):
        self.schemas = list(schemas)
        if not self.schemas:
            raise EmptySchemaSet("an engine needs at least one schema")
        self.schema_by_domain = {s.domain: s for s in self.schemas}
        if isinstance(tables, dict):
            self.tables = dict(tables)
        else:
            self.tables = {t.domain: t for t in tables}
        self.backend = backend
        self.backend_factory = backend_factory
        self.config = config or PipelineConfig()

    def new_session(self, schema_ids: list[str] | None = None, hint: str | None = None) -> DialogSession:
        """Create a session bound to the named domains (default: all).

        `hint` is passed to the backend factory when one is configured,
        so replay backends can be keyed per dialog/session.
        """
        if schema_ids:
            missing = [x for x in schema_ids if canonical_ident(x) not in self.schema_by_domain]
            if missing:
                raise KeyError(f"unknown schema id(s): {', '.join(missing)}")
            schemas = [self.schema_by_domain[canonical_ident(x)] for x in schema_ids]
        else:
            schemas = self.schemas
        backend = self.backend_factory(hint) if self.backend_factory is not None else self.backend
        tables = {s.domain: self.tables[s.domain] for s in schemas if s.domain in self.tables}
        return DialogSession(schemas, tables, backend, self.config)
