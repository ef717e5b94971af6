"""HTTP service hosting live chat sessions over the dialog engine.

Endpoints (JSON bodies, UTF-8):

    GET  /v1/health                      -> {"status": "ok"}
    GET  /v1/schemas                     -> bound schemas and their sizes
    POST /v1/sessions                    -> create a session; body {"schema_ids": [...]}
    POST /v1/sessions/{id}/messages      -> run one turn; body {"text": "..."}
    GET  /v1/sessions/{id}               -> full session state incl. per-turn records

Every response carries an X-Request-Id header; errors use a closed set
of machine codes. Sessions live in process memory, optionally mirrored
to an append-only JSON-lines log.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import bundled
from .dbkit import load_db
from .errors import BackendError, ConfigError, SchemabotError, TurnInProgress
from .llm import HttpBackend, LlmBackendConfig, PromptHashBackend, ScriptedBackend
from .pipeline import DialogSession, Engine, PipelineConfig, TurnRecord, step
from .schema import parse_schema_bundle

# Closed set of machine-readable error codes.
ERROR_CODES = (
    "invalid_request",
    "unauthorized",
    "schema_not_found",
    "session_not_found",
    "turn_in_progress",
    "backend_error",
    "internal_error",
)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail=None):
        assert code in ERROR_CODES
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail
        super().__init__(message)


@dataclass
class ServerConfig:
    cors_origin: str = ""
    bearer_token: str = ""
    persist_path: str = ""


@dataclass
class AppConfig:
    schema_paths: list[str] = field(default_factory=list)
    db_paths: list[str] = field(default_factory=list)
    backend_spec: str = "http"
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    server: ServerConfig = field(default_factory=ServerConfig)
    # directory that relative paths in this config resolve against
    base_dir: str = "."


def read_source(path: str) -> str:
    """Read a schema/DB/corpus/script source: a file path or builtin:<name>."""
    if path.startswith("builtin:"):
        return bundled.read_text(path[len("builtin:"):])
    return Path(path).read_text(encoding="utf-8")


def build_backend(spec: str, base_dir: str = "."):
    """Turn a backend spec string into (backend, backend_factory).

    Specs: "http" (remote provider from env), "scripted:<file>" where the
    file holds a list of completions, {"by_prompt_hash": {...}}, or
    {"mode": "per_dialog", "scripts": {hint: [...]}}.
    """
    if spec in ("none", ""):
        return None, None
    if spec == "http":
        return HttpBackend(LlmBackendConfig.from_env()), None
    if spec.startswith("scripted:"):
        ref = spec[len("scripted:"):]
        if not ref.startswith("builtin:") and not os.path.isabs(ref):
            ref = os.path.join(base_dir, ref)
        doc = json.loads(read_source(ref))
        if isinstance(doc, list):
            return ScriptedBackend(doc), None
        if isinstance(doc, dict) and "script" in doc:
            return ScriptedBackend(doc["script"]), None
        if isinstance(doc, dict) and "by_prompt_hash" in doc:
            return PromptHashBackend(doc["by_prompt_hash"]), None
        if isinstance(doc, dict) and doc.get("mode") == "per_dialog":
            scripts = doc.get("scripts", {})

            def factory(hint):
                if hint not in scripts:
                    raise ConfigError(f"no script for dialog/session hint {hint!r}")
                return ScriptedBackend(scripts[hint])

            return None, factory
        raise ConfigError(f"unrecognized scripted backend file shape: {ref}")
    raise ConfigError(f"unrecognized backend spec {spec!r}")


def load_app_config(path: str) -> AppConfig:
    base = Path(path).parent
    doc = json.loads(Path(path).read_text(encoding="utf-8"))

    def _resolve(p: str) -> str:
        if p.startswith("builtin:") or os.path.isabs(p):
            return p
        return str(base / p)

    try:
        pipeline = PipelineConfig(**doc.get("pipeline", {}))
        server = ServerConfig(**doc.get("server", {}))
    except TypeError as e:
        raise ConfigError(f"bad config file {path}: {e}") from None
    return AppConfig(
        schema_paths=[_resolve(p) for p in doc.get("schemas", [])],
        db_paths=[_resolve(p) for p in doc.get("dbs", [])],
        backend_spec=doc.get("backend", "http"),
        pipeline=pipeline,
        server=server,
        base_dir=str(base),
    )


def build_engine(config: AppConfig) -> Engine:
    """Load schemas and DBs and wire the backend into an Engine."""
    schema_paths = list(config.schema_paths) or [f"builtin:{p}" for p in bundled.DEFAULT_SCHEMAS]
    db_paths = list(config.db_paths) or [f"builtin:{p}" for p in bundled.DEFAULT_DBS]
    schemas = []
    for p in schema_paths:
        schemas.extend(parse_schema_bundle(read_source(p)))
    by_domain = {s.domain: s for s in schemas}
    if len(by_domain) != len(schemas):
        raise ConfigError("duplicate schema domains in configuration")
    tables = {}
    for p in db_paths:
        raw = json.loads(read_source(p))
        domain = raw.get("domain", "") if isinstance(raw, dict) else ""
        table = load_db(read_source(p), by_domain.get(domain))
        if table.domain in tables:
            raise ConfigError(f"duplicate DB for domain {table.domain!r}")
        tables[table.domain] = table
    backend, factory = build_backend(config.backend_spec, config.base_dir)
    return Engine(schemas, tables, backend=backend, backend_factory=factory, config=config.pipeline)


# ---------------------------------------------------------------------------
# FastAPI application

class CreateSessionBody(BaseModel):
    schema_ids: list[str] | None = None


class MessageBody(BaseModel):
    text: str


def _record_view(record: TurnRecord, include_prompts: bool = False) -> dict:
    view = {
        "user_text": record.user_text,
        "belief_sql": record.belief_sql,
        "db_count": record.db.count,
        "action": list(record.action.labels),
        "delex": record.delex.text,
        "response": record.final,
        "unresolved": record.unresolved,
        "out_of_scope": record.out_of_scope,
        "degraded": record.degraded,
        "retries": record.retries,
        "latency_ms": round(sum(dt for _, dt in record.timings) * 1000.0, 3),
    }
    if include_prompts:
        view["prompts"] = [{"stage": s, "text": t} for s, t in record.prompts]
        view["completions"] = [{"stage": s, "text": t} for s, t in record.completions]
        view["failures"] = list(record.failures)
    return view


class SessionStore:
    def __init__(self):
        self._sessions: dict[str, DialogSession] = {}
        self._lock = threading.Lock()

    def add(self, session: DialogSession) -> None:
        with self._lock:
            self._sessions[session.id] = session

    def get(self, session_id: str) -> DialogSession:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise ApiError(404, "session_not_found", f"no session {session_id!r}")
        return session


def create_app(engine: Engine, server: ServerConfig | None = None) -> FastAPI:
    server = server or ServerConfig()
    app = FastAPI(title="schemabot", docs_url=None, redoc_url=None)
    store = SessionStore()
    persist_lock = threading.Lock()

    if server.cors_origin:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=[server.cors_origin] if server.cors_origin != "*" else ["*"],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    def _persist(kind: str, payload: dict) -> None:
        if not server.persist_path:
            return
        line = json.dumps({"kind": kind, "at": time.time(), **payload}, ensure_ascii=False)
        with persist_lock:
            with open(server.persist_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    @app.middleware("http")
    async def request_id_middleware(request: Request, call_next):
        request.state.request_id = uuid.uuid4().hex
        if server.bearer_token:
            supplied = request.headers.get("Authorization", "")
            if supplied != f"Bearer {server.bearer_token}":
                return _error_response(
                    request.state.request_id,
                    ApiError(401, "unauthorized", "missing or invalid bearer token"),
                )
        response = await call_next(request)
        response.headers["X-Request-Id"] = request.state.request_id
        return response

    def _error_response(request_id: str, err: ApiError) -> JSONResponse:
        body = {
            "error": {"code": err.code, "message": err.message, "detail": err.detail},
            "request_id": request_id,
        }
        return JSONResponse(status_code=err.status, content=body, headers={"X-Request-Id": request_id})

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, err: ApiError):
        return _error_response(getattr(request.state, "request_id", ""), err)

    @app.exception_handler(SchemabotError)
    async def handle_engine_error(request: Request, err: SchemabotError):
        wrapped = ApiError(500, "internal_error", str(err))
        return _error_response(getattr(request.state, "request_id", ""), wrapped)

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "schemas": len(engine.schemas)}

    @app.get("/v1/schemas")
    def schemas():
        return {
            "schemas": [
                {
                    "id": s.domain,
                    "domain": s.domain,
                    "slots": s.slot_names(),
                    "template_turns": len(s.policy.turns),
                }
                for s in engine.schemas
            ]
        }

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: CreateSessionBody, request: Request):
        try:
            session = engine.new_session(body.schema_ids, hint=None)
        except KeyError as e:
            raise ApiError(404, "schema_not_found", str(e.args[0] if e.args else e))
        store.add(session)
        _persist("session", {"session_id": session.id, "schema_ids": [s.domain for s in session.schemas]})
        return {
            "session_id": session.id,
            "schema_ids": [s.domain for s in session.schemas],
            "request_id": request.state.request_id,
        }

    @app.post("/v1/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody, request: Request):
        session = store.get(session_id)
        text = body.text.strip()
        if not text:
            raise ApiError(400, "invalid_request", "message text must be non-empty")
        try:
            record = step(session, text)
        except TurnInProgress:
            raise ApiError(409, "turn_in_progress", "the session is already processing a turn")
        except BackendError as e:
            raise ApiError(502, "backend_error", str(e))
        view = _record_view(record)
        view["session_id"] = session.id
        view["turn_index"] = len(session.records) - 1
        view["request_id"] = request.state.request_id
        _persist("turn", {"session_id": session.id, "turn": _record_view(record, include_prompts=True)})
        return view

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        session = store.get(session_id)
        return {
            "session_id": session.id,
            "schema_ids": [s.domain for s in session.schemas],
            "active_domain": session.active_domain,
            "history": [{"speaker": t.speaker, "text": t.text} for t in session.history.turns],
            "records": [_record_view(r, include_prompts=True) for r in session.records],
        }

    return app


def http_api(config: AppConfig, host: str = "127.0.0.1", port: int = 8080):
    """Build the engine from config and serve it (blocking)."""
    import uvicorn

    engine = build_engine(config)
    app = create_app(engine, config.server)
    uvicorn.run(app, host=host, port=port, log_level="warning")
