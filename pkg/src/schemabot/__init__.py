"""schemabot: build task-oriented dialog bots from symbolic task schemas.

The engine tracks belief states with a DST prompter, grounds them in a
task database, and generates policy-compliant responses with a policy
prompter, all over a pluggable frozen LLM. See README.md for the file
formats and the CLI.
"""

from .belief import BeliefState, DialogHistory, Turn, build_dst_prompt, parse_belief_sql, render_belief_sql
from .dbkit import DbEntry, DbState, DbTable, load_db, query, summarize
from .evalkit import (
    EvalDialog,
    EvalReport,
    combined,
    corpus_bleu,
    inform_success,
    load_corpus,
    next_action_scores,
    run_e2e_eval,
)
from .llm import CompletionRequest, CompletionResult, LlmBackendConfig, complete, scripted_backend
from .pipeline import DialogSession, Engine, PipelineConfig, TurnRecord, lexicalize, step
from .policy import DelexResponse, PolicyPrompt, SystemAction, build_policy_prompt, parse_action, parse_response
from .schema import (
    Diagnostic,
    TaskSchema,
    TemplateTurn,
    edit_skeleton,
    parse_schema,
    parse_schema_bundle,
    serialize_schema,
    validate_schema,
)

__version__ = "0.1.0"

__all__ = [
    "BeliefState",
    "CompletionRequest",
    "CompletionResult",
    "DbEntry",
    "DbState",
    "DbTable",
    "DelexResponse",
    "Diagnostic",
    "DialogHistory",
    "DialogSession",
    "Engine",
    "EvalDialog",
    "EvalReport",
    "LlmBackendConfig",
    "PipelineConfig",
    "PolicyPrompt",
    "SystemAction",
    "TaskSchema",
    "TemplateTurn",
    "Turn",
    "TurnRecord",
    "build_dst_prompt",
    "build_policy_prompt",
    "combined",
    "complete",
    "corpus_bleu",
    "edit_skeleton",
    "inform_success",
    "lexicalize",
    "load_corpus",
    "load_db",
    "next_action_scores",
    "parse_action",
    "parse_belief_sql",
    "parse_response",
    "parse_schema",
    "parse_schema_bundle",
    "query",
    "render_belief_sql",
    "run_e2e_eval",
    "scripted_backend",
    "serialize_schema",
    "step",
    "summarize",
    "validate_schema",
]
