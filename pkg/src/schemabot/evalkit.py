"""Corpus evaluation: Inform / Success / BLEU / Combined for end-to-end
dialog generation, and weighted-F1 / mean accuracy for next-action
prediction.

Inform checks that the final offered entity satisfies the goal
constraints; Success additionally requires every requested slot's
placeholder to appear in at least one delexicalized response, so
Success implies Inform. Combined = 0.5 * (Inform + Success) + BLEU.
BLEU is corpus-level BLEU-4 with brevity penalty and no smoothing:
any n-gram order with zero matches sends the corpus score to 0.
"""

from __future__ import annotations

import json
import math
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .belief import parse_belief_sql
from .errors import (
    EmptyCorpus,
    InputSyntaxError,
    LengthMismatch,
    Misalignment,
    OutOfRange,
    SchemabotError,
)
from .pipeline import Engine, TurnRecord, step
from .schema import TaskSchema, default_placeholder
from .textnorm import canonical_ident, canonical_value


# ---------------------------------------------------------------------------
# Corpus format (JSON-lines, one dialog per line)

@dataclass(frozen=True)
class GoalSpec:
    constraints: tuple[tuple[str, str], ...] = ()
    requests: tuple[str, ...] = ()


@dataclass(frozen=True)
class EvalTurn:
    user: str
    gold_belief_sql: str = ""
    gold_action: tuple[str, ...] = ()
    gold_response_delex: str = ""


@dataclass(frozen=True)
class EvalDialog:
    id: str
    goal: tuple[tuple[str, GoalSpec], ...] = ()
    turns: tuple[EvalTurn, ...] = ()

    def goal_map(self) -> dict[str, GoalSpec]:
        return dict(self.goal)


def _goal_from_json(obj, path: str) -> tuple[tuple[str, GoalSpec], ...]:
    if not isinstance(obj, dict):
        raise InputSyntaxError(f"{path}: goal must be an object")
    out = []
    for domain, spec in obj.items():
        if not isinstance(spec, dict):
            raise InputSyntaxError(f"{path}.{domain}: goal entry must be an object")
        constraints = spec.get("constraints", {})
        requests = spec.get("requests", [])
        if not isinstance(constraints, dict) or not isinstance(requests, list):
            raise InputSyntaxError(f"{path}.{domain}: expected constraints object and requests list")
        out.append(
            (
                canonical_ident(domain),
                GoalSpec(
                    constraints=tuple((canonical_ident(k), canonical_value(str(v))) for k, v in constraints.items()),
                    requests=tuple(canonical_ident(r) for r in requests),
                ),
            )
        )
    return tuple(out)


def _actions_from_json(value) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str):
        value = value.split()
    if not isinstance(value, list):
        raise InputSyntaxError("gold_action must be a string or list of labels")
    return tuple(canonical_ident(str(v)) for v in value)


def dialog_from_json(obj, path: str = "dialog") -> EvalDialog:
    if not isinstance(obj, dict):
        raise InputSyntaxError(f"{path}: expected an object")
    if "id" not in obj or not isinstance(obj["id"], str):
        raise InputSyntaxError(f"{path}: missing string key 'id'")
    raw_turns = obj.get("turns")
    if not isinstance(raw_turns, list) or not raw_turns:
        raise InputSyntaxError(f"{path}: missing non-empty list key 'turns'")
    turns = []
    for i, t in enumerate(raw_turns):
        if not isinstance(t, dict) or "user" not in t:
            raise InputSyntaxError(f"{path}.turns[{i}]: expected an object with a 'user' key")
        turns.append(
            EvalTurn(
                user=str(t["user"]),
                gold_belief_sql=str(t.get("gold_belief_sql", "")),
                gold_action=_actions_from_json(t.get("gold_action")),
                gold_response_delex=str(t.get("gold_response_delex", "")),
            )
        )
    return EvalDialog(
        id=obj["id"],
        goal=_goal_from_json(obj.get("goal", {}), f"{path}.goal"),
        turns=tuple(turns),
    )


def load_corpus(text: str) -> list[EvalDialog]:
    """Parse a JSON-lines corpus; blank lines are ignored."""
    dialogs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise InputSyntaxError(e.msg, lineno, e.colno) from None
        dialogs.append(dialog_from_json(obj, path=f"line {lineno}"))
    if not dialogs:
        raise EmptyCorpus("corpus holds no dialogs")
    return dialogs


# ---------------------------------------------------------------------------
# Metric arithmetic

def combined(inform: float, success: float, bleu: float) -> float:
    """Overall score: 0.5 * (inform + success) + bleu."""
    for name, value in (("inform", inform), ("success", success), ("bleu", bleu)):
        if not 0.0 <= value <= 100.0:
            raise OutOfRange(f"{name} must be within [0, 100], got {value}")
    return 0.5 * (inform + success) + bleu


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hypotheses: list[str], references: list[str]) -> float:
    """Corpus-level BLEU-4 on a 0-100 scale.

    N-gram counts are aggregated across all pairs before the geometric
    mean; tokenization is lowercased whitespace splitting. No smoothing:
    a zero match count at any order yields 0.
    """
    if len(hypotheses) != len(references):
        raise LengthMismatch(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise EmptyCorpus("need at least one hypothesis/reference pair")
    matched = [0] * 4
    total = [0] * 4
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h = hyp.lower().split()
        r = ref.lower().split()
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, 5):
            h_counts = _ngram_counts(h, n)
            if not h_counts:
                continue
            r_counts = _ngram_counts(r, n)
            total[n - 1] += sum(h_counts.values())
            matched[n - 1] += sum(min(count, r_counts[gram]) for gram, count in h_counts.items())
    if hyp_len == 0 or any(t == 0 for t in total) or any(m == 0 for m in matched):
        return 0.0
    log_precision = sum(0.25 * math.log(m / t) for m, t in zip(matched, total))
    brevity = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_precision)


def next_action_scores(gold: list, predicted: list) -> tuple[float, float]:
    """Support-weighted F1 and exact-set-match accuracy, both 0-100.

    Each element is a set/list of action labels; accuracy counts exact
    set matches, F1 is averaged per label weighted by gold support.
    """
    if len(gold) != len(predicted):
        raise LengthMismatch(f"{len(gold)} gold vs {len(predicted)} predicted")
    if not gold:
        raise EmptyCorpus("need at least one example")
    gold_sets = [frozenset(canonical_ident(str(x)) for x in g) for g in gold]
    pred_sets = [frozenset(canonical_ident(str(x)) for x in p) for p in predicted]
    exact = sum(1 for g, p in zip(gold_sets, pred_sets) if g == p)
    accuracy = 100.0 * exact / len(gold_sets)

    labels = sorted(set().union(*gold_sets)) if any(gold_sets) else []
    weighted_sum = 0.0
    support_total = 0
    for label in labels:
        tp = sum(1 for g, p in zip(gold_sets, pred_sets) if label in g and label in p)
        fp = sum(1 for g, p in zip(gold_sets, pred_sets) if label not in g and label in p)
        fn = sum(1 for g, p in zip(gold_sets, pred_sets) if label in g and label not in p)
        support = sum(1 for g in gold_sets if label in g)
        f1 = (2 * tp / (2 * tp + fp + fn)) if (2 * tp + fp + fn) else 0.0
        weighted_sum += support * f1
        support_total += support
    weighted_f1 = 100.0 * weighted_sum / support_total if support_total else 0.0
    return weighted_f1, accuracy


# ---------------------------------------------------------------------------
# Dialog-level scoring

def _placeholder_for(slot: str, domain: str, schemas: dict[str, TaskSchema] | None) -> str:
    if schemas and domain in schemas:
        spec = schemas[domain].slot(slot)
        if spec is not None:
            return spec.placeholder
    return default_placeholder(slot)


def inform_success(dialog: EvalDialog, records: list[TurnRecord],
                   schemas: dict[str, TaskSchema] | None = None) -> tuple[bool, bool]:
    """Score one dialog transcript against its goal.

    Inform: for every goal domain, the top entry retrieved at the last
    turn whose belief domain matches satisfies all non-dontcare goal
    constraints. Success: Inform and every requested slot's placeholder
    occurs in at least one delexicalized system response.
    """
    if len(records) != len(dialog.turns):
        raise Misalignment(
            f"dialog {dialog.id}: {len(dialog.turns)} turns vs {len(records)} records"
        )
    inform = True
    for domain, goal in dialog.goal:
        active = [(s, v) for s, v in goal.constraints if v != "dontcare"]
        if not active:
            continue
        last = None
        for rec in records:
            if rec.belief.domain == domain:
                last = rec
        top = last.db.top if last is not None else None
        if top is None or any(top.attributes.get(s) != v for s, v in active):
            inform = False
            break

    success = inform
    if success:
        for domain, goal in dialog.goal:
            for slot in goal.requests:
                needle = f"[{_placeholder_for(slot, domain, schemas)}]"
                if not any(needle in rec.delex.text for rec in records):
                    success = False
                    break
            if not success:
                break
    return inform, success


# ---------------------------------------------------------------------------
# Corpus harnesses

@dataclass
class EvalRunConfig:
    workers: int = 4
    transcript_path: str | None = None
    use_gold_belief: bool = False
    # optional semantic-similarity hook: callable(hyps, refs) -> 0-100 score
    similarity_scorer: object | None = None


@dataclass
class EvalReport:
    inform: float
    success: float
    bleu: float
    combined: float
    dialogs: int
    turns: int
    per_dialog: list[dict] = field(default_factory=list)
    runtime_s: float = 0.0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    similarity: float | None = None

    def to_json(self) -> dict:
        out = {
            "inform": round(self.inform, 2),
            "success": round(self.success, 2),
            "bleu": round(self.bleu, 2),
            "combined": round(self.combined, 2),
            "dialogs": self.dialogs,
            "turns": self.turns,
            "runtime_s": round(self.runtime_s, 3),
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "per_dialog": self.per_dialog,
        }
        if self.similarity is not None:
            out["similarity"] = round(self.similarity, 2)
        return out

    def render_table(self) -> str:
        header = f"{'Inform':>8} {'Success':>8} {'BLEU':>8} {'Combined':>9}"
        row = f"{self.inform:8.2f} {self.success:8.2f} {self.bleu:8.2f} {self.combined:9.2f}"
        return header + "\n" + row


def _run_dialog(engine: Engine, dialog: EvalDialog, use_gold_belief: bool):
    session = engine.new_session(hint=dialog.id)
    records: list[TurnRecord] = []
    error = None
    for turn in dialog.turns:
        forced = None
        if use_gold_belief and turn.gold_belief_sql:
            forced = parse_belief_sql(turn.gold_belief_sql)
        try:
            records.append(step(session, turn.user, forced_belief=forced))
        except SchemabotError as e:
            error = f"{type(e).__name__}: {e}"
            break
    return records, error


def run_e2e_eval(corpus: list[EvalDialog], engine: Engine,
                 config: EvalRunConfig | None = None) -> EvalReport:
    """Replay every dialog through the pipeline and score the corpus.

    Dialog-level errors are recorded in the per-dialog rows and count as
    failures; they never abort the run.
    """
    if not corpus:
        raise EmptyCorpus("corpus holds no dialogs")
    config = config or EvalRunConfig()
    started = time.perf_counter()

    results: dict[str, tuple[list[TurnRecord], str | None]] = {}
    workers = max(1, config.workers)
    if workers == 1:
        for dialog in corpus:
            results[dialog.id] = _run_dialog(engine, dialog, config.use_gold_belief)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                dialog.id: pool.submit(_run_dialog, engine, dialog, config.use_gold_belief)
                for dialog in corpus
            }
            for dialog_id, future in futures.items():
                results[dialog_id] = future.result()

    rows = []
    hyps: list[str] = []
    refs: list[str] = []
    informs = 0
    successes = 0
    turns_total = 0
    prompt_tokens = 0
    completion_tokens = 0
    transcript_lines = []
    for dialog in sorted(corpus, key=lambda d: d.id):
        records, error = results[dialog.id]
        turns_total += len(records)
        for rec in records:
            prompt_tokens += rec.prompt_tokens
            completion_tokens += rec.completion_tokens
        for i, turn in enumerate(dialog.turns):
            hyps.append(records[i].delex.text if i < len(records) else "")
            refs.append(turn.gold_response_delex)
        if error is None and len(records) == len(dialog.turns):
            inform, success = inform_success(dialog, records, engine.schema_by_domain)
        else:
            inform, success = False, False
        informs += inform
        successes += success
        rows.append(
            {
                "id": dialog.id,
                "inform": inform,
                "success": success,
                "turns": len(records),
                "error": error,
            }
        )
        transcript_lines.append(
            json.dumps(
                {
                    "id": dialog.id,
                    "error": error,
                    "turns": [
                        {
                            "user": rec.user_text,
                            "belief_sql": rec.belief_sql,
                            "db_count": rec.db.count,
                            "action": list(rec.action.labels),
                            "delex": rec.delex.text,
                            "final": rec.final,
                        }
                        for rec in records
                    ],
                },
                ensure_ascii=False,
            )
        )

    n = len(corpus)
    inform_pct = 100.0 * informs / n
    success_pct = 100.0 * successes / n
    bleu = corpus_bleu(hyps, refs)
    report = EvalReport(
        inform=inform_pct,
        success=success_pct,
        bleu=bleu,
        combined=combined(inform_pct, success_pct, bleu),
        dialogs=n,
        turns=turns_total,
        per_dialog=rows,
        runtime_s=time.perf_counter() - started,
        prompt_tokens=prompt_tokens,
        completion_tokens=completion_tokens,
    )
    if config.similarity_scorer is not None:
        report.similarity = float(config.similarity_scorer(hyps, refs))
    if config.transcript_path:
        with open(config.transcript_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(transcript_lines) + "\n")
    return report


@dataclass
class ActionReport:
    weighted_f1: float
    accuracy: float
    turns: int
    dialogs: int
    runtime_s: float = 0.0
    per_dialog: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "weighted_f1": round(self.weighted_f1, 2),
            "accuracy": round(self.accuracy, 2),
            "turns": self.turns,
            "dialogs": self.dialogs,
            "runtime_s": round(self.runtime_s, 3),
            "per_dialog": self.per_dialog,
        }


def run_action_eval(corpus: list[EvalDialog], engine: Engine,
                    config: EvalRunConfig | None = None) -> ActionReport:
    """Next-action prediction over every turn that carries a gold action."""
    if not corpus:
        raise EmptyCorpus("corpus holds no dialogs")
    config = config or EvalRunConfig()
    started = time.perf_counter()
    gold: list[tuple[str, ...]] = []
    predicted: list[tuple[str, ...]] = []
    rows = []
    for dialog in sorted(corpus, key=lambda d: d.id):
        records, error = _run_dialog(engine, dialog, config.use_gold_belief)
        scored = 0
        for i, turn in enumerate(dialog.turns):
            if not turn.gold_action or i >= len(records):
                continue
            gold.append(turn.gold_action)
            predicted.append(records[i].action.labels)
            scored += 1
        rows.append({"id": dialog.id, "scored_turns": scored, "error": error})
    if not gold:
        raise EmptyCorpus("no turns carry a gold action")
    weighted_f1, accuracy = next_action_scores(gold, predicted)
    return ActionReport(
        weighted_f1=weighted_f1,
        accuracy=accuracy,
        turns=len(gold),
        dialogs=len(corpus),
        runtime_s=time.perf_counter() - started,
        per_dialog=rows,
    )
