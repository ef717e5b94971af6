// Pure HTML rendering of the chat state. Keeping this a string-level
// function makes the view testable without a browser and guarantees the
// transcript-replay fidelity the tests assert.

import type { ChatState, UiTurnView } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

function renderDebugPane(turn: UiTurnView): string {
  return [
    '<dl class="debug-pane">',
    `<dt>belief</dt><dd class="belief-sql">${escapeHtml(turn.beliefSql)}</dd>`,
    `<dt>db</dt><dd class="db-count">${turn.dbCount} match(es)</dd>`,
    `<dt>action</dt><dd class="action-labels">${escapeHtml(turn.actionLabels.join(" "))}</dd>`,
    `<dt>latency</dt><dd class="latency">${turn.latencyMs.toFixed(0)} ms</dd>`,
    "</dl>",
  ].join("");
}

export function renderTurn(turn: UiTurnView, debug: boolean): string {
  const parts = [
    '<div class="turn">',
    `<div class="bubble user">${escapeHtml(turn.userText)}</div>`,
    `<div class="bubble bot">${escapeHtml(turn.botText)}</div>`,
  ];
  if (debug) parts.push(renderDebugPane(turn));
  parts.push("</div>");
  return parts.join("");
}

export function renderTranscript(turns: UiTurnView[], debug: boolean): string {
  return turns.map((turn) => renderTurn(turn, debug)).join("\n");
}

export function renderBanner(state: ChatState): string {
  if (!state.banner) return "";
  const retry = state.canRetry ? '<button id="retry">retry</button>' : "";
  return `<div class="banner error" role="alert">${escapeHtml(state.banner)} ${retry}` +
    '<button id="dismiss">dismiss</button></div>';
}

export function renderSchemaPicker(state: ChatState): string {
  const options = state.schemas
    .map((schema) => {
      const selected = schema.id === state.selectedSchema ? " selected" : "";
      return `<option value="${escapeHtml(schema.id)}"${selected}>${escapeHtml(schema.id)}</option>`;
    })
    .join("");
  return `<select id="schema-picker">${options}</select>`;
}

export function render(state: ChatState): string {
  const waiting = state.pending !== null;
  return [
    '<header class="topbar">',
    renderSchemaPicker(state),
    `<label class="debug-toggle"><input type="checkbox" id="debug-toggle"${state.debug ? " checked" : ""}/> debug</label>`,
    "</header>",
    renderBanner(state),
    `<main id="transcript">${renderTranscript(state.turns, state.debug)}` +
      (waiting ? '<div class="bubble bot typing">…</div>' : "") +
      "</main>",
    '<footer class="composer">',
    `<input id="composer-input" type="text" placeholder="type a message"${waiting ? " disabled" : ""}/>`,
    `<button id="send"${waiting ? " disabled" : ""}>send</button>`,
    "</footer>",
  ].join("\n");
}
