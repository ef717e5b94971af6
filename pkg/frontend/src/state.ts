// Chat state and its reducer. UI state derives solely from API
// responses: replaying a recorded transcript reproduces the exact same
// view, which the tests pin down.

import type { MessageResponse, SchemaInfo } from "./api.js";

export interface UiTurnView {
  userText: string;
  botText: string;
  beliefSql: string;
  dbCount: number;
  actionLabels: string[];
  latencyMs: number;
}

export function toTurnView(response: MessageResponse): UiTurnView {
  return {
    userText: response.user_text,
    botText: response.response,
    beliefSql: response.belief_sql,
    dbCount: response.db_count,
    actionLabels: response.action,
    latencyMs: response.latency_ms,
  };
}

/** Pure transcript replay: one UiTurnView per recorded API response. */
export function replayTranscript(responses: MessageResponse[]): UiTurnView[] {
  return responses.map(toTurnView);
}

export interface ChatState {
  schemas: SchemaInfo[];
  selectedSchema: string;
  sessionId: string | null;
  turns: UiTurnView[];
  /** utterance currently awaiting a reply; input stays disabled meanwhile */
  pending: string | null;
  /** banner text when the service failed; retry re-sends `pending` */
  banner: string | null;
  canRetry: boolean;
  debug: boolean;
}

export function initialState(debug = false): ChatState {
  return {
    schemas: [],
    selectedSchema: "",
    sessionId: null,
    turns: [],
    pending: null,
    banner: null,
    canRetry: false,
    debug,
  };
}

export type ChatEvent =
  | { kind: "schemas_loaded"; schemas: SchemaInfo[] }
  | { kind: "schema_selected"; id: string }
  | { kind: "session_created"; sessionId: string }
  | { kind: "message_sent"; text: string }
  | { kind: "message_ok"; response: MessageResponse }
  | { kind: "message_failed"; message: string; retryable: boolean }
  | { kind: "service_unreachable"; message: string }
  | { kind: "banner_dismissed" }
  | { kind: "debug_toggled" };

export function reduce(state: ChatState, event: ChatEvent): ChatState {
  switch (event.kind) {
    case "schemas_loaded":
      return {
        ...state,
        schemas: event.schemas,
        selectedSchema: state.selectedSchema || (event.schemas[0]?.id ?? ""),
      };
    case "schema_selected":
      // switching schema starts over: session and transcript are stale
      return { ...initialState(state.debug), schemas: state.schemas, selectedSchema: event.id };
    case "session_created":
      return { ...state, sessionId: event.sessionId, banner: null, canRetry: false };
    case "message_sent":
      return { ...state, pending: event.text, banner: null, canRetry: false };
    case "message_ok":
      return {
        ...state,
        pending: null,
        banner: null,
        canRetry: false,
        turns: [...state.turns, toTurnView(event.response)],
      };
    case "message_failed":
      return {
        ...state,
        pending: event.retryable ? state.pending : null,
        banner: event.message,
        canRetry: event.retryable,
      };
    case "service_unreachable":
      return { ...state, banner: event.message, canRetry: state.pending !== null };
    case "banner_dismissed":
      return { ...state, banner: null, canRetry: false, pending: null };
    case "debug_toggled":
      return { ...state, debug: !state.debug };
  }
}
