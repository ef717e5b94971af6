// Session flow: create a session on load, post each submitted
// utterance, fold every response into the state. One in-flight message
// at a time; empty submissions never reach the network.

import { ApiClient, ApiError, TransportError } from "./api.js";
import { ChatEvent, ChatState, initialState, reduce } from "./state.js";

export type Listener = (state: ChatState) => void;

export class SessionFlow {
  private state: ChatState;
  private listeners: Listener[] = [];

  constructor(
    private readonly client: ApiClient,
    debug = false,
  ) {
    this.state = initialState(debug);
  }

  getState(): ChatState {
    return this.state;
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
    listener(this.state);
  }

  private dispatch(event: ChatEvent): void {
    this.state = reduce(this.state, event);
    for (const listener of this.listeners) listener(this.state);
  }

  /** Load schemas and open a session for the first (or chosen) one. */
  async start(): Promise<void> {
    try {
      const schemas = await this.client.schemas();
      this.dispatch({ kind: "schemas_loaded", schemas });
      await this.openSession();
    } catch (err) {
      this.dispatch({ kind: "service_unreachable", message: describe(err) });
    }
  }

  async selectSchema(id: string): Promise<void> {
    this.dispatch({ kind: "schema_selected", id });
    try {
      await this.openSession();
    } catch (err) {
      this.dispatch({ kind: "service_unreachable", message: describe(err) });
    }
  }

  private async openSession(): Promise<void> {
    const chosen = this.state.selectedSchema;
    const created = await this.client.createSession(chosen ? [chosen] : undefined);
    this.dispatch({ kind: "session_created", sessionId: created.session_id });
  }

  /** Post one utterance; ignored while another is in flight or when empty. */
  async send(text: string): Promise<void> {
    const trimmed = text.trim();
    if (!trimmed || this.state.pending !== null || this.state.sessionId === null) {
      return;
    }
    this.dispatch({ kind: "message_sent", text: trimmed });
    await this.deliver(trimmed);
  }

  /** Re-send the utterance that hit a transport failure. */
  async retry(): Promise<void> {
    const pending = this.state.pending;
    if (pending === null) return;
    this.dispatch({ kind: "message_sent", text: pending });
    await this.deliver(pending);
  }

  dismissBanner(): void {
    this.dispatch({ kind: "banner_dismissed" });
  }

  toggleDebug(): void {
    this.dispatch({ kind: "debug_toggled" });
  }

  private async deliver(text: string): Promise<void> {
    try {
      const response = await this.client.sendMessage(this.state.sessionId!, text);
      this.dispatch({ kind: "message_ok", response });
    } catch (err) {
      if (err instanceof TransportError) {
        this.dispatch({ kind: "message_failed", message: `service unreachable: ${err.message}`, retryable: true });
      } else if (err instanceof ApiError) {
        // service-reported codes are rendered inline; a busy session keeps
        // the pending text so the user can retry after the turn finishes
        this.dispatch({
          kind: "message_failed",
          message: `${err.code}: ${err.message}`,
          retryable: err.code === "turn_in_progress" || err.code === "backend_error",
        });
      } else {
        this.dispatch({ kind: "message_failed", message: describe(err), retryable: false });
      }
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `${err.code}: ${err.message}`;
  if (err instanceof Error) return err.message;
  return String(err);
}
