import { describe, expect, it } from "vitest";

import type { MessageResponse } from "../src/api.js";
import { initialState, reduce, replayTranscript, toTurnView } from "../src/state.js";
import { render, renderTranscript } from "../src/view.js";
import transcript from "./fixtures/transcript.json";

const recorded = transcript as MessageResponse[];

describe("transcript replay fidelity", () => {
  it("renders one turn view per recorded API response", () => {
    const views = replayTranscript(recorded);
    expect(views).toHaveLength(recorded.length);
    views.forEach((view, i) => {
      expect(view.beliefSql).toBe(recorded[i].belief_sql);
      expect(view.actionLabels).toEqual(recorded[i].action);
      expect(view.userText).toBe(recorded[i].user_text);
      expect(view.botText).toBe(recorded[i].response);
      expect(view.dbCount).toBe(recorded[i].db_count);
    });
  });

  it("recorded transcript carries the expected dialog content", () => {
    const views = replayTranscript(recorded);
    expect(views[0].beliefSql).toContain("food = tuscan");
    expect(views[0].dbCount).toBe(0);
    expect(views[1].beliefSql).toContain("food = korean");
    expect(views[1].botText).toContain("Little Seoul");
    expect(views[1].actionLabels).toEqual(["inform_name_phone"]);
  });

  it("replaying produces the identical conversation view as a live run", () => {
    // live run: responses folded into state one by one
    let live = initialState(true);
    for (const response of recorded) {
      live = reduce(live, { kind: "message_sent", text: response.user_text });
      live = reduce(live, { kind: "message_ok", response });
    }
    // replay: straight mapping of the recorded transcript
    const replayed = { ...initialState(true), turns: replayTranscript(recorded) };
    expect(live.turns).toEqual(replayed.turns);
    expect(render(live)).toBe(render(replayed));
  });

  it("debug pane visibility only toggles annotations, not the bubbles", () => {
    const views = replayTranscript(recorded);
    const plain = renderTranscript(views, false);
    const debug = renderTranscript(views, true);
    expect(plain).not.toContain("belief-sql");
    expect(debug).toContain("belief-sql");
    expect(debug).toContain("food = tuscan");
    for (const view of views) {
      expect(plain).toContain(view.botText.slice(0, 20));
    }
  });
});

describe("reducer", () => {
  it("tracks the in-flight message and clears it on success", () => {
    let state = initialState();
    state = reduce(state, { kind: "message_sent", text: "hi" });
    expect(state.pending).toBe("hi");
    state = reduce(state, { kind: "message_ok", response: recorded[0] });
    expect(state.pending).toBeNull();
    expect(state.turns).toHaveLength(1);
  });

  it("keeps the pending text for retryable failures only", () => {
    let state = reduce(initialState(), { kind: "message_sent", text: "hi" });
    const failed = reduce(state, { kind: "message_failed", message: "boom", retryable: true });
    expect(failed.pending).toBe("hi");
    expect(failed.canRetry).toBe(true);
    const fatal = reduce(state, { kind: "message_failed", message: "nope", retryable: false });
    expect(fatal.pending).toBeNull();
    expect(fatal.canRetry).toBe(false);
  });

  it("schema switch resets the conversation", () => {
    let state = initialState();
    state = reduce(state, { kind: "schemas_loaded", schemas: [
      { id: "restaurant", domain: "restaurant", slots: [], template_turns: 1 },
      { id: "hotel", domain: "hotel", slots: [], template_turns: 1 },
    ]});
    expect(state.selectedSchema).toBe("restaurant");
    state = reduce(state, { kind: "message_ok", response: recorded[0] });
    state = reduce(state, { kind: "schema_selected", id: "hotel" });
    expect(state.turns).toHaveLength(0);
    expect(state.selectedSchema).toBe("hotel");
    expect(state.schemas).toHaveLength(2);
  });

  it("maps every response field the debug pane needs", () => {
    const view = toTurnView(recorded[1]);
    expect(view).toEqual({
      userText: recorded[1].user_text,
      botText: recorded[1].response,
      beliefSql: recorded[1].belief_sql,
      dbCount: recorded[1].db_count,
      actionLabels: recorded[1].action,
      latencyMs: recorded[1].latency_ms,
    });
  });
});
