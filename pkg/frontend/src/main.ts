// Browser entry point: mounts the chat into #app, wires events, and
// re-renders on every state change. Configuration is one base URL
// (?api=...) plus the ?debug=1 flag.

import { ApiClient } from "./api.js";
import { SessionFlow } from "./flow.js";
import { render } from "./view.js";

function boot(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");
  const params = new URLSearchParams(window.location.search);
  const base = params.get("api") ?? "";
  const debug = params.get("debug") === "1";
  const flow = new SessionFlow(new ApiClient(base), debug);

  flow.subscribe((state) => {
    root.innerHTML = render(state);
    const input = document.getElementById("composer-input") as HTMLInputElement | null;

    document.getElementById("send")?.addEventListener("click", () => {
      if (!input) return;
      const text = input.value;
      input.value = "";
      void flow.send(text);
    });
    input?.addEventListener("keydown", (event) => {
      if (event.key === "Enter") {
        const text = input.value;
        input.value = "";
        void flow.send(text);
      }
    });
    input?.focus();

    document.getElementById("retry")?.addEventListener("click", () => void flow.retry());
    document.getElementById("dismiss")?.addEventListener("click", () => flow.dismissBanner());
    document.getElementById("debug-toggle")?.addEventListener("change", () => flow.toggleDebug());
    (document.getElementById("schema-picker") as HTMLSelectElement | null)?.addEventListener(
      "change",
      (event) => void flow.selectSchema((event.target as HTMLSelectElement).value),
    );
    const transcript = document.getElementById("transcript");
    if (transcript) transcript.scrollTop = transcript.scrollHeight;
  });

  void flow.start();
}

boot();
