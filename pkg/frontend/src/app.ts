// Console wiring: socket frames into the store, store changes into the DOM.

import { ApiClient } from "./api.js";
import { renderAuditStream, type AuditFilter } from "./auditStream.js";
import { ConsentGate } from "./consent.js";
import { renderConsentQueue } from "./consentQueue.js";
import { EventSocket } from "./events.js";
import { renderPolicyPanel } from "./policyPanel.js";
import { ConsoleStore } from "./state.js";
import { renderTargetBoard } from "./targetBoard.js";

export function toast(message: string, kind: "info" | "error" = "info"): void {
  const host = document.getElementById("toasts");
  if (!host) return;
  const node = document.createElement("div");
  node.className = `toast toast-${kind}`;
  node.textContent = message;
  host.appendChild(node);
  setTimeout(() => node.remove(), 4000);
}

export function startConsole(root: Document = document): void {
  const api = new ApiClient("");
  const store = new ConsoleStore();
  const filter: AuditFilter = {};

  const gate = new ConsentGate(
    api,
    (acked) => store.applyFrame({ kind: "consent", request: acked }),
    (requestId, message) => toast(`consent ${requestId}: ${message}`, "error"),
  );

  const sections = {
    connection: root.getElementById("connection")!,
    consents: root.getElementById("consent-queue")!,
    audit: root.getElementById("audit-stream")!,
    targets: root.getElementById("target-board")!,
    policy: root.getElementById("policy-panel")!,
  };

  const filterInput = root.getElementById("audit-filter") as HTMLInputElement | null;
  filterInput?.addEventListener("input", () => {
    filter.extensionId = filterInput.value.trim() || undefined;
    render();
  });

  function render(): void {
    const state = store.current;
    sections.connection.textContent = state.connection;
    sections.connection.className = `connection connection-${state.connection}`;
    for (const consent of state.consents) gate.noteServerState(consent);
    renderConsentQueue(sections.consents, state.consents, gate);
    renderAuditStream(sections.audit, state.auditTail, store.gapsAfter(), filter);
    renderTargetBoard(sections.targets, state.targets, state.infobars, api, (ext, detached) => {
      toast(`detached ${detached} session(s) of ${ext.slice(0, 8)}…`);
      void refreshSnapshots();
    });
    renderPolicyPanel(
      sections.policy,
      state.policy,
      api,
      (updated) => store.setPolicy(updated),
      (message) => toast(`policy: ${message}`, "error"),
    );
  }

  async function refreshSnapshots(): Promise<void> {
    try {
      const [targets, extensions, policy] = await Promise.all([
        api.getTargets(),
        api.getExtensions(),
        api.getPolicy(),
      ]);
      store.setTargets(targets);
      store.setExtensions(extensions);
      store.setPolicy(policy);
    } catch (error) {
      toast(error instanceof Error ? error.message : String(error), "error");
    }
  }

  store.subscribe(render);
  render();
  void refreshSnapshots();

  const socket = new EventSocket(api.eventsUrl(), {
    onFrame: (frame) => {
      store.applyFrame(frame);
      // Attach counts and session lists move with audit activity.
      if (frame.kind === "audit" && frame.record.action.startsWith("attach")) {
        void refreshSnapshots();
      }
    },
    onOpen: () => store.setConnection("open"),
    onClose: () => store.setConnection("closed"),
  });
  socket.start();
}

if (typeof document !== "undefined" && document.getElementById("consent-queue")) {
  startConsole();
}
