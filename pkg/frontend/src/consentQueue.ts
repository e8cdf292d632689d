// Consent queue: pending attach requests with Allow/Deny actions.

import type { ConsentGate } from "./consent.js";
import type { ConsentRequest } from "./types.js";

export function renderConsentQueue(
  container: HTMLElement,
  consents: ConsentRequest[],
  gate: ConsentGate,
): void {
  container.replaceChildren();
  const heading = document.createElement("h2");
  heading.textContent = "Attach requests";
  container.appendChild(heading);

  if (consents.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty";
    empty.textContent = "No attach requests yet.";
    container.appendChild(empty);
    return;
  }

  const list = document.createElement("ul");
  list.className = "consent-list";
  for (const request of consents) {
    const row = document.createElement("li");
    row.className = `consent consent-${request.state}`;
    row.dataset.requestId = request.requestId;

    const label = document.createElement("span");
    label.textContent = `${request.extensionId.slice(0, 8)}… wants to attach to ${request.targetId}`;
    row.appendChild(label);

    const status = document.createElement("span");
    status.className = "consent-state";
    status.textContent = request.state;
    row.appendChild(status);

    if (request.state === "pending") {
      for (const decision of ["allow", "deny"] as const) {
        const button = document.createElement("button");
        button.textContent = decision === "allow" ? "Allow" : "Deny";
        button.className = `consent-${decision}`;
        button.addEventListener("click", () => {
          button.disabled = true;
          void gate.submit(request.requestId, decision);
        });
        row.appendChild(button);
      }
    }
    list.appendChild(row);
  }
  container.appendChild(list);
}
