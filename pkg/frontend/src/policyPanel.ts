// Policy summary with a legacy/hardened toggle.

import type { ApiClient } from "./api.js";
import type { PolicyConfig } from "./types.js";

export function renderPolicyPanel(
  container: HTMLElement,
  policy: PolicyConfig | null,
  api: ApiClient,
  onUpdated: (policy: PolicyConfig) => void,
  onError: (message: string) => void,
): void {
  container.replaceChildren();
  const heading = document.createElement("h2");
  heading.textContent = "Policy";
  container.appendChild(heading);

  if (policy === null) {
    const empty = document.createElement("p");
    empty.className = "empty";
    empty.textContent = "Loading policy…";
    container.appendChild(empty);
    return;
  }

  const summary = document.createElement("p");
  summary.className = `policy-mode policy-${policy.mode}`;
  const details: string[] = [];
  if (policy.flags.extensionsOnChromeUrls) details.push("chrome-urls switch on");
  if (policy.flags.silentDebuggerExtensionApi) details.push("infobars silenced");
  if (policy.mode === "hardened") {
    if (policy.hardened.consentRequired) details.push("consent required");
    if (policy.hardened.trustedOriginsOnly) details.push("trusted origins only");
    if (policy.hardened.reattachCooldownMs > 0)
      details.push(`${policy.hardened.reattachCooldownMs} ms re-attach cooldown`);
  }
  summary.textContent = `mode: ${policy.mode}${details.length ? ` — ${details.join(", ")}` : ""}`;
  container.appendChild(summary);

  const toggle = document.createElement("button");
  toggle.className = "policy-toggle";
  toggle.textContent = policy.mode === "legacy" ? "Switch to hardened" : "Switch to legacy";
  toggle.addEventListener("click", () => {
    toggle.disabled = true;
    const next: PolicyConfig = {
      ...policy,
      mode: policy.mode === "legacy" ? "hardened" : "legacy",
    };
    void api
      .putPolicy(next)
      .then(onUpdated)
      .catch((error) => onError(error instanceof Error ? error.message : String(error)))
      .finally(() => {
        toggle.disabled = false;
      });
  });
  container.appendChild(toggle);
}
