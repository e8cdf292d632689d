// Thin client over the broker control API.

import type {
  ConsentRequest,
  ExtensionInfo,
  PolicyConfig,
  SessionInfo,
  TargetInfo,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function expectJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { error?: string };
      if (body.error) detail = body.error;
    } catch {
      // keep statusText
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  getTargets(): Promise<TargetInfo[]> {
    return fetch(`${this.base}/api/targets`).then((r) => expectJson<TargetInfo[]>(r));
  }

  getSessions(): Promise<SessionInfo[]> {
    return fetch(`${this.base}/api/sessions`).then((r) => expectJson<SessionInfo[]>(r));
  }

  getExtensions(): Promise<ExtensionInfo[]> {
    return fetch(`${this.base}/api/extensions`).then((r) => expectJson<ExtensionInfo[]>(r));
  }

  getPolicy(): Promise<PolicyConfig> {
    return fetch(`${this.base}/api/policy`).then((r) => expectJson<PolicyConfig>(r));
  }

  putPolicy(policy: PolicyConfig): Promise<PolicyConfig> {
    return fetch(`${this.base}/api/policy`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(policy),
    }).then((r) => expectJson<PolicyConfig>(r));
  }

  postConsent(requestId: string, decision: "allow" | "deny"): Promise<ConsentRequest> {
    return fetch(`${this.base}/api/consent/${encodeURIComponent(requestId)}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ decision }),
    }).then((r) => expectJson<ConsentRequest>(r));
  }

  cancelInfobar(extensionId: string): Promise<{ extensionId: string; detached: number }> {
    return fetch(`${this.base}/api/infobar/${encodeURIComponent(extensionId)}/cancel`, {
      method: "POST",
    }).then((r) => expectJson<{ extensionId: string; detached: number }>(r));
  }

  eventsUrl(): string {
    const base = this.base || (typeof location !== "undefined" ? location.origin : "");
    return base.replace(/^http/, "ws") + "/api/events";
  }
}
