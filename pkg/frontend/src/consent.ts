// Consent submission with an exactly-once guard per request id.
//
// Optimistic UI is forbidden here: a row only leaves the pending state when
// the server acknowledges (HTTP ack or a consent frame on the event stream).

import { ApiError } from "./api.js";
import type { ApiClient } from "./api.js";
import type { ConsentRequest } from "./types.js";

export type SubmitResult = "sent" | "duplicate" | "failed";

export class ConsentGate {
  private inFlight = new Set<string>();
  private settled = new Set<string>();

  constructor(
    private readonly api: ApiClient,
    private readonly onAck: (request: ConsentRequest) => void,
    private readonly onError: (requestId: string, message: string) => void,
  ) {}

  /** Mark a request as final from a server frame, locking further submits. */
  noteServerState(request: ConsentRequest): void {
    if (request.state !== "pending") this.settled.add(request.requestId);
  }

  async submit(requestId: string, decision: "allow" | "deny"): Promise<SubmitResult> {
    if (this.settled.has(requestId) || this.inFlight.has(requestId)) {
      return "duplicate";
    }
    this.inFlight.add(requestId);
    try {
      const acked = await this.api.postConsent(requestId, decision);
      this.settled.add(requestId);
      this.onAck(acked);
      return "sent";
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        // Someone else resolved it; the request is final either way.
        this.settled.add(requestId);
        this.onError(requestId, "request was already resolved");
        return "duplicate";
      }
      // The decision did not reach the server; the row stays actionable.
      this.onError(requestId, error instanceof Error ? error.message : String(error));
      return "failed";
    } finally {
      this.inFlight.delete(requestId);
    }
  }
}
