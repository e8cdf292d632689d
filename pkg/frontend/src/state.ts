// Console state: audit ring buffer, consent queue, targets, infobars, policy.
//
// Audit rows are kept strictly seq-ordered no matter the arrival order, and
// missing sequence numbers stay detectable so the stream can render a
// "missed records" marker after reconnects.

import type {
  AuditRecord,
  ConsentRequest,
  EventFrame,
  ExtensionInfo,
  InfobarState,
  PolicyConfig,
  TargetInfo,
} from "./types.js";

export const AUDIT_RING_LIMIT = 1000;

export type ConnectionState = "connecting" | "open" | "closed";

export interface ConsoleState {
  connection: ConnectionState;
  auditTail: AuditRecord[];
  consents: ConsentRequest[];
  targets: TargetInfo[];
  extensions: ExtensionInfo[];
  infobars: Record<string, InfobarState>;
  policy: PolicyConfig | null;
}

type Listener = (state: ConsoleState) => void;

export class ConsoleStore {
  private state: ConsoleState = {
    connection: "connecting",
    auditTail: [],
    consents: [],
    targets: [],
    extensions: [],
    infobars: {},
    policy: null,
  };
  private listeners: Listener[] = [];
  private seen = new Set<number>();

  get current(): ConsoleState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of [...this.listeners]) listener(this.state);
  }

  setConnection(connection: ConnectionState): void {
    this.state = { ...this.state, connection };
    this.emit();
  }

  setTargets(targets: TargetInfo[]): void {
    this.state = { ...this.state, targets };
    this.emit();
  }

  setExtensions(extensions: ExtensionInfo[]): void {
    this.state = { ...this.state, extensions };
    this.emit();
  }

  setPolicy(policy: PolicyConfig): void {
    this.state = { ...this.state, policy };
    this.emit();
  }

  applyFrame(frame: EventFrame): void {
    if (frame.kind === "audit") this.insertAudit(frame.record);
    else if (frame.kind === "consent") this.upsertConsent(frame.request);
    else this.setInfobar(frame.infobar);
  }

  private insertAudit(record: AuditRecord): void {
    if (this.seen.has(record.seq)) return;
    this.seen.add(record.seq);
    const tail = [...this.state.auditTail];
    // Insert keeping strict seq order; arrival jitter must not reorder rows.
    let lo = 0;
    let hi = tail.length;
    while (lo < hi) {
      const mid = (lo + hi) >> 1;
      if (tail[mid].seq < record.seq) lo = mid + 1;
      else hi = mid;
    }
    tail.splice(lo, 0, record);
    while (tail.length > AUDIT_RING_LIMIT) {
      const dropped = tail.shift();
      if (dropped) this.seen.delete(dropped.seq);
    }
    this.state = { ...this.state, auditTail: tail };
    this.emit();
  }

  private upsertConsent(request: ConsentRequest): void {
    const consents = [...this.state.consents];
    const index = consents.findIndex((c) => c.requestId === request.requestId);
    if (index >= 0) consents[index] = request;
    else consents.push(request);
    this.state = { ...this.state, consents };
    this.emit();
  }

  private setInfobar(infobar: InfobarState): void {
    this.state = {
      ...this.state,
      infobars: { ...this.state.infobars, [infobar.extensionId]: infobar },
    };
    this.emit();
  }

  pendingConsents(): ConsentRequest[] {
    return this.state.consents.filter((c) => c.state === "pending");
  }

  /** Seqs after which at least one record is missing from the tail. */
  gapsAfter(): number[] {
    const gaps: number[] = [];
    const tail = this.state.auditTail;
    for (let i = 0; i + 1 < tail.length; i++) {
      if (tail[i + 1].seq > tail[i].seq + 1) gaps.push(tail[i].seq);
    }
    return gaps;
  }
}
