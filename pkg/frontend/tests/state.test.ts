import { describe, expect, it } from "vitest";

import { AUDIT_RING_LIMIT, ConsoleStore } from "../src/state.js";
import type { AuditRecord, ConsentRequest } from "../src/types.js";

function record(seq: number, overrides: Partial<AuditRecord> = {}): AuditRecord {
  return {
    seq,
    ts: 1000 + seq,
    extensionId: "a".repeat(32),
    action: "getTargets",
    targetId: null,
    decision: { outcome: "allow", reason: null },
    violatedSRs: [],
    policyMode: "legacy",
    ...overrides,
  };
}

function consent(requestId: string, state: ConsentRequest["state"]): ConsentRequest {
  return { requestId, extensionId: "b".repeat(32), targetId: "t1", createdAt: 0, state };
}

describe("audit tail", () => {
  it("keeps rows in strictly increasing seq order under arrival jitter", () => {
    const store = new ConsoleStore();
    for (const seq of [5, 2, 9, 1, 7, 3, 8, 4, 6]) {
      store.applyFrame({ kind: "audit", record: record(seq) });
    }
    expect(store.current.auditTail.map((r) => r.seq)).toEqual([1, 2, 3, 4, 5, 6, 7, 8, 9]);
  });

  it("drops duplicate seqs", () => {
    const store = new ConsoleStore();
    store.applyFrame({ kind: "audit", record: record(4) });
    store.applyFrame({ kind: "audit", record: record(4) });
    expect(store.current.auditTail).toHaveLength(1);
  });

  it("caps the ring buffer and drops the oldest rows", () => {
    const store = new ConsoleStore();
    for (let seq = 1; seq <= AUDIT_RING_LIMIT + 25; seq++) {
      store.applyFrame({ kind: "audit", record: record(seq) });
    }
    const tail = store.current.auditTail;
    expect(tail).toHaveLength(AUDIT_RING_LIMIT);
    expect(tail[0].seq).toBe(26);
    expect(tail[tail.length - 1].seq).toBe(AUDIT_RING_LIMIT + 25);
  });

  it("renders a 100-event burst gaplessly in seq order despite jitter", () => {
    const store = new ConsoleStore();
    const seqs = Array.from({ length: 100 }, (_, i) => i + 1);
    // Deterministic shuffle: model frames landing out of order.
    for (let i = seqs.length - 1; i > 0; i--) {
      const j = (i * 7919) % (i + 1);
      [seqs[i], seqs[j]] = [seqs[j], seqs[i]];
    }
    for (const seq of seqs) {
      store.applyFrame({ kind: "audit", record: record(seq) });
    }
    expect(store.current.auditTail.map((r) => r.seq)).toEqual(
      Array.from({ length: 100 }, (_, i) => i + 1),
    );
    expect(store.gapsAfter()).toEqual([]);
  });

  it("reports a gap after a reconnect-style jump and clears it when filled", () => {
    const store = new ConsoleStore();
    store.applyFrame({ kind: "audit", record: record(1) });
    store.applyFrame({ kind: "audit", record: record(2) });
    store.applyFrame({ kind: "audit", record: record(10) });
    expect(store.gapsAfter()).toEqual([2]);
    for (const seq of [3, 4, 5, 6, 7, 8, 9]) {
      store.applyFrame({ kind: "audit", record: record(seq) });
    }
    expect(store.gapsAfter()).toEqual([]);
  });
});

describe("consents and infobars", () => {
  it("upserts consent rows by request id", () => {
    const store = new ConsoleStore();
    store.applyFrame({ kind: "consent", request: consent("r1", "pending") });
    expect(store.pendingConsents()).toHaveLength(1);
    store.applyFrame({ kind: "consent", request: consent("r1", "approved") });
    expect(store.pendingConsents()).toHaveLength(0);
    expect(store.current.consents).toHaveLength(1);
    expect(store.current.consents[0].state).toBe("approved");
  });

  it("tracks per-extension infobar state", () => {
    const store = new ConsoleStore();
    store.applyFrame({
      kind: "infobar",
      infobar: { extensionId: "x".repeat(32), visible: true, attachedTargets: ["t1"], lastCancelAt: null },
    });
    store.applyFrame({
      kind: "infobar",
      infobar: { extensionId: "x".repeat(32), visible: false, attachedTargets: [], lastCancelAt: 99 },
    });
    expect(store.current.infobars["x".repeat(32)].visible).toBe(false);
  });

  it("notifies subscribers on every applied frame", () => {
    const store = new ConsoleStore();
    let calls = 0;
    const unsubscribe = store.subscribe(() => {
      calls += 1;
    });
    store.applyFrame({ kind: "audit", record: record(1) });
    store.applyFrame({ kind: "consent", request: consent("r1", "pending") });
    unsubscribe();
    store.applyFrame({ kind: "audit", record: record(2) });
    expect(calls).toBe(2);
  });
});
