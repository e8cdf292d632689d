// Wire types of the broker control API.

export interface TargetInfo {
  targetId: string;
  type: string;
  url: string;
  title: string;
  faviconUrl: string;
  attached: number;
  browserContextId: string;
  incognito: boolean;
}

export interface ExtensionInfo {
  id: string;
  name: string;
  version: string;
  permissions: string[];
  hostPermissions: string[];
  origin: string;
  incognitoAllowed: boolean;
  installPath: string | null;
}

export interface SessionInfo {
  extensionId: string;
  targetId: string;
  protocolVersion: string;
  state: string;
  detachReason: string | null;
  openedAt: number;
}

export interface AuditRecord {
  seq: number;
  ts: number;
  extensionId: string;
  action: string;
  targetId: string | null;
  decision: { outcome: "allow" | "deny"; reason: string | null };
  violatedSRs: string[];
  policyMode: string;
}

export type ConsentStateName = "pending" | "approved" | "denied" | "timedOut";

export interface ConsentRequest {
  requestId: string;
  extensionId: string;
  targetId: string;
  createdAt: number;
  state: ConsentStateName;
}

export interface InfobarState {
  extensionId: string;
  visible: boolean;
  attachedTargets: string[];
  lastCancelAt: number | null;
}

export interface PolicyConfig {
  mode: "legacy" | "hardened";
  flags: { extensionsOnChromeUrls: boolean; silentDebuggerExtensionApi: boolean };
  allowlist: { scriptingAllowlist: string[]; browserTargetAllowlist: string[] };
  fixes: { fixIncognitoTargets: boolean; fixInterstitialAttach: boolean };
  hardened: {
    domainGrants: Record<string, string[]>;
    reattachCooldownMs: number;
    consentRequired: boolean;
    trustedOriginsOnly: boolean;
  };
}

export type EventFrame =
  | { kind: "audit"; record: AuditRecord }
  | { kind: "consent"; request: ConsentRequest }
  | { kind: "infobar"; infobar: InfobarState };
