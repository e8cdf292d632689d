"""Session broker: the Debugger-API surface over the simulated browser.

All state mutations (sessions, infobars, audit, consent) are serialized
through one lock, so audit sequence numbers are gapless even with concurrent
clients. The audit log is append-only JSONL when a sink path is configured.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional

from . import policy as policy_mod
from .browser import (
    BindingChannel,
    CommandContext,
    Route,
    eval_expression,
    handle_command,
)
from .clock import LogicalClock
from .codec import CdpMessage
from .identity import ExtensionRecord
from .policy import (
    ByTargetId,
    Decision,
    PolicyConfig,
    TargetRef,
    annotate_install,
    may_attach,
    may_run_script,
    may_send_command,
)
from .targets import BROWSER_TARGET_ID, PrivilegeKind, TargetInfo, snapshot_targets
from .world import BrowserWorld, PageNode

PROTOCOL_VERSION = "1.3"
DEFAULT_CONSENT_TIMEOUT_MS = 30_000


class BrokerDenied(Exception):
    """A request refused by policy or broker bookkeeping."""

    def __init__(self, reason: str, message: Optional[str] = None) -> None:
        super().__init__(message or reason)
        self.reason = reason
        self.message = message or reason


class SessionState(Enum):
    ACTIVE = "active"
    DETACHED = "detached"


@dataclass
class DebugSession:
    extension: ExtensionRecord
    target_id: str
    protocol_version: str
    opened_at: int
    state: SessionState = SessionState.ACTIVE
    detach_reason: Optional[str] = None
    events: list = field(default_factory=list)

    @property
    def key(self) -> tuple:
        return (self.extension.id, self.target_id)

    @property
    def is_browser_target(self) -> bool:
        return self.target_id == BROWSER_TARGET_ID

    def to_json(self) -> dict:
        return {
            "extensionId": self.extension.id,
            "targetId": self.target_id,
            "protocolVersion": self.protocol_version,
            "state": self.state.value,
            "detachReason": self.detach_reason,
            "openedAt": self.opened_at,
        }


class EventStream:
    """FIFO view over one session's event list."""

    def __init__(self, session: DebugSession) -> None:
        self._session = session
        self._cursor = 0

    def drain(self) -> list:
        events = self._session.events[self._cursor :]
        self._cursor = len(self._session.events)
        return events


@dataclass
class InfobarEntry:
    visible: bool = False
    attached_targets: set = field(default_factory=set)
    last_cancel_at: Optional[int] = None

    def to_json(self) -> dict:
        return {
            "visible": self.visible,
            "attachedTargets": sorted(self.attached_targets),
            "lastCancelAt": self.last_cancel_at,
        }


@dataclass(frozen=True)
class AuditRecord:
    seq: int
    ts: int
    extension_id: str
    action: str
    target_id: Optional[str]
    allowed: bool
    reason: Optional[str]
    violated_srs: frozenset
    policy_mode: str

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "ts": self.ts,
            "extensionId": self.extension_id,
            "action": self.action,
            "targetId": self.target_id,
            "decision": {
                "outcome": "allow" if self.allowed else "deny",
                "reason": self.reason,
            },
            "violatedSRs": sorted(self.violated_srs),
            "policyMode": self.policy_mode,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AuditRecord":
        return cls(
            seq=obj["seq"],
            ts=obj["ts"],
            extension_id=obj["extensionId"],
            action=obj["action"],
            target_id=obj["targetId"],
            allowed=obj["decision"]["outcome"] == "allow",
            reason=obj["decision"]["reason"],
            violated_srs=frozenset(obj["violatedSRs"]),
            policy_mode=obj["policyMode"],
        )


class ConsentState(Enum):
    PENDING = "pending"
    APPROVED = "approved"
    DENIED = "denied"
    TIMED_OUT = "timedOut"


@dataclass
class ConsentRequest:
    request_id: str
    extension_id: str
    target_id: str
    created_at: int
    state: ConsentState = ConsentState.PENDING
    _resolved: threading.Event = field(default_factory=threading.Event)

    def to_json(self) -> dict:
        return {
            "requestId": self.request_id,
            "extensionId": self.extension_id,
            "targetId": self.target_id,
            "createdAt": self.created_at,
            "state": self.state.value,
        }


class ConsentMode(Enum):
    MANUAL = "manual"
    AUTO_ALLOW = "auto-allow"
    AUTO_DENY = "auto-deny"


class DebuggerBroker:
    """Owns the world, the active policy, sessions, infobars, audit, consent."""

    def __init__(
        self,
        world: BrowserWorld,
        policy: PolicyConfig,
        clock=None,
        consent_mode: ConsentMode = ConsentMode.AUTO_ALLOW,
        audit_path: Optional[str] = None,
        consent_timeout_ms: int = DEFAULT_CONSENT_TIMEOUT_MS,
    ) -> None:
        self.world = world
        self.policy = policy
        self.clock = clock or LogicalClock()
        self.consent_mode = consent_mode
        self.consent_timeout_ms = consent_timeout_ms
        self._lock = threading.RLock()
        self._audit_seq = 0
        self._audit_path = audit_path
        self.audit_records: list = []
        self.sessions: dict = {}
        self.infobars: dict = {}
        self.consent_requests: dict = {}
        self._command_id = 0
        self._listeners: list = []

    # ------------------------------------------------------------------ plumbing

    def add_listener(self, listener: Callable[[str, dict], None]) -> None:
        """Subscribe to control events: kinds audit, consent, infobar."""
        with self._lock:
            self._listeners.append(listener)

    def remove_listener(self, listener) -> None:
        with self._lock:
            if listener in self._listeners:
                self._listeners.remove(listener)

    def _publish(self, kind: str, payload: dict) -> None:
        for listener in list(self._listeners):
            listener(kind, payload)

    def _audit(
        self,
        extension_id: str,
        action: str,
        target_id: Optional[str],
        decision: Decision,
        extra_srs: frozenset = frozenset(),
    ) -> AuditRecord:
        with self._lock:
            self._audit_seq += 1
            record = AuditRecord(
                seq=self._audit_seq,
                ts=self.clock.now_ms(),
                extension_id=extension_id,
                action=action,
                target_id=target_id,
                allowed=decision.allowed,
                reason=decision.reason,
                violated_srs=(decision.violated_srs | extra_srs) if decision.allowed else frozenset(),
                policy_mode=self.policy.mode.value,
            )
            self.audit_records.append(record)
            if self._audit_path:
                with open(self._audit_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record.to_json(), separators=(",", ":")) + "\n")
                    fh.flush()
        self._publish("audit", record.to_json())
        return record

    def _infobar(self, extension_id: str) -> InfobarEntry:
        return self.infobars.setdefault(extension_id, InfobarEntry())

    def _sync_infobar(self, extension_id: str) -> None:
        entry = self._infobar(extension_id)
        silent = self.policy.flags.silent_debugger_extension_api
        visible = bool(entry.attached_targets) and not silent
        if visible != entry.visible:
            entry.visible = visible
        self._publish("infobar", {"extensionId": extension_id, **entry.to_json()})

    def _sync_all_infobars(self) -> None:
        for extension_id in list(self.infobars):
            self._sync_infobar(extension_id)

    def infobar_state(self) -> dict:
        with self._lock:
            return {ext_id: entry.to_json() for ext_id, entry in self.infobars.items()}

    def set_policy(self, new_policy: PolicyConfig) -> None:
        """Atomically replace the active policy; infobar visibility follows."""
        with self._lock:
            self.policy = new_policy
            self._sync_all_infobars()

    def _set_flag(self, flag_attr: str, value: bool) -> None:
        flags = replace(self.policy.flags, **{flag_attr: value})
        self.set_policy(self.policy.with_flags(flags))

    def record_install(self, ext: ExtensionRecord) -> AuditRecord:
        """Audit the install-time warning annotation for an extension."""
        return self._audit(ext.id, "install", None, annotate_install(ext))

    # ------------------------------------------------------------------ debugger API

    def get_targets(self, ext: ExtensionRecord) -> list[TargetInfo]:
        with self._lock:
            if not ext.has_debugger_permission:
                decision = Decision.deny(policy_mod.MISSING_PERMISSION, "debugger permission not declared")
                self._audit(ext.id, "getTargets", None, decision)
                raise BrokerDenied(decision.reason, decision.message)

            snapshot = snapshot_targets(self.world)
            if self.policy.is_hardened:
                visible = [
                    info
                    for info in snapshot
                    if self._attachable(ext, info)
                ]
                self._audit(ext.id, "getTargets", None, Decision.allow())
                return visible

            srs = {policy_mod.SR01_RUNTIME, policy_mod.SR03}
            if self.policy.fixes.fix_incognito_targets and not ext.incognito_allowed:
                snapshot = [info for info in snapshot if not info.incognito]
            else:
                srs.add(policy_mod.SR02)
            self._audit(ext.id, "getTargets", None, Decision.allow(srs=frozenset(srs)))
            return snapshot

    def _attachable(self, ext: ExtensionRecord, info: TargetInfo) -> bool:
        decision = may_attach(ext, ByTargetId(info.target_id), self.world, self.policy)
        return decision.allowed

    def attach(self, ext: ExtensionRecord, ref: TargetRef, version: str = PROTOCOL_VERSION) -> tuple:
        consent_request: Optional[ConsentRequest] = None
        with self._lock:
            view = self.world.resolve_ref(ref)
            target_id = view.target_id if view else None

            if version != PROTOCOL_VERSION:
                decision = Decision.deny(policy_mod.BAD_VERSION, f"unsupported protocol version {version!r}")
                self._audit(ext.id, "attach", target_id, decision)
                raise BrokerDenied(decision.reason, decision.message)

            decision = may_attach(ext, ref, self.world, self.policy)
            if not decision.allowed:
                self._audit(ext.id, "attach", target_id, decision)
                raise BrokerDenied(decision.reason, decision.message)

            if self.policy.is_hardened and self.policy.hardened.reattach_cooldown_ms > 0:
                entry = self._infobar(ext.id)
                if entry.last_cancel_at is not None:
                    elapsed = self.clock.now_ms() - entry.last_cancel_at
                    if elapsed < self.policy.hardened.reattach_cooldown_ms:
                        denied = Decision.deny(
                            policy_mod.REATTACH_COOLDOWN,
                            f"re-attach blocked for another "
                            f"{self.policy.hardened.reattach_cooldown_ms - elapsed} ms",
                        )
                        self._audit(ext.id, "attach", target_id, denied)
                        raise BrokerDenied(denied.reason, denied.message)

            key = (ext.id, target_id)
            existing = self.sessions.get(key)
            if existing is not None and existing.state is SessionState.ACTIVE:
                denied = Decision.deny(policy_mod.ALREADY_ATTACHED, "another debugger is already attached")
                self._audit(ext.id, "attach", target_id, denied)
                raise BrokerDenied(denied.reason, denied.message)

            if decision.pending_consent:
                consent_request = ConsentRequest(
                    request_id=uuid.uuid4().hex[:12],
                    extension_id=ext.id,
                    target_id=target_id,
                    created_at=self.clock.now_ms(),
                )
                self.consent_requests[consent_request.request_id] = consent_request
                self._publish("consent", consent_request.to_json())
                if self.consent_mode is ConsentMode.AUTO_ALLOW:
                    self._resolve_consent_locked(consent_request, ConsentState.APPROVED)
                elif self.consent_mode is ConsentMode.AUTO_DENY:
                    self._resolve_consent_locked(consent_request, ConsentState.DENIED)

        if consent_request is not None:
            granted = consent_request._resolved.wait(self.consent_timeout_ms / 1000)
            with self._lock:
                if not granted and consent_request.state is ConsentState.PENDING:
                    consent_request.state = ConsentState.TIMED_OUT
                    self._publish("consent", consent_request.to_json())
                if consent_request.state is not ConsentState.APPROVED:
                    denied = Decision.deny(
                        policy_mod.CONSENT_DENIED,
                        "attachment was refused"
                        if consent_request.state is ConsentState.DENIED
                        else "consent timed out",
                    )
                    self._audit(ext.id, "attach", target_id, denied)
                    raise BrokerDenied(denied.reason, denied.message)

        with self._lock:
            key = (ext.id, target_id)
            existing = self.sessions.get(key)
            if existing is not None and existing.state is SessionState.ACTIVE:
                denied = Decision.deny(policy_mod.ALREADY_ATTACHED, "another debugger is already attached")
                self._audit(ext.id, "attach", target_id, denied)
                raise BrokerDenied(denied.reason, denied.message)
            session = DebugSession(
                extension=ext,
                target_id=target_id,
                protocol_version=version,
                opened_at=self.clock.now_ms(),
            )
            self.sessions[key] = session
            self.world.attach_counts[target_id] = self.world.attach_counts.get(target_id, 0) + 1
            entry = self._infobar(ext.id)
            entry.attached_targets.add(target_id)
            self._sync_infobar(ext.id)

            extra = frozenset()
            if self.policy.flags.silent_debugger_extension_api:
                extra = frozenset({policy_mod.SR01_RUNTIME})
            self._audit(ext.id, "attach", target_id, decision, extra_srs=extra)
            return key

    def send_command(
        self,
        session_key: tuple,
        method: str,
        params: Optional[dict] = None,
        session_id: Optional[str] = None,
    ) -> dict:
        with self._lock:
            session = self.sessions.get(session_key)
            if session is None or session.state is not SessionState.ACTIVE:
                decision = Decision.deny(policy_mod.SESSION_CLOSED, "session is not active")
                self._audit(session_key[0], f"sendCommand:{method}", session_key[1], decision)
                raise BrokerDenied(decision.reason, decision.message)

            self._command_id += 1
            msg = CdpMessage.command(self._command_id, method, params or {}, session_id=session_id)
            decision = may_send_command(session, msg, self.policy)
            if not decision.allowed:
                self._audit(session.extension.id, f"sendCommand:{method}", session.target_id, decision)
                raise BrokerDenied(decision.reason, decision.message)

            route = self._route_for(session)
            ctx = CommandContext(
                emit_event=session.events.append,
                on_navigate=self._handle_navigation,
                set_flag=self._set_flag,
                install_binding=self._install_binding,
            )
            self._audit(session.extension.id, f"sendCommand:{method}", session.target_id, decision)
            result = handle_command(self.world, route, msg, ctx)

            if self.policy.is_hardened and method == "Network.getAllCookies":
                result = self._filter_cookies(session, result)
            return result

    def _route_for(self, session: DebugSession) -> Route:
        if session.is_browser_target:
            return Route.browser()
        node = self.world.find_node(session.target_id)
        if node is None:
            raise BrokerDenied(policy_mod.UNKNOWN_TARGET, f"target {session.target_id} is gone")
        return Route.for_node(node)

    def _filter_cookies(self, session: DebugSession, result: dict) -> dict:
        node = self.world.find_node(session.target_id)
        if node is None or session.is_browser_target:
            return {"cookies": []}
        host = node.url.partition("://")[2].split("/", 1)[0]
        cookies = [c for c in result.get("cookies", []) if _cookie_matches(c, host)]
        return {"cookies": cookies}

    def _handle_navigation(self, target_id: str) -> None:
        """Close sessions whose target navigated somewhere they may not attach."""
        for session in list(self.sessions.values()):
            if session.target_id != target_id or session.state is not SessionState.ACTIVE:
                continue
            decision = may_attach(
                session.extension, ByTargetId(target_id), self.world, self.policy
            )
            if not decision.allowed and not decision.pending_consent:
                self._detach_session(session, reason="navigated-to-restricted")

    def _install_binding(self, tab: PageNode, name: str) -> None:
        ctx = CommandContext(
            on_navigate=self._handle_navigation,
            set_flag=self._set_flag,
            install_binding=self._install_binding,
        )
        tab.bindings[name] = BindingChannel(
            world=self.world,
            tab=tab,
            name=name,
            ctx=ctx,
            audit_escalated=self._audit_escalated,
        )

    def _audit_escalated(self, ext, msg: CdpMessage, node) -> None:
        extension_id = ext.id if ext is not None else "unknown"
        srs = {policy_mod.SR03}
        if node is None:
            # Browser-scoped escalated command: crosses every context.
            srs.add(policy_mod.SR02)
        else:
            kind = node.privilege.kind
            if kind in (PrivilegeKind.WEBUI, PrivilegeKind.INTERSTITIAL):
                srs.add(policy_mod.SR04)
            if getattr(node, "incognito", False):
                srs.add(policy_mod.SR02)
        target_id = node.target_id if node is not None else BROWSER_TARGET_ID
        self._audit(
            extension_id,
            f"bindingCommand:{msg.method}",
            target_id,
            Decision.allow(srs=frozenset(srs)),
        )

    def detach(self, session_key: tuple) -> None:
        with self._lock:
            session = self.sessions.get(session_key)
            if session is None or session.state is not SessionState.ACTIVE:
                decision = Decision.deny(policy_mod.SESSION_CLOSED, "session is not active")
                self._audit(session_key[0], "detach", session_key[1], decision)
                raise BrokerDenied(decision.reason, decision.message)
            self._detach_session(session, reason="requested")
            self._audit(session.extension.id, "detach", session.target_id, Decision.allow())

    def _detach_session(self, session: DebugSession, reason: str) -> None:
        session.state = SessionState.DETACHED
        session.detach_reason = reason
        count = self.world.attach_counts.get(session.target_id, 0)
        self.world.attach_counts[session.target_id] = max(0, count - 1)
        entry = self._infobar(session.extension.id)
        entry.attached_targets.discard(session.target_id)
        self._sync_infobar(session.extension.id)

    def cancel_infobar(self, extension_id: str) -> int:
        """Force-detach every session of one extension, as the user's cancel does."""
        with self._lock:
            detached = 0
            for session in list(self.sessions.values()):
                if session.extension.id == extension_id and session.state is SessionState.ACTIVE:
                    self._detach_session(session, reason="user-canceled")
                    detached += 1
            entry = self._infobar(extension_id)
            entry.last_cancel_at = self.clock.now_ms()
            self._sync_infobar(extension_id)
            self._audit(extension_id, "cancelInfobar", None, Decision.allow())
            return detached

    def subscribe_events(self, session_key: tuple) -> EventStream:
        with self._lock:
            session = self.sessions.get(session_key)
            if session is None:
                raise BrokerDenied(policy_mod.SESSION_CLOSED, "no such session")
            return EventStream(session)

    # ------------------------------------------------------------------ scripting API

    def run_script(self, ext: ExtensionRecord, url: str, expression: str) -> str:
        """Evaluate an expression on the tab at ``url`` via the scripting path."""
        with self._lock:
            decision = may_run_script(ext, url, self.policy)
            tab = self.world.find_tab_by_url(url)
            target_id = tab.target_id if tab else None
            self._audit(ext.id, "runScript", target_id, decision)
            if not decision.allowed:
                raise BrokerDenied(decision.reason, decision.message)
            if tab is None:
                raise BrokerDenied(policy_mod.UNKNOWN_TARGET, f"no tab at {url}")
            ctx = CommandContext(
                on_navigate=self._handle_navigation,
                set_flag=self._set_flag,
                install_binding=self._install_binding,
            )
            return eval_expression(self.world, tab, expression, ctx)

    # ------------------------------------------------------------------ binding channel

    def binding_send(
        self,
        ext: ExtensionRecord,
        proxy_target_id: str,
        message: CdpMessage,
        binding_name: str = "cdp",
    ) -> CdpMessage:
        """Drive an installed page binding; requires a live session on the proxy tab."""
        with self._lock:
            tab = self.world.find_tab(proxy_target_id)
            if tab is None or binding_name not in tab.bindings:
                decision = Decision.deny(
                    policy_mod.UNKNOWN_TARGET, f"no binding {binding_name!r} on {proxy_target_id}"
                )
                self._audit(ext.id, "bindingSend", proxy_target_id, decision)
                raise BrokerDenied(decision.reason, decision.message)
            session = self.sessions.get((ext.id, proxy_target_id))
            if session is None or session.state is not SessionState.ACTIVE:
                decision = Decision.deny(
                    policy_mod.SESSION_CLOSED,
                    "driving a page binding requires an active session on the proxy tab",
                )
                self._audit(ext.id, "bindingSend", proxy_target_id, decision)
                raise BrokerDenied(decision.reason, decision.message)
            return tab.bindings[binding_name].send(message, on_behalf_of=ext)

    # ------------------------------------------------------------------ consent

    def pending_consents(self) -> list:
        with self._lock:
            return [r.to_json() for r in self.consent_requests.values() if r.state is ConsentState.PENDING]

    def resolve_consent(self, request_id: str, allow: bool) -> ConsentRequest:
        with self._lock:
            request = self.consent_requests.get(request_id)
            if request is None:
                raise KeyError(request_id)
            if request.state is not ConsentState.PENDING:
                raise BrokerDenied("CONSENT_ALREADY_RESOLVED", f"request {request_id} is final")
            self._resolve_consent_locked(
                request, ConsentState.APPROVED if allow else ConsentState.DENIED
            )
            return request

    def _resolve_consent_locked(self, request: ConsentRequest, state: ConsentState) -> None:
        request.state = state
        request._resolved.set()
        self.world.consent_log.append(
            {"requestId": request.request_id, "state": state.value, "at": self.clock.now_ms()}
        )
        self._publish("consent", request.to_json())


def _cookie_matches(cookie: dict, host: str) -> bool:
    domain = cookie.get("domain", "")
    return host == domain or host.endswith("." + domain)
