"""Reference monitor for attach, command, and script-injection requests.

Two policy modes exist. Legacy reproduces the historically vulnerable
behavior, annotating allow decisions with the security requirements they
violate; Hardened enforces per-domain grants, trusted origins, re-attach
cooldowns, and runtime consent. Decision functions are pure: identical
inputs always yield identical decisions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from types import MappingProxyType
from typing import Mapping, Optional, Union

from .codec import CdpMessage, split_method
from .identity import AllowlistConfig, ExtensionOrigin, ExtensionRecord
from .targets import PrivilegeKind, classify_url

SR01_INSTALL = "SR01_INSTALL"
SR01_RUNTIME = "SR01_RUNTIME"
SR02 = "SR02"
SR03 = "SR03"
SR04 = "SR04"

ALL_SRS = frozenset({SR01_INSTALL, SR01_RUNTIME, SR02, SR03, SR04})

# Stable deny reason codes.
MISSING_PERMISSION = "MISSING_PERMISSION"
RESTRICTED_URL = "RESTRICTED_URL"
INCOGNITO_DENIED = "INCOGNITO_DENIED"
BROWSER_TARGET_DENIED = "BROWSER_TARGET_DENIED"
DOMAIN_NOT_GRANTED = "DOMAIN_NOT_GRANTED"
DOMAIN_UNAVAILABLE = "DOMAIN_UNAVAILABLE"
SESSIONID_FORBIDDEN = "SESSIONID_FORBIDDEN"
UNTRUSTED_ORIGIN = "UNTRUSTED_ORIGIN"
UNKNOWN_TARGET = "UNKNOWN_TARGET"
SESSION_CLOSED = "SESSION_CLOSED"
REATTACH_COOLDOWN = "REATTACH_COOLDOWN"
CONSENT_DENIED = "CONSENT_DENIED"
ALREADY_ATTACHED = "ALREADY_ATTACHED"
BAD_VERSION = "BAD_VERSION"

NO_TAB_WITH_GIVEN_ID = "No tab with given id"

# Domains the limited browser target exposes to extension-held sessions.
BROWSER_SESSION_DOMAINS = frozenset({"Target", "Tracing", "Browser"})
# Domains withheld from tab and extension sessions.
TAB_SESSION_BLOCKED_DOMAINS = frozenset({"Target", "Tracing"})

_WEB_SCHEMES = frozenset({"http", "https", "ws", "wss"})


class PolicyMode(Enum):
    LEGACY = "legacy"
    HARDENED = "hardened"


@dataclass(frozen=True)
class PolicyFlags:
    extensions_on_chrome_urls: bool = False
    silent_debugger_extension_api: bool = False

    def to_json(self) -> dict:
        return {
            "extensionsOnChromeUrls": self.extensions_on_chrome_urls,
            "silentDebuggerExtensionApi": self.silent_debugger_extension_api,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PolicyFlags":
        return cls(
            extensions_on_chrome_urls=bool(obj.get("extensionsOnChromeUrls", False)),
            silent_debugger_extension_api=bool(obj.get("silentDebuggerExtensionApi", False)),
        )


@dataclass(frozen=True)
class LegacyFixes:
    """Per-vulnerability toggles modelling pre-fix vs post-fix behavior."""

    fix_incognito_targets: bool = False
    fix_interstitial_attach: bool = False

    def to_json(self) -> dict:
        return {
            "fixIncognitoTargets": self.fix_incognito_targets,
            "fixInterstitialAttach": self.fix_interstitial_attach,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LegacyFixes":
        return cls(
            fix_incognito_targets=bool(obj.get("fixIncognitoTargets", False)),
            fix_interstitial_attach=bool(obj.get("fixInterstitialAttach", False)),
        )


def _freeze_grants(grants: Mapping[str, frozenset]) -> Mapping[str, frozenset]:
    return MappingProxyType({k: frozenset(v) for k, v in grants.items()})


@dataclass(frozen=True)
class HardenedConfig:
    domain_grants: Mapping[str, frozenset] = field(default_factory=lambda: MappingProxyType({}))
    reattach_cooldown_ms: int = 0
    consent_required: bool = False
    trusted_origins_only: bool = False

    def to_json(self) -> dict:
        return {
            "domainGrants": {k: sorted(v) for k, v in self.domain_grants.items()},
            "reattachCooldownMs": self.reattach_cooldown_ms,
            "consentRequired": self.consent_required,
            "trustedOriginsOnly": self.trusted_origins_only,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "HardenedConfig":
        return cls(
            domain_grants=_freeze_grants(
                {k: frozenset(v) for k, v in obj.get("domainGrants", {}).items()}
            ),
            reattach_cooldown_ms=int(obj.get("reattachCooldownMs", 0)),
            consent_required=bool(obj.get("consentRequired", False)),
            trusted_origins_only=bool(obj.get("trustedOriginsOnly", False)),
        )


@dataclass(frozen=True)
class PolicyConfig:
    mode: PolicyMode = PolicyMode.LEGACY
    flags: PolicyFlags = PolicyFlags()
    allow: AllowlistConfig = AllowlistConfig()
    fixes: LegacyFixes = LegacyFixes()
    hardened: HardenedConfig = HardenedConfig()

    @property
    def is_hardened(self) -> bool:
        return self.mode is PolicyMode.HARDENED

    def with_flags(self, flags: PolicyFlags) -> "PolicyConfig":
        return replace(self, flags=flags)

    def to_json(self) -> dict:
        return {
            "mode": self.mode.value,
            "flags": self.flags.to_json(),
            "allowlist": self.allow.to_json(),
            "fixes": self.fixes.to_json(),
            "hardened": self.hardened.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PolicyConfig":
        return cls(
            mode=PolicyMode(obj.get("mode", "legacy")),
            flags=PolicyFlags.from_json(obj.get("flags", {})),
            allow=AllowlistConfig.from_json(obj.get("allowlist", {})),
            fixes=LegacyFixes.from_json(obj.get("fixes", {})),
            hardened=HardenedConfig.from_json(obj.get("hardened", {})),
        )

    @classmethod
    def load(cls, path: str) -> "PolicyConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class Decision:
    """Outcome of one policy check, with SR annotations on known-vulnerable allows."""

    allowed: bool
    reason: Optional[str] = None
    message: Optional[str] = None
    violated_srs: frozenset = frozenset()
    audit_tags: tuple = ()
    pending_consent: bool = False

    def __post_init__(self) -> None:
        if not self.allowed and self.violated_srs:
            raise ValueError("deny decisions carry no SR annotations")

    @classmethod
    def allow(cls, srs: frozenset = frozenset(), tags: tuple = ()) -> "Decision":
        return cls(allowed=True, violated_srs=frozenset(srs), audit_tags=tuple(tags))

    @classmethod
    def deny(cls, reason: str, message: Optional[str] = None) -> "Decision":
        return cls(allowed=False, reason=reason, message=message or reason)

    @classmethod
    def pending(cls) -> "Decision":
        return cls(allowed=True, pending_consent=True)


@dataclass(frozen=True)
class ByTabId:
    tab_id: int


@dataclass(frozen=True)
class ByTargetId:
    target_id: str


TargetRef = Union[ByTabId, ByTargetId]


def _legacy_class_decision(ext: ExtensionRecord, view, policy: PolicyConfig) -> Decision:
    kind = view.privilege.kind
    if kind is PrivilegeKind.BROWSER_TARGET:
        if ext.id in policy.allow.browser_target:
            srs = frozenset() if ext.origin.is_trusted else frozenset({SR03})
            return Decision.allow(srs=srs)
        return Decision.deny(BROWSER_TARGET_DENIED, "extension may not attach to the browser target")
    if kind is PrivilegeKind.WEBUI:
        return Decision.deny(RESTRICTED_URL, f"cannot attach to {view.url}")
    if kind is PrivilegeKind.INTERSTITIAL:
        if policy.fixes.fix_interstitial_attach:
            return Decision.deny(RESTRICTED_URL, f"cannot attach to {view.url}")
        return Decision.allow(srs=frozenset({SR03, SR04}))
    if kind is PrivilegeKind.EXTENSION:
        if view.privilege.owner_id == ext.id:
            return Decision.allow()
        if policy.flags.extensions_on_chrome_urls:
            return Decision.allow(srs=frozenset({SR03}))
        return Decision.deny(RESTRICTED_URL, f"cannot attach to {view.url}")
    if kind is PrivilegeKind.FILE:
        if ext.file_access:
            return Decision.allow()
        return Decision.deny(RESTRICTED_URL, "file access requires explicit opt-in")
    if kind is PrivilegeKind.UNKNOWN:
        return Decision.deny(RESTRICTED_URL, f"cannot attach to {view.url}")
    return Decision.allow()  # regular


def _hardened_class_decision(ext: ExtensionRecord, view) -> Decision:
    kind = view.privilege.kind
    if kind is PrivilegeKind.REGULAR:
        return Decision.allow()
    if kind is PrivilegeKind.EXTENSION and view.privilege.owner_id == ext.id:
        return Decision.allow()
    if kind is PrivilegeKind.FILE and ext.file_access:
        return Decision.allow()
    if kind is PrivilegeKind.BROWSER_TARGET:
        return Decision.deny(BROWSER_TARGET_DENIED, "browser target is never attachable")
    return Decision.deny(RESTRICTED_URL, f"cannot attach to {view.url}")


def may_attach(ext: ExtensionRecord, ref: TargetRef, world, policy: PolicyConfig) -> Decision:
    """Decide an attach request against a tab-id or target-id reference.

    Check order never leaks target existence to unpermissioned callers:
    permission, then (hardened) origin trust, then target resolution, then
    class rules.
    """
    if not ext.has_debugger_permission:
        return Decision.deny(MISSING_PERMISSION, "debugger permission not declared")

    if policy.is_hardened and policy.hardened.trusted_origins_only and ext.origin.is_sideloaded:
        return Decision.deny(UNTRUSTED_ORIGIN, f"{ext.origin.value} extensions may not attach")

    view = world.resolve_ref(ref)
    if view is None:
        message = NO_TAB_WITH_GIVEN_ID if isinstance(ref, ByTabId) else "No target with given id"
        return Decision.deny(UNKNOWN_TARGET, message)

    if policy.is_hardened:
        if view.incognito and not ext.incognito_allowed:
            return Decision.deny(INCOGNITO_DENIED, "incognito targets require explicit access")
        decision = _hardened_class_decision(ext, view)
        if decision.allowed and policy.hardened.consent_required:
            return Decision.pending()
        return decision

    # Legacy: the tab-id path validates the context, the target-id path does not.
    if isinstance(ref, ByTabId) and view.incognito and not ext.incognito_allowed:
        return Decision.deny(UNKNOWN_TARGET, NO_TAB_WITH_GIVEN_ID)

    decision = _legacy_class_decision(ext, view, policy)
    if not decision.allowed:
        return decision

    if isinstance(ref, ByTargetId) and view.incognito and not ext.incognito_allowed:
        if policy.fixes.fix_incognito_targets:
            return Decision.deny(INCOGNITO_DENIED, "incognito targets require explicit access")
        return Decision.allow(srs=decision.violated_srs | {SR02}, tags=decision.audit_tags)

    return decision


def may_send_command(session, msg: CdpMessage, policy: PolicyConfig) -> Decision:
    """Decide whether a session may issue a protocol command.

    The session object carries the holding extension and whether it is bound
    to the browser target.
    """
    if msg.session_id is not None:
        return Decision.deny(SESSIONID_FORBIDDEN, "sessionId routing is not available here")
    domain, _ = split_method(msg.method)

    if policy.is_hardened:
        grants = policy.hardened.domain_grants.get(session.extension.id, frozenset())
        if domain in grants:
            return Decision.allow()
        return Decision.deny(DOMAIN_NOT_GRANTED, f"domain {domain} not granted to {session.extension.id}")

    if session.is_browser_target:
        if domain in BROWSER_SESSION_DOMAINS:
            return Decision.allow()
        return Decision.deny(DOMAIN_UNAVAILABLE, f"domain {domain} is missing from this host")
    if domain in TAB_SESSION_BLOCKED_DOMAINS:
        return Decision.deny(DOMAIN_UNAVAILABLE, f"domain {domain} is not available to this session")
    return Decision.allow()


def _origin_of(url: str) -> str:
    scheme, _, rest = url.partition("://")
    if not rest:
        return url
    return f"{scheme}://{rest.split('/', 1)[0]}"


def _host_permission_match(ext: ExtensionRecord, url: str, kind: PrivilegeKind) -> Decision:
    if kind is PrivilegeKind.FILE and not ext.file_access:
        return Decision.deny(RESTRICTED_URL, "file access requires explicit opt-in")
    scheme = url.partition(":")[0].lower()
    if "<all_urls>" in ext.host_permissions:
        if scheme in _WEB_SCHEMES or (kind is PrivilegeKind.FILE and ext.file_access):
            return Decision.allow()
    origin = _origin_of(url)
    for pattern in ext.host_permissions:
        if pattern == "<all_urls>":
            continue
        if _origin_of(pattern.rstrip("*").rstrip("/")) == origin or pattern == url:
            return Decision.allow()
    return Decision.deny(MISSING_PERMISSION, f"no host permission covers {url}")


def may_run_script(ext: ExtensionRecord, url: str, policy: PolicyConfig) -> Decision:
    """Decide a script-injection request for a URL, mirroring the restricted-URL gate."""
    cls = classify_url(url, "_script")
    kind = cls.kind

    if ext.origin is ExtensionOrigin.COMPONENT:
        return Decision.allow()

    # Hardened policy honors the scripting allowlist only for trusted origins.
    if ext.id in policy.allow.scripting and (not policy.is_hardened or ext.origin.is_trusted):
        srs = frozenset()
        if kind is PrivilegeKind.WEBUI and not ext.origin.is_trusted:
            srs = frozenset({SR03, SR04})
        return Decision.allow(srs=srs)

    flag = policy.flags.extensions_on_chrome_urls and not policy.is_hardened
    if kind is PrivilegeKind.WEBUI and not flag:
        return Decision.deny(RESTRICTED_URL, f"cannot run scripts on {url}")
    if kind is PrivilegeKind.EXTENSION and cls.owner_id != ext.id and not flag:
        return Decision.deny(RESTRICTED_URL, f"cannot run scripts on {url}")

    return _host_permission_match(ext, url, kind)


def annotate_install(ext: ExtensionRecord) -> Decision:
    """Annotate the install-time awareness gap for debugger-permission extensions."""
    if ext.has_debugger_permission:
        return Decision.allow(srs=frozenset({SR01_INSTALL}), tags=("vague-install-warning",))
    return Decision.allow()
