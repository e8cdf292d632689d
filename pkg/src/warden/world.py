"""The simulated browser: contexts, tabs, cookie stores, extensions, settings.

Worlds are built deterministically from a JSON description: target ids are
assigned in declaration order ("t" plus a counter) and tab ids count up from
one. All mutation goes through the command handlers in ``browser``.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass, field
from typing import Optional

from .identity import ExtensionOrigin, ExtensionRecord, derive_id_from_key, validate_id
from .policy import ByTabId, TargetRef
from .targets import (
    BROWSER_TARGET,
    BROWSER_TARGET_ID,
    PrivilegeClass,
    PrivilegeKind,
    TargetType,
    classify_url,
)

INTERSTITIAL_KINDS = ("tls", "safeBrowsing", "captivePortal")


class SchemaError(ValueError):
    """Raised when a world or scenario description violates its schema."""


@dataclass
class Cookie:
    name: str
    value: str
    domain: str
    path: str = "/"
    secure: bool = False
    http_only: bool = False

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "domain": self.domain,
            "path": self.path,
            "secure": self.secure,
            "httpOnly": self.http_only,
        }

    def matches_host(self, host: str) -> bool:
        return host == self.domain or host.endswith("." + self.domain)


@dataclass
class NetworkExchange:
    request_id: str
    url: str
    request_headers: dict = field(default_factory=dict)
    response_status_code: int = 200
    response_headers: dict = field(default_factory=dict)


@dataclass
class BrowserContext:
    context_id: str
    incognito: bool = False


@dataclass
class PageNode:
    """One tab: URL, page data, clickable elements, scripted traffic."""

    target_id: str
    tab_id: int
    url: str
    title: str = ""
    favicon_url: str = ""
    context_id: str = "default"
    incognito: bool = False
    elements: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    pending_url: Optional[str] = None
    interstitial_kind: Optional[str] = None
    traffic: list = field(default_factory=list)
    bindings: dict = field(default_factory=dict)

    @property
    def privilege(self) -> PrivilegeClass:
        return classify_url(self.url, self.target_id)

    @property
    def is_interstitial(self) -> bool:
        return self.privilege.kind is PrivilegeKind.INTERSTITIAL


@dataclass
class ExtensionNode:
    """The background/service-worker target of one installed extension."""

    record: ExtensionRecord
    target_id: str
    target_type: TargetType = TargetType.SERVICE_WORKER
    context_id: str = "default"
    data: dict = field(default_factory=dict)
    traffic: list = field(default_factory=list)

    @property
    def url(self) -> str:
        suffix = "background.js" if self.target_type is TargetType.BACKGROUND_PAGE else "worker.js"
        return f"chrome-extension://{self.record.id}/{suffix}"

    @property
    def privilege(self) -> PrivilegeClass:
        return classify_url(self.url, self.target_id)

    incognito = False


@dataclass(frozen=True)
class TargetView:
    """Resolution of a target reference for policy checks."""

    target_id: str
    url: str
    privilege: PrivilegeClass
    incognito: bool


@dataclass
class BrowserWorld:
    contexts: list = field(default_factory=list)
    tabs: list = field(default_factory=list)
    extension_nodes: list = field(default_factory=list)
    cookies: list = field(default_factory=list)
    incognito_cookies: list = field(default_factory=list)
    site_permissions: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)
    consent_log: list = field(default_factory=list)
    attach_counts: dict = field(default_factory=dict)
    command_count: int = 0
    _target_counter: int = 0

    def next_target_id(self) -> str:
        self._target_counter += 1
        return f"t{self._target_counter}"

    def context(self, context_id: str) -> BrowserContext:
        for ctx in self.contexts:
            if ctx.context_id == context_id:
                return ctx
        raise SchemaError(f"unknown browser context {context_id!r}")

    def find_tab(self, target_id: str) -> Optional[PageNode]:
        for tab in self.tabs:
            if tab.target_id == target_id:
                return tab
        return None

    def find_tab_by_tab_id(self, tab_id: int) -> Optional[PageNode]:
        for tab in self.tabs:
            if tab.tab_id == tab_id:
                return tab
        return None

    def find_tab_by_url(self, url: str) -> Optional[PageNode]:
        for tab in self.tabs:
            if tab.url == url:
                return tab
        return None

    def find_extension_node(self, target_id: str) -> Optional[ExtensionNode]:
        for node in self.extension_nodes:
            if node.target_id == target_id:
                return node
        return None

    def find_extension_by_id(self, extension_id: str) -> Optional[ExtensionNode]:
        for node in self.extension_nodes:
            if node.record.id == extension_id:
                return node
        return None

    def find_node(self, target_id: str):
        return self.find_tab(target_id) or self.find_extension_node(target_id)

    def resolve_ref(self, ref: TargetRef) -> Optional[TargetView]:
        if isinstance(ref, ByTabId):
            tab = self.find_tab_by_tab_id(ref.tab_id)
            if tab is None:
                return None
            return TargetView(tab.target_id, tab.url, tab.privilege, tab.incognito)
        if ref.target_id == BROWSER_TARGET_ID:
            return TargetView(BROWSER_TARGET_ID, "", BROWSER_TARGET, False)
        node = self.find_node(ref.target_id)
        if node is None:
            return None
        return TargetView(node.target_id, node.url, node.privilege, node.incognito)

    def cookie_store(self, incognito: bool) -> list:
        return self.incognito_cookies if incognito else self.cookies

    def add_extension(
        self,
        record: ExtensionRecord,
        data: Optional[dict] = None,
        traffic: Optional[list] = None,
        target_type: TargetType = TargetType.SERVICE_WORKER,
    ) -> ExtensionNode:
        if self.find_extension_by_id(record.id) is not None:
            raise SchemaError(f"duplicate extension id {record.id}")
        node = ExtensionNode(
            record=record,
            target_id=self.next_target_id(),
            target_type=target_type,
            data=dict(data or {}),
            traffic=list(traffic or []),
        )
        self.extension_nodes.append(node)
        return node


def _build_traffic(entries: list, seen_ids: set) -> list:
    traffic = []
    for entry in entries:
        request_id = entry.get("requestId")
        if not request_id:
            raise SchemaError("traffic entries require a requestId")
        if request_id in seen_ids:
            raise SchemaError(f"duplicate requestId {request_id!r}")
        seen_ids.add(request_id)
        traffic.append(
            NetworkExchange(
                request_id=request_id,
                url=entry.get("url", ""),
                request_headers=dict(entry.get("requestHeaders", {})),
                response_status_code=int(entry.get("responseStatusCode", 200)),
                response_headers=dict(entry.get("responseHeaders", {})),
            )
        )
    return traffic


def build_extension_record(spec: dict) -> ExtensionRecord:
    """Build an extension record from a world or scenario description."""
    origin = ExtensionOrigin(spec.get("origin", "sideloaded-unpacked"))
    key = spec.get("key")
    if key is not None:
        ext_id = derive_id_from_key(base64.b64decode(key))
    elif "id" in spec:
        ext_id = validate_id(spec["id"])
    else:
        raise SchemaError(f"extension {spec.get('name', '?')!r} needs a key or an explicit id")
    return ExtensionRecord(
        id=ext_id,
        name=spec.get("name", "unnamed"),
        version=spec.get("version", "0.0.1"),
        permissions=frozenset(spec.get("permissions", [])),
        host_permissions=frozenset(spec.get("hostPermissions", [])),
        manifest_key=key,
        origin=origin,
        incognito_allowed=bool(spec.get("incognitoAllowed", False)),
        file_access=bool(spec.get("fileAccess", False)),
    )


def build_world(spec: dict) -> BrowserWorld:
    """Construct a world from its JSON description; raises SchemaError."""
    if not isinstance(spec, dict):
        raise SchemaError("world description must be a JSON object")
    world = BrowserWorld()

    contexts = spec.get("contexts") or [{"id": "default", "incognito": False}]
    seen_ctx = set()
    for entry in contexts:
        ctx_id = entry.get("id")
        if not ctx_id or ctx_id in seen_ctx:
            raise SchemaError(f"bad or duplicate context id {ctx_id!r}")
        seen_ctx.add(ctx_id)
        world.contexts.append(BrowserContext(ctx_id, bool(entry.get("incognito", False))))
    if "default" not in seen_ctx:
        world.contexts.insert(0, BrowserContext("default", False))

    seen_targets: set = set()
    seen_request_ids: set = set()
    next_tab_id = 1
    for entry in spec.get("tabs", []):
        url = entry.get("url")
        if not isinstance(url, str):
            raise SchemaError("every tab needs a url")
        context_id = entry.get("context", "default")
        ctx = world.context(context_id)
        target_id = entry.get("targetId") or world.next_target_id()
        if target_id in seen_targets or target_id == BROWSER_TARGET_ID:
            raise SchemaError(f"duplicate or reserved targetId {target_id!r}")
        seen_targets.add(target_id)

        interstitial = entry.get("interstitial")
        pending_url = None
        interstitial_kind = None
        if interstitial is not None:
            if classify_url(url, target_id).kind is not PrivilegeKind.INTERSTITIAL:
                raise SchemaError(f"interstitial tab must use an interstitial url, got {url!r}")
            interstitial_kind = interstitial.get("kind", "tls")
            if interstitial_kind not in INTERSTITIAL_KINDS:
                raise SchemaError(f"unknown interstitial kind {interstitial_kind!r}")
            pending_url = interstitial.get("pendingUrl")
            if not pending_url:
                raise SchemaError("interstitial tabs require a pendingUrl")
        elif classify_url(url, target_id).kind is PrivilegeKind.INTERSTITIAL:
            raise SchemaError(f"tab at {url!r} must declare its interstitial block")

        world.tabs.append(
            PageNode(
                target_id=target_id,
                tab_id=next_tab_id,
                url=url,
                title=entry.get("title", ""),
                favicon_url=entry.get("favicon", ""),
                context_id=context_id,
                incognito=ctx.incognito,
                elements=dict(entry.get("elements", {})),
                data=dict(entry.get("data", {})),
                pending_url=pending_url,
                interstitial_kind=interstitial_kind,
                traffic=_build_traffic(entry.get("traffic", []), seen_request_ids),
            )
        )
        next_tab_id += 1

    for entry in spec.get("extensions", []):
        record = build_extension_record(entry)
        target_type = TargetType(entry.get("targetType", "service_worker"))
        node = world.add_extension(
            record,
            data=entry.get("data"),
            traffic=_build_traffic(entry.get("traffic", []), seen_request_ids),
            target_type=target_type,
        )
        if node.target_id in seen_targets:
            raise SchemaError(f"duplicate targetId {node.target_id!r}")
        seen_targets.add(node.target_id)

    for entry in spec.get("cookies", []):
        cookie = Cookie(
            name=entry["name"],
            value=entry.get("value", ""),
            domain=entry["domain"],
            path=entry.get("path", "/"),
            secure=bool(entry.get("secure", False)),
            http_only=bool(entry.get("httpOnly", False)),
        )
        store = world.cookie_store(entry.get("store") == "incognito")
        for existing in store:
            if (existing.name, existing.domain, existing.path) == (
                cookie.name,
                cookie.domain,
                cookie.path,
            ):
                raise SchemaError(f"duplicate cookie {cookie.name!r} for {cookie.domain!r}")
        store.append(cookie)

    for entry in spec.get("sitePermissions", []):
        world.site_permissions[(entry["origin"], entry["permission"])] = entry.get(
            "state", "prompt"
        )

    world.settings.update(spec.get("settings", {}))
    return world
