"""Debuggable targets and URL privilege classification.

Every debuggable entity (tab, extension worker, the browser pseudo-target)
carries a privilege class derived from its URL scheme and target id. The
classification is total: any (url, targetId) pair maps to exactly one class.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

BROWSER_TARGET_ID = "browser"


class TargetType(str, Enum):
    PAGE = "page"
    BACKGROUND_PAGE = "background_page"
    SERVICE_WORKER = "service_worker"
    BROWSER = "browser"
    OTHER = "other"


class PrivilegeKind(Enum):
    REGULAR = "regular"
    FILE = "file"
    INTERSTITIAL = "interstitial"
    WEBUI = "webui"
    EXTENSION = "extension"
    BROWSER_TARGET = "browser_target"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class PrivilegeClass:
    kind: PrivilegeKind
    owner_id: Optional[str] = None  # set only for EXTENSION

    def __str__(self) -> str:
        if self.kind is PrivilegeKind.EXTENSION:
            return f"extension({self.owner_id})"
        return self.kind.value


REGULAR = PrivilegeClass(PrivilegeKind.REGULAR)
FILE = PrivilegeClass(PrivilegeKind.FILE)
INTERSTITIAL = PrivilegeClass(PrivilegeKind.INTERSTITIAL)
WEBUI = PrivilegeClass(PrivilegeKind.WEBUI)
BROWSER_TARGET = PrivilegeClass(PrivilegeKind.BROWSER_TARGET)
UNKNOWN = PrivilegeClass(PrivilegeKind.UNKNOWN)


def classify_url(url: str, target_id: str) -> PrivilegeClass:
    """Classify a target by URL scheme; the reserved id wins over any URL.

    "about:blank" classifies as regular so it can serve as an attachable
    proxy page; other unparseable or exotic schemes classify as unknown.
    """
    if target_id == BROWSER_TARGET_ID:
        return BROWSER_TARGET
    if url == "about:blank":
        return REGULAR
    scheme, sep, rest = url.partition(":")
    if not sep or not scheme:
        return UNKNOWN
    scheme = scheme.lower()
    if scheme in ("http", "https"):
        return REGULAR
    if scheme == "file":
        return FILE
    if scheme == "chrome-error":
        return INTERSTITIAL
    if scheme == "chrome":
        return WEBUI
    if scheme == "chrome-extension":
        host = rest.lstrip("/").split("/", 1)[0]
        return PrivilegeClass(PrivilegeKind.EXTENSION, owner_id=host)
    return UNKNOWN


@dataclass(frozen=True)
class TargetInfo:
    """Snapshot entry for one debuggable target."""

    target_id: str
    target_type: TargetType
    url: str
    title: str
    favicon_url: str
    attached_count: int
    browser_context_id: str
    incognito: bool
    owner_extension_id: Optional[str] = None

    @property
    def privilege(self) -> PrivilegeClass:
        return classify_url(self.url, self.target_id)

    def to_json(self) -> dict:
        return {
            "targetId": self.target_id,
            "type": self.target_type.value,
            "url": self.url,
            "title": self.title,
            "faviconUrl": self.favicon_url,
            "attached": self.attached_count,
            "browserContextId": self.browser_context_id,
            "incognito": self.incognito,
        }


def snapshot_targets(world) -> list[TargetInfo]:
    """List every tab and extension target across all contexts, sorted by id.

    The browser pseudo-target is never part of a snapshot. The world object
    supplies tabs, extension nodes, and per-target attach counts.
    """
    infos: list[TargetInfo] = []
    for tab in world.tabs:
        cls = classify_url(tab.url, tab.target_id)
        owner = cls.owner_id if cls.kind is PrivilegeKind.EXTENSION else None
        infos.append(
            TargetInfo(
                target_id=tab.target_id,
                target_type=TargetType.PAGE,
                url=tab.url,
                title=tab.title,
                favicon_url=tab.favicon_url,
                attached_count=world.attach_counts.get(tab.target_id, 0),
                browser_context_id=tab.context_id,
                incognito=tab.incognito,
                owner_extension_id=owner,
            )
        )
    for node in world.extension_nodes:
        infos.append(
            TargetInfo(
                target_id=node.target_id,
                target_type=node.target_type,
                url=node.url,
                title=node.record.name,
                favicon_url="",
                attached_count=world.attach_counts.get(node.target_id, 0),
                browser_context_id=node.context_id,
                incognito=False,
                owner_extension_id=node.record.id,
            )
        )
    infos.sort(key=lambda t: t.target_id)
    return infos
