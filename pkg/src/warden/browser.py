"""Command handlers for the simulated browser and the binding escalation channel.

Only the commands the scenarios need are implemented; everything else is
MethodNotFound. The binding channel is the one place where sessionId-routed
frames are accepted, and it executes them with full browser-target capability,
bypassing the reference monitor by design.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

from .codec import CdpMessage, serialize_message
from .targets import BROWSER_TARGET_ID, PrivilegeKind, snapshot_targets
from .world import BrowserWorld, ExtensionNode, PageNode

METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
SERVER_ERROR = -32000

FLAG_KEY_MAP = {
    "flags.extensions-on-chrome-urls": "extensions_on_chrome_urls",
    "flags.silent-debugger-extension-api": "silent_debugger_extension_api",
}


class CommandError(Exception):
    """A command-level protocol error (method missing, bad params, eval failure)."""

    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code
        self.message = message

    def to_error(self) -> dict:
        return {"code": self.code, "message": self.message}


@dataclass
class Route:
    """Where a command executes: a tab, an extension target, or the browser."""

    kind: str  # "tab" | "extension" | "browser"
    node: "PageNode | ExtensionNode | None" = None

    @classmethod
    def browser(cls) -> "Route":
        return cls("browser")

    @classmethod
    def for_node(cls, node) -> "Route":
        return cls("tab" if isinstance(node, PageNode) else "extension", node)

    @property
    def incognito(self) -> bool:
        return bool(self.node is not None and self.node.incognito)


@dataclass
class CommandContext:
    """Hooks the broker supplies: event delivery, navigation, live flag writes."""

    emit_event: Callable[[CdpMessage], None] = lambda event: None
    on_navigate: Callable[[str], None] = lambda target_id: None
    set_flag: Callable[[str, bool], None] = lambda key, value: None
    install_binding: Callable[[PageNode, str], None] = lambda tab, name: None


class EvalError(CommandError):
    def __init__(self, label: str, message: str) -> None:
        super().__init__(SERVER_ERROR, f"{label}: {message}")
        self.label = label


def eval_expression(world: BrowserWorld, node, expression: str, ctx: CommandContext) -> str:
    """Evaluate one micro-expression against a target's data scope.

    Grammar: ``get <key>`` | ``set <key> = <value>`` | ``click <elementId>``
    | ``proceed`` | ``list``.
    """
    text = expression.strip()
    if text == "list":
        return "\n".join(node.data.keys())
    if text == "proceed":
        return _proceed(world, node, ctx)
    if text.startswith("get "):
        key = text[4:].strip()
        if key not in node.data:
            raise EvalError("NotFound", f"no data key {key!r}")
        return str(node.data[key])
    if text.startswith("set "):
        rest = text[4:]
        key, sep, value = rest.partition("=")
        if not sep:
            raise EvalError("ParseError", "set requires '<key> = <value>'")
        key = key.strip()
        value = value.strip()
        if not key:
            raise EvalError("ParseError", "set requires a key")
        previous = str(node.data.get(key, ""))
        node.data[key] = value
        _mirror_flag_write(world, node, key, value, ctx)
        return previous
    if text.startswith("click "):
        element_id = text[6:].strip()
        if element_id not in getattr(node, "elements", {}):
            raise EvalError("NoSuchElement", f"no element {element_id!r}")
        if element_id == "proceed-button" and isinstance(node, PageNode) and node.is_interstitial:
            return _proceed(world, node, ctx)
        return str(node.elements[element_id])
    raise EvalError("ParseError", f"cannot parse expression {expression!r}")


def _proceed(world: BrowserWorld, node, ctx: CommandContext) -> str:
    if not isinstance(node, PageNode) or not node.is_interstitial:
        raise EvalError("ProceedNotApplicable", "target is not an interstitial")
    node.url = node.pending_url
    node.pending_url = None
    node.interstitial_kind = None
    ctx.on_navigate(node.target_id)
    return node.url


def _mirror_flag_write(world: BrowserWorld, node, key: str, value: str, ctx: CommandContext) -> None:
    # Flag writes only take effect from pages with browser-UI privileges.
    if not key.startswith("flags."):
        return
    if node.privilege.kind is not PrivilegeKind.WEBUI:
        return
    world.settings[key] = value
    flag_attr = FLAG_KEY_MAP.get(key)
    if flag_attr is not None:
        ctx.set_flag(flag_attr, value.strip().lower() == "true")


def _require(params: Optional[dict], key: str):
    if not params or key not in params:
        raise CommandError(INVALID_PARAMS, f"missing required parameter {key!r}")
    return params[key]


def _fetch_events(node, session_id: Optional[str] = None) -> list:
    events = []
    for exchange in node.traffic:
        request = {
            "requestId": exchange.request_id,
            "request": {"url": exchange.url, "headers": dict(exchange.request_headers)},
            "frameId": node.target_id,
            "resourceType": "Document",
        }
        response = dict(
            request,
            responseStatusCode=exchange.response_status_code,
            responseHeaders=dict(exchange.response_headers),
        )
        events.append(CdpMessage.event("Fetch.requestPaused", request, session_id=session_id))
        events.append(CdpMessage.event("Fetch.requestPaused", response, session_id=session_id))
    return events


def handle_command(
    world: BrowserWorld,
    route: Route,
    msg: CdpMessage,
    ctx: CommandContext,
    *,
    binding_capable: bool = False,
) -> dict:
    """Execute one already-authorized command; returns the result object.

    ``binding_capable`` marks the full-capability channel where
    Target.attachToTarget is meaningful.
    """
    world.command_count += 1
    method = msg.method
    params = msg.params

    if method == "Runtime.evaluate":
        if route.node is None:
            raise CommandError(INVALID_PARAMS, "Runtime.evaluate needs a page or worker target")
        expression = _require(params, "expression")
        value = eval_expression(world, route.node, str(expression), ctx)
        return {"result": {"type": "string", "value": value}}

    if method == "Network.getAllCookies":
        store = world.cookie_store(route.incognito)
        return {"cookies": [c.to_json() for c in store]}

    if method == "Browser.grantPermissions":
        origin = _require(params, "origin")
        permissions = _require(params, "permissions")
        if not isinstance(permissions, list):
            raise CommandError(INVALID_PARAMS, "permissions must be a list")
        for permission in permissions:
            world.site_permissions[(origin, permission)] = "granted"
        # Deliberately no consent-log entry: grants bypass the user.
        return {}

    if method == "Page.navigate":
        if not isinstance(route.node, PageNode):
            raise CommandError(INVALID_PARAMS, "Page.navigate needs a tab target")
        url = str(_require(params, "url"))
        tab = route.node
        tab.url = url
        tab.pending_url = None
        tab.interstitial_kind = None
        ctx.on_navigate(tab.target_id)
        return {"frameId": f"frame-{tab.target_id}"}

    if method == "Fetch.enable":
        if route.kind == "browser":
            nodes = list(world.tabs) + list(world.extension_nodes)
        elif route.node is not None:
            nodes = [route.node]
        else:
            raise CommandError(INVALID_PARAMS, "Fetch.enable needs a target")
        for node in nodes:
            for event in _fetch_events(node, session_id=msg.session_id):
                ctx.emit_event(event)
        return {}

    if method == "Tracing.start":
        return {}

    if method == "Tracing.end":
        summary = {
            "tabCount": len(world.tabs),
            "extensionCount": len(world.extension_nodes),
            "commandCount": world.command_count,
        }
        return {"trace": json.dumps(summary, separators=(",", ":"))}

    if method == "Target.getTargets":
        infos = snapshot_targets(world)
        browser_entry = {
            "targetId": BROWSER_TARGET_ID,
            "type": "browser",
            "url": "",
            "title": "",
            "faviconUrl": "",
            "attached": world.attach_counts.get(BROWSER_TARGET_ID, 0),
            "browserContextId": "default",
            "incognito": False,
        }
        return {"targetInfos": [t.to_json() for t in infos] + [browser_entry]}

    if method == "Target.sendMessageToTarget":
        _require(params, "message")
        # Accepted but never delivered: the dead-end the escalation works around.
        return {}

    if method == "Target.exposeDevToolsProtocol":
        if route.kind != "browser":
            raise CommandError(INVALID_PARAMS, "exposeDevToolsProtocol is a browser-target command")
        target_id = str(_require(params, "targetId"))
        binding_name = str(params.get("bindingName", "cdp")) if params else "cdp"
        tab = world.find_tab(target_id)
        if tab is None:
            raise CommandError(SERVER_ERROR, f"NoSuchTarget: {target_id}")
        ctx.install_binding(tab, binding_name)
        return {}

    if method == "Target.attachToTarget":
        if not binding_capable:
            raise CommandError(
                METHOD_NOT_FOUND, "Target.attachToTarget is only reachable over a binding channel"
            )
        # Handled by BindingChannel before dispatch; reaching here is a bug.
        raise CommandError(SERVER_ERROR, "attachToTarget must be routed through the channel")

    raise CommandError(METHOD_NOT_FOUND, f"{method} is not implemented")


@dataclass
class BindingChannel:
    """The in-page protocol binding installed by Target.exposeDevToolsProtocol.

    Accepts raw frames including sessionId routing and executes them with
    browser-target capability; sessionId-routed commands run against their
    attached target with no policy restriction.
    """

    world: BrowserWorld
    tab: PageNode
    name: str
    ctx: CommandContext
    audit_escalated: Callable = lambda ext, msg, node: None
    sessions: dict = field(default_factory=dict)
    events: list = field(default_factory=list)
    _session_counter: int = 0

    def send_text(self, text: str, on_behalf_of=None) -> str:
        from .codec import parse_message

        reply = self.send(parse_message(text), on_behalf_of=on_behalf_of)
        return serialize_message(reply)

    def send(self, msg: CdpMessage, on_behalf_of=None) -> CdpMessage:
        if msg.id is None or msg.method is None:
            return CdpMessage.response(
                msg.id or 1, error={"code": INVALID_PARAMS, "message": "channel expects commands"}
            )
        try:
            result = self._dispatch(msg, on_behalf_of)
        except CommandError as exc:
            return CdpMessage.response(msg.id, error=exc.to_error(), session_id=msg.session_id)
        return CdpMessage.response(msg.id, result=result, session_id=msg.session_id)

    def _dispatch(self, msg: CdpMessage, on_behalf_of) -> dict:
        ctx = CommandContext(
            emit_event=self.events.append,
            on_navigate=self.ctx.on_navigate,
            set_flag=self.ctx.set_flag,
            install_binding=self.ctx.install_binding,
        )

        if msg.session_id is not None:
            node = self.sessions.get(msg.session_id)
            if node is None:
                raise CommandError(SERVER_ERROR, f"no session {msg.session_id!r} on this channel")
            self.audit_escalated(on_behalf_of, msg, node)

            def tagged(event: CdpMessage) -> None:
                self.events.append(
                    CdpMessage.event(event.method, event.params, session_id=msg.session_id)
                )

            ctx.emit_event = tagged
            stripped = CdpMessage.command(msg.id, msg.method, msg.params)
            return handle_command(self.world, Route.for_node(node), stripped, ctx)

        if msg.method == "Target.attachToTarget":
            target_id = str(_require(msg.params, "targetId"))
            if target_id == BROWSER_TARGET_ID:
                raise CommandError(SERVER_ERROR, "cannot attach the browser target to itself")
            node = self.world.find_node(target_id)
            if node is None:
                raise CommandError(SERVER_ERROR, f"NoSuchTarget: {target_id}")
            self._session_counter += 1
            session_id = f"bs{self._session_counter}"
            self.sessions[session_id] = node
            self.audit_escalated(on_behalf_of, msg, node)
            return {"sessionId": session_id}

        self.audit_escalated(on_behalf_of, msg, None)
        return handle_command(self.world, Route.browser(), msg, ctx, binding_capable=True)
