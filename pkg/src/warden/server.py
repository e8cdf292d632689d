"""HTTP/WebSocket control API over a running broker.

REST endpoints serve operator snapshots and consent decisions; /api/events
streams audit, consent, and infobar frames; /client/{extensionId} lets an
extension-as-client drive the debugger surface. Broker calls run on worker
threads so a blocking consent wait never stalls the event loop.
"""

from __future__ import annotations

import asyncio
import json
from typing import Optional

from aiohttp import WSMsgType, web

from .broker import BrokerDenied, ConsentMode, DebuggerBroker
from .browser import CommandError
from .clock import WallClock
from .codec import serialize_message
from .policy import ByTabId, ByTargetId, PolicyConfig
from .targets import snapshot_targets
from .world import build_world

AUDIT_REPLAY_LIMIT = 100

BROKER_KEY = web.AppKey("broker", DebuggerBroker)


def build_broker(world_spec: dict, policy: PolicyConfig, consent: str, audit_path=None) -> DebuggerBroker:
    world = build_world(world_spec)
    return DebuggerBroker(
        world,
        policy,
        clock=WallClock(),
        consent_mode=ConsentMode(consent),
        audit_path=audit_path,
    )


def build_app(broker: DebuggerBroker) -> web.Application:
    app = web.Application()
    app[BROKER_KEY] = broker

    app.router.add_get("/api/targets", handle_targets)
    app.router.add_get("/api/sessions", handle_sessions)
    app.router.add_get("/api/extensions", handle_extensions)
    app.router.add_get("/api/policy", handle_get_policy)
    app.router.add_put("/api/policy", handle_put_policy)
    app.router.add_post("/api/consent/{request_id}", handle_consent)
    app.router.add_post("/api/infobar/{extension_id}/cancel", handle_cancel_infobar)
    app.router.add_get("/api/events", handle_events_ws)
    app.router.add_get("/client/{extension_id}", handle_client_ws)
    return app


async def handle_targets(request: web.Request) -> web.Response:
    broker: DebuggerBroker = request.app[BROKER_KEY]
    infos = snapshot_targets(broker.world)
    return web.json_response([t.to_json() for t in infos])


async def handle_sessions(request: web.Request) -> web.Response:
    broker: DebuggerBroker = request.app[BROKER_KEY]
    return web.json_response([s.to_json() for s in broker.sessions.values()])


async def handle_extensions(request: web.Request) -> web.Response:
    broker: DebuggerBroker = request.app[BROKER_KEY]
    return web.json_response([n.record.to_json() for n in broker.world.extension_nodes])


async def handle_get_policy(request: web.Request) -> web.Response:
    broker: DebuggerBroker = request.app[BROKER_KEY]
    return web.json_response(broker.policy.to_json())


async def handle_put_policy(request: web.Request) -> web.Response:
    broker: DebuggerBroker = request.app[BROKER_KEY]
    try:
        body = await request.json()
        policy = PolicyConfig.from_json(body)
    except (json.JSONDecodeError, ValueError, KeyError) as exc:
        return web.json_response({"error": f"bad policy: {exc}"}, status=400)
    broker.set_policy(policy)
    return web.json_response(broker.policy.to_json())


async def handle_consent(request: web.Request) -> web.Response:
    broker: DebuggerBroker = request.app[BROKER_KEY]
    request_id = request.match_info["request_id"]
    try:
        body = await request.json()
    except json.JSONDecodeError:
        return web.json_response({"error": "body must be JSON"}, status=400)
    decision = body.get("decision")
    if decision not in ("allow", "deny"):
        return web.json_response({"error": 'decision must be "allow" or "deny"'}, status=400)
    try:
        resolved = broker.resolve_consent(request_id, decision == "allow")
    except KeyError:
        return web.json_response({"error": f"no consent request {request_id}"}, status=404)
    except BrokerDenied as exc:
        return web.json_response({"error": exc.message}, status=409)
    return web.json_response(resolved.to_json())


async def handle_cancel_infobar(request: web.Request) -> web.Response:
    """The operator's stand-in for the user's infobar cancel: force-detach."""
    broker: DebuggerBroker = request.app[BROKER_KEY]
    extension_id = request.match_info["extension_id"]
    detached = broker.cancel_infobar(extension_id)
    return web.json_response({"extensionId": extension_id, "detached": detached})


def _frame(kind: str, payload: dict) -> dict:
    key = {"audit": "record", "consent": "request", "infobar": "infobar"}[kind]
    return {"kind": kind, key: payload}


async def handle_events_ws(request: web.Request) -> web.WebSocketResponse:
    broker: DebuggerBroker = request.app[BROKER_KEY]
    ws = web.WebSocketResponse()
    await ws.prepare(request)

    loop = asyncio.get_running_loop()
    queue: asyncio.Queue = asyncio.Queue()

    def listener(kind: str, payload: dict) -> None:
        loop.call_soon_threadsafe(queue.put_nowait, _frame(kind, payload))

    # Replay current state, then go live. The seq field lets clients detect gaps.
    for ext_id, entry in broker.infobar_state().items():
        await ws.send_json(_frame("infobar", {"extensionId": ext_id, **entry}))
    for pending in broker.pending_consents():
        await ws.send_json(_frame("consent", pending))
    for record in broker.audit_records[-AUDIT_REPLAY_LIMIT:]:
        await ws.send_json(_frame("audit", record.to_json()))

    broker.add_listener(listener)
    consumer = asyncio.ensure_future(_drain_incoming(ws))
    try:
        while not ws.closed:
            getter = asyncio.ensure_future(queue.get())
            done, _ = await asyncio.wait(
                {getter, consumer}, return_when=asyncio.FIRST_COMPLETED
            )
            if getter in done:
                await ws.send_json(getter.result())
            else:
                getter.cancel()
                break
    finally:
        consumer.cancel()
        broker.remove_listener(listener)
    return ws


async def _drain_incoming(ws: web.WebSocketResponse) -> None:
    async for message in ws:
        if message.type in (WSMsgType.CLOSE, WSMsgType.ERROR):
            break


async def handle_client_ws(request: web.Request) -> web.WebSocketResponse:
    broker: DebuggerBroker = request.app[BROKER_KEY]
    extension_id = request.match_info["extension_id"]
    node = broker.world.find_extension_by_id(extension_id)

    ws = web.WebSocketResponse()
    await ws.prepare(request)
    if node is None:
        await ws.send_json({"ok": False, "error": {"reason": "UNKNOWN_EXTENSION"}})
        await ws.close()
        return ws
    ext = node.record

    loop = asyncio.get_running_loop()
    async for message in ws:
        if message.type != WSMsgType.TEXT:
            continue
        try:
            op = json.loads(message.data)
        except json.JSONDecodeError:
            await ws.send_json({"ok": False, "error": {"reason": "BAD_FRAME"}})
            continue
        reply = await loop.run_in_executor(None, _execute_client_op, broker, ext, op)
        await ws.send_json(reply)
    return ws


def _execute_client_op(broker: DebuggerBroker, ext, op: dict) -> dict:
    try:
        kind = op.get("op")
        if kind == "getTargets":
            targets = broker.get_targets(ext)
            return {"ok": True, "result": [t.to_json() for t in targets]}
        if kind == "attach":
            ref = ByTabId(int(op["tabId"])) if "tabId" in op else ByTargetId(str(op["targetId"]))
            key = broker.attach(ext, ref, op.get("version", "1.3"))
            return {"ok": True, "result": {"targetId": key[1]}}
        if kind == "sendCommand":
            key = (ext.id, str(op["targetId"]))
            stream = broker.subscribe_events(key)
            result = broker.send_command(
                key, op["method"], op.get("params"), session_id=op.get("sessionId")
            )
            events = [json.loads(serialize_message(e)) for e in stream.drain()]
            return {"ok": True, "result": result, "events": events}
        if kind == "detach":
            broker.detach((ext.id, str(op["targetId"])))
            return {"ok": True, "result": {}}
        return {"ok": False, "error": {"reason": "UNKNOWN_OP", "message": str(kind)}}
    except BrokerDenied as denied:
        return {"ok": False, "error": {"reason": denied.reason, "message": denied.message}}
    except CommandError as exc:
        return {"ok": False, "error": {"reason": str(exc.code), "message": exc.message}}
    except (KeyError, ValueError) as exc:
        return {"ok": False, "error": {"reason": "BAD_FRAME", "message": str(exc)}}


def serve_forever(
    host: str,
    port: int,
    world_spec: dict,
    policy: PolicyConfig,
    consent: str = "auto-allow",
    audit_path: Optional[str] = None,
) -> None:
    """Run the control API until interrupted; raises OSError if the bind fails."""
    broker = build_broker(world_spec, policy, consent, audit_path)
    app = build_app(broker)
    web.run_app(app, host=host, port=port, print=None, handle_signals=True)
