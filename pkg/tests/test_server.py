import asyncio
import base64

import aiohttp
from aiohttp import web

from decision_table import ALLOWLIST
from warden.broker import ConsentMode, DebuggerBroker
from warden.clock import LogicalClock
from warden.policy import HardenedConfig, PolicyConfig, PolicyMode
from warden.server import build_app
from warden.world import build_world

ATTACKER_KEY = base64.b64encode(b"client-extension-key").decode()


def world_spec():
    return {
        "contexts": [
            {"id": "default", "incognito": False},
            {"id": "incog", "incognito": True},
        ],
        "tabs": [
            {"url": "https://bank.example/login", "data": {"password": "hunter2"},
             "traffic": [{"requestId": "r1", "url": "https://bank.example/api"}]},
            {"url": "https://mail.example/", "context": "incog"},
        ],
        "extensions": [
            {
                "name": "Client Probe",
                "origin": "store-signed",
                "key": ATTACKER_KEY,
                "permissions": ["debugger"],
            }
        ],
        "cookies": [{"name": "sid", "value": "abc", "domain": "bank.example"}],
    }


def make_broker(policy=None, consent=ConsentMode.AUTO_ALLOW):
    world = build_world(world_spec())
    return DebuggerBroker(world, policy or PolicyConfig(allow=ALLOWLIST), LogicalClock(), consent)


def run_with_server(broker, coro_factory):
    async def runner():
        app = build_app(broker)
        server_runner = web.AppRunner(app)
        await server_runner.setup()
        site = web.TCPSite(server_runner, "127.0.0.1", 0)
        await site.start()
        port = site._server.sockets[0].getsockname()[1]
        base = f"http://127.0.0.1:{port}"
        try:
            async with aiohttp.ClientSession() as session:
                return await coro_factory(session, base)
        finally:
            await server_runner.cleanup()

    return asyncio.run(runner())


def extension_id():
    from warden.identity import derive_id_from_key

    return derive_id_from_key(b"client-extension-key")


async def _pending_consent_id(events_ws, timeout: float = 1.0) -> str:
    # The pending request must surface on the event stream within one second.
    async def poll():
        while True:
            frame = await events_ws.receive_json()
            if frame["kind"] == "consent" and frame["request"]["state"] == "pending":
                return frame["request"]["requestId"]

    return await asyncio.wait_for(poll(), timeout=timeout)


def test_rest_snapshots():
    broker = make_broker()

    async def scenario(session, base):
        async with session.get(f"{base}/api/targets") as resp:
            targets = await resp.json()
        async with session.get(f"{base}/api/extensions") as resp:
            extensions = await resp.json()
        async with session.get(f"{base}/api/sessions") as resp:
            sessions = await resp.json()
        async with session.get(f"{base}/api/policy") as resp:
            policy = await resp.json()
        return targets, extensions, sessions, policy

    targets, extensions, sessions, policy = run_with_server(broker, scenario)
    assert {t["targetId"] for t in targets} == {"t1", "t2", "t3"}
    assert extensions[0]["id"] == extension_id()
    assert sessions == []
    assert policy["mode"] == "legacy"


def test_put_policy_swaps_mode():
    broker = make_broker()

    async def scenario(session, base):
        body = broker.policy.to_json()
        body["mode"] = "hardened"
        async with session.put(f"{base}/api/policy", json=body) as resp:
            updated = await resp.json()
        async with session.put(f"{base}/api/policy", data="{bad json") as resp:
            bad_status = resp.status
        return updated, bad_status

    updated, bad_status = run_with_server(broker, scenario)
    assert updated["mode"] == "hardened"
    assert broker.policy.mode is PolicyMode.HARDENED
    assert bad_status == 400


def test_client_ws_attach_and_cookie_read():
    broker = make_broker()

    async def scenario(session, base):
        async with session.ws_connect(f"{base}/client/{extension_id()}") as ws:
            await ws.send_json({"op": "getTargets"})
            targets = await ws.receive_json()
            await ws.send_json({"op": "attach", "targetId": "t1"})
            attach = await ws.receive_json()
            await ws.send_json(
                {"op": "sendCommand", "targetId": "t1", "method": "Network.getAllCookies"}
            )
            cookies = await ws.receive_json()
            await ws.send_json(
                {"op": "sendCommand", "targetId": "t1", "method": "Fetch.enable"}
            )
            fetch = await ws.receive_json()
            await ws.send_json({"op": "detach", "targetId": "t1"})
            detach = await ws.receive_json()
        return targets, attach, cookies, fetch, detach

    targets, attach, cookies, fetch, detach = run_with_server(broker, scenario)
    assert targets["ok"] and len(targets["result"]) == 3
    assert attach["ok"] and attach["result"]["targetId"] == "t1"
    assert cookies["ok"] and cookies["result"]["cookies"][0]["name"] == "sid"
    assert fetch["ok"] and len(fetch["events"]) == 2
    assert detach["ok"]


def test_client_ws_unknown_extension_rejected():
    broker = make_broker()

    async def scenario(session, base):
        async with session.ws_connect(f"{base}/client/{'a' * 32}") as ws:
            return await ws.receive_json()

    reply = run_with_server(broker, scenario)
    assert not reply["ok"]
    assert reply["error"]["reason"] == "UNKNOWN_EXTENSION"


def test_client_ws_policy_denial_passes_through():
    broker = make_broker()

    async def scenario(session, base):
        async with session.ws_connect(f"{base}/client/{extension_id()}") as ws:
            await ws.send_json({"op": "attach", "tabId": 2})  # incognito via tab id
            return await ws.receive_json()

    reply = run_with_server(broker, scenario)
    assert not reply["ok"]
    assert reply["error"]["message"] == "No tab with given id"


def test_consent_manual_allow_roundtrip():
    ext = extension_id()
    policy = PolicyConfig(
        mode=PolicyMode.HARDENED,
        allow=ALLOWLIST,
        hardened=HardenedConfig(
            consent_required=True, domain_grants={ext: frozenset({"Runtime"})}
        ),
    )
    broker = make_broker(policy=policy, consent=ConsentMode.MANUAL)

    async def scenario(session, base):
        async with session.ws_connect(f"{base}/api/events") as events_ws:
            async with session.ws_connect(f"{base}/client/{ext}") as client_ws:
                await client_ws.send_json({"op": "attach", "targetId": "t1"})
                request_id = await _pending_consent_id(events_ws)

                async with session.post(
                    f"{base}/api/consent/{request_id}", json={"decision": "allow"}
                ) as resp:
                    consent_status = resp.status
                attach_reply = await client_ws.receive_json()

                async with session.post(
                    f"{base}/api/consent/{request_id}", json={"decision": "deny"}
                ) as resp:
                    double_status = resp.status
        return consent_status, attach_reply, double_status

    consent_status, attach_reply, double_status = run_with_server(broker, scenario)
    assert consent_status == 200
    assert attach_reply["ok"] and attach_reply["result"]["targetId"] == "t1"
    assert double_status == 409  # decisions are final


def test_consent_manual_deny_yields_consent_denied():
    ext = extension_id()
    policy = PolicyConfig(
        mode=PolicyMode.HARDENED,
        allow=ALLOWLIST,
        hardened=HardenedConfig(consent_required=True),
    )
    broker = make_broker(policy=policy, consent=ConsentMode.MANUAL)

    async def scenario(session, base):
        async with session.ws_connect(f"{base}/api/events") as events_ws:
            async with session.ws_connect(f"{base}/client/{ext}") as client_ws:
                await client_ws.send_json({"op": "attach", "targetId": "t1"})
                request_id = await _pending_consent_id(events_ws)
                await session.post(
                    f"{base}/api/consent/{request_id}", json={"decision": "deny"}
                )
                return await client_ws.receive_json()

    reply = run_with_server(broker, scenario)
    assert not reply["ok"]
    assert reply["error"]["reason"] == "CONSENT_DENIED"


def test_events_stream_audit_frames_are_gapless_during_burst():
    broker = make_broker()
    ext_node = broker.world.extension_nodes[0]

    async def scenario(session, base):
        async with session.ws_connect(f"{base}/api/events") as events_ws:
            loop = asyncio.get_running_loop()

            def burst():
                for _ in range(100):
                    broker.get_targets(ext_node.record)

            await loop.run_in_executor(None, burst)

            async def collect():
                seqs = []
                while len(seqs) < 100:
                    frame = await events_ws.receive_json()
                    if frame["kind"] == "audit":
                        seqs.append(frame["record"]["seq"])
                return seqs

            return await asyncio.wait_for(collect(), timeout=10)

    seqs = run_with_server(broker, scenario)
    assert len(seqs) == 100
    assert seqs == sorted(seqs)
    assert seqs == list(range(seqs[0], seqs[0] + 100))


def test_events_stream_replays_current_state_on_connect():
    broker = make_broker()
    ext_node = broker.world.extension_nodes[0]
    from warden.policy import ByTargetId

    broker.attach(ext_node.record, ByTargetId("t1"))

    async def scenario(session, base):
        async with session.ws_connect(f"{base}/api/events") as events_ws:

            async def collect():
                frames = []
                while len(frames) < 2:
                    frames.append(await events_ws.receive_json())
                return frames

            return await asyncio.wait_for(collect(), timeout=5)

    frames = run_with_server(broker, scenario)
    kinds = [f["kind"] for f in frames]
    assert "infobar" in kinds
    assert "audit" in kinds
