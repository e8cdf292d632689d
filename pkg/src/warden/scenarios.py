"""Scenario harness: load attack scripts, drive them through the broker,
compute achieved-capability vectors and violated-requirement sets.

A scenario bundles a world, an attacker extension, initial flags, an ordered
step list, and per-policy expected outcomes. Step errors are recorded, not
fatal: attacks probe. Runs are deterministic (logical clock, fresh world).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from .broker import AuditRecord, BrokerDenied, ConsentMode, DebuggerBroker
from .browser import CommandError
from .clock import LogicalClock
from .codec import CdpMessage
from .identity import AllowlistConfig, ExtensionRecord
from .policy import (
    ByTabId,
    ByTargetId,
    HardenedConfig,
    LegacyFixes,
    PolicyConfig,
    PolicyFlags,
    PolicyMode,
    SR01_INSTALL,
    SR01_RUNTIME,
)
from .world import SchemaError, build_extension_record, build_world

CAPABILITY_COLUMNS = (
    "listTabs",
    "evalTabs",
    "interceptTabs",
    "listExtensions",
    "evalExtensions",
    "interceptExtensions",
    "stealCookies",
    "stealCardsPasswords",
    "changeSettingsFlags",
    "recordTraces",
)

NONE, PARTIAL, FULL = "none", "partial", "full"
_LEVELS = (NONE, PARTIAL, FULL)
_SYMBOLS = {NONE: "○", PARTIAL: "◐", FULL: "●"}

STEP_OPS = (
    "getTargets",
    "attach",
    "sendCommand",
    "evalViaScriptingApi",
    "bindingSend",
    "cancelInfobarAsUser",
    "sleep",
)

# Hardened-mode defaults for scenario runs: no grants, cooldown on,
# sideloaded extensions untrusted, consent resolved automatically.
DEFAULT_HARDENED = HardenedConfig(reattach_cooldown_ms=5000, trusted_origins_only=True)


def _data_file(*parts: str):
    node = resources.files("warden").joinpath("data")
    for part in parts:  # single-child joins keep 3.10 compatibility
        node = node.joinpath(part)
    return node


def default_allowlist() -> AllowlistConfig:
    with _data_file("allowlist.json").open(encoding="utf-8") as fh:
        return AllowlistConfig.from_json(json.load(fh))


@dataclass(frozen=True)
class CapabilityVector:
    values: tuple

    def __post_init__(self) -> None:
        if len(self.values) != len(CAPABILITY_COLUMNS):
            raise ValueError("capability vector needs one value per column")
        for value in self.values:
            if value not in _LEVELS:
                raise ValueError(f"bad capability level {value!r}")

    @classmethod
    def from_dict(cls, obj: dict) -> "CapabilityVector":
        return cls(tuple(obj[col] for col in CAPABILITY_COLUMNS))

    def to_json(self) -> dict:
        return dict(zip(CAPABILITY_COLUMNS, self.values))

    def symbols(self) -> str:
        return " ".join(_SYMBOLS[v] for v in self.values)

    def __getitem__(self, column: str) -> str:
        return self.values[CAPABILITY_COLUMNS.index(column)]


ALL_NONE = CapabilityVector(tuple(NONE for _ in CAPABILITY_COLUMNS))


@dataclass
class StepResult:
    index: int
    op: str
    ok: bool
    error: Optional[str] = None
    message: Optional[str] = None
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "op": self.op,
            "ok": self.ok,
            "error": self.error,
            "message": self.message,
            "detail": self.detail,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StepResult":
        return cls(
            index=obj["index"],
            op=obj["op"],
            ok=obj["ok"],
            error=obj["error"],
            message=obj["message"],
            detail=obj["detail"],
        )


@dataclass
class Outcome:
    scenario: str
    mode: str
    flags: PolicyFlags
    capability: CapabilityVector
    violated_srs: frozenset
    step_results: list
    audit: list

    def to_json(self) -> dict:
        return {
            "scenario": self.scenario,
            "mode": self.mode,
            "flags": self.flags.to_json(),
            "capability": self.capability.to_json(),
            "violatedSRs": sorted(self.violated_srs),
            "steps": [s.to_json() for s in self.step_results],
            "audit": [r.to_json() for r in self.audit],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Outcome":
        return cls(
            scenario=obj["scenario"],
            mode=obj["mode"],
            flags=PolicyFlags.from_json(obj["flags"]),
            capability=CapabilityVector.from_dict(obj["capability"]),
            violated_srs=frozenset(obj["violatedSRs"]),
            step_results=[StepResult.from_json(s) for s in obj["steps"]],
            audit=[AuditRecord.from_json(r) for r in obj["audit"]],
        )


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    threat_model: str
    world: dict
    attacker: dict
    flags: PolicyFlags
    steps: tuple
    expects: dict

    @classmethod
    def from_dict(cls, obj: dict, allowlist: Optional[AllowlistConfig] = None) -> "ScenarioSpec":
        for key in ("name", "threatModel", "world", "attacker", "steps"):
            if key not in obj:
                raise SchemaError(f"scenario is missing {key!r}")
        threat_model = obj["threatModel"]
        if threat_model not in ("TMA", "TMB"):
            raise SchemaError(f"unknown threat model {threat_model!r}")

        attacker = build_extension_record(obj["attacker"])
        if threat_model == "TMA" and not attacker.origin.is_trusted:
            raise SchemaError("TMA attackers must be store-signed")
        if threat_model == "TMB" and not attacker.origin.is_sideloaded:
            raise SchemaError("TMB attackers must be sideloaded")
        allow = allowlist if allowlist is not None else default_allowlist()
        if threat_model == "TMA" and allow.contains(attacker.id):
            raise SchemaError("store-signed attackers may not carry an allowlisted id")

        steps = tuple(obj["steps"])
        for step in steps:
            if step.get("op") not in STEP_OPS:
                raise SchemaError(f"unknown step op {step.get('op')!r}")

        return cls(
            name=obj["name"],
            threat_model=threat_model,
            world=obj["world"],
            attacker=obj["attacker"],
            flags=PolicyFlags.from_json(obj.get("flags", {})),
            steps=steps,
            expects=obj.get("expects", {}),
        )

    @classmethod
    def load(cls, path: str, allowlist: Optional[AllowlistConfig] = None) -> "ScenarioSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), allowlist)


CANONICAL_NAMES = ("A1", "A2", "A3", "A4", "A5", "A6")


def load_canonical_scenario(name: str, allowlist: Optional[AllowlistConfig] = None) -> ScenarioSpec:
    if name not in CANONICAL_NAMES:
        raise SchemaError(f"unknown canonical scenario {name!r}")
    with _data_file("scenarios", f"{name}.json").open(encoding="utf-8") as fh:
        return ScenarioSpec.from_dict(json.load(fh), allowlist)


def load_fixture(name: str) -> dict:
    with _data_file("fixtures", f"{name}.json").open(encoding="utf-8") as fh:
        return json.load(fh)


class _ScenarioRunner:
    def __init__(self, spec: ScenarioSpec, broker: DebuggerBroker, attacker: ExtensionRecord):
        self.spec = spec
        self.broker = broker
        self.attacker = attacker
        self.world = broker.world
        self.sessions: dict = {}  # label -> session key
        self.escalated: dict = {}  # label -> routed target id
        self.results: list = []

    # -- helpers ---------------------------------------------------------

    def _class_of_target(self, target_id: str) -> str:
        if target_id == "browser":
            return "browser_target"
        node = self.world.find_node(target_id)
        return node.privilege.kind.value if node is not None else "unknown"

    def _is_foreign_extension(self, target_id: str) -> bool:
        node = self.world.find_extension_node(target_id)
        return node is not None and node.record.id != self.attacker.id

    def _is_incognito(self, target_id: str) -> bool:
        node = self.world.find_node(target_id)
        return bool(node is not None and node.incognito)

    @staticmethod
    def _eval_op(params: Optional[dict]) -> Optional[str]:
        expression = (params or {}).get("expression", "")
        return expression.split(" ", 1)[0] if expression else None

    def _ref(self, step: dict):
        if "tabId" in step:
            return ByTabId(int(step["tabId"]))
        if "targetId" in step:
            return ByTargetId(str(step["targetId"]))
        raise SchemaError(f"attach step needs tabId or targetId: {step}")

    # -- step executors --------------------------------------------------

    def run_step(self, index: int, step: dict) -> StepResult:
        op = step["op"]
        result = StepResult(index=index, op=op, ok=True)
        try:
            getattr(self, f"_op_{_snake(op)}")(step, result)
        except BrokerDenied as denied:
            result.ok = False
            result.error = denied.reason
            result.message = denied.message
        except CommandError as exc:
            result.ok = False
            result.error = getattr(exc, "label", None) or str(exc.code)
            result.message = exc.message
        self.results.append(result)
        return result

    def _op_get_targets(self, step: dict, result: StepResult) -> None:
        targets = self.broker.get_targets(self.attacker)
        record = self.broker.audit_records[-1]
        tabs = [t for t in targets if t.owner_extension_id is None]
        foreign = [
            t
            for t in targets
            if t.owner_extension_id is not None and t.owner_extension_id != self.attacker.id
        ]
        result.detail = {
            "tabCount": len(tabs),
            "foreignExtensionCount": len(foreign),
            "incognitoCount": sum(1 for t in targets if t.incognito),
            "annotated": bool(record.violated_srs),
            "listedTargetIds": [t.target_id for t in targets],
        }

    def _op_attach(self, step: dict, result: StepResult) -> None:
        ref = self._ref(step)
        target_id = step.get("targetId") or ""
        result.detail = {
            "targetId": target_id,
            "targetClass": self._class_of_target(target_id) if target_id else "unknown",
        }
        key = self.broker.attach(self.attacker, ref, step.get("version", "1.3"))
        label = step.get("as") or f"session{len(self.sessions)}"
        self.sessions[label] = key
        result.detail.update(
            {
                "label": label,
                "targetId": key[1],
                "targetClass": self._class_of_target(key[1]),
                "incognito": self._is_incognito(key[1]),
            }
        )

    def _op_send_command(self, step: dict, result: StepResult) -> None:
        label = step.get("session")
        if label not in self.sessions:
            result.detail = {"method": step.get("method")}
            raise BrokerDenied("SESSION_CLOSED", f"no session bound to label {label!r}")
        key = self.sessions[label]
        method = step["method"]
        target_id = key[1]
        is_browser = target_id == "browser"
        detail = {
            "method": method,
            "targetId": target_id,
            "targetClass": self._class_of_target(target_id),
            "incognito": self._is_incognito(target_id),
            "foreignExtension": self._is_foreign_extension(target_id),
            "browserSession": is_browser,
            "evalOp": self._eval_op(step.get("params")) if method == "Runtime.evaluate" else None,
        }
        result.detail = detail
        stream = self.broker.subscribe_events(key)
        outcome = self.broker.send_command(
            key, method, step.get("params"), session_id=step.get("sessionId")
        )
        events = stream.drain()
        detail["eventCount"] = len(events)
        if method == "Fetch.enable":
            detail["fetchScope"] = "browser" if is_browser else "tab"
        if method == "Network.getAllCookies":
            detail["cookieCount"] = len(outcome.get("cookies", []))
        if method == "Tracing.end":
            detail["traceReturned"] = "trace" in outcome
        if method == "Runtime.evaluate":
            detail["value"] = outcome.get("result", {}).get("value")

    def _op_eval_via_scripting_api(self, step: dict, result: StepResult) -> None:
        url = step["url"]
        expression = step["expression"]
        tab = self.world.find_tab_by_url(url)
        result.detail = {
            "url": url,
            "targetClass": tab.privilege.kind.value if tab else "unknown",
            "evalOp": self._eval_op({"expression": expression}),
        }
        value = self.broker.run_script(self.attacker, url, expression)
        result.detail["value"] = value

    def _op_binding_send(self, step: dict, result: StepResult) -> None:
        proxy = step["proxy"]
        raw = dict(step["message"])
        session_label = None
        if isinstance(raw.get("sessionId"), str) and raw["sessionId"].startswith("$"):
            session_label = raw["sessionId"][1:]
            if session_label not in self.escalated:
                raise BrokerDenied("SESSION_CLOSED", f"no escalated session {session_label!r}")
            raw["sessionId"] = self.escalated[session_label][0]

        msg = CdpMessage.command(
            raw.get("id", 1), raw["method"], raw.get("params"), raw.get("sessionId")
        )
        routed_target = (
            self.escalated[session_label][1]
            if session_label is not None
            else (msg.params or {}).get("targetId")
        )
        detail = {
            "method": msg.method,
            "sessionRouted": msg.session_id is not None,
            "targetId": routed_target,
            "targetClass": self._class_of_target(routed_target) if routed_target else "browser",
            "incognito": self._is_incognito(routed_target) if routed_target else False,
            "foreignExtension": self._is_foreign_extension(routed_target) if routed_target else False,
            "evalOp": self._eval_op(msg.params) if msg.method == "Runtime.evaluate" else None,
        }
        result.detail = detail

        tab = self.world.find_tab(proxy)
        channel = tab.bindings.get(step.get("binding", "cdp")) if tab else None
        events_before = len(channel.events) if channel else 0

        reply = self.broker.binding_send(self.attacker, proxy, msg, step.get("binding", "cdp"))
        if reply.error is not None:
            result.ok = False
            result.error = str(reply.error.get("code"))
            result.message = reply.error.get("message")
            return

        if channel is not None:
            detail["eventCount"] = len(channel.events) - events_before
        if msg.method == "Fetch.enable":
            detail["fetchScope"] = "tab" if msg.session_id else "browser"
        if msg.method == "Network.getAllCookies":
            detail["cookieCount"] = len(reply.result.get("cookies", []))
        if msg.method == "Tracing.end":
            detail["traceReturned"] = "trace" in reply.result
        if msg.method == "Runtime.evaluate":
            detail["value"] = reply.result.get("result", {}).get("value")
        if msg.method == "Target.attachToTarget":
            save_as = step.get("saveSessionIdAs")
            if save_as:
                self.escalated[save_as] = (reply.result["sessionId"], routed_target)
                detail["savedAs"] = save_as

    def _op_cancel_infobar_as_user(self, step: dict, result: StepResult) -> None:
        result.detail = {"detached": self.broker.cancel_infobar(self.attacker.id)}

    def _op_sleep(self, step: dict, result: StepResult) -> None:
        ms = int(step.get("ms", 0))
        self.broker.clock.advance(ms)
        result.detail = {"ms": ms}


def _snake(op: str) -> str:
    out = []
    for ch in op:
        if ch.isupper():
            out.append("_")
            out.append(ch.lower())
        else:
            out.append(ch)
    return "".join(out)


def compute_capability(results: list) -> CapabilityVector:
    """Derive the achieved-capability vector from recorded step results."""
    tab_classes = set()
    fetch_browser = False
    fetch_tab = False
    fetch_foreign_ext = False
    eval_foreign_ext = False
    listed_tabs = False
    listed_extensions = False
    stole_cookies = False
    read_webui = False
    wrote_webui = False
    traced = False

    tab_kinds = {"regular", "interstitial", "webui", "file", "unknown"}

    for r in results:
        if not r.ok:
            continue
        d = r.detail
        if r.op == "getTargets" and d.get("annotated"):
            listed_tabs = listed_tabs or d.get("tabCount", 0) > 0
            listed_extensions = listed_extensions or d.get("foreignExtensionCount", 0) > 0
            continue

        is_eval = d.get("evalOp") is not None
        cls = d.get("targetClass")
        if is_eval:
            if d.get("foreignExtension"):
                eval_foreign_ext = True
            elif cls in tab_kinds:
                tab_classes.add(cls)
            if cls == "webui" and d["evalOp"] == "get":
                read_webui = True
            if cls == "webui" and d["evalOp"] == "set":
                wrote_webui = True

        if d.get("fetchScope") == "browser":
            fetch_browser = True
        elif d.get("fetchScope") == "tab":
            if d.get("foreignExtension"):
                fetch_foreign_ext = True
            elif cls in tab_kinds:
                fetch_tab = True

        if d.get("cookieCount", 0) > 0:
            stole_cookies = True
        if d.get("traceReturned"):
            traced = True

    if "webui" in tab_classes:
        eval_tabs = FULL
    elif tab_classes & {"regular", "interstitial"}:
        eval_tabs = PARTIAL
    else:
        eval_tabs = NONE

    if fetch_browser:
        intercept_tabs = FULL
    elif fetch_tab:
        intercept_tabs = PARTIAL
    else:
        intercept_tabs = NONE

    values = {
        "listTabs": FULL if listed_tabs else NONE,
        "evalTabs": eval_tabs,
        "interceptTabs": intercept_tabs,
        "listExtensions": FULL if listed_extensions else NONE,
        "evalExtensions": FULL if eval_foreign_ext else NONE,
        "interceptExtensions": FULL if (fetch_foreign_ext or fetch_browser) else NONE,
        "stealCookies": FULL if stole_cookies else NONE,
        "stealCardsPasswords": FULL if read_webui else NONE,
        "changeSettingsFlags": FULL if wrote_webui else NONE,
        "recordTraces": FULL if traced else NONE,
    }
    return CapabilityVector.from_dict(values)


def sr_report(audit_records: list) -> frozenset:
    """Compute the violated-requirement set from audit records alone.

    Install-time awareness comes from the install record. Runtime awareness
    holds when a silently-flagged attach happened, or when an annotated
    listing ran and no infobar-producing attach ever did. Isolation, access
    control, and spoofing annotations are unioned from allowed records.
    """
    srs = set()
    attach_succeeded = False
    silent_attach = False
    annotated_listing = False

    for record in audit_records:
        if not record.allowed:
            continue
        if record.action == "install" and SR01_INSTALL in record.violated_srs:
            srs.add(SR01_INSTALL)
        if record.action == "attach":
            attach_succeeded = True
            if SR01_RUNTIME in record.violated_srs:
                silent_attach = True
        if record.action == "getTargets" and SR01_RUNTIME in record.violated_srs:
            annotated_listing = True
        srs.update(record.violated_srs & {"SR02", "SR03", "SR04"})

    if silent_attach or (annotated_listing and not attach_succeeded):
        srs.add(SR01_RUNTIME)
    return frozenset(srs)


def run_scenario(
    spec: ScenarioSpec,
    mode: PolicyMode,
    *,
    flag_overrides: Optional[PolicyFlags] = None,
    fixes: Optional[LegacyFixes] = None,
    allowlist: Optional[AllowlistConfig] = None,
    hardened: Optional[HardenedConfig] = None,
) -> Outcome:
    """Run one scenario on a fresh world and broker; never raises for step errors."""
    allow = allowlist if allowlist is not None else default_allowlist()
    flags = flag_overrides if flag_overrides is not None else spec.flags
    policy = PolicyConfig(
        mode=mode,
        flags=flags,
        allow=allow,
        fixes=fixes or LegacyFixes(),
        hardened=hardened if hardened is not None else DEFAULT_HARDENED,
    )

    world = build_world(spec.world)
    attacker = build_extension_record(spec.attacker)
    world.add_extension(attacker)

    broker = DebuggerBroker(world, policy, LogicalClock(), ConsentMode.AUTO_ALLOW)
    broker.record_install(attacker)

    runner = _ScenarioRunner(spec, broker, attacker)
    for index, step in enumerate(spec.steps):
        runner.run_step(index, step)

    return Outcome(
        scenario=spec.name,
        mode=mode.value,
        flags=flags,
        capability=compute_capability(runner.results),
        violated_srs=sr_report(broker.audit_records),
        step_results=runner.results,
        audit=list(broker.audit_records),
    )


def expected_srs(spec: ScenarioSpec, mode: PolicyMode, silent: bool) -> frozenset:
    """The scenario's expected SR set for the effective silent-flag setting."""
    expects = spec.expects.get(mode.value, {})
    base = set(expects.get("violatedSRs", []))
    if silent:
        base = set(expects.get("violatedSRsWithSilentFlag", sorted(base)))
    return frozenset(base)


def outcome_matches_expects(spec: ScenarioSpec, outcome: Outcome, mode: PolicyMode) -> list:
    """Compare an outcome to the scenario's expectations; returns mismatch strings."""
    expects = spec.expects.get(mode.value)
    if not expects:
        return [f"scenario {spec.name} has no expectations for {mode.value}"]
    problems = []

    expected_capability = CapabilityVector.from_dict(expects["capability"])
    if outcome.capability != expected_capability:
        got = outcome.capability.to_json()
        want = expected_capability.to_json()
        for col in CAPABILITY_COLUMNS:
            if got[col] != want[col]:
                problems.append(f"capability {col}: got {got[col]}, expected {want[col]}")

    silent = outcome.flags.silent_debugger_extension_api
    want_srs = expected_srs(spec, mode, silent)
    if outcome.violated_srs != want_srs:
        problems.append(
            f"violatedSRs: got {sorted(outcome.violated_srs)}, expected {sorted(want_srs)}"
        )

    if "stepOutcomes" in expects:
        got_steps = [r.ok for r in outcome.step_results]
        if got_steps != expects["stepOutcomes"]:
            problems.append(f"step outcomes: got {got_steps}, expected {expects['stepOutcomes']}")

    first_blocked = expects.get("firstBlocked")
    if first_blocked:
        index = first_blocked["step"]
        step = outcome.step_results[index]
        if step.ok:
            problems.append(f"step {index} should have been blocked, but succeeded")
        elif step.error != first_blocked["reason"]:
            problems.append(
                f"step {index} blocked with {step.error}, expected {first_blocked['reason']}"
            )
    return problems


@dataclass
class MatrixDiff:
    rows: dict
    mismatches: list

    @property
    def clean(self) -> bool:
        return not self.mismatches


def capability_matrix(
    mode: PolicyMode,
    fixture: dict,
    *,
    scenarios: Optional[dict] = None,
    allowlist: Optional[AllowlistConfig] = None,
    flag_overrides: Optional[PolicyFlags] = None,
    fixes: Optional[LegacyFixes] = None,
) -> MatrixDiff:
    """Run every canonical scenario, diff the matrix against a fixture."""
    rows = {}
    for name in CANONICAL_NAMES:
        spec = (
            scenarios[name]
            if scenarios is not None
            else load_canonical_scenario(name, allowlist)
        )
        outcome = run_scenario(
            spec, mode, allowlist=allowlist, flag_overrides=flag_overrides, fixes=fixes
        )
        rows[name] = outcome.capability

    mismatches = []
    for name, vector in rows.items():
        expected = fixture["rows"][name]
        for position, column in enumerate(CAPABILITY_COLUMNS):
            if vector.values[position] != expected[position]:
                mismatches.append(
                    {
                        "scenario": name,
                        "column": column,
                        "got": vector.values[position],
                        "expected": expected[position],
                    }
                )
    return MatrixDiff(rows=rows, mismatches=mismatches)


def render_matrix(rows: dict) -> str:
    header = ["scenario".ljust(10)] + [c for c in CAPABILITY_COLUMNS]
    lines = ["  ".join(header)]
    for name, vector in rows.items():
        cells = [name.ljust(10)]
        for column, value in zip(CAPABILITY_COLUMNS, vector.values):
            cells.append(_SYMBOLS[value].center(len(column)))
        lines.append("  ".join(cells))
    return "\n".join(lines)
