import pytest

from decision_table import ALLOWLIST, CLASS_TARGETS, cells, probe_extension, table_world
from warden.codec import CdpMessage
from warden.identity import ExtensionOrigin, ExtensionRecord, derive_id_from_key
from warden.policy import (
    DOMAIN_NOT_GRANTED,
    DOMAIN_UNAVAILABLE,
    INCOGNITO_DENIED,
    MISSING_PERMISSION,
    NO_TAB_WITH_GIVEN_ID,
    RESTRICTED_URL,
    SESSIONID_FORBIDDEN,
    SR01_INSTALL,
    SR02,
    SR03,
    SR04,
    UNKNOWN_TARGET,
    UNTRUSTED_ORIGIN,
    ByTabId,
    ByTargetId,
    Decision,
    HardenedConfig,
    PolicyConfig,
    PolicyFlags,
    PolicyMode,
    annotate_install,
    may_attach,
    may_run_script,
    may_send_command,
)
from warden.world import build_world


def legacy_policy(flag_on=False, **fixes) -> PolicyConfig:
    from warden.policy import LegacyFixes

    return PolicyConfig(
        mode=PolicyMode.LEGACY,
        flags=PolicyFlags(extensions_on_chrome_urls=flag_on),
        allow=ALLOWLIST,
        fixes=LegacyFixes(**fixes),
    )


def hardened_policy(**kwargs) -> PolicyConfig:
    return PolicyConfig(
        mode=PolicyMode.HARDENED, allow=ALLOWLIST, hardened=HardenedConfig(**kwargs)
    )


@pytest.mark.parametrize(
    "cell", cells(), ids=lambda c: f"{c.target_class}-flag{int(c.flag_on)}-{c.allowlisted}"
)
def test_decision_table(cell):
    world = table_world()
    ext = probe_extension(cell.allowlisted)
    policy = legacy_policy(flag_on=cell.flag_on)

    target_id, url = CLASS_TARGETS[cell.target_class]
    attach = may_attach(ext, ByTargetId(target_id), world, policy)
    assert attach.allowed == cell.attach.allowed, f"attach mismatch for {cell}"
    if not cell.attach.allowed:
        assert attach.reason == cell.attach.reason
        assert attach.violated_srs == frozenset()
    else:
        assert attach.violated_srs == cell.attach.srs

    if cell.script is not None:
        script = may_run_script(ext, url, policy)
        assert script.allowed == cell.script.allowed, f"script mismatch for {cell}"
        if not cell.script.allowed:
            assert script.reason == cell.script.reason
        else:
            assert script.violated_srs == cell.script.srs


INCOG_WORLD_SPEC = {
    "contexts": [
        {"id": "default", "incognito": False},
        {"id": "incog", "incognito": True},
    ],
    "tabs": [
        {"url": "https://site.example/page"},
        {"url": "https://mail.example/inbox", "context": "incog"},
    ],
}


def test_incognito_asymmetry_tab_id_vs_target_id():
    world = build_world(INCOG_WORLD_SPEC)
    ext = probe_extension("none")
    policy = legacy_policy()

    by_tab = may_attach(ext, ByTabId(2), world, policy)
    assert not by_tab.allowed
    assert by_tab.reason == UNKNOWN_TARGET
    assert by_tab.message == NO_TAB_WITH_GIVEN_ID

    by_target = may_attach(ext, ByTargetId("t2"), world, policy)
    assert by_target.allowed
    assert by_target.violated_srs == frozenset({SR02})


def test_incognito_allowed_extension_attaches_both_ways():
    world = build_world(INCOG_WORLD_SPEC)
    ext = ExtensionRecord(
        id=derive_id_from_key(b"probe-plain-key"),
        name="probe",
        version="1",
        permissions=frozenset({"debugger"}),
        origin=ExtensionOrigin.SIDELOADED_UNPACKED,
        incognito_allowed=True,
    )
    policy = legacy_policy()
    assert may_attach(ext, ByTabId(2), world, policy).allowed
    decision = may_attach(ext, ByTargetId("t2"), world, policy)
    assert decision.allowed
    assert decision.violated_srs == frozenset()


def test_incognito_fix_denies_target_id_path():
    world = build_world(INCOG_WORLD_SPEC)
    ext = probe_extension("none")
    policy = legacy_policy(fix_incognito_targets=True)
    decision = may_attach(ext, ByTargetId("t2"), world, policy)
    assert not decision.allowed
    assert decision.reason == INCOGNITO_DENIED


def test_interstitial_fix_denies_attach():
    world = table_world()
    ext = probe_extension("none")
    policy = legacy_policy(fix_interstitial_attach=True)
    decision = may_attach(ext, ByTargetId("t3"), world, policy)
    assert not decision.allowed
    assert decision.reason == RESTRICTED_URL


def test_missing_permission_checked_before_target_resolution():
    world = table_world()
    ext = ExtensionRecord(
        id=derive_id_from_key(b"probe-plain-key"),
        name="probe",
        version="1",
        origin=ExtensionOrigin.SIDELOADED_UNPACKED,
    )
    decision = may_attach(ext, ByTargetId("no-such-target"), world, legacy_policy())
    assert decision.reason == MISSING_PERMISSION


def test_unknown_target_reported_after_permission():
    world = table_world()
    decision = may_attach(probe_extension("none"), ByTargetId("missing"), world, legacy_policy())
    assert decision.reason == UNKNOWN_TARGET


def test_self_extension_target_always_attachable():
    world = table_world()
    ext = probe_extension("none")
    world.add_extension(ext)
    node = world.find_extension_by_id(ext.id)
    for policy in (legacy_policy(), hardened_policy()):
        decision = may_attach(ext, ByTargetId(node.target_id), world, policy)
        assert decision.allowed
        assert decision.violated_srs == frozenset()


def test_file_access_opt_in_allows_both_modes():
    world = table_world()
    base = probe_extension("none")
    ext = ExtensionRecord(
        id=base.id,
        name=base.name,
        version="1",
        permissions=base.permissions,
        host_permissions=base.host_permissions,
        origin=base.origin,
        file_access=True,
    )
    assert may_attach(ext, ByTargetId("t2"), world, legacy_policy()).allowed
    assert may_attach(ext, ByTargetId("t2"), world, hardened_policy()).allowed


def test_hardened_exhaustive_non_regular_classes_denied():
    world = table_world()
    policy = hardened_policy()
    for allowlisted in ("none", "scripting", "browser"):
        ext = probe_extension(allowlisted)
        for target_class, (target_id, _) in CLASS_TARGETS.items():
            decision = may_attach(ext, ByTargetId(target_id), world, policy)
            if target_class == "regular":
                assert decision.allowed
            else:
                assert not decision.allowed, f"{target_class} must be denied under hardened policy"
                assert decision.violated_srs == frozenset()


def test_hardened_trusted_origins_only_gate():
    world = table_world()
    policy = hardened_policy(trusted_origins_only=True)
    sideloaded = probe_extension("none")
    assert may_attach(sideloaded, ByTargetId("t1"), world, policy).reason == UNTRUSTED_ORIGIN

    store = ExtensionRecord(
        id=sideloaded.id,
        name="store-probe",
        version="1",
        permissions=frozenset({"debugger"}),
        origin=ExtensionOrigin.STORE_SIGNED,
    )
    assert may_attach(store, ByTargetId("t1"), world, policy).allowed


def test_hardened_consent_required_returns_pending():
    world = table_world()
    policy = hardened_policy(consent_required=True)
    decision = may_attach(probe_extension("none"), ByTargetId("t1"), world, policy)
    assert decision.allowed and decision.pending_consent


def test_hardened_incognito_denied_under_both_ref_forms():
    world = build_world(INCOG_WORLD_SPEC)
    ext = probe_extension("none")
    policy = hardened_policy()
    assert may_attach(ext, ByTabId(2), world, policy).reason == INCOGNITO_DENIED
    assert may_attach(ext, ByTargetId("t2"), world, policy).reason == INCOGNITO_DENIED


class _SessionStub:
    def __init__(self, ext, is_browser):
        self.extension = ext
        self.is_browser_target = is_browser


def _cmd(method, session_id=None):
    return CdpMessage.command(1, method, {}, session_id=session_id)


def test_send_command_legacy_tab_session():
    session = _SessionStub(probe_extension("none"), is_browser=False)
    policy = legacy_policy()
    assert may_send_command(session, _cmd("Network.getAllCookies"), policy).allowed
    assert may_send_command(session, _cmd("Runtime.evaluate"), policy).allowed
    denied = may_send_command(session, _cmd("Target.getTargets"), policy)
    assert denied.reason == DOMAIN_UNAVAILABLE
    assert may_send_command(session, _cmd("Tracing.start"), policy).reason == DOMAIN_UNAVAILABLE


def test_send_command_legacy_browser_session():
    session = _SessionStub(probe_extension("browser"), is_browser=True)
    policy = legacy_policy()
    assert may_send_command(session, _cmd("Tracing.start"), policy).allowed
    assert may_send_command(session, _cmd("Target.getTargets"), policy).allowed
    assert may_send_command(session, _cmd("Network.enable"), policy).reason == DOMAIN_UNAVAILABLE


def test_send_command_session_id_always_forbidden():
    policy = legacy_policy()
    for is_browser in (False, True):
        session = _SessionStub(probe_extension("none"), is_browser)
        decision = may_send_command(session, _cmd("Page.navigate", session_id="s1"), policy)
        assert decision.reason == SESSIONID_FORBIDDEN


def test_send_command_hardened_grants():
    ext = probe_extension("none")
    session = _SessionStub(ext, is_browser=False)
    policy = hardened_policy(domain_grants={ext.id: frozenset({"Runtime"})})
    assert may_send_command(session, _cmd("Runtime.evaluate"), policy).allowed
    denied = may_send_command(session, _cmd("Network.getAllCookies"), policy)
    assert denied.reason == DOMAIN_NOT_GRANTED


def test_run_script_clone_on_webui_flags_srs():
    policy = legacy_policy()
    clone = probe_extension("scripting")
    decision = may_run_script(clone, "chrome://settings", policy)
    assert decision.allowed
    assert decision.violated_srs == frozenset({SR03, SR04})


def test_run_script_component_always_allowed():
    ext = ExtensionRecord(
        id=derive_id_from_key(b"component-key"),
        name="component",
        version="1",
        origin=ExtensionOrigin.COMPONENT,
    )
    assert may_run_script(ext, "chrome://settings", legacy_policy()).allowed
    assert may_run_script(ext, "chrome://settings", hardened_policy()).allowed


def test_run_script_hardened_ignores_untrusted_clone():
    clone = probe_extension("scripting")
    decision = may_run_script(clone, "chrome://settings", hardened_policy())
    assert not decision.allowed
    assert decision.reason == RESTRICTED_URL


def test_run_script_hardened_honors_trusted_allowlisted():
    trusted = ExtensionRecord(
        id=probe_extension("scripting").id,
        name="reader",
        version="1",
        origin=ExtensionOrigin.STORE_SIGNED,
    )
    decision = may_run_script(trusted, "chrome://settings", hardened_policy())
    assert decision.allowed
    assert decision.violated_srs == frozenset()


def test_annotate_install():
    with_debugger = probe_extension("none")
    decision = annotate_install(with_debugger)
    assert decision.violated_srs == frozenset({SR01_INSTALL})
    assert "vague-install-warning" in decision.audit_tags

    component = ExtensionRecord(
        id=with_debugger.id,
        name="c",
        version="1",
        permissions=frozenset({"debugger"}),
        origin=ExtensionOrigin.COMPONENT,
    )
    assert annotate_install(component).violated_srs == frozenset({SR01_INSTALL})

    plain = ExtensionRecord(
        id=with_debugger.id, name="p", version="1", origin=ExtensionOrigin.STORE_SIGNED
    )
    assert annotate_install(plain).violated_srs == frozenset()


def test_decisions_are_deterministic():
    world = table_world()
    ext = probe_extension("none")
    policy = legacy_policy(flag_on=True)
    for target_id, _ in CLASS_TARGETS.values():
        first = may_attach(ext, ByTargetId(target_id), world, policy)
        second = may_attach(ext, ByTargetId(target_id), world, policy)
        assert first == second


def test_deny_never_carries_srs():
    with pytest.raises(ValueError):
        Decision(allowed=False, reason=RESTRICTED_URL, violated_srs=frozenset({SR03}))
