import base64
import json
import os
import zipfile

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from warden.identity import (
    CLONE_BROWSER_TARGET,
    CLONE_SCRIPTING_ALLOWLIST,
    DEBUGGER_PERMISSION,
    AllowlistConfig,
    BadKey,
    EmptyInput,
    ExtensionOrigin,
    ExtensionRecord,
    ID_ALPHABET,
    ID_LENGTH,
    MalformedManifest,
    MissingManifest,
    RelativePath,
    derive_id_from_key,
    derive_id_from_path,
    detect_impersonation,
    load_extension,
)

# Expected values computed with an independent pipeline: sha256sum over the
# raw bytes, then each hex digit rewritten by alphabet offset (0->a .. f->p).
KEY_VECTORS = [
    (b"test", "jpignaibiiemhngfjkcpokkamffknabf"),
    (b"a", "mkjhibbcmkbllnmkpkmcdbldjkcdnmen"),
    (b"screen-reader-der-key-v1", "pjipaepjdabgelglmmajiboijcjcnfkf"),
    (b"perfetto-ui-der-key-v1", "neidmcmbikildcbfgikcjikamiiccifb"),
    (bytes([0, 1, 2]), "koeldciaofgocpkpidpebekgodnklojn"),
    (b"keyvault-foreign-key-v1", "aplhmkghenbjkfnfamifeoopdibjbigg"),
]

PATH_VECTORS = [
    ("/home/u/ext", "bmpmpagbnbipmonbmkjbffhmgcaejjdm"),
    ("/home/u/ext2", "kdaanibadfmeaedimpggpnoinlldnijd"),
]


@pytest.mark.parametrize("data,expected", KEY_VECTORS)
def test_key_derivation_matches_oracle(data, expected):
    assert derive_id_from_key(data) == expected


@pytest.mark.parametrize("path,expected", PATH_VECTORS)
def test_path_derivation_matches_oracle(path, expected):
    assert derive_id_from_path(path) == expected


def test_key_derivation_determinism_and_distinctness():
    assert derive_id_from_key(b"same") == derive_id_from_key(b"same")
    assert derive_id_from_key(b"one") != derive_id_from_key(b"two")


def test_path_derivation_rejects_bad_input():
    with pytest.raises(RelativePath):
        derive_id_from_path("")
    with pytest.raises(RelativePath):
        derive_id_from_path("relative/path")
    with pytest.raises(EmptyInput):
        derive_id_from_key(b"")


@settings(max_examples=1000, deadline=None)
@given(st.binary(min_size=1, max_size=128))
def test_derived_ids_have_fixed_shape(data):
    ext_id = derive_id_from_key(data)
    assert len(ext_id) == ID_LENGTH
    assert set(ext_id) <= ID_ALPHABET


@settings(max_examples=200, deadline=None)
@given(st.text(min_size=1, max_size=64).map(lambda s: "/" + s.replace("\x00", "")))
def test_path_ids_have_fixed_shape(path):
    ext_id = derive_id_from_path(path)
    assert len(ext_id) == ID_LENGTH
    assert set(ext_id) <= ID_ALPHABET


def _write_manifest(directory, manifest) -> str:
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh)
    return directory


BASE_MANIFEST = {"manifest_version": 3, "name": "Sample", "version": "0.0.1"}


def test_load_extension_key_takes_precedence_over_path(tmp_path):
    key_bytes = b"screen-reader-der-key-v1"
    manifest = dict(BASE_MANIFEST, key=base64.b64encode(key_bytes).decode())
    record = load_extension(
        _write_manifest(tmp_path / "ext", manifest), ExtensionOrigin.SIDELOADED_UNPACKED
    )
    assert record.id == derive_id_from_key(key_bytes)
    assert record.origin is ExtensionOrigin.SIDELOADED_UNPACKED


def test_clone_equivalence_same_key_different_paths(tmp_path):
    manifest = dict(BASE_MANIFEST, key=base64.b64encode(b"shared-key").decode())
    a = load_extension(_write_manifest(tmp_path / "a", manifest), ExtensionOrigin.SIDELOADED_UNPACKED)
    b = load_extension(_write_manifest(tmp_path / "b", manifest), ExtensionOrigin.SIDELOADED_ZIP)
    assert a.id == b.id


def test_load_extension_without_key_uses_path(tmp_path):
    path = _write_manifest(tmp_path / "plain", dict(BASE_MANIFEST))
    record = load_extension(path, ExtensionOrigin.SIDELOADED_UNPACKED)
    assert record.id == derive_id_from_path(os.path.abspath(path))


def test_load_extension_permissions(tmp_path):
    manifest = dict(BASE_MANIFEST, permissions=["debugger"], host_permissions=["<all_urls>"])
    record = load_extension(_write_manifest(tmp_path / "dbg", manifest), ExtensionOrigin.SIDELOADED_UNPACKED)
    assert "debugger" in record.permissions
    assert "<all_urls>" in record.host_permissions


def test_load_extension_errors(tmp_path):
    with pytest.raises(MissingManifest):
        load_extension(str(tmp_path / "nothing-here"), ExtensionOrigin.SIDELOADED_UNPACKED)
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(MissingManifest):
        load_extension(str(empty), ExtensionOrigin.SIDELOADED_UNPACKED)
    no_name = _write_manifest(tmp_path / "noname", {"manifest_version": 3, "version": "1"})
    with pytest.raises(MalformedManifest):
        load_extension(no_name, ExtensionOrigin.SIDELOADED_UNPACKED)
    bad_key = _write_manifest(tmp_path / "badkey", dict(BASE_MANIFEST, key="!!not-base64!!"))
    with pytest.raises(BadKey):
        load_extension(bad_key, ExtensionOrigin.SIDELOADED_UNPACKED)
    keyless_store = _write_manifest(tmp_path / "store", dict(BASE_MANIFEST))
    with pytest.raises(MalformedManifest):
        load_extension(keyless_store, ExtensionOrigin.STORE_SIGNED)


def test_load_extension_from_zip_root_only(tmp_path):
    good = tmp_path / "good.zip"
    with zipfile.ZipFile(good, "w") as zf:
        zf.writestr("manifest.json", json.dumps(BASE_MANIFEST))
    record = load_extension(str(good), ExtensionOrigin.SIDELOADED_ZIP)
    assert record.id == derive_id_from_path(str(good))

    nested = tmp_path / "nested.zip"
    with zipfile.ZipFile(nested, "w") as zf:
        zf.writestr("inner/manifest.json", json.dumps(BASE_MANIFEST))
    with pytest.raises(MissingManifest):
        load_extension(str(nested), ExtensionOrigin.SIDELOADED_ZIP)


PRIVILEGED_ID = derive_id_from_key(b"perfetto-ui-der-key-v1")
SCRIPTING_ID = derive_id_from_key(b"screen-reader-der-key-v1")
ALLOW = AllowlistConfig(
    scripting=frozenset({SCRIPTING_ID}), browser_target=frozenset({PRIVILEGED_ID})
)


def _record(ext_id, origin, permissions=()):
    return ExtensionRecord(
        id=ext_id,
        name="probe",
        version="1",
        permissions=frozenset(permissions),
        origin=origin,
    )


def test_detect_browser_target_clone():
    findings = detect_impersonation(_record(PRIVILEGED_ID, ExtensionOrigin.SIDELOADED_ZIP), ALLOW)
    assert [f.code for f in findings] == [CLONE_BROWSER_TARGET]
    assert findings[0].severity == "error"


def test_detect_scripting_clone():
    findings = detect_impersonation(
        _record(SCRIPTING_ID, ExtensionOrigin.SIDELOADED_UNPACKED), ALLOW
    )
    assert [f.code for f in findings] == [CLONE_SCRIPTING_ALLOWLIST]


def test_store_signed_id_is_not_a_clone():
    findings = detect_impersonation(_record(PRIVILEGED_ID, ExtensionOrigin.STORE_SIGNED), ALLOW)
    assert findings == []


def test_debugger_permission_is_informational():
    findings = detect_impersonation(
        _record("b" * 32, ExtensionOrigin.SIDELOADED_UNPACKED, permissions=["debugger"]), ALLOW
    )
    assert [(f.code, f.severity) for f in findings] == [(DEBUGGER_PERMISSION, "info")]


def test_finding_json_lines_round_trip():
    findings = detect_impersonation(
        _record(PRIVILEGED_ID, ExtensionOrigin.SIDELOADED_ZIP, permissions=["debugger"]), ALLOW
    )
    lines = [json.dumps(f.to_json()) for f in findings]
    parsed = [json.loads(line) for line in lines]
    assert {p["code"] for p in parsed} == {CLONE_BROWSER_TARGET, DEBUGGER_PERMISSION}
