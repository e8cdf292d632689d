"""Extension identity: ID derivation, manifest loading, clone detection.

Extension IDs are 32 characters over the 'a'..'p' alphabet, produced by
hashing either the DER public key bytes (when the manifest declares one) or
the UTF-8 bytes of the absolute install path, then rewriting the lowercase
hex digest into the shifted alphabet and truncating.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import re
import zipfile
from dataclasses import dataclass
from enum import Enum
from typing import Optional

ID_LENGTH = 32
ID_ALPHABET = frozenset("abcdefghijklmnop")

_HEX_TO_ALPHABET = str.maketrans("0123456789abcdef", "abcdefghijklmnop")
_ID_RE = re.compile(r"^[a-p]{32}$")
_WINDOWS_DRIVE_RE = re.compile(r"^[A-Za-z]:[\\/]")


class IdentityError(ValueError):
    """Base class for identity derivation and manifest loading failures."""


class EmptyInput(IdentityError):
    pass


class RelativePath(IdentityError):
    pass


class MissingManifest(IdentityError):
    pass


class MalformedManifest(IdentityError):
    pass


class BadKey(IdentityError):
    pass


class ExtensionOrigin(Enum):
    STORE_SIGNED = "store-signed"
    SIDELOADED_UNPACKED = "sideloaded-unpacked"
    SIDELOADED_ZIP = "sideloaded-zip"
    COMPONENT = "component"

    @property
    def is_sideloaded(self) -> bool:
        return self in (ExtensionOrigin.SIDELOADED_UNPACKED, ExtensionOrigin.SIDELOADED_ZIP)

    @property
    def is_trusted(self) -> bool:
        return self in (ExtensionOrigin.STORE_SIGNED, ExtensionOrigin.COMPONENT)


def derive_id_from_key(der_key_bytes: bytes) -> str:
    """Derive an extension ID from DER public key bytes."""
    if not der_key_bytes:
        raise EmptyInput("key bytes must be non-empty")
    digest = hashlib.sha256(der_key_bytes).hexdigest()
    return digest.translate(_HEX_TO_ALPHABET)[:ID_LENGTH]


def derive_id_from_path(absolute_path: str) -> str:
    """Derive an extension ID from the absolute install path."""
    if not absolute_path:
        raise RelativePath("install path must be non-empty")
    if not (absolute_path.startswith("/") or _WINDOWS_DRIVE_RE.match(absolute_path)):
        raise RelativePath(f"install path must be absolute: {absolute_path!r}")
    digest = hashlib.sha256(absolute_path.encode("utf-8")).hexdigest()
    return digest.translate(_HEX_TO_ALPHABET)[:ID_LENGTH]


def validate_id(value: str) -> str:
    if not _ID_RE.match(value):
        raise IdentityError(f"not a valid extension id: {value!r}")
    return value


@dataclass(frozen=True)
class ExtensionRecord:
    """Identity, origin, and declared capabilities of one extension."""

    id: str
    name: str
    version: str
    permissions: frozenset = frozenset()
    host_permissions: frozenset = frozenset()
    manifest_key: Optional[str] = None
    origin: ExtensionOrigin = ExtensionOrigin.SIDELOADED_UNPACKED
    incognito_allowed: bool = False
    install_path: Optional[str] = None
    file_access: bool = False

    def __post_init__(self) -> None:
        validate_id(self.id)

    @property
    def has_debugger_permission(self) -> bool:
        return "debugger" in self.permissions

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "version": self.version,
            "permissions": sorted(self.permissions),
            "hostPermissions": sorted(self.host_permissions),
            "origin": self.origin.value,
            "incognitoAllowed": self.incognito_allowed,
            "installPath": self.install_path,
        }


@dataclass(frozen=True)
class AllowlistConfig:
    """Privileged-identity allowlists: script-everywhere and browser-target."""

    scripting: frozenset = frozenset()
    browser_target: frozenset = frozenset()

    @classmethod
    def from_json(cls, obj: dict) -> "AllowlistConfig":
        return cls(
            scripting=frozenset(validate_id(v) for v in obj.get("scriptingAllowlist", [])),
            browser_target=frozenset(validate_id(v) for v in obj.get("browserTargetAllowlist", [])),
        )

    @classmethod
    def load(cls, path: str) -> "AllowlistConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def to_json(self) -> dict:
        return {
            "scriptingAllowlist": sorted(self.scripting),
            "browserTargetAllowlist": sorted(self.browser_target),
        }

    def contains(self, extension_id: str) -> bool:
        return extension_id in self.scripting or extension_id in self.browser_target


CLONE_SCRIPTING_ALLOWLIST = "CLONE_SCRIPTING_ALLOWLIST"
CLONE_BROWSER_TARGET = "CLONE_BROWSER_TARGET"
DEBUGGER_PERMISSION = "DEBUGGER_PERMISSION"


@dataclass(frozen=True)
class Finding:
    code: str
    severity: str  # "error" or "info"
    extension_id: str
    message: str

    def to_json(self) -> dict:
        return {
            "code": self.code,
            "severity": self.severity,
            "extensionId": self.extension_id,
            "message": self.message,
        }


def _read_manifest(source: str) -> tuple[dict, str]:
    """Read manifest.json from a directory or the root of a zip archive."""
    abs_source = os.path.abspath(source)
    if os.path.isdir(abs_source):
        path = os.path.join(abs_source, "manifest.json")
        if not os.path.isfile(path):
            raise MissingManifest(f"no manifest.json in {abs_source}")
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    elif zipfile.is_zipfile(abs_source):
        with zipfile.ZipFile(abs_source) as zf:
            if "manifest.json" not in zf.namelist():
                raise MissingManifest(f"no manifest.json at root of {abs_source}")
            raw = zf.read("manifest.json").decode("utf-8")
    else:
        raise MissingManifest(f"{abs_source} is neither a directory nor a zip archive")
    try:
        manifest = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedManifest(f"manifest.json is not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict):
        raise MalformedManifest("manifest.json must be a JSON object")
    return manifest, abs_source


def load_extension(source: str, origin: ExtensionOrigin) -> ExtensionRecord:
    """Load an extension record from an unpacked directory or zip archive."""
    manifest, install_path = _read_manifest(source)
    for required in ("manifest_version", "name", "version"):
        if required not in manifest:
            raise MalformedManifest(f"manifest.json missing required field {required!r}")

    key = manifest.get("key")
    if key is not None:
        if not isinstance(key, str):
            raise BadKey("manifest key must be a Base64 string")
        compact = re.sub(r"\s+", "", key)
        try:
            key_bytes = base64.b64decode(compact, validate=True)
        except (ValueError, TypeError) as exc:
            raise BadKey(f"manifest key is not valid Base64: {exc}") from exc
        if not key_bytes:
            raise BadKey("manifest key decodes to zero bytes")
        ext_id = derive_id_from_key(key_bytes)
    elif origin is ExtensionOrigin.STORE_SIGNED:
        raise MalformedManifest("store-signed extensions must carry a manifest key")
    else:
        ext_id = derive_id_from_path(install_path)

    permissions = manifest.get("permissions", [])
    host_permissions = manifest.get("host_permissions", [])
    if not isinstance(permissions, list) or not isinstance(host_permissions, list):
        raise MalformedManifest("permissions and host_permissions must be lists")

    return ExtensionRecord(
        id=ext_id,
        name=str(manifest["name"]),
        version=str(manifest["version"]),
        permissions=frozenset(str(p) for p in permissions),
        host_permissions=frozenset(str(p) for p in host_permissions),
        manifest_key=key,
        origin=origin,
        install_path=install_path,
    )


def detect_impersonation(record: ExtensionRecord, allow: AllowlistConfig) -> list[Finding]:
    """Flag allowlisted-ID clones and informational debugger-permission use."""
    findings: list[Finding] = []
    if record.id in allow.scripting and not record.origin.is_trusted:
        findings.append(
            Finding(
                code=CLONE_SCRIPTING_ALLOWLIST,
                severity="error",
                extension_id=record.id,
                message=(
                    f"{record.origin.value} extension {record.name!r} carries the id of a "
                    "script-everywhere allowlisted extension"
                ),
            )
        )
    if record.id in allow.browser_target and not record.origin.is_trusted:
        findings.append(
            Finding(
                code=CLONE_BROWSER_TARGET,
                severity="error",
                extension_id=record.id,
                message=(
                    f"{record.origin.value} extension {record.name!r} carries the id of a "
                    "browser-target allowlisted extension"
                ),
            )
        )
    if record.has_debugger_permission:
        findings.append(
            Finding(
                code=DEBUGGER_PERMISSION,
                severity="info",
                extension_id=record.id,
                message=f"extension {record.name!r} declares the debugger permission",
            )
        )
    return findings
