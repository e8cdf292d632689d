"""Command-line entry point: id derivation, extension audit, scenario runs,
capability matrices, and the long-running broker with its control API.

Exit codes: 0 success or all-match, 1 findings or mismatches present,
2 usage or schema errors. Data goes to stdout, logs to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

from .identity import (
    AllowlistConfig,
    ExtensionOrigin,
    IdentityError,
    derive_id_from_key,
    derive_id_from_path,
    detect_impersonation,
    load_extension,
)
from .policy import LegacyFixes, PolicyConfig, PolicyFlags, PolicyMode
from .scenarios import (
    DEFAULT_HARDENED,
    ScenarioSpec,
    capability_matrix,
    default_allowlist,
    load_fixture,
    outcome_matches_expects,
    render_matrix,
    run_scenario,
)
from .world import SchemaError

FIX_NAMES = {
    "incognito-targets": "fix_incognito_targets",
    "interstitial-attach": "fix_interstitial_attach",
}

USAGE_ERROR = 2


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _base_policy() -> Optional[PolicyConfig]:
    """Policy defaults from the WARDEN_CONFIG file, when the variable is set."""
    path = os.environ.get("WARDEN_CONFIG")
    if not path:
        return None
    return PolicyConfig.load(path)


def _allowlist_from(args, base: Optional[PolicyConfig]) -> AllowlistConfig:
    if getattr(args, "allowlist", None):
        return AllowlistConfig.load(args.allowlist)
    if base is not None:
        return base.allow
    return default_allowlist()


def cmd_id(args) -> int:
    if bool(args.key) == bool(args.path):
        _log("id: exactly one of --key or --path is required")
        return USAGE_ERROR
    try:
        if args.key:
            with open(args.key, "rb") as fh:
                ext_id = derive_id_from_key(fh.read())
        else:
            ext_id = derive_id_from_path(args.path)
    except (OSError, IdentityError) as exc:
        _log(f"id: {exc}")
        return USAGE_ERROR
    print(ext_id)
    return 0


def cmd_audit(args) -> int:
    try:
        origin = ExtensionOrigin(args.origin)
    except ValueError:
        _log(f"audit: unknown origin {args.origin!r}")
        return USAGE_ERROR
    try:
        allow = _allowlist_from(args, _base_policy())
        record = load_extension(args.source, origin)
    except IdentityError as exc:
        _log(f"audit: {exc}")
        return USAGE_ERROR
    except OSError as exc:
        _log(f"audit: {exc}")
        return USAGE_ERROR

    findings = detect_impersonation(record, allow)
    for finding in findings:
        print(json.dumps(finding.to_json(), separators=(",", ":")))
    clones = [f for f in findings if f.severity == "error"]
    _log(
        f"audited {record.name!r} ({record.id}, {record.origin.value}): "
        f"{len(findings)} finding(s), {len(clones)} clone indicator(s)"
    )
    return 1 if clones else 0


def _scenario_flags(args) -> PolicyFlags:
    # Scenario runs take their flags from the command line alone, the way a
    # browser takes its switches from how it was launched.
    return PolicyFlags(
        extensions_on_chrome_urls=bool(args.extensions_on_chrome_urls),
        silent_debugger_extension_api=bool(args.silent_debugger_extension_api),
    )


def _fixes(args) -> LegacyFixes:
    values = {}
    for name in args.fix or []:
        attr = FIX_NAMES.get(name)
        if attr is None:
            raise SchemaError(f"unknown fix {name!r}; known: {', '.join(sorted(FIX_NAMES))}")
        values[attr] = True
    return LegacyFixes(**values)


def cmd_run(args) -> int:
    base = _base_policy()
    mode = PolicyMode(args.policy)
    try:
        allow = _allowlist_from(args, base)
        spec = ScenarioSpec.load(args.scenario, allow)
        fixes = _fixes(args)
    except (SchemaError, IdentityError, OSError, json.JSONDecodeError) as exc:
        _log(f"run: {exc}")
        return USAGE_ERROR

    outcome = run_scenario(
        spec,
        mode,
        flag_overrides=_scenario_flags(args),
        fixes=fixes,
        allowlist=allow,
        hardened=base.hardened if base is not None else DEFAULT_HARDENED,
    )
    problems = outcome_matches_expects(spec, outcome, mode)

    if args.json:
        blob = outcome.to_json()
        blob["expectsMatched"] = not problems
        blob["mismatches"] = problems
        print(json.dumps(blob, indent=2))
    else:
        print(f"scenario {spec.name} [{spec.threat_model}] under {mode.value} policy")
        for step in outcome.step_results:
            status = "ok " if step.ok else f"ERR {step.error}"
            summary = step.detail.get("method") or step.detail.get("url") or ""
            print(f"  step {step.index:<2} {step.op:<22} {summary:<32} {status}")
        print(f"capability: {outcome.capability.symbols()}")
        print(f"violatedSRs: {', '.join(sorted(outcome.violated_srs)) or '(none)'}")
        for problem in problems:
            _log(f"mismatch: {problem}")
    _log("expects matched" if not problems else f"{len(problems)} mismatch(es) vs expects")
    return 0 if not problems else 1


def cmd_matrix(args) -> int:
    base = _base_policy()
    mode = PolicyMode(args.policy)
    try:
        if args.fixture:
            with open(args.fixture, encoding="utf-8") as fh:
                fixture = json.load(fh)
        else:
            fixture = load_fixture(f"table2_{mode.value}")
        allow = _allowlist_from(args, base)
        fixes = _fixes(args)
    except (OSError, json.JSONDecodeError, SchemaError) as exc:
        _log(f"matrix: {exc}")
        return USAGE_ERROR

    diff = capability_matrix(mode, fixture, allowlist=allow, fixes=fixes)
    if args.json:
        print(
            json.dumps(
                {
                    "policy": mode.value,
                    "rows": {n: v.to_json() for n, v in diff.rows.items()},
                    "mismatches": diff.mismatches,
                },
                indent=2,
            )
        )
    else:
        print(render_matrix(diff.rows))
        for mismatch in diff.mismatches:
            _log(
                f"mismatch {mismatch['scenario']}/{mismatch['column']}: "
                f"got {mismatch['got']}, expected {mismatch['expected']}"
            )
    _log(f"{len(diff.mismatches)} mismatch(es) across {len(diff.rows) * 10} cells")
    return 0 if diff.clean else 1


def cmd_serve(args) -> int:
    from .server import serve_forever

    base = _base_policy()
    mode = PolicyMode(args.policy)
    try:
        allow = _allowlist_from(args, base)
        with open(args.world, encoding="utf-8") as fh:
            world_spec = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        _log(f"serve: {exc}")
        return USAGE_ERROR

    host, _, port_text = args.listen.rpartition(":")
    if not host or not port_text.isdigit():
        _log(f"serve: --listen expects host:port, got {args.listen!r}")
        return USAGE_ERROR

    policy = PolicyConfig(
        mode=mode,
        flags=_scenario_flags(args),
        allow=allow,
        hardened=base.hardened if base is not None else DEFAULT_HARDENED,
    )
    try:
        serve_forever(
            host=host,
            port=int(port_text),
            world_spec=world_spec,
            policy=policy,
            consent=args.consent,
            audit_path=args.audit_log,
        )
    except OSError as exc:
        _log(f"serve: cannot bind {args.listen}: {exc}")
        return USAGE_ERROR
    except SchemaError as exc:
        _log(f"serve: {exc}")
        return USAGE_ERROR
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="warden",
        description="Debugger-session reference monitor and attack-scenario harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_id = sub.add_parser("id", help="derive an extension id from a key file or install path")
    p_id.add_argument("--key", help="file holding DER public key bytes")
    p_id.add_argument("--path", help="absolute install path")
    p_id.set_defaults(func=cmd_id)

    p_audit = sub.add_parser("audit", help="scan an unpacked directory or zip for clone identities")
    p_audit.add_argument("source", help="extension directory or zip archive")
    p_audit.add_argument("--allowlist", help="allowlist config file")
    p_audit.add_argument(
        "--origin",
        default="sideloaded-unpacked",
        help="declared origin (store-signed, sideloaded-unpacked, sideloaded-zip, component)",
    )
    p_audit.set_defaults(func=cmd_audit)

    def add_run_flags(p):
        p.add_argument("--policy", choices=["legacy", "hardened"], default="legacy")
        p.add_argument("--allowlist", help="allowlist config file")
        p.add_argument(
            "--extensions-on-chrome-urls",
            action="store_true",
            help="enable the restricted-scheme access switch",
        )
        p.add_argument(
            "--silent-debugger-extension-api",
            action="store_true",
            help="suppress debugger infobars",
        )
        p.add_argument(
            "--fix",
            action="append",
            metavar="NAME",
            help=f"enable a shipped fix ({', '.join(sorted(FIX_NAMES))})",
        )
        p.add_argument("--json", action="store_true", help="machine-readable output")

    p_run = sub.add_parser("run", help="run one scenario file and compare to its expectations")
    p_run.add_argument("--scenario", required=True, help="scenario JSON file")
    add_run_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_matrix = sub.add_parser("matrix", help="run all canonical scenarios and diff the matrix")
    p_matrix.add_argument("--fixture", help="expected-matrix fixture (default: packaged)")
    add_run_flags(p_matrix)
    p_matrix.set_defaults(func=cmd_matrix)

    p_serve = sub.add_parser("serve", help="serve the broker and its control API")
    p_serve.add_argument("--listen", default="127.0.0.1:8818", help="host:port to bind")
    p_serve.add_argument("--policy", choices=["legacy", "hardened"], default="legacy")
    p_serve.add_argument("--world", required=True, help="world description JSON file")
    p_serve.add_argument(
        "--consent",
        choices=["manual", "auto-allow", "auto-deny"],
        default="auto-allow",
        help="how attach-consent requests resolve",
    )
    p_serve.add_argument("--allowlist", help="allowlist config file")
    p_serve.add_argument("--audit-log", help="append-only JSONL audit sink")
    p_serve.add_argument(
        "--extensions-on-chrome-urls", action="store_true", help=argparse.SUPPRESS
    )
    p_serve.add_argument(
        "--silent-debugger-extension-api", action="store_true", help=argparse.SUPPRESS
    )
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_ERROR
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
