#!/usr/bin/env python3
"""Reproduce the capability matrix and violation sets under both policies.

Usage:
    python scripts/reproduce_tables.py
    python scripts/reproduce_tables.py --silent-debugger-extension-api
"""

import argparse
import sys

from warden.policy import PolicyFlags, PolicyMode
from warden.scenarios import (
    CANONICAL_NAMES,
    capability_matrix,
    load_canonical_scenario,
    load_fixture,
    render_matrix,
    run_scenario,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--silent-debugger-extension-api", action="store_true")
    args = parser.parse_args()

    exit_code = 0
    for mode in (PolicyMode.LEGACY, PolicyMode.HARDENED):
        fixture = load_fixture(f"table2_{mode.value}")
        diff = capability_matrix(mode, fixture)
        print(f"\n== capability matrix, {mode.value} policy ==")
        print(render_matrix(diff.rows))
        print(f"mismatches vs expected: {len(diff.mismatches)}")
        if diff.mismatches:
            exit_code = 1

    print("\n== violated requirements, legacy policy ==")
    for name in CANONICAL_NAMES:
        spec = load_canonical_scenario(name)
        flags = PolicyFlags(
            extensions_on_chrome_urls=spec.flags.extensions_on_chrome_urls,
            silent_debugger_extension_api=args.silent_debugger_extension_api,
        )
        outcome = run_scenario(spec, PolicyMode.LEGACY, flag_overrides=flags)
        print(f"{name}: {', '.join(sorted(outcome.violated_srs))}")
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
