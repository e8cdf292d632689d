#!/usr/bin/env python3
"""Start the broker with the canonical world and manual consent.

Pairs with the operator console in frontend/: start this, then point the
console at the printed address.

Usage:
    python scripts/serve_demo.py [--listen 127.0.0.1:8818] [--policy hardened]
"""

import argparse
import json
import sys
import tempfile

from warden.cli import main as warden_main
from warden.scenarios import load_canonical_scenario


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--listen", default="127.0.0.1:8818")
    parser.add_argument("--policy", choices=["legacy", "hardened"], default="hardened")
    parser.add_argument("--consent", choices=["manual", "auto-allow", "auto-deny"], default="manual")
    args = parser.parse_args()

    world = dict(load_canonical_scenario("A2").world)
    # Give the console a client extension to drive: the A2 attacker.
    world["extensions"] = list(world["extensions"]) + [load_canonical_scenario("A2").attacker]

    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(world, fh)
        world_path = fh.name

    print(f"control API on http://{args.listen}  (consent: {args.consent})", file=sys.stderr)
    return warden_main(
        [
            "serve",
            "--listen",
            args.listen,
            "--policy",
            args.policy,
            "--world",
            world_path,
            "--consent",
            args.consent,
        ]
    )


if __name__ == "__main__":
    sys.exit(main())
