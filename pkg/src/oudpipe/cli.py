"""``oudpipe <command> --config <path> [--seed N] [--ablate-dependency-history]``.

Exit status: 0 success, 1 user error (bad config, missing upstream
artifact, unreadable input), 2 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .claims import ClaimsError
from .pipeline import COMMANDS, PipelineError, load_config, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oudpipe", description="OUD risk modeling pipeline on claims data.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--ablate-dependency-history", action="store_true",
                   help="drop opioid dependency/abuse history diagnoses from the features")
    p.add_argument("-q", "--quiet", action="store_true", help="only print errors")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, args.seed, args.ablate_dependency_history or None)
        run(args.command, cfg)
    except (PipelineError, ClaimsError) as e:
        print(f"oudpipe: error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001
        logging.getLogger("oudpipe").exception("internal error")
        print(f"oudpipe: internal error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
