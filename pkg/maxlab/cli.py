"""
Command-line entry point.

    python -m maxlab maxnorm --space star --params '{"K": 5}' --op-params '{"radii": {"values": [1, 2]}}'
    python -m maxlab run manifests/star5.json --out-dir results
    python -m maxlab suite tree --trials 0.1

Every subcommand except ``suite`` builds a manifest and hands it to
``run_pipeline.run``. Exit codes: 0 pass, 1 invariant failure, 2 usage,
3 manifest, 4 budget, 5 seed cap, 6 triangle inequality, 7 hypothesis.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from maxlab import __version__
from maxlab.constructions import CONSTRUCTIONS
from maxlab.run_pipeline import OPERATIONS, USAGE_EXIT_CODE, run
from maxlab.run_suites import SUITES, suite
from maxlab.utils import MaxlabError, save_text_report, write_csv

logger = logging.getLogger(__name__)

# subcommand -> manifest operation
COMMAND_OPERATIONS = {
    "construct": "validate",
    "maxnorm": "weak_norm",
    "partition": "padding",
    "localize": "localize",
    "cover": "lindenstrauss",
    "tree": "tree",
}


def _json_argument(text: str) -> Dict[str, Any]:
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc}") from exc
    if not isinstance(value, dict):
        raise argparse.ArgumentTypeError("expected a JSON object")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxlab", description="Maximal operators on finite metric measure spaces")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    parser.add_argument("--budget", type=int, default=None, help="point/work budget (default $MAXLAB_BUDGET or 2e7)")
    parser.add_argument("--out-dir", type=Path, default=Path("results"), help="directory for reports")
    sub = parser.add_subparsers(dest="command", required=True)

    for command, op in COMMAND_OPERATIONS.items():
        p = sub.add_parser(command, help=OPERATIONS[op]["description"])
        p.add_argument("--space", required=True, choices=sorted(CONSTRUCTIONS), help="construction kind")
        p.add_argument("--params", type=_json_argument, default={}, help="construction parameters (JSON)")
        p.add_argument("--op-params", type=_json_argument, default={}, help="operation parameters (JSON)")
        p.add_argument("--op", default=op, choices=sorted(OPERATIONS), help=f"operation (default {op})")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--trials", type=int, default=None, help="Monte Carlo trials, where the operation samples")
        p.add_argument("--id", dest="experiment_id", default=None, help="experiment id (default <command>_<space>)")

    p = sub.add_parser("run", help="run manifest files")
    p.add_argument("manifests", nargs="+", type=Path)

    p = sub.add_parser("suite", help="run an acceptance suite")
    p.add_argument("name", choices=sorted(SUITES) + ["all"])
    p.add_argument("--trials", type=float, default=1.0, help="factor applied to every trial count")
    return parser


def manifest_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    params = dict(args.op_params)
    if args.trials is not None:
        params["trials"] = args.trials
    return {
        "experiment_id": args.experiment_id or f"{args.command}_{args.space}",
        "construction": {"kind": args.space, "params": args.params},
        "operation": {"op": args.op, "params": params},
        "seed": args.seed,
    }


def suite_sections(frame, passed: bool) -> Dict[str, Any]:
    """Summary section plus one section per criterion, for the text report."""
    flags = frame["passed"].tolist()
    sections: Dict[str, Any] = {"summary": {
        "checks": len(flags),
        "failed": sum(flag is not None and not flag for flag in flags),
        "report_only": sum(flag is None for flag in flags),
        "passed": passed,
    }}
    for criterion, group in frame.groupby("criterion", sort=True):
        sections[criterion] = {row.check: "report" if row.passed is None else ("pass" if row.passed else "FAIL")
                               for row in group.itertuples()}
    return sections


def _run_manifests(paths: List[Path], out_dir: Path, budget: Optional[int]) -> int:
    worst = 0
    for path in paths:
        try:
            manifest = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            logger.error("Cannot read manifest %s: %s", path, exc)
            worst = max(worst, USAGE_EXIT_CODE)
            continue
        code = run(manifest, out_dir, budget)
        print(f"{path}: exit {code}")
        worst = max(worst, code)
    return worst


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "run":
            return _run_manifests(args.manifests, args.out_dir, args.budget)
        if args.command == "suite":
            passed, frame = suite(args.name, args.budget, args.trials)
            write_csv(frame, args.out_dir / f"suite_{args.name}.csv")
            save_text_report(suite_sections(frame, passed), args.out_dir / f"suite_{args.name}.txt",
                             f"acceptance suite {args.name}")
            return 0 if passed else 1
        manifest = manifest_from_args(args)
        code = run(manifest, args.out_dir, args.budget)
        print(f"{manifest['experiment_id']}: exit {code} (reports in {args.out_dir})")
        return code
    except MaxlabError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    except ValueError as exc:
        logger.error("%s", exc)
        return USAGE_EXIT_CODE


if __name__ == "__main__":
    sys.exit(main())
