"""Command line entry point: ``catlm verify | train | surplus | geometry | spectral | show``."""

import argparse
import csv
import dataclasses
import json
import sys
from importlib import resources
from pathlib import Path

from .exceptions import CatlmError, ConfigInvalid, IoFailure
from .harness import FORMATS, load_config, run

__all__ = ["main", "resolve_config", "BUNDLED"]

BUNDLED = ("verify", "surplus", "train", "two_cluster")
EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def resolve_config(name):
    """A path to a TOML file, or the name of a bundled config."""
    path = Path(name)
    if path.exists():
        return load_config(path)
    if name in BUNDLED:
        with resources.as_file(resources.files("catlm") / "configs" / f"{name}.toml") as bundled:
            return load_config(bundled)
    raise IoFailure(f"no config file {name!r} (bundled configs: {', '.join(BUNDLED)})")


def _formats(value):
    items = tuple(v.strip() for v in value.split(",") if v.strip())
    bad = [v for v in items if v not in FORMATS]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"formats must be drawn from {', '.join(FORMATS)}")
    return items


def build_parser():
    parser = argparse.ArgumentParser(prog="catlm", description="Exact information-theoretic checks on toy AR models.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--out", help="override the output directory")
    common.add_argument("--format", type=_formats, help="comma-separated report formats (csv,json)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("verify", parents=[common], help="run the invariant suite; exit 1 on any failure")
    p.add_argument("config", nargs="?", default="verify", help="config path or bundled name (default: verify)")
    for name, text in (
        ("train", "train a model and write its trace"),
        ("surplus", "information surplus report"),
        ("geometry", "pullback-metric report at sampled hidden states"),
        ("spectral", "similarity-kernel spectral report"),
    ):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("config", help="config path or bundled name")
    p = sub.add_parser("show", help="pretty-print a JSON or CSV report")
    p.add_argument("file")
    return parser


def _show(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if path.suffix == ".csv":
        rows = list(csv.reader(text.splitlines()))
        widths = [max(len(r[i]) for r in rows if i < len(r)) for i in range(len(rows[0]))]
        for r in rows:
            print("  ".join(cell.rjust(w) for cell, w in zip(r, widths)))
    else:
        try:
            print(json.dumps(json.loads(text), indent=2))
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"{path} is neither CSV nor JSON: {exc}") from exc


def _final_stage(report):
    return report.get("final", report.get("initial"))


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if args.command == "show":
            _show(args.file)
            return EXIT_OK
        config = resolve_config(args.config).override(args.seed, args.out, args.format)
        if args.command in ("surplus", "geometry", "spectral"):
            config = dataclasses.replace(config, probes=(args.command,))
        result = run(config, suite=args.command == "verify")
    except (ConfigInvalid, IoFailure) as exc:
        print(f"catlm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CatlmError as exc:
        print(f"catlm: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED

    if args.command == "verify":
        for r in result.reports["verify"]["results"]:
            print(f"{'PASS' if r['passed'] else 'FAIL'}  {r['name']:<32} value={r['value']:.6g}  tol={r['tolerance']:g}")
        print(f"{'all checks passed' if result.passed else 'verification FAILED'}; reports in {result.out}")
        return EXIT_OK if result.passed else EXIT_FAILED
    if args.command == "train":
        for name, _ in result.manifest.files:
            print(result.out / name)
        return EXIT_OK
    print(json.dumps(_final_stage(result.reports[args.command]), indent=2, default=float))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
