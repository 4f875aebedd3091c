"""Command-line interface.

Solver subcommands load a config file whose kind must match; `figure`
and `list-figures` use the built-in registry.  Every run writes CSV
tables plus a manifest.json into the output directory.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import ConfigError, NumericsError
from .runner import registry_specs, run_registry_entry, run_spec

_SOLVER_COMMANDS = {
    "steady-states": "steady_states",
    "simulate": "simulate",
    "pmp": "pmp",
    "hjb": "hjb",
    "fpk": "fpk",
    "mfg": "mfg",
    "contagion": "contagion",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="couplemfg",
        description="Solvers for a controlled sentiment model of couples.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", default=None, help="output directory (default runs/<name>)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--fast", action="store_true", help="coarsen grids 4x for a smoke run")

    for command in _SOLVER_COMMANDS:
        p = sub.add_parser(command, help=f"run a {command} experiment from a config file")
        p.add_argument("--config", required=True, help="path to the experiment config")
        add_common(p)

    p = sub.add_parser("figure", help="run one registry entry")
    p.add_argument("id", help="registry entry name, e.g. fig5 (bare numbers allowed)")
    add_common(p)

    sub.add_parser("list-figures", help="list all registry entries")
    return parser


def _print_manifest(manifest, out_dir) -> None:
    for filename in sorted(manifest.outputs):
        print(f"wrote {out_dir}/{filename}")
    print(f"wrote {out_dir}/manifest.json")
    print(
        f"{manifest.name}: kind={manifest.kind} seed={manifest.seed} "
        f"wall_clock={manifest.wall_clock_s:.2f}s"
    )


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "list-figures":
            for name, spec in registry_specs().items():
                mode = f" ({spec.run.mode})" if spec.run.mode else ""
                print(f"{name:18s} {spec.kind}{mode}")
            return 0

        if args.command == "figure":
            name = args.id if not args.id.isdigit() else f"fig{args.id}"
            out_dir = args.out if args.out is not None else f"runs/{name}"
            manifest = run_registry_entry(
                args.id, out_dir, fast=args.fast, seed=args.seed
            )
            _print_manifest(manifest, out_dir)
            return 0

        spec = load_config(args.config)
        expected = _SOLVER_COMMANDS[args.command]
        if spec.kind != expected:
            raise ConfigError(
                f"config kind {spec.kind!r} does not match subcommand {args.command!r}"
            )
        if args.seed is not None:
            spec = spec.with_seed(args.seed)
        out_dir = args.out if args.out is not None else f"runs/{spec.name}"
        manifest = run_spec(spec, out_dir, fast=args.fast)
        _print_manifest(manifest, out_dir)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
