"""Command line entry point: ``knowmesh run|dump|validate``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .errors import KnowmeshError, ParseError, ValidationError
from .harness import dump_store, resolve_scenario, run_scenario
from .knowledge import deserialize_store, serialize_store

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="knowmesh", description="Smart-object knowledge exchange simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario file or built-in scenario name")
    run.add_argument("scenario")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--until", type=int, default=None)
    run.add_argument("--trace", type=Path, default=None, help="write the event trace here")
    run.add_argument("--dump-dir", type=Path, default=None, help="write one <node>.store per smart object")

    dump = sub.add_parser("dump", help="print a store file in canonical form")
    dump.add_argument("store")

    validate = sub.add_parser("validate", help="check a scenario without running it")
    validate.add_argument("scenario")
    return parser


def _run(args: argparse.Namespace) -> int:
    scenario = resolve_scenario(args.scenario)
    result = run_scenario(scenario, seed=args.seed, until=args.until)
    if args.trace is not None:
        args.trace.write_text(result.trace_text, encoding="utf-8")
    if args.dump_dir is not None:
        args.dump_dir.mkdir(parents=True, exist_ok=True)
        for node, store in sorted(result.stores.items()):
            dump_store(store, args.dump_dir / f"{node}.store")
    print(f"scenario {scenario.name}: " + " ".join(f"{k}={v}" for k, v in result.summary.items()))
    for node, store in sorted(result.stores.items()):
        print(
            f"  {node}: ontology={len(store.ontology)} parameters={len(store.parameters)} "
            f"hypotheses={len(store.hypotheses())} observations={len(store.observations)}"
        )
    return EXIT_OK


def _validate(args: argparse.Namespace) -> int:
    scenario = resolve_scenario(args.scenario)
    print(
        f"{scenario.name}: ok ({len(scenario.nodes)} nodes, {len(scenario.links)} links, "
        f"{len(scenario.streams)} streams, {len(scenario.schedule)} actions)"
    )
    for node, words in sorted(scenario.unrecognized_words().items()):
        print(f"  warning: {node} uses words outside the lexicon: {', '.join(sorted(words))}")
    return EXIT_OK


def _dump(args: argparse.Namespace) -> int:
    text = Path(args.store).read_text(encoding="utf-8")
    sys.stdout.write(serialize_store(deserialize_store(text)))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": _run, "dump": _dump, "validate": _validate}[args.command]
    try:
        return handler(args)
    except (ValidationError, ParseError) as exc:
        print(f"knowmesh: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (KnowmeshError, OSError, ValueError) as exc:
        print(f"knowmesh: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
