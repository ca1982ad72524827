"""Command-line front end: ``run``, ``gen`` and ``report``."""

from __future__ import annotations

import argparse
import dataclasses
import random
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import ingest
from .config import ConfigError, load_config
from .ingest import (
    DataError,
    SchemaConfig,
    SchemaError,
    SpecError,
    SyntheticSpec,
    generate_synthetic,
    infer_label_space,
    read_csv_stream,
    write_csv,
)
from .pipeline import Journal, Pipeline
from .report import REPORT_FILES, ReportData, ReportError, read_run_dir, render_all, write_run_dir

EXIT_ERROR = 1


def _random_seed() -> int:
    return random.SystemRandom().randrange(2**31)


def _declares_seed(text: str) -> bool:
    return any(key == "seed" for _, key, _ in ingest._kv_lines(text))


def _load_spec(path, seed: Optional[int]) -> tuple[SyntheticSpec, bool]:
    """Parse a spec file; returns (spec, whether its seed was picked at random)."""
    text = Path(path).read_text(encoding="utf-8")
    spec = SyntheticSpec.from_text(text)
    if seed is not None:
        spec.seed = seed
        return spec, False
    if _declares_seed(text):
        return spec, False
    spec.seed = _random_seed()
    return spec, True


def cmd_run(args) -> int:
    journal = Journal()
    seed = args.seed
    if seed is None:
        seed = _random_seed()
        journal.log(None, None, "seed_selected", seed)
    config = load_config(args.config)
    config = dataclasses.replace(config, seed=seed, mode=args.mode or config.mode)

    if args.spec:
        spec, random_data_seed = _load_spec(args.spec, None)
        if random_data_seed:
            journal.log(None, None, "data_seed_selected", spec.seed)
        space = spec.space
        source = generate_synthetic(spec)
        name = Path(args.spec).stem
        journal.log(None, None, "input", f"spec={args.spec} data_seed={spec.seed}")
    else:
        schema = SchemaConfig.from_file(args.schema) if args.schema else SchemaConfig()
        space = infer_label_space(args.input, schema)
        source = read_csv_stream(args.input, schema, space)
        name = Path(args.input).stem
        journal.log(None, None, "input", f"csv={args.input}")

    result = Pipeline(space, config, journal=journal).run(source)
    data = ReportData.from_result(result, name=name)
    config_text = "\n".join(config.to_lines()) + "\n"
    tables = write_run_dir(args.out, data, result.journal, {"run_config.txt": config_text})
    sys.stdout.write(tables["final"])
    return 0


def cmd_gen(args) -> int:
    spec, random_seed = _load_spec(args.spec, args.seed)
    if random_seed:
        print(f"seed={spec.seed}", file=sys.stderr)
    n = write_csv(args.out, generate_synthetic(spec), spec.space)
    print(f"wrote {n} records to {args.out}", file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    run_dir = args.run_dir or args.out
    if run_dir is None:
        raise ReportError("report needs a run directory")
    tables = render_all(read_run_dir(run_dir))
    sys.stdout.write("\n".join(tables[k] for k in REPORT_FILES if k in tables))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streamids", description="Four-stage streaming flow classifier.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="process a flow stream and write reports")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="flow CSV file")
    src.add_argument("--spec", help="synthetic stream spec file")
    run.add_argument("--schema", help="schema file for --input")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, help="run seed (random and journaled if omitted)")
    run.add_argument("--mode", choices=("single", "concurrent"))
    run.add_argument("--config", help="key = value config file")
    run.set_defaults(func=cmd_run)

    gen = sub.add_parser("gen", help="write a synthetic stream as CSV")
    gen.add_argument("--spec", required=True)
    gen.add_argument("--out", required=True, help="CSV path")
    gen.add_argument("--seed", type=int, help="overrides the spec seed")
    gen.set_defaults(func=cmd_gen)

    rep = sub.add_parser("report", help="re-render tables from a run directory")
    rep.add_argument("run_dir", nargs="?")
    rep.add_argument("--out", help="run directory (same as the positional form)")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "schema", None) and not getattr(args, "input", None):
        print("streamids: error: --schema only applies to --input", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except (SchemaError, DataError, SpecError, ConfigError, ReportError, OSError) as exc:
        print(f"streamids: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
