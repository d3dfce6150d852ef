"""Command line front end.

Subcommands: ``space`` inspects schema cardinalities and projections,
``run`` executes a pipeline and writes frame.csv / frame.jsonl /
provenance.json, ``report`` re-sorts or filters a saved frame offline.

Exit codes for ``run``: 0 success, 1 evaluator failure under the abort
policy, 2 schema/config errors, 3 empty final space. Set DSEX_LOG to
debug/info/warning to control verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import (
    RunManifest,
    echo_manifest,
    load_evaluators,
    load_manifest,
    load_pipeline,
    load_schema,
    parse_fail_policy,
)
from .errors import ConfigError, DsexError, PipelineAborted
from .expr import parse_expr
from .frame import load_rows, render_rows_table, render_top_table
from .metrics import Cache
from .space import build_space, project_space
from .strategy import run_pipeline

log = logging.getLogger("dsex")


def _setup_logging() -> None:
    level = os.environ.get("DSEX_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(message)s")


def _render_point(space, point) -> str:
    values = [str(v) for v in space.raw_values(point)]
    values += [
        str(int(m.value)) if m.value.is_integer() else repr(m.value)
        for m in point.frozen_params
    ]
    return "[" + ", ".join(values) + "]"


def cmd_space(args) -> int:
    try:
        schema = load_schema(args.schema)
        full = build_space(schema)
        if args.concern is not None:
            projected = project_space(full, args.concern)
            print(f"{args.concern}: {len(projected)}")
            if args.list:
                for p in projected.points:
                    print(_render_point(projected, p))
            return 0
        parts = [f"full: {len(full)}"]
        for tag in schema.concern_tags():
            parts.append(f"{tag}: {len(project_space(full, tag))}")
        print(", ".join(parts))
        if args.list:
            for p in full.points:
                print(_render_point(full, p))
        return 0
    except DsexError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def _manifest_from_args(args) -> RunManifest:
    base = load_manifest(args.manifest) if args.manifest else None

    def path_of(flag: str) -> Path:
        value = getattr(args, flag)
        if value is not None:
            return Path(value).resolve()
        if base is not None:
            return getattr(base, flag)
        raise ConfigError(f"--{flag} is required (or pass --manifest)")

    def pick(flag: str, default):
        value = getattr(args, flag)
        if value is not None:
            return value
        if base is not None:
            return getattr(base, flag)
        return default

    return RunManifest(
        schema=path_of("schema"),
        pipeline=path_of("pipeline"),
        evaluators=path_of("evaluators"),
        out=Path(pick("out", "out")).resolve() if args.out or base is None else base.out,
        parallelism=int(pick("parallelism", 1)),
        seed=int(pick("seed", 0)),
        fail_policy=pick("fail_policy", None),
        top=int(pick("top", 5)),
    )


def cmd_run(args) -> int:
    try:
        manifest = _manifest_from_args(args)
        manifest.validate()
        schema = load_schema(manifest.schema)
        registry = load_evaluators(manifest.evaluators, global_seed=manifest.seed)
        override = (
            parse_fail_policy(manifest.fail_policy) if manifest.fail_policy else None
        )
        pipeline = load_pipeline(
            manifest.pipeline,
            registry,
            parallelism=manifest.parallelism,
            fail_policy=override,
        )
        space = build_space(schema)
    except DsexError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2

    out_dir = manifest.out
    out_dir.mkdir(parents=True, exist_ok=True)
    echo_manifest(manifest, out_dir / "manifest.yaml")
    log.info("exploring %d points through %d steps", len(space), len(pipeline.steps))

    try:
        frame = run_pipeline(
            pipeline, space, Cache(), info={"seed": manifest.seed}
        )
    except PipelineAborted as err:
        print(f"error: {err}", file=sys.stderr)
        if err.provenance is not None:
            import json

            (out_dir / "provenance.json").write_text(
                json.dumps(err.provenance.to_dict(), indent=2) + "\n"
            )
        return 1
    except DsexError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2

    frame.to_csv(out_dir / "frame.csv")
    frame.to_jsonl(out_dir / "frame.jsonl")
    frame.provenance_json(out_dir / "provenance.json")
    print(render_top_table(frame, manifest.top))
    if len(frame) == 0:
        print("final space is empty", file=sys.stderr)
        return 3
    return 0


def cmd_report(args) -> int:
    try:
        columns, rows = load_rows(args.frame)
        if args.keep:
            keep = parse_expr(args.keep)
            if not keep.is_predicate:
                raise ConfigError("--keep expression must be boolean")
            _check_columns(keep.names, columns)
            rows = [r for r in rows if set(keep.names) <= set(r) and keep(r)]
        if args.sort:
            key = parse_expr(args.sort)
            if key.is_predicate:
                raise ConfigError("--sort expression must be numeric")
            _check_columns(key.names, columns)
            with_key = [r for r in rows if set(key.names) <= set(r)]
            without = [r for r in rows if not set(key.names) <= set(r)]
            with_key.sort(key=key, reverse=args.desc)
            rows = with_key + without
        print(render_rows_table(columns, rows, args.top))
        return 0
    except (DsexError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def _check_columns(names, columns) -> None:
    unknown = set(names) - set(columns)
    if unknown:
        raise ConfigError(f"unknown columns: {sorted(unknown)}")


def main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(prog="dsex", description="design space exploration")
    sub = parser.add_subparsers(dest="command", required=True)

    p_space = sub.add_parser("space", help="inspect a schema's design spaces")
    p_space.add_argument("--schema", required=True)
    p_space.add_argument("--concern", default=None)
    p_space.add_argument("--list", action="store_true")
    p_space.set_defaults(func=cmd_space)

    p_run = sub.add_parser("run", help="run a pipeline and export the frame")
    p_run.add_argument("--manifest", default=None, help="manifest file with defaults")
    p_run.add_argument("--schema", default=None)
    p_run.add_argument("--pipeline", default=None)
    p_run.add_argument("--evaluators", default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--parallelism", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--fail-policy", dest="fail_policy", default=None)
    p_run.add_argument("--top", type=int, default=None)
    p_run.set_defaults(func=cmd_run)

    p_report = sub.add_parser("report", help="re-sort or filter a saved frame")
    p_report.add_argument("--frame", required=True)
    p_report.add_argument("--keep", default=None)
    p_report.add_argument("--sort", default=None)
    p_report.add_argument("--desc", action="store_true")
    p_report.add_argument("--top", type=int, default=None)
    p_report.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
