#!/usr/bin/env python3
"""Exhaustive vs. gradient search on the shipped surrogate fixtures.

Prints, per fixture, the best throughput found by each strategy and how
many surrogate-synthesis evaluations it needed. The gradient route should
match the exhaustive best while evaluating only a fraction of the space.
"""

import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from dsex import (  # noqa: E402
    Cache,
    FailMode,
    FailPolicy,
    PointView,
    StepContext,
    apply_transform,
    build_space,
    exhaustive_prune,
    expr_evaluator,
    gradient_sort,
)
from dsex.config import load_schema  # noqa: E402
from dsex.surrogate import load_model, model_evaluator  # noqa: E402

MODELS = ROOT / "pipelines" / "models"
SCHEMAS = ROOT / "pipelines" / "schemas"

GEMM_THROUGHPUT = (
    "matSize * bandwidth * freq_mhz"
    " / ((1 + matSize * matSize / 200) * (1 + bandwidth * bandwidth / 16))"
)


def counting_model(path):
    ev = model_evaluator(load_model(path))
    seen = set()

    def func(view):
        seen.add(view.point.coords)
        return ev.func(view)

    from dsex import Evaluator

    return Evaluator(ev.name, ev.produces, func), seen


def fixture_space(name):
    space = build_space(load_schema(SCHEMAS / f"{name}.yaml"))
    if name == "gemm_like":
        estim = model_evaluator(load_model(MODELS / "gemm_estim.json"))
        space = exhaustive_prune("dsp_estim < 4096", evaluator=estim).apply(
            space, StepContext(cache=Cache())
        )
    return space


def best_throughput(space):
    return max(PointView(space.schema, p).env["throughput"] for p in space.points)


def run_fixture(name, synth_file, extra_exprs):
    space = fixture_space(name)
    rows = []
    policy = FailPolicy(FailMode.PRUNE)

    synth, seen = counting_model(MODELS / synth_file)
    t0 = time.perf_counter()
    full = apply_transform(space, synth, Cache(), policy)
    for metric, text in extra_exprs:
        full = apply_transform(full, expr_evaluator(metric, metric, text), Cache())
    rows.append(("exhaustive", best_throughput(full), len(seen), time.perf_counter() - t0))

    synth, seen = counting_model(MODELS / synth_file)
    evs = [synth] + [expr_evaluator(m, m, t) for m, t in extra_exprs]
    t0 = time.perf_counter()
    out = gradient_sort(evs, "throughput").apply(
        space, StepContext(cache=Cache(), policy=policy)
    )
    rows.append(("gradient", best_throughput(out), len(seen), time.perf_counter() - t0))

    print(f"\n{name} ({len(space)} candidates)")
    print(f"  {'strategy':<12} {'best throughput':>16} {'#synth':>7} {'time':>8}")
    for strategy, best, evals, wall in rows:
        print(f"  {strategy:<12} {best:>16.3f} {evals:>7} {wall:>7.2f}s")


def main() -> int:
    run_fixture("fft_like", "fft_synth.json", [])
    run_fixture("gemm_like", "gemm_synth.json", [("throughput", GEMM_THROUGHPUT)])
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
