import random

import pytest

from dsex import (
    Cache,
    DesignSpace,
    EmptySpaceError,
    Evaluator,
    EvalError,
    FailMode,
    FailPolicy,
    KeepSide,
    Linear,
    NamedMetric,
    NotAFullGrid,
    ParamSpec,
    Pipeline,
    PipelineAborted,
    PointView,
    Pow2,
    Schema,
    StepContext,
    build_space,
    constant_evaluator,
    exhaustive_map,
    exhaustive_prune,
    exhaustive_sort,
    expr_evaluator,
    gradient_sort,
    identity,
    parse_expr,
    quick_prune,
    reduce_dimension,
    run_pipeline,
)
from dsex.errors import ConfigError

from conftest import counting


def grid(*dims):
    return build_space(
        Schema([ParamSpec(f"p{k}", Linear(0, d - 1)) for k, d in enumerate(dims)])
    )


def ctx(policy=None, parallelism=1):
    kwargs = {"cache": Cache(), "parallelism": parallelism}
    if policy is not None:
        kwargs["policy"] = policy
    return StepContext(**kwargs)


def env_of(space, point):
    return PointView(space.schema, point).env


class TestExhaustiveMap:
    def test_invocation_count_on_full_dummy_space(self, dummy_schema):
        space = build_space(dummy_schema)
        ev, calls = counting(constant_evaluator("c", "m", 1.0))
        out = exhaustive_map(ev).apply(space, ctx())
        assert len(calls) == 459
        assert len(out) == 459

    def test_empty_space(self, dummy_schema):
        space = DesignSpace(build_space(dummy_schema).schema, ())
        ev, calls = counting(constant_evaluator("c", "m", 1.0))
        out = exhaustive_map(ev).apply(space, ctx())
        assert len(out) == 0 and calls == []

    def test_latency_map_after_projection(self):
        from dsex.blackscholes import latency_evaluator
        from dsex import project_space

        schema = Schema(
            [
                ParamSpec("nbIteration", Pow2(5, 6), ("qos",)),
                ParamSpec("nbEuler", Pow2(1, 2), ("qos",)),
                ParamSpec("nbCore", Pow2(2, 3), ("resource",)),
            ]
        )
        projected = project_space(build_space(schema), "resource", project_to_min=True)
        out = exhaustive_map(latency_evaluator()).apply(projected, ctx())
        for p in out.points:
            env = env_of(out, p)
            expected = -(-env["nbIteration"] // env["nbCore"]) * env["nbEuler"]
            assert env["latency_cycles"] == expected


class TestExhaustiveSort:
    def test_minimal_sum_first(self):
        schema = Schema(
            [
                ParamSpec("dynamic", Linear(8, 10)),
                ParamSpec("precision", Linear(8, 10)),
                ParamSpec("nbCore", Pow2(2, 4)),
            ]
        )
        space = build_space(schema)
        step = exhaustive_sort("dynamic + precision + nbCore", ascending=True)
        out = step.apply(space, ctx())
        sums = [sum(out.raw_values(p)) for p in out.points]
        assert sums == sorted(sums)
        assert out.raw_values(out.points[0]) == (8, 8, 4)

    def test_constant_key_is_stable(self, dummy_schema):
        space = build_space(dummy_schema)
        out = exhaustive_sort("1", ascending=True).apply(space, ctx())
        assert [p.coords for p in out.points] == [p.coords for p in space.points]

    def test_descending_reverses_distinct_values(self):
        space = grid(7)
        ev = expr_evaluator("e", "dsp_synth", "p0 * 3 + 1")
        asc = exhaustive_sort("dsp_synth", evaluator=ev, ascending=True).apply(space, ctx())
        desc = exhaustive_sort("dsp_synth", evaluator=ev, ascending=False).apply(space, ctx())
        assert [p.coords for p in desc.points] == [p.coords for p in asc.points][::-1]

    def test_unresolvable_key(self):
        with pytest.raises(EvalError):
            exhaustive_sort("nope").apply(grid(3), ctx())

    def test_boolean_key_rejected(self):
        with pytest.raises(ConfigError):
            exhaustive_sort("a < b")


class TestExhaustivePrune:
    def test_threshold_count(self):
        space = grid(101)
        ev = expr_evaluator("estim", "dsp_estim", "2 * p0")
        out = exhaustive_prune("dsp_estim < 128", evaluator=ev).apply(space, ctx())
        assert len(out) == 64
        assert max(p.coords[0] for p in out.points) == 63

    def test_tautology_is_identity(self, dummy_schema):
        space = build_space(dummy_schema)
        out = exhaustive_prune("1 == 1").apply(space, ctx())
        assert [p.coords for p in out.points] == [p.coords for p in space.points]

    def test_contradiction_empties(self, dummy_schema):
        assert len(exhaustive_prune("1 == 0").apply(build_space(dummy_schema), ctx())) == 0

    def test_numeric_predicate_rejected(self):
        with pytest.raises(ConfigError):
            exhaustive_prune("a + b")


class TestReduceDimension:
    def test_blackscholes_minima(self):
        schema = Schema(
            [
                ParamSpec("dynamic", Linear(8, 32), ("resource", "qos")),
                ParamSpec("precision", Linear(8, 32), ("resource", "qos")),
                ParamSpec("nbIteration", Pow2(5, 10), ("qos",)),
                ParamSpec("nbEuler", Pow2(1, 6), ("qos",)),
                ParamSpec("nbCore", Pow2(2, 10), ("resource",)),
            ]
        )
        space = build_space(schema)
        context = ctx()
        out = reduce_dimension("resource", to_min=True).apply(space, context)
        frozen = {m.name: m.value for m in out.points[0].frozen_params}
        assert frozen == {"nbIteration": 32.0, "nbEuler": 2.0}
        assert context.extra["removed_dimensions"] == ["nbIteration", "nbEuler"]
        assert context.extra["cardinality"] == len(out)

    def test_all_params_covered_is_noop(self):
        schema = Schema([ParamSpec("a", Linear(0, 2), ("r",)), ParamSpec("b", Linear(0, 2), ("r",))])
        space = build_space(schema)
        assert reduce_dimension("r").apply(space, ctx()) is space

    def test_dummy_resource_cardinality(self, dummy_schema):
        out = reduce_dimension("resource").apply(build_space(dummy_schema), ctx())
        assert len(out) == 153


def quadratic_bowl(peak):
    terms = " + ".join(
        f"(p{k} - {c}) * (p{k} - {c})" for k, c in enumerate(peak)
    )
    return f"0 - ({terms})"


class TestGradientSort:
    def test_finds_global_optimum_of_unimodal_bowl(self):
        space = grid(17, 9)
        ev, calls = counting(expr_evaluator("obj", "score", quadratic_bowl((2, 3))))
        context = ctx()
        out = gradient_sort([ev], "score").apply(space, context)
        assert out.points[0].coords == (2, 3)
        # output is exactly the evaluated set, best first
        assert {p.coords for p in out.points} == set(calls)
        scores = [env_of(out, p)["score"] for p in out.points]
        assert scores == sorted(scores, reverse=True)

    def test_evaluated_set_is_union_of_visited_rings(self):
        space = grid(17, 9)
        ev, calls = counting(expr_evaluator("obj", "score", quadratic_bowl((2, 3))))
        gradient_sort([ev], "score").apply(space, ctx())
        # replay the deterministic walk with an independent oracle
        def score(coords):
            return -((coords[0] - 2) ** 2 + (coords[1] - 3) ** 2)

        current = (0, 0)
        expected = {current}
        while True:
            ring = [
                p.coords
                for p in space.points
                if sum(abs(a - b) for a, b in zip(p.coords, current)) == 1
            ]
            expected.update(ring)
            best = ring[0]  # enumeration order breaks ties
            for c in ring[1:]:
                if score(c) > score(best):
                    best = c
            if score(best) > score(current):
                current = best
            else:
                break
        assert set(calls) == expected

    def test_single_point_space(self):
        space = grid(1)
        ev, calls = counting(constant_evaluator("c", "score", 5.0))
        out = gradient_sort([ev], "score").apply(space, ctx())
        assert len(out) == 1 and len(calls) == 1

    def test_increasing_objective_walks_to_far_corner(self):
        space = grid(5, 5)
        ev, calls = counting(expr_evaluator("obj", "score", "p0 + p1"))
        out = gradient_sort([ev], "score").apply(space, ctx())
        assert out.points[0].coords == (4, 4)
        assert len(calls) <= 25

    def test_budget_never_exceeds_grid(self):
        rng = random.Random(3)
        for _ in range(20):
            dims = [rng.randint(2, 6) for _ in range(rng.randint(1, 3))]
            space = grid(*dims)
            peak = tuple(rng.randrange(d) for d in dims)
            ev, calls = counting(expr_evaluator("obj", "score", quadratic_bowl(peak)))
            out = gradient_sort([ev], "score").apply(space, ctx())
            assert len(calls) <= len(space)
            assert out.points[0].coords == peak

    def test_strictly_fewer_evaluations_on_2d_plus_grids(self):
        # on >= 2 axes the walk always skips some far corner cells
        rng = random.Random(9)
        for _ in range(10):
            dims = [rng.randint(3, 7) for _ in range(rng.randint(2, 3))]
            space = grid(*dims)
            peak = tuple(rng.randrange(d) for d in dims)
            ev, calls = counting(expr_evaluator("obj", "score", quadratic_bowl(peak)))
            gradient_sort([ev], "score").apply(space, ctx())
            assert len(calls) < len(space)

    def test_minimize_mode(self):
        space = grid(9, 9)
        ev = expr_evaluator("obj", "cost", "(p0 - 5) * (p0 - 5) + (p1 - 1) * (p1 - 1)")
        out = gradient_sort([ev], "cost", maximize=False).apply(space, ctx())
        assert out.points[0].coords == (5, 1)

    def test_tie_break_prefers_enumeration_order(self):
        space = grid(3, 3)
        # both axis neighbors of the start improve equally
        ev = expr_evaluator("obj", "score", "p0 + p1")
        out = gradient_sort([ev], "score").apply(space, ctx())
        walked = {p.coords for p in out.points}
        # from (0,0) the tie between (0,1) and (1,0) goes to (0,1)
        assert (0, 1) in walked

    def test_empty_space_rejected(self):
        space = DesignSpace(grid(2).schema, ())
        with pytest.raises(EmptySpaceError):
            gradient_sort([constant_evaluator("c", "s", 1.0)], "s").apply(space, ctx())

    def test_purity_and_repeatability(self):
        space = grid(6, 6)
        ev = expr_evaluator("obj", "score", quadratic_bowl((4, 1)))
        step = gradient_sort([ev], "score")
        out1 = step.apply(space, ctx())
        out2 = step.apply(space, ctx())
        assert out1.points == out2.points
        assert all(p.metrics == () for p in space.points)

    def test_prune_policy_skips_failing_points(self):
        from dsex.errors import EvalErrorKind

        space = grid(5)

        def func(view):
            if view.point.coords[0] == 1:
                raise EvalError(EvalErrorKind.TIMEOUT, "slow")
            return (float(view.point.coords[0]),)

        ev = Evaluator("flaky", ("score",), func)
        out = gradient_sort([ev], "score").apply(
            space, ctx(policy=FailPolicy(FailMode.PRUNE))
        )
        assert all(p.coords != (1,) for p in out.points)


def brute_force_frontier(space, keep):
    frontier = set()
    kept = {p.coords: keep(env_of(space, p)) for p in space.points}
    from dsex import Norm

    for p in space.points:
        if not kept[p.coords]:
            continue
        ring = space.neighbours(p, Norm.LINF, 1)
        if any(not kept[q.coords] for q in ring):
            frontier.add(p.coords)
    return frontier


class TestQuickPrune:
    def test_staircase_matches_exhaustive(self):
        space = grid(10, 10)
        context = ctx()
        out = quick_prune([], "p0 + p1 >= 9").apply(space, context)
        kept = {p.coords for p in out.points}
        oracle = {p.coords for p in space.points if sum(p.coords) >= 9}
        assert kept == oracle
        assert len(kept) == 55
        assert context.extra["predicate_evaluations"] < 100

    def test_keep_everything_returns_full_space(self):
        space = grid(10, 10)
        out = quick_prune([], "1 == 1").apply(space, ctx())
        assert len(out) == 100

    def test_keep_nothing_returns_empty_space(self):
        space = grid(10, 10)
        out = quick_prune([], "1 == 0").apply(space, ctx())
        assert len(out) == 0

    def test_downward_side(self):
        space = grid(12, 12)
        out = quick_prune([], "p0 + p1 <= 6", side=KeepSide.DOWNWARD).apply(space, ctx())
        assert {p.coords for p in out.points} == {
            p.coords for p in space.points if sum(p.coords) <= 6
        }

    def test_requires_full_grid(self):
        space = grid(4, 4)
        partial = DesignSpace(space.schema, space.points[1:])
        with pytest.raises(NotAFullGrid):
            quick_prune([], "1 == 1").apply(partial, ctx())

    def test_concern_needs_only_the_projected_grid_to_be_full(self):
        schema = Schema(
            [
                ParamSpec("a", Linear(0, 4), ("qos",)),
                ParamSpec("b", Linear(0, 3), ("resource",)),
            ]
        )
        space = build_space(schema)
        # dropping one point leaves the qos projection complete
        partial = DesignSpace(schema, space.points[1:])
        out = quick_prune([], "a >= 2", concern="qos").apply(partial, ctx())
        expected = {p.coords for p in partial.points if p.coords[0] >= 2}
        assert {p.coords for p in out.points} == expected
        # dropping a whole projected column does not
        gappy = DesignSpace(schema, [p for p in space.points if p.coords[0] != 2])
        with pytest.raises(NotAFullGrid):
            quick_prune([], "a >= 2", concern="qos").apply(gappy, ctx())

    def test_frontier_set_matches_brute_force(self):
        rng = random.Random(31)
        for _ in range(25):
            nx, ny = rng.randint(6, 12), rng.randint(6, 12)
            space = grid(nx, ny)
            w1, w2 = rng.uniform(0.3, 2.5), rng.uniform(0.3, 2.5)
            tau = rng.uniform(0.2, 0.8) * (w1 * (nx - 1) + w2 * (ny - 1))
            text = f"{w1:.3f} * p0 + {w2:.3f} * p1 >= {tau:.3f}"
            keep = parse_expr(text)
            context = ctx()
            quick_prune([], text).apply(space, context)
            # recover the algorithm's frontier from provenance size plus a
            # direct brute-force recomputation
            expected = brute_force_frontier(space, keep)
            if not expected:
                continue
            assert context.extra["frontier_size"] == len(expected)

    def test_metrics_attached_to_probed_points(self):
        space = grid(8, 8)
        ev = expr_evaluator("estim", "height", "p0 + p1")
        out = quick_prune([ev], "height >= 7").apply(space, ctx())
        probed = [p for p in out.points if p.metrics]
        assert probed, "frontier points must carry the produced metric"
        for p in probed:
            assert env_of(out, p)["height"] == sum(p.coords)

    def test_concern_projection_matches_exhaustive(self):
        schema = Schema(
            [
                ParamSpec("a", Linear(0, 7), ("qos",)),
                ParamSpec("b", Linear(0, 5), ("qos",)),
                ParamSpec("c", Linear(0, 3), ("resource",)),
            ]
        )
        space = build_space(schema)
        ev, calls = counting(expr_evaluator("estim", "quality", "a + b"))
        context = ctx()
        out = quick_prune([ev], "quality >= 6", concern="qos").apply(space, context)
        kept = {p.coords for p in out.points}
        oracle = {p.coords for p in space.points if p.coords[0] + p.coords[1] >= 6}
        assert kept == oracle
        # decisions ran on the 8x6 projected grid, not the 192-point space
        assert len(set(calls)) <= 48
        # metrics propagate to every re-expanded copy of a probed projection
        probed = {p.coords[:2] for p in out.points if p.metrics}
        for p in out.points:
            if p.coords[:2] in probed:
                assert env_of(out, p)["quality"] == p.coords[0] + p.coords[1]

    def test_numeric_keep_rejected(self):
        with pytest.raises(ConfigError):
            quick_prune([], "a + b")


class TestPipeline:
    def test_compose_equals_pipeline(self):
        space = grid(10, 7)
        estim = expr_evaluator("estim", "dsp_estim", "p0 * 4 + p1")
        synth = expr_evaluator("synth", "dsp_synth", "p0 * 4 + p1 + 2")
        prune = exhaustive_prune("dsp_estim < 24", evaluator=estim)
        sort = exhaustive_sort("dsp_synth", evaluator=synth, ascending=False)
        by_hand = sort.apply(prune.apply(space, ctx()), ctx())
        frame = run_pipeline(Pipeline((prune, sort)), space)
        hand_rows = [space.raw_values(p) for p in by_hand.points]
        assert [tuple(int(v) for v in row[:2]) for row in frame.rows] == hand_rows

    def test_single_identity_step(self, dummy_schema):
        space = build_space(dummy_schema)
        frame = run_pipeline(Pipeline((identity(),)), space)
        assert len(frame) == 459
        assert frame.metric_columns == ()
        assert frame.param_columns == ("param1", "param2", "param3")

    def test_prune_sort_order_insensitive_sets(self):
        space = grid(9, 9)
        ev = expr_evaluator("e", "m", "p0 * 2 + p1")
        prune_first = run_pipeline(
            Pipeline(
                (
                    exhaustive_prune("p0 + p1 >= 4"),
                    exhaustive_sort("m", evaluator=ev),
                )
            ),
            space,
        )
        sort_first = run_pipeline(
            Pipeline(
                (
                    exhaustive_sort("m", evaluator=ev),
                    exhaustive_prune("p0 + p1 >= 4"),
                )
            ),
            space,
        )
        assert {r for r in prune_first.rows} == {r for r in sort_first.rows}

    def test_abort_carries_partial_provenance(self):
        space = grid(4)

        def func(view):
            from dsex.errors import EvalErrorKind

            raise EvalError(EvalErrorKind.TOOL_FAILURE, "dead", exit_code=1)

        bad = Evaluator("bad", ("m",), func)
        pipeline = Pipeline((identity(), exhaustive_map(bad)))
        with pytest.raises(PipelineAborted) as err:
            run_pipeline(pipeline, space)
        prov = err.value.provenance
        assert [s.step for s in prov.steps] == ["identity", "map_bad"]
        assert prov.steps[1].points_out is None
        assert "error" in prov.steps[1].extra

    def test_per_step_policy_overrides_pipeline_default(self):
        space = grid(5)

        def func(view):
            from dsex.errors import EvalErrorKind

            if view.point.coords[0] == 0:
                raise EvalError(EvalErrorKind.TIMEOUT, "slow")
            return (1.0,)

        flaky = Evaluator("flaky", ("m",), func)
        step = exhaustive_map(flaky)
        tolerant = Step_with_policy(step, FailPolicy(FailMode.PRUNE))
        frame = run_pipeline(Pipeline((tolerant,)), space)
        assert len(frame) == 4

    def test_provenance_counters(self):
        space = grid(6, 6)
        ev = expr_evaluator("e", "m", "p0 + p1")
        cache = Cache()
        pipeline = Pipeline((exhaustive_map(ev),))
        frame = run_pipeline(pipeline, space, cache)
        assert frame.provenance.steps[0].evaluator_invocations == 36
        frame2 = run_pipeline(pipeline, space, cache)
        assert frame2.provenance.steps[0].evaluator_invocations == 0
        assert frame2.provenance.steps[0].cache_hits == 36

    def test_empty_pipeline_rejected(self):
        with pytest.raises(ConfigError):
            Pipeline(())


def Step_with_policy(step, policy):
    from dsex import Step

    return Step(step.name, step.kind, step.apply_fn, step.evaluators, policy)


def _purity_steps():
    ev = expr_evaluator("e", "m", "a * 2 + b")
    return [
        identity(),
        exhaustive_map(ev),
        exhaustive_sort("a - b", evaluator=ev, ascending=False),
        exhaustive_prune("a + b >= 3", evaluator=ev),
        reduce_dimension("left"),
        gradient_sort([ev], "m"),
        quick_prune([ev], "m >= 4"),
    ]


@pytest.mark.parametrize("step", _purity_steps(), ids=lambda s: s.name)
def test_every_builtin_step_is_pure(step):
    schema = Schema(
        [ParamSpec("a", Linear(0, 4), ("left",)), ParamSpec("b", Linear(0, 3), ("right",))]
    )
    space = build_space(schema)
    before = tuple(space.points)
    first = step.apply(space, ctx())
    second = step.apply(space, ctx())
    assert first.points == second.points
    assert space.points == before
    assert all(p.metrics == () for p in space.points)
