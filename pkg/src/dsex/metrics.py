"""Evaluator contract, memoizing cache, failure policies and transforms.

An evaluator turns a point into a fixed list of new named metrics (or
fails with an EvalError). All evaluator invocations are routed through
a write-once cache keyed by (evaluator name, coords, frozen params);
stored failures are replayed on later lookups so expensive timeouts
are never retried. Spaces are enhanced point-by-point, optionally in
parallel, with results always reassembled in point-index order so
output never depends on completion timing.
"""

from __future__ import annotations

import json
import os
import re
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, Mapping, Sequence

from .errors import ConfigError, EvalError, EvalErrorKind, MetricCollision
from .expr import MetricExpr, parse_expr
from .space import DesignSpace, NamedMetric, Point, Schema, check_name


@dataclass(frozen=True)
class PointView:
    """A point bound to its schema, as seen by an evaluator.

    ``env`` maps every resolvable name to its value: parameters at raw
    values, frozen params and metrics at their stored values.
    """

    schema: Schema
    point: Point

    @cached_property
    def env(self) -> dict[str, float]:
        env = {}
        for spec, c in zip(self.schema.params, self.point.coords):
            env[spec.name] = float(spec.domain.values()[c])
        for m in self.point.frozen_params:
            env[m.name] = m.value
        for m in self.point.metrics:
            env[m.name] = m.value
        return env

    @property
    def coords(self) -> tuple[int, ...]:
        return self.point.coords


@dataclass(frozen=True)
class Evaluator:
    """Produces a fixed set of named metrics for any point.

    ``func`` returns the metric values in ``produces`` order, or raises
    EvalError. Evaluators must be deterministic with respect to the
    point they see unless declared otherwise; nondeterministic ones are
    still cached, first result wins.
    """

    name: str
    produces: tuple[str, ...]
    func: Callable[[PointView], Sequence[float]]
    deterministic: bool = True

    def __post_init__(self):
        check_name(self.name)
        object.__setattr__(self, "produces", tuple(self.produces))
        if not self.produces:
            raise ConfigError(f"evaluator {self.name!r} must produce at least one metric")
        for n in self.produces:
            check_name(n)
        if len(set(self.produces)) != len(self.produces):
            raise ConfigError(f"evaluator {self.name!r} has duplicate produced names")

    @property
    def arity(self) -> int:
        return len(self.produces)


class FailMode(Enum):
    ABORT = "abort"
    PRUNE = "prune"
    ASSIGN_WORST = "assign_worst"


@dataclass(frozen=True)
class FailPolicy:
    """What to do when an evaluator fails on a point.

    ABORT surfaces the first error (in point order). PRUNE drops the
    point. ASSIGN_WORST substitutes a configured per-metric worst value
    and tags the point as degraded; the worst value carries no inferred
    sign, it must be configured for every produced metric.
    """

    mode: FailMode = FailMode.ABORT
    worst: Mapping[str, float] = field(default_factory=dict)

    def worst_value(self, metric: str) -> float:
        if metric not in self.worst:
            raise ConfigError(
                f"assign_worst policy has no worst value configured for metric {metric!r}"
            )
        return float(self.worst[metric])


ABORT = FailPolicy(FailMode.ABORT)


class Cache:
    """Write-once memo of evaluator results, including stored failures.

    Keys are (evaluator name, coords, frozen params). Hit/miss counters
    are exposed; a miss is counted per actual evaluator invocation.
    Safe under concurrent read/write; on a race the first stored result
    wins and later computations are discarded.
    """

    def __init__(self):
        self._store: dict[tuple, object] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(evaluator: Evaluator, point: Point) -> tuple:
        return (evaluator.name, point.coords, point.frozen_params)

    def run(self, evaluator: Evaluator, view: PointView) -> tuple[float, ...]:
        """Return the evaluator's metrics for the point, memoized.

        Stored EvalErrors are re-raised on later lookups without
        re-invoking the evaluator.
        """
        key = self.key(evaluator, view.point)
        with self._lock:
            if key in self._store:
                self.hits += 1
                cached = self._store[key]
                if isinstance(cached, EvalError):
                    raise cached
                return cached
            self.misses += 1
        try:
            values = tuple(float(v) for v in evaluator.func(view))
        except EvalError as err:
            tagged = err.at(view.point.coords) if err.coords is None else err
            stored = self._put(key, tagged)
            if isinstance(stored, EvalError):
                raise stored
            return stored
        if len(values) != evaluator.arity:
            raise ConfigError(
                f"evaluator {evaluator.name!r} returned {len(values)} values, "
                f"declared arity is {evaluator.arity}"
            )
        stored = self._put(key, values)
        if isinstance(stored, EvalError):
            raise stored
        return stored

    def _put(self, key, value):
        # first write wins; a racing computation is discarded
        with self._lock:
            if key not in self._store:
                self._store[key] = value
            return self._store[key]

    def counters(self) -> tuple[int, int]:
        with self._lock:
            return self.hits, self.misses


def _indexed_map(fn, items: Sequence, parallelism: int) -> list:
    """Apply ``fn`` to items, in parallel when asked, keeping index order."""
    if parallelism <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, items))


def enhance_point(
    point: Point,
    schema: Schema,
    evaluators: Sequence[Evaluator],
    cache: Cache,
    policy: FailPolicy = ABORT,
) -> Point | None:
    """Run a chain of evaluators over one point, applying the policy.

    Returns the enhanced point, or None when the policy pruned it.
    Under ABORT the EvalError propagates.
    """
    current = point
    for ev in evaluators:
        try:
            values = cache.run(ev, PointView(schema, current))
        except EvalError:
            if policy.mode is FailMode.PRUNE:
                return None
            if policy.mode is FailMode.ABORT:
                raise
            values = tuple(policy.worst_value(n) for n in ev.produces)
            current = current.with_metrics(
                (NamedMetric(n, v) for n, v in zip(ev.produces, values)), degraded=True
            )
            continue
        current = current.with_metrics(
            NamedMetric(n, v) for n, v in zip(ev.produces, values)
        )
    return current


def enhance_points(
    points: Sequence[Point],
    schema: Schema,
    evaluators: Sequence[Evaluator],
    cache: Cache,
    policy: FailPolicy = ABORT,
    parallelism: int = 1,
) -> list[Point | None]:
    """Batch form of enhance_point; output is aligned with the input.

    Under ABORT with parallel execution the error surfaced is the one
    of the earliest failing point in index order, never the first to
    complete.
    """

    if parallelism <= 1 or len(points) <= 1:
        # sequential: stop at the first failure instead of finishing the batch
        return [enhance_point(p, schema, evaluators, cache, policy) for p in points]

    def one(point: Point):
        try:
            return enhance_point(point, schema, evaluators, cache, policy)
        except EvalError as err:
            return err

    results = _indexed_map(one, points, parallelism)
    for r in results:
        if isinstance(r, EvalError):
            raise r
    return results


def check_no_collision(space: DesignSpace, evaluator: Evaluator) -> None:
    produced = set(evaluator.produces)
    clash = produced & set(space.schema.names)
    if clash:
        raise MetricCollision(f"produced names collide with parameters: {sorted(clash)}")
    for p in space.points:
        names = {m.name for m in p.frozen_params} | {m.name for m in p.metrics}
        clash = produced & names
        if clash:
            raise MetricCollision(
                f"produced names already present on point {p.coords}: {sorted(clash)}"
            )


def apply_transform(
    space: DesignSpace,
    evaluator: Evaluator,
    cache: Cache,
    policy: FailPolicy = ABORT,
    parallelism: int = 1,
) -> DesignSpace:
    """Enhance every point of a space with an evaluator's metrics.

    Point order is unchanged; failures are handled per the policy
    (pruned points are dropped, never reordered).
    """
    check_no_collision(space, evaluator)
    results = enhance_points(
        space.points, space.schema, [evaluator], cache, policy, parallelism
    )
    return DesignSpace(space.schema, (p for p in results if p is not None))


def expr_evaluator(name: str, produces: str, expression: str | MetricExpr) -> Evaluator:
    """Evaluator computing one metric from a cost expression."""
    expr = parse_expr(expression) if isinstance(expression, str) else expression
    if expr.is_predicate:
        raise ConfigError(f"cost expression for {produces!r} must be numeric, not boolean")

    def func(view: PointView) -> Sequence[float]:
        value = expr(view.env)
        return (float(value),)

    return Evaluator(name, (produces,), func)


def constant_evaluator(name: str, produces: str, value: float) -> Evaluator:
    return Evaluator(name, (produces,), lambda view: (float(value),))


def _render_raw(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


@dataclass(frozen=True)
class CommandSpec:
    """How to launch an external metric tool for a point.

    ``argv`` and ``env`` entries may reference any name resolvable on
    the point with ``{name}`` placeholders. The process additionally
    receives ``DSEX_<PARAMNAME>=<raw value>`` for every parameter
    (schema and frozen), must print a flat JSON object of
    name -> number on stdout and exit 0.
    """

    argv: tuple[str, ...]
    produces: tuple[str, ...]
    env: Mapping[str, str] = field(default_factory=dict)
    timeout_s: float | None = None
    output_format: str = "json"

    def __post_init__(self):
        object.__setattr__(self, "argv", tuple(self.argv))
        object.__setattr__(self, "produces", tuple(self.produces))
        if self.output_format != "json":
            raise ConfigError(f"unsupported output format {self.output_format!r}")
        if not self.argv:
            raise ConfigError("command argv must not be empty")


_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


def _substitute(template: str, env: Mapping[str, float]) -> str:
    """Replace {name} placeholders with raw values; other braces stay literal."""

    def repl(match: "re.Match[str]") -> str:
        name = match.group(1)
        if name not in env:
            raise EvalError(
                EvalErrorKind.NAME_NOT_FOUND,
                f"template {template!r} references unknown name {name!r}",
                name=name,
            )
        return _render_raw(env[name])

    return _PLACEHOLDER_RE.sub(repl, template)


def external_command(name: str, spec: CommandSpec) -> Evaluator:
    """Evaluator that shells out to an external tool per point."""

    def func(view: PointView) -> Sequence[float]:
        env_map = view.env
        argv = [_substitute(a, env_map) for a in spec.argv]
        proc_env = dict(os.environ)
        for spec_param, c in zip(view.schema.params, view.point.coords):
            raw = spec_param.domain.values()[c]
            proc_env[f"DSEX_{spec_param.name.upper()}"] = _render_raw(raw)
        for m in view.point.frozen_params:
            proc_env[f"DSEX_{m.name.upper()}"] = _render_raw(m.value)
        for key, tmpl in spec.env.items():
            proc_env[key] = _substitute(tmpl, env_map)
        try:
            proc = subprocess.run(
                argv,
                env=proc_env,
                capture_output=True,
                text=True,
                timeout=spec.timeout_s,
            )
        except subprocess.TimeoutExpired:
            raise EvalError(
                EvalErrorKind.TIMEOUT,
                f"command {argv[0]!r} exceeded {spec.timeout_s}s",
            ) from None
        if proc.returncode != 0:
            raise EvalError(
                EvalErrorKind.TOOL_FAILURE,
                f"command {argv[0]!r} exited {proc.returncode}: {proc.stderr.strip()[:200]}",
                exit_code=proc.returncode,
            )
        try:
            payload = json.loads(proc.stdout)
        except json.JSONDecodeError as err:
            raise EvalError(
                EvalErrorKind.PARSE_FAILURE, f"invalid tool output: {err}"
            ) from None
        if not isinstance(payload, dict):
            raise EvalError(EvalErrorKind.PARSE_FAILURE, "tool output is not a flat object")
        out = []
        for metric in spec.produces:
            if metric not in payload:
                raise EvalError(
                    EvalErrorKind.PARSE_FAILURE,
                    f"tool output lacks declared metric {metric!r}",
                )
            value = payload[metric]
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise EvalError(
                    EvalErrorKind.PARSE_FAILURE,
                    f"tool output metric {metric!r} is not a number",
                )
            out.append(float(value))
        return out

    return Evaluator(name, spec.produces, func)


def simulated_latency(seconds: float) -> None:
    """Sleep helper for evaluators that model slow tools."""
    if seconds > 0:
        time.sleep(seconds)
