"""Parameter schemas, design spaces and their grid topology.

A design space is an ordered, finite collection of candidate
implementations (points). Every point is addressed by integer indices
into the enumeration of each parameter domain; searches that rely on
neighborhoods (hill climbing, frontier tracing) measure distance in
this index space, never in raw-value space, so that power-of-two
domains step uniformly.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Iterable, Union

from .errors import (
    EmptySpaceError,
    NoSuchConcern,
    NotAFullGrid,
    PointNotInSpace,
    SchemaError,
)

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def check_name(name: str) -> str:
    """Validate a metric/parameter identifier and return it."""
    if not isinstance(name, str) or not _NAME_RE.match(name):
        raise SchemaError(f"invalid identifier: {name!r}")
    return name


@dataclass(frozen=True)
class NamedMetric:
    """A (name, value) pair; the atom of all measurement."""

    name: str
    value: float

    def __post_init__(self):
        check_name(self.name)
        object.__setattr__(self, "value", float(self.value))
        if not math.isfinite(self.value):
            raise SchemaError(f"metric {self.name!r} has non-finite value {self.value!r}")


@dataclass(frozen=True)
class Linear:
    """Integer range domain enumerating lo, lo+1, ..., hi."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise SchemaError(f"linear domain requires lo <= hi, got ({self.lo}, {self.hi})")

    def values(self) -> tuple[int, ...]:
        return tuple(range(self.lo, self.hi + 1))


@dataclass(frozen=True)
class Pow2:
    """Power-of-two domain enumerating 2^lo_exp ... 2^hi_exp."""

    lo_exp: int
    hi_exp: int

    def __post_init__(self):
        if self.lo_exp < 0:
            raise SchemaError(f"pow2 domain requires lo_exp >= 0, got {self.lo_exp}")
        if self.lo_exp > self.hi_exp:
            raise SchemaError(
                f"pow2 domain requires lo_exp <= hi_exp, got ({self.lo_exp}, {self.hi_exp})"
            )

    def values(self) -> tuple[int, ...]:
        return tuple(2**e for e in range(self.lo_exp, self.hi_exp + 1))


@dataclass(frozen=True)
class Enumerated:
    """Explicit list of distinct integers, kept in declaration order."""

    items: tuple[int, ...]

    def __init__(self, items: Iterable[int]):
        object.__setattr__(self, "items", tuple(int(v) for v in items))
        if not self.items:
            raise SchemaError("enum domain must be non-empty")
        if len(set(self.items)) != len(self.items):
            raise SchemaError(f"enum domain has duplicate values: {self.items}")

    def values(self) -> tuple[int, ...]:
        return self.items


ParamDomain = Union[Linear, Pow2, Enumerated]


def cardinality(domain: ParamDomain) -> int:
    return len(domain.values())


@dataclass(frozen=True)
class ParamSpec:
    """A named generation parameter: its value domain plus concern tags.

    Concern tags (e.g. "resource", "qos") mark which metric families a
    parameter influences; they are free-form strings compared
    case-sensitively, and may be empty.
    """

    name: str
    domain: ParamDomain
    concerns: tuple[str, ...] = ()

    def __post_init__(self):
        check_name(self.name)
        tags = tuple(self.concerns)
        for tag in tags:
            if not isinstance(tag, str) or not tag:
                raise SchemaError(f"invalid concern tag {tag!r} on parameter {self.name!r}")
        if len(set(tags)) != len(tags):
            raise SchemaError(f"duplicate concern tags on parameter {self.name!r}")
        object.__setattr__(self, "concerns", tags)


@dataclass(frozen=True)
class Schema:
    """Ordered list of parameter specs.

    Order is significant: it fixes coordinate order in points and the
    axes of the index grid.
    """

    params: tuple[ParamSpec, ...]

    def __init__(self, params: Iterable[ParamSpec]):
        object.__setattr__(self, "params", tuple(params))
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate parameter names in schema: {names}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(cardinality(p.domain) for p in self.params)

    def concern_tags(self) -> tuple[str, ...]:
        """All concern tags in first-appearance order."""
        seen: dict[str, None] = {}
        for p in self.params:
            for tag in p.concerns:
                seen.setdefault(tag)
        return tuple(seen)

    def __len__(self) -> int:
        return len(self.params)


@dataclass(frozen=True)
class Point:
    """One implementation candidate.

    ``coords`` are indices into each schema parameter's enumeration (in
    schema order), not raw values. ``frozen_params`` hold parameters
    demoted by dimension reduction, stored at their raw value.
    ``metrics`` accumulate in production order. ``degraded`` marks
    points whose metrics were substituted by a worst-value policy.
    """

    coords: tuple[int, ...]
    frozen_params: tuple[NamedMetric, ...] = ()
    metrics: tuple[NamedMetric, ...] = ()
    degraded: bool = False

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))
        object.__setattr__(self, "frozen_params", tuple(self.frozen_params))
        object.__setattr__(self, "metrics", tuple(self.metrics))
        names = [m.name for m in self.frozen_params] + [m.name for m in self.metrics]
        if len(set(names)) != len(names):
            raise SchemaError(f"name collision among frozen params and metrics: {names}")

    @property
    def key(self) -> tuple:
        """Identity of the point inside a space: coords plus frozen params."""
        return (self.coords, self.frozen_params)

    def metric_names(self) -> tuple[str, ...]:
        return tuple(m.name for m in self.metrics)

    def with_metrics(self, extra: Iterable[NamedMetric], degraded: bool = False) -> "Point":
        return Point(
            self.coords,
            self.frozen_params,
            self.metrics + tuple(extra),
            self.degraded or degraded,
        )


class Norm(Enum):
    L1 = "l1"  # Manhattan
    LINF = "linf"  # Chebyshev


def _distance(a: tuple[int, ...], b: tuple[int, ...], norm: Norm) -> int:
    deltas = (abs(x - y) for x, y in zip(a, b))
    return sum(deltas) if norm is Norm.L1 else max(deltas)


@dataclass(frozen=True)
class DesignSpace:
    """An ordered finite collection of points sharing one schema.

    Order is significant: strategies may sort, and the head of the
    space is the hill-climbing start. No two points may share identical
    coords and frozen params.
    """

    schema: Schema
    points: tuple[Point, ...]

    def __init__(self, schema: Schema, points: Iterable[Point]):
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "points", tuple(points))
        cards = schema.cardinalities
        names = set(schema.names)
        seen = set()
        for p in self.points:
            if len(p.coords) != len(schema):
                raise SchemaError(
                    f"point has {len(p.coords)} coords, schema has {len(schema)} parameters"
                )
            for k, c in enumerate(p.coords):
                if not 0 <= c < cards[k]:
                    raise SchemaError(f"coordinate {c} out of range for axis {k}")
            for m in p.frozen_params + p.metrics:
                if m.name in names:
                    raise SchemaError(f"point metric {m.name!r} collides with a parameter name")
            if p.key in seen:
                raise SchemaError(f"duplicate point {p.key}")
            seen.add(p.key)

    def __len__(self) -> int:
        return len(self.points)

    @cached_property
    def _key_set(self) -> frozenset:
        return frozenset(p.key for p in self.points)

    @cached_property
    def _by_coords(self) -> dict[tuple[int, ...], Point]:
        # only meaningful on spaces whose coords are unique (e.g. full grids)
        return {p.coords: p for p in self.points}

    def raw_values(self, point: Point) -> tuple[int, ...]:
        """Raw (enumerated) parameter values of a point, in schema order."""
        return tuple(
            spec.domain.values()[c] for spec, c in zip(self.schema.params, point.coords)
        )

    def contains(self, point: Point) -> bool:
        return point.key in self._key_set

    def is_full_grid(self) -> bool:
        expected = math.prod(self.schema.cardinalities)
        return len(self.points) == expected and len(self._by_coords) == expected

    def neighbours(self, point: Point, norm: Norm, dist: int) -> list[Point]:
        """Points within ``dist`` of ``point`` in index space, excluding it.

        Returned in the space's enumeration order.
        """
        if dist < 1:
            raise ValueError("distance must be a positive integer")
        if not self.contains(point):
            raise PointNotInSpace(f"point {point.key} is not in the space")
        out = []
        for q in self.points:
            if q.key == point.key:
                continue
            if _distance(point.coords, q.coords, norm) <= dist:
                out.append(q)
        return out

    def diagonal(self) -> list[Point]:
        """The corner-to-corner diagonal of a full grid.

        Returns L+1 points where L = max_k(cardinality_k - 1); point t
        sits at round-half-up(t * (cardinality_k - 1) / L) on axis k.
        Consecutive points differ by at most 1 in every coordinate.
        """
        if not self.is_full_grid():
            raise NotAFullGrid("diagonal requires every coords combination to be present")
        cards = self.schema.cardinalities
        span = max(c - 1 for c in cards)
        if span == 0:
            return [self.points[0]]
        coords_list = []
        for t in range(span + 1):
            # round half up with exact integer arithmetic
            coords_list.append(
                tuple((2 * t * (c - 1) + span) // (2 * span) for c in cards)
            )
        return [self._by_coords[c] for c in coords_list]


def build_space(schema: Schema) -> DesignSpace:
    """Materialize the full Cartesian product of a schema.

    Points are enumerated in row-major order of the schema (the last
    parameter varies fastest), with empty metrics and frozen params.
    """
    ranges = [range(c) for c in schema.cardinalities]
    points = (Point(coords) for coords in itertools.product(*ranges))
    return DesignSpace(schema, points)


def project_space(space: DesignSpace, concern: str, project_to_min: bool = True) -> DesignSpace:
    """Project a space onto the parameters carrying ``concern``.

    Removed parameters are frozen at their domain's minimum raw value
    (maximum when ``project_to_min`` is false) and appended to every
    surviving point's frozen params. Points are deduplicated on
    (coords, frozen params), first occurrence winning, with relative
    order preserved.
    """
    if not space.points:
        raise EmptySpaceError("cannot project an empty space")
    keep = [i for i, p in enumerate(space.schema.params) if concern in p.concerns]
    if not keep:
        # equivalently, every dimension would be removed
        raise NoSuchConcern(f"no parameter carries concern {concern!r}")
    if len(keep) == len(space.schema):
        return space
    removed = [i for i in range(len(space.schema)) if i not in keep]

    new_schema = Schema(space.schema.params[i] for i in keep)
    frozen_extra = tuple(
        NamedMetric(
            space.schema.params[i].name,
            float(
                min(space.schema.params[i].domain.values())
                if project_to_min
                else max(space.schema.params[i].domain.values())
            ),
        )
        for i in removed
    )

    seen = set()
    new_points = []
    for p in space.points:
        coords = tuple(p.coords[i] for i in keep)
        frozen = p.frozen_params + frozen_extra
        key = (coords, frozen)
        if key in seen:
            continue
        seen.add(key)
        new_points.append(Point(coords, frozen, p.metrics, p.degraded))
    return DesignSpace(new_schema, new_points)
