"""Declarative file formats: schemas, evaluator registries, pipelines,
and run manifests.

All files are YAML key-value trees. Paths inside a file resolve
relative to that file's directory, so pipeline bundles stay
relocatable. Schema files round-trip losslessly through
``schema_to_dict`` / ``schema_from_dict``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import yaml

from .blackscholes import BsModelParams, latency_evaluator, qos_evaluator
from .errors import ConfigError
from .metrics import (
    CommandSpec,
    Evaluator,
    FailMode,
    FailPolicy,
    expr_evaluator,
    external_command,
)
from .space import Enumerated, Linear, ParamSpec, Pow2, Schema
from .strategy import (
    KeepSide,
    Pipeline,
    Step,
    exhaustive_map,
    exhaustive_prune,
    exhaustive_sort,
    gradient_sort,
    identity,
    quick_prune,
    reduce_dimension,
)
from .surrogate import load_model, model_evaluator, model_from_dict


def _load_yaml(path: Path) -> dict:
    try:
        data = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except yaml.YAMLError as err:
        raise ConfigError(f"cannot parse {path}: {err}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping at the top level")
    return data


def schema_from_dict(data: Mapping) -> Schema:
    if "params" not in data or not isinstance(data["params"], list):
        raise ConfigError("schema must have a 'params' list")
    specs = []
    for i, entry in enumerate(data["params"]):
        where = f"params[{i}]"
        if not isinstance(entry, dict) or "name" not in entry or "domain" not in entry:
            raise ConfigError(f"{where}: each param needs 'name' and 'domain'")
        domain_spec = entry["domain"]
        if not isinstance(domain_spec, dict) or len(domain_spec) != 1:
            raise ConfigError(f"{where}: domain must be one of linear/pow2/enum")
        (kind, args), = domain_spec.items()
        if kind == "linear":
            domain = Linear(int(args[0]), int(args[1]))
        elif kind == "pow2":
            domain = Pow2(int(args[0]), int(args[1]))
        elif kind == "enum":
            domain = Enumerated(args)
        else:
            raise ConfigError(f"{where}: unknown domain kind {kind!r}")
        specs.append(
            ParamSpec(str(entry["name"]), domain, tuple(entry.get("concerns", ())))
        )
    return Schema(specs)


def schema_to_dict(schema: Schema) -> dict:
    params = []
    for p in schema.params:
        if isinstance(p.domain, Linear):
            domain = {"linear": [p.domain.lo, p.domain.hi]}
        elif isinstance(p.domain, Pow2):
            domain = {"pow2": [p.domain.lo_exp, p.domain.hi_exp]}
        else:
            domain = {"enum": list(p.domain.items)}
        entry: dict = {"name": p.name, "domain": domain}
        if p.concerns:
            entry["concerns"] = list(p.concerns)
        params.append(entry)
    return {"params": params}


def load_schema(path: str | Path) -> Schema:
    return schema_from_dict(_load_yaml(Path(path)))


def save_schema(schema: Schema, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(schema_to_dict(schema), sort_keys=False))


def _build_evaluator(entry: Mapping, base_dir: Path, global_seed: int) -> Evaluator:
    if "name" not in entry or "kind" not in entry:
        raise ConfigError("each evaluator needs 'name' and 'kind'")
    name = str(entry["name"])
    kind = str(entry["kind"])
    if kind == "expr":
        return expr_evaluator(name, str(entry["produces"]), str(entry["expr"]))
    if kind == "model":
        if "model" in entry:
            model = load_model(base_dir / str(entry["model"]))
        else:
            model = model_from_dict(entry, name=name)
        return model_evaluator(model, name=name)
    if kind == "command":
        spec = CommandSpec(
            argv=tuple(str(a) for a in entry["argv"]),
            produces=tuple(entry["produces"]),
            env={str(k): str(v) for k, v in dict(entry.get("env", {})).items()},
            timeout_s=float(entry["timeout_s"]) if "timeout_s" in entry else None,
        )
        return external_command(name, spec)
    if kind == "blackscholes_qos":
        params = dict(entry.get("model", {}))
        model = BsModelParams(
            S0=float(params.get("S0", 100.0)),
            mu=float(params.get("mu", 0.05)),
            sigma=float(params.get("sigma", 0.2)),
            T=float(params.get("T", 1.0)),
        )
        return qos_evaluator(model, global_seed, name=name)
    if kind == "latency":
        return latency_evaluator(int(entry.get("overhead", 0)), name=name)
    raise ConfigError(f"unknown evaluator kind {kind!r}")


def load_evaluators(path: str | Path, global_seed: int = 0) -> dict[str, Evaluator]:
    path = Path(path)
    data = _load_yaml(path)
    entries = data.get("evaluators")
    if not isinstance(entries, list):
        raise ConfigError(f"{path} must have an 'evaluators' list")
    registry: dict[str, Evaluator] = {}
    for entry in entries:
        try:
            ev = _build_evaluator(entry, path.parent, global_seed)
        except KeyError as err:
            raise ConfigError(
                f"evaluator entry {entry.get('name', '?')!r} is missing key {err.args[0]!r}"
            ) from None
        if ev.name in registry:
            raise ConfigError(f"duplicate evaluator name {ev.name!r}")
        registry[ev.name] = ev
    return registry


def parse_fail_policy(mode: str, worst: Mapping[str, float] | None = None) -> FailPolicy:
    try:
        fail_mode = FailMode(mode)
    except ValueError:
        options = ", ".join(m.value for m in FailMode)
        raise ConfigError(f"unknown fail policy {mode!r} (expected one of: {options})") from None
    return FailPolicy(fail_mode, dict(worst or {}))


def _registry_get(registry: Mapping[str, Evaluator], name: str) -> Evaluator:
    if name not in registry:
        raise ConfigError(f"evaluator {name!r} is not defined in the registry")
    return registry[name]


def _build_step(entry: Mapping, registry: Mapping[str, Evaluator]) -> Step:
    kind = str(entry.get("step", ""))
    label = entry.get("name")
    policy = None
    if "fail_policy" in entry:
        policy = parse_fail_policy(str(entry["fail_policy"]), entry.get("worst"))

    def with_policy(step: Step) -> Step:
        if policy is None:
            return step
        return Step(step.name, step.kind, step.apply_fn, step.evaluators, policy)

    if kind == "identity":
        return with_policy(identity(label or "identity"))
    if kind == "map":
        ev = _registry_get(registry, str(entry["evaluator"]))
        return with_policy(exhaustive_map(ev, label))
    if kind == "sort":
        ev = None
        if entry.get("evaluator"):
            ev = _registry_get(registry, str(entry["evaluator"]))
        return with_policy(
            exhaustive_sort(
                str(entry["key"]),
                evaluator=ev,
                ascending=bool(entry.get("ascending", True)),
                name=label or "sort",
            )
        )
    if kind == "prune":
        ev = None
        if entry.get("evaluator"):
            ev = _registry_get(registry, str(entry["evaluator"]))
        return with_policy(
            exhaustive_prune(str(entry["keep"]), evaluator=ev, name=label or "prune")
        )
    if kind == "reduce_dimension":
        to = str(entry.get("to", "min"))
        if to not in ("min", "max"):
            raise ConfigError(f"reduce_dimension 'to' must be min or max, got {to!r}")
        return with_policy(
            reduce_dimension(str(entry["concern"]), to_min=(to == "min"), name=label)
        )
    if kind == "gradient":
        evs = [_registry_get(registry, str(n)) for n in entry.get("evaluators", [])]
        return with_policy(
            gradient_sort(
                evs,
                str(entry["objective"]),
                maximize=bool(entry.get("maximize", True)),
                name=label or "gradient",
            )
        )
    if kind == "quick_prune":
        evs = [_registry_get(registry, str(n)) for n in entry.get("evaluators", [])]
        side = str(entry.get("side", "upward"))
        try:
            keep_side = KeepSide(side)
        except ValueError:
            raise ConfigError(f"quick_prune side must be upward or downward, got {side!r}") from None
        concern = entry.get("concern")
        return with_policy(
            quick_prune(
                evs,
                str(entry["keep"]),
                side=keep_side,
                concern=str(concern) if concern is not None else None,
                name=label or "quick_prune",
            )
        )
    raise ConfigError(f"unknown step kind {kind!r}")


def load_pipeline(
    path: str | Path,
    registry: Mapping[str, Evaluator],
    parallelism: int | None = None,
    fail_policy: FailPolicy | None = None,
) -> Pipeline:
    """Build a pipeline from a config file and an evaluator registry.

    ``parallelism`` and ``fail_policy`` override the file's values
    (manifest and command line take precedence over the pipeline file;
    step-level policies stay untouched).
    """
    path = Path(path)
    data = _load_yaml(path)
    entries = data.get("steps")
    if not isinstance(entries, list) or not entries:
        raise ConfigError(f"{path} must have a non-empty 'steps' list")
    steps = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"steps[{i}] must be a mapping")
        try:
            steps.append(_build_step(entry, registry))
        except KeyError as err:
            raise ConfigError(f"steps[{i}] is missing key {err.args[0]!r}") from None
    if fail_policy is None:
        fail_policy = parse_fail_policy(
            str(data.get("fail_policy", "abort")), data.get("worst")
        )
    if parallelism is None:
        parallelism = int(data.get("parallelism", 1))
    return Pipeline(tuple(steps), parallelism=parallelism, fail_policy=fail_policy)


@dataclass(frozen=True)
class RunManifest:
    """Everything one exploration run needs, with paths resolved."""

    schema: Path
    pipeline: Path
    evaluators: Path
    out: Path
    parallelism: int = 1
    seed: int = 0
    fail_policy: str | None = None
    top: int = 5

    def validate(self) -> None:
        for label in ("schema", "pipeline", "evaluators"):
            p: Path = getattr(self, label)
            if not p.is_file():
                raise ConfigError(f"{label} file does not exist: {p}")

    def to_dict(self) -> dict:
        out: dict = {
            "schema": str(self.schema),
            "pipeline": str(self.pipeline),
            "evaluators": str(self.evaluators),
            "out": str(self.out),
            "parallelism": self.parallelism,
            "seed": self.seed,
            "top": self.top,
        }
        if self.fail_policy is not None:
            out["fail_policy"] = self.fail_policy
        return out


def load_manifest(path: str | Path) -> RunManifest:
    path = Path(path)
    data = _load_yaml(path)
    base = path.parent

    def resolve(key: str) -> Path:
        if key not in data:
            raise ConfigError(f"manifest {path} is missing {key!r}")
        return (base / str(data[key])).resolve()

    return RunManifest(
        schema=resolve("schema"),
        pipeline=resolve("pipeline"),
        evaluators=resolve("evaluators"),
        out=(base / str(data.get("out", "out"))).resolve(),
        parallelism=int(data.get("parallelism", 1)),
        seed=int(data.get("seed", 0)),
        fail_policy=str(data["fail_policy"]) if "fail_policy" in data else None,
        top=int(data.get("top", 5)),
    )


def echo_manifest(manifest: RunManifest, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(manifest.to_dict(), sort_keys=False))
