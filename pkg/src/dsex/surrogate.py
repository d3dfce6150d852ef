"""Analytic stand-ins for synthesis and estimation tools.

A resource model maps parameters to metrics through cost expressions,
optionally simulating tool latency and timeout-style failures. The
same model can run in process (``model_evaluator``) or as an external
executable speaking the flat JSON metric protocol (``python -m
dsex.surrogate --model FILE``), which reads ``DSEX_*`` environment
variables, prints the metric object on stdout and exits 0.

Models are fixtures, not predictors: no calibration against real
synthesis data is attempted.
"""

from __future__ import annotations

import json
import os
import sys
import time
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Sequence

from .errors import ConfigError, EvalError, EvalErrorKind
from .expr import MetricExpr, parse_expr

if TYPE_CHECKING:
    from pathlib import Path

    from .metrics import Evaluator, PointView


# how long the served model stalls when its failure rule fires; long
# enough that any sane client timeout expires first
FAIL_STALL_S = 600.0


@dataclass(frozen=True)
class ResourceModel:
    """Per-metric formulas over schema parameters.

    ``fail_if`` simulates a synthesis timeout: points satisfying it
    raise a timeout error in process, and stall past any client
    timeout when served as an external tool. ``latency_s`` sleeps that
    long per evaluation to mimic slow tools.
    """

    name: str
    produces: tuple[str, ...]
    formulas: Mapping[str, MetricExpr]
    latency_s: float = 0.0
    fail_if: MetricExpr | None = None

    def __post_init__(self):
        object.__setattr__(self, "produces", tuple(self.produces))
        object.__setattr__(self, "formulas", dict(self.formulas))
        for metric in self.produces:
            if metric not in self.formulas:
                raise ConfigError(f"model {self.name!r} lacks a formula for {metric!r}")
            if self.formulas[metric].is_predicate:
                raise ConfigError(f"model formula for {metric!r} must be numeric")
        if self.fail_if is not None and not self.fail_if.is_predicate:
            raise ConfigError(f"model {self.name!r} fail_if must be boolean")

    def compute(self, env: Mapping[str, float]) -> dict[str, float]:
        return {metric: float(self.formulas[metric](env)) for metric in self.produces}

    def fails_on(self, env: Mapping[str, float]) -> bool:
        return self.fail_if is not None and bool(self.fail_if(env))


def model_evaluator(model: ResourceModel, name: str | None = None) -> "Evaluator":
    """In-process evaluator backed by a resource model."""
    from .metrics import Evaluator

    def func(view: "PointView") -> Sequence[float]:
        env = view.env
        if model.fails_on(env):
            raise EvalError(
                EvalErrorKind.TIMEOUT, f"model {model.name!r} failure rule triggered"
            )
        if model.latency_s > 0:
            time.sleep(model.latency_s)
        values = model.compute(env)
        return [values[m] for m in model.produces]

    return Evaluator(name or model.name, model.produces, func)


def model_to_dict(model: ResourceModel) -> dict:
    out: dict = {
        "name": model.name,
        "produces": list(model.produces),
        "formulas": {m: e.source for m, e in model.formulas.items()},
    }
    if model.latency_s:
        out["latency_s"] = model.latency_s
    if model.fail_if is not None:
        out["fail_if"] = model.fail_if.source
    return out


def model_from_dict(data: Mapping, name: str = "model") -> ResourceModel:
    try:
        produces = tuple(data["produces"])
        formulas = {m: parse_expr(str(t)) for m, t in dict(data["formulas"]).items()}
    except KeyError as err:
        raise ConfigError(f"model is missing key {err.args[0]!r}") from None
    fail_if = data.get("fail_if")
    return ResourceModel(
        name=str(data.get("name", name)),
        produces=produces,
        formulas=formulas,
        latency_s=float(data.get("latency_s", 0.0)),
        fail_if=parse_expr(str(fail_if)) if fail_if is not None else None,
    )


def load_model(path: "str | Path") -> ResourceModel:
    """Read a model file; JSON is tried first, YAML as a fallback.

    The JSON-first order (and this module's lean import set) keeps the
    served subprocess cheap to start, since it runs once per point.
    """
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        try:
            import yaml
        except ImportError:
            raise ConfigError(
                f"model file {path} is not JSON and no YAML parser is available"
            ) from None
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as err:
            raise ConfigError(f"cannot parse model file {path}: {err}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"model file {path} must hold a mapping")
    stem = os.path.splitext(os.path.basename(str(path)))[0]
    return model_from_dict(data, name=stem)


def serve_once(model: ResourceModel, environ: Mapping[str, str] = os.environ) -> int:
    """Evaluate the model from DSEX_* environment variables, print the
    flat metric object on stdout, and return the exit code.
    """
    env: dict[str, float] = {}
    needed = set()
    for expr in model.formulas.values():
        needed |= expr.names
    if model.fail_if is not None:
        needed |= model.fail_if.names
    for name in sorted(needed):
        raw = environ.get(f"DSEX_{name.upper()}")
        if raw is None:
            print(f"missing parameter: DSEX_{name.upper()}", file=sys.stderr)
            return 1
        try:
            env[name] = float(raw)
        except ValueError:
            print(f"non-numeric parameter: DSEX_{name.upper()}={raw!r}", file=sys.stderr)
            return 1
    if model.fails_on(env):
        time.sleep(FAIL_STALL_S)
        return 1
    if model.latency_s > 0:
        time.sleep(model.latency_s)
    values = model.compute(env)
    payload = {
        m: (int(v) if float(v).is_integer() else v) for m, v in values.items()
    }
    print(json.dumps(payload))
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    # hand-rolled flag parsing: this entry point starts once per point,
    # so it avoids argparse and stays import-light
    args = list(sys.argv[1:] if argv is None else argv)
    model_path = None
    if len(args) == 2 and args[0] == "--model":
        model_path = args[1]
    elif len(args) == 1 and args[0].startswith("--model="):
        model_path = args[0].split("=", 1)[1]
    if model_path is None:
        print("usage: python -m dsex.surrogate --model FILE", file=sys.stderr)
        return 2
    try:
        model = load_model(model_path)
    except (ConfigError, OSError) as err:
        print(str(err), file=sys.stderr)
        return 1
    return serve_once(model)


if __name__ == "__main__":
    raise SystemExit(main())
