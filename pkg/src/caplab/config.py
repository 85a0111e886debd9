# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.
"""Experiment configuration.

A config is one JSON document (see docs/config.schema.json). Every section is
checked for unknown keys and wrong types before anything is computed.
"""
from __future__ import annotations

import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .learners import Learner, Mode, available_learners
from .problem import (
    Dataset,
    DatasetDistribution,
    EmpiricalDistribution,
    ExplicitDistribution,
    HypothesisSpace,
    IIDDistribution,
    InstanceSpace,
    LossFunction,
    lookup_tables,
    partial_lookup_tables,
    threshold_classifiers,
)
from .util import DEFAULT_ENUMERATION_CAP, ConfigError, ValidationError

LOG = logging.getLogger(__name__)

SCHEMA_VERSION = 1

DIST_KINDS = ("iid", "iid_conditional", "fixed_features", "explicit", "empirical")
DIST_FIELDS = {
    "iid": ("base",),
    "iid_conditional": ("feature_probs", "label_given_feature"),
    "fixed_features": ("features", "label_given_feature"),
    "explicit": ("support", "probs"),
    "empirical": ("support",),
}
HYPOTHESIS_KINDS = ("tables", "tables_partial", "thresholds")
VC_CLASSES = ("hypotheses", "thresholds", "tables")

# analysis name -> option defaults, None marks a required option
ANALYSES: dict[str, dict[str, Any]] = {
    "capacity": {},
    "sup_capacity": {"tol": 1e-9, "max_iter": 100000, "iid": False, "starts": 8},
    "expressivity": {},
    "bias": {"epsilon": None},
    "complexity": {"samples": None},
    "bounds": {"epsilon": None, "ldm_K": None},
    "ldm": {"K": 1000, "schedule": None, "bootstrap": 1000, "confidence": 0.95},
    "vc": {"classifiers": "hypotheses", "sup": False},
    "diagnostics": {"slack": 0.0, "samples": None, "max_models": 64},
    "halting_demo": {
        "budgets": [1, 10, 100, 1000],
        "train_set": [[0, 0]],
        "corpus": None,
    },
    "beta_sweep": {"betas": None},
}
# canonical execution and report order
ANALYSIS_ORDER = tuple(ANALYSES)
# options that may stay unset
NULLABLE = frozenset(
    {
        ("complexity", "samples"),
        ("bounds", "ldm_K"),
        ("ldm", "schedule"),
        ("diagnostics", "samples"),
        ("halting_demo", "corpus"),
    }
)
_NUMBERS = frozenset({"tol", "epsilon", "confidence", "slack"})
_COUNTS = frozenset({"max_iter", "starts", "K", "bootstrap", "samples", "ldm_K"})


def _section(
    data: Any,
    where: str,
    required: tuple[str, ...] = (),
    optional: tuple[str, ...] = (),
) -> Mapping[str, Any]:
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(data) - set(required) - set(optional))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    missing = [key for key in required if key not in data]
    if missing:
        raise ConfigError(f"{where}: missing keys {missing}")
    return data


def _int(value: Any, where: str, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where}: must be >= {minimum}, got {value}")
    return value


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _bool(value: Any, where: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{where}: expected true or false, got {value!r}")
    return value


def _numbers(value: Any, where: str) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where}: expected a non-empty list of numbers")
    return [_number(v, f"{where}[{i}]") for i, v in enumerate(value)]


def _ints(value: Any, where: str, minimum: int = 0) -> list[int]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where}: expected a non-empty list of integers")
    return [_int(v, f"{where}[{i}]", minimum) for i, v in enumerate(value)]


def _matrix(value: Any, where: str) -> list[list[float]]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where}: expected a non-empty list of rows")
    return [_numbers(row, f"{where}[{i}]") for i, row in enumerate(value)]


def _examples(value: Any, where: str) -> tuple[tuple[int, int], ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where}: expected a non-empty list of [x, y] pairs")
    pairs = []
    for i, pair in enumerate(value):
        here = f"{where}[{i}]"
        if not isinstance(pair, list) or len(pair) != 2:
            raise ConfigError(f"{here}: expected an [x, y] pair")
        pairs.append((_int(pair[0], here, 0), _int(pair[1], here, 0)))
    return tuple(pairs)


def _check_option(key: str, value: Any, where: str) -> Any:
    if key in _NUMBERS:
        return _number(value, where)
    if key in _COUNTS:
        return _int(value, where, 1)
    if key == "max_models":
        return _int(value, where, 0)
    if key in ("iid", "sup"):
        return _bool(value, where)
    if key in ("schedule", "budgets"):
        return _ints(value, where)
    if key == "betas":
        return _numbers(value, where)
    if key == "train_set":
        return [list(pair) for pair in _examples(value, where)]
    if not isinstance(value, str):
        raise ConfigError(f"{where}: expected a string")
    return value


def analysis_options(name: str, options: Any) -> dict[str, Any]:
    """Options of one analysis with defaults filled in.

    Raises:
        ConfigError: Unknown, missing or ill-typed options.
    """
    where = f"analyses.{name}"
    accepted = ANALYSES[name]
    _section(options, where, optional=tuple(accepted))
    resolved = {}
    for key, default in accepted.items():
        value = options.get(key, default)
        if value is None:
            if (name, key) not in NULLABLE:
                raise ConfigError(f"{where}: missing option {key!r}")
        else:
            value = _check_option(key, value, f"{where}.{key}")
        resolved[key] = value
    if name == "vc" and resolved["classifiers"] not in VC_CLASSES:
        raise ConfigError(
            f"{where}.classifiers: expected one of {list(VC_CLASSES)}"
        )
    if name == "ldm" and not 0.0 < resolved["confidence"] < 1.0:
        raise ConfigError(f"{where}.confidence: must lie in (0, 1)")
    return resolved


def _check_loss(loss: Any) -> Any:
    if isinstance(loss, str):
        if loss != "zero_one":
            raise ConfigError(f"unknown loss {loss!r}")
        return loss
    _section(loss, "loss", required=("table",), optional=("bounded_above",))
    checked: dict[str, Any] = {"table": _matrix(loss["table"], "loss.table")}
    bound = loss.get("bounded_above")
    checked["bounded_above"] = (
        None if bound is None else _number(bound, "loss.bounded_above")
    )
    return checked


def _check_output(data: Any) -> dict[str, str]:
    output = dict(_section(data, "output", optional=("report", "csv_prefix")))
    for key, default in (("report", "report.json"), ("csv_prefix", "caplab")):
        output.setdefault(key, default)
        if not isinstance(output[key], str) or not output[key]:
            raise ConfigError(f"output.{key}: expected a non-empty string")
    return output


@dataclass
class ExperimentConfig:
    """A parsed and validated experiment."""

    space: InstanceSpace
    n: int
    dataset_dist: dict[str, Any]
    hypotheses: dict[str, Any]
    loss: Any
    learner: dict[str, Any]
    analyses: dict[str, dict[str, Any]]
    seed: int = 0
    mode: Mode = Mode.AVERAGED
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP
    output: dict[str, str] = field(
        default_factory=lambda: {"report": "report.json", "csv_prefix": "caplab"}
    )

    @classmethod
    def from_dict(cls, data: Any) -> ExperimentConfig:
        """Validate a decoded JSON document.

        Raises:
            ConfigError: The document does not match the schema.
        """
        _section(
            data,
            "config",
            required=(
                "space",
                "n",
                "dataset_dist",
                "hypotheses",
                "learner",
                "analyses",
            ),
            optional=(
                "schema_version",
                "loss",
                "seed",
                "mode",
                "enumeration_cap",
                "output",
            ),
        )
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r}")

        space_data = _section(
            data["space"], "space", required=("n_features", "n_labels")
        )
        try:
            space = InstanceSpace(
                _int(space_data["n_features"], "space.n_features", 1),
                _int(space_data["n_labels"], "space.n_labels", 1),
            )
        except ValidationError as exc:
            raise ConfigError(f"space: {exc}") from None

        dist = _section(
            data["dataset_dist"],
            "dataset_dist",
            required=("kind",),
            optional=tuple({f for fields in DIST_FIELDS.values() for f in fields}),
        )
        if dist["kind"] not in DIST_KINDS:
            raise ConfigError(f"dataset_dist.kind: expected one of {list(DIST_KINDS)}")
        _section(dist, "dataset_dist", required=("kind", *DIST_FIELDS[dist["kind"]]))

        hypotheses = _section(
            data["hypotheses"],
            "hypotheses",
            required=("kind",),
            optional=("max_assigned",),
        )
        if hypotheses["kind"] not in HYPOTHESIS_KINDS:
            raise ConfigError(
                f"hypotheses.kind: expected one of {list(HYPOTHESIS_KINDS)}"
            )
        if hypotheses.get("max_assigned") is not None:
            _int(hypotheses["max_assigned"], "hypotheses.max_assigned", 0)

        learner = _section(
            data["learner"], "learner", required=("name",), optional=("params",)
        )
        if not isinstance(learner["name"], str):
            raise ConfigError("learner.name: expected a string")
        if not isinstance(learner.get("params", {}), Mapping):
            raise ConfigError("learner.params: expected an object")

        requested = _section(data["analyses"], "analyses", optional=ANALYSIS_ORDER)
        if not requested:
            raise ConfigError("analyses: request at least one analysis")

        mode_name = data.get("mode", Mode.AVERAGED.value)
        try:
            mode = Mode(mode_name)
        except ValueError:
            raise ConfigError(
                f"mode: expected FINAL or AVERAGED, got {mode_name!r}"
            ) from None

        analyses = {
            name: analysis_options(name, requested[name])
            for name in ANALYSIS_ORDER
            if name in requested
        }
        if "halting_demo" in analyses:
            for index, (x, y) in enumerate(analyses["halting_demo"]["train_set"]):
                if x >= space.n_features or y >= space.n_labels:
                    raise ConfigError(
                        f"analyses.halting_demo.train_set[{index}]: ({x}, {y}) is "
                        f"outside {space.n_features} features x "
                        f"{space.n_labels} labels"
                    )

        return cls(
            space=space,
            n=_int(data["n"], "n", 1),
            dataset_dist=dict(dist),
            hypotheses={"max_assigned": None, **hypotheses},
            loss=_check_loss(data.get("loss", "zero_one")),
            learner={
                "name": learner["name"],
                "params": dict(learner.get("params", {})),
            },
            analyses=analyses,
            seed=_int(data.get("seed", 0), "seed", 0),
            mode=mode,
            enumeration_cap=_int(
                data.get("enumeration_cap", DEFAULT_ENUMERATION_CAP),
                "enumeration_cap",
                1,
            ),
            output=_check_output(data.get("output", {})),
        )

    @classmethod
    def load(cls, path: Path) -> ExperimentConfig:
        """Read and validate a config file.

        Raises:
            ConfigError: Unreadable file, invalid JSON or schema mismatch.
        """
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})"
            ) from None
        LOG.debug("Loaded config from %s", path)
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        """Resolved config, defaults filled in."""
        return {
            "schema_version": SCHEMA_VERSION,
            "space": self.space.to_dict(),
            "n": self.n,
            "dataset_dist": self.dataset_dist,
            "hypotheses": self.hypotheses,
            "loss": self.loss,
            "learner": self.learner,
            "analyses": self.analyses,
            "seed": self.seed,
            "mode": self.mode.value,
            "enumeration_cap": self.enumeration_cap,
            "output": self.output,
        }

    def build_distribution(self) -> DatasetDistribution:
        """Dataset distribution described by `dataset_dist`.

        Raises:
            ConfigError: Inconsistent fields for the chosen kind.
        """
        described = self.dataset_dist
        kind = described["kind"]
        where = "dataset_dist"
        try:
            if kind == "iid":
                if described["base"] == "uniform":
                    return IIDDistribution.uniform(self.space, self.n)
                base = _numbers(described["base"], f"{where}.base")
                return IIDDistribution(self.space, base, self.n)
            if kind in ("iid_conditional", "fixed_features"):
                table = _matrix(
                    described["label_given_feature"], f"{where}.label_given_feature"
                )
                if kind == "iid_conditional":
                    return IIDDistribution.from_conditional(
                        self.space,
                        _numbers(described["feature_probs"], f"{where}.feature_probs"),
                        table,
                        self.n,
                    )
                features = _ints(described["features"], f"{where}.features")
                if len(features) != self.n:
                    raise ConfigError(f"{where}.features: expected n feature indices")
                return ExplicitDistribution.fixed_features(self.space, features, table)
            support = self._support(described["support"])
            if kind == "explicit":
                probs = _numbers(described["probs"], f"{where}.probs")
                return ExplicitDistribution(support, probs)
            return EmpiricalDistribution(support)
        except ConfigError:
            raise
        except ValidationError as exc:
            raise ConfigError(f"{where}: {exc}") from None

    def _support(self, value: Any) -> list[Dataset]:
        if not isinstance(value, list) or not value:
            raise ConfigError("dataset_dist.support: expected a non-empty list")
        datasets = []
        for i, examples in enumerate(value):
            where = f"dataset_dist.support[{i}]"
            dataset = Dataset(self.space, _examples(examples, where))
            if len(dataset) != self.n:
                raise ConfigError(f"{where}: length differs from n")
            datasets.append(dataset)
        return datasets

    def build_hypotheses(self) -> HypothesisSpace:
        kind = self.hypotheses["kind"]
        if kind == "tables":
            return lookup_tables(self.space)
        if kind == "tables_partial":
            return partial_lookup_tables(self.space, self.hypotheses["max_assigned"])
        if self.space.n_labels != 2:
            raise ConfigError("hypotheses: thresholds need n_labels = 2")
        return threshold_classifiers(self.space.n_features)

    def build_loss(self) -> LossFunction:
        if self.loss == "zero_one":
            return LossFunction.zero_one(self.space.n_labels)
        try:
            loss = LossFunction(self.loss["table"], self.loss["bounded_above"])
        except ValidationError as exc:
            raise ConfigError(f"loss: {exc}") from None
        if loss.n_labels != self.space.n_labels:
            raise ConfigError("loss.table: must be n_labels x n_labels")
        return loss

    def build_learner(self, hypotheses: HypothesisSpace, loss: LossFunction) -> Learner:
        """Instantiate the configured learner.

        Raises:
            ConfigError: Unknown learner name or parameters.
        """
        learners = available_learners()
        name = self.learner["name"]
        if name not in learners:
            raise ConfigError(
                f"unknown learner {name!r}, choose from {sorted(learners)}"
            )
        return learners[name].from_config(
            self.space, hypotheses, loss, self.n, self.learner["params"]
        )
