"""Strict JSON run configurations for the command-line interface.

Every record rejects unknown keys and validates its values on construction,
so a command can check its whole configuration before touching the file
system. Command-line flags are applied on top of the file values with
:func:`apply_overrides`.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .bench.dataset import DatasetConfig
from .bench.problems import CATALOGUE, get_problem
from .bench.sweep import SweepPlan
from .errors import DomainError
from .moo import ScalarizationConfig, check_preference
from .net import MTLSpec
from .trainer import PROFILES, TrainConfig, profile

MODEL = "model"


class ConfigError(DomainError):
    """Malformed or invalid configuration."""


def _build(cls, data, where):
    """Instantiate dataclass ``cls`` from a JSON object, rejecting unknown keys."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a JSON object, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except DomainError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: invalid value ({exc})") from exc


@dataclass(frozen=True)
class AnalyticSettings:
    """Augmented Lagrangian settings for analytic problems."""

    mu0: float = 10.0
    mu_growth: float = 2.0
    max_outer: int = 60
    tol: float = 1e-9
    problem_kwargs: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.mu0 > 0 and self.mu_growth >= 1 and self.max_outer >= 1 and self.tol > 0):
            raise DomainError("need mu0 > 0, mu_growth >= 1, max_outer >= 1 and tol > 0")
        if not isinstance(self.problem_kwargs, dict):
            raise DomainError("problem_kwargs must be an object")

    def solver_kwargs(self):
        return {"mu0": self.mu0, "mu_growth": self.mu_growth, "max_outer": self.max_outer,
                "tol": self.tol}


def _model_parts(data, where):
    """Parse the ``profile``/``train``/``net``/``dataset`` sections."""
    name = data.get("profile", "desk")
    if name not in PROFILES:
        raise ConfigError(f"{where}.profile: unknown profile {name!r}; choose from {sorted(PROFILES)}")
    train_data = data.get("train") or {}
    if not isinstance(train_data, dict):
        raise ConfigError(f"{where}.train: expected a JSON object")
    base = profile(name)
    train = _build(TrainConfig, {**base.to_json(), **train_data}, f"{where}.train")
    net = _build(MTLSpec, data.get("net"), f"{where}.net")
    dataset = _build(DatasetConfig, data.get("dataset"), f"{where}.dataset")
    if tuple(dataset.n_classes) != tuple(net.n_classes) or dataset.n_features != net.n_inputs:
        raise ConfigError(f"{where}: dataset shape (features {dataset.n_features}, classes "
                          f"{list(dataset.n_classes)}) does not match net (inputs {net.n_inputs}, "
                          f"classes {list(net.n_classes)})")
    return name, train, net, dataset


def _check_problem(name, where):
    if name != MODEL and name not in CATALOGUE:
        raise ConfigError(f"{where}.problem: unknown problem {name!r}; choose from "
                          f"{[MODEL, *sorted(CATALOGUE)]}")


def _n_objectives(problem, net, analytic, where):
    if problem == MODEL:
        return 1 + net.n_tasks
    try:
        return get_problem(problem, **analytic.problem_kwargs).n_objectives
    except TypeError as exc:
        raise ConfigError(f"{where}.analytic.problem_kwargs: {exc}") from exc


_SOLVE_KEYS = {"problem", "preference", "reference", "epsilon_disturbance", "seed", "out_dir",
               "profile", "train", "net", "dataset", "analytic"}


@dataclass(frozen=True)
class SolveConfig:
    """One preference vector: a full training run or an analytic solve.

    ``seed`` seeds initialization and minibatch order (it replaces
    ``train.seed``); the dataset keeps its own seed so that different runs
    share one dataset.
    """

    problem: str
    preference: tuple
    reference: tuple | None
    epsilon_disturbance: float
    seed: int
    out_dir: str
    profile: str
    train: TrainConfig
    net: MTLSpec
    dataset: DatasetConfig
    analytic: AnalyticSettings

    @classmethod
    def from_json(cls, data, where="solve"):
        if not isinstance(data, dict):
            raise ConfigError(f"{where}: expected a JSON object")
        unknown = sorted(set(data) - _SOLVE_KEYS)
        if unknown:
            raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")
        problem = data.get("problem", MODEL)
        _check_problem(problem, where)
        if "preference" not in data:
            raise ConfigError(f"{where}.preference: required")
        name, train, net, dataset = _model_parts(data, where)
        analytic = _build(AnalyticSettings, data.get("analytic"), f"{where}.analytic")
        cfg = cls(problem=problem, preference=data["preference"], reference=data.get("reference"),
                  epsilon_disturbance=data.get("epsilon_disturbance", 1e-4),
                  seed=data.get("seed", 0), out_dir=data.get("out_dir", "."), profile=name,
                  train=train, net=net, dataset=dataset, analytic=analytic)
        return cfg.validated(where)

    def validated(self, where="solve"):
        """Check cross-field constraints; returns a normalized copy."""
        try:
            k = check_preference(self.preference, name=f"{where}.preference")
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        m = _n_objectives(self.problem, self.net, self.analytic, where)
        if k.shape[0] != m:
            raise ConfigError(f"{where}.preference: expected {m} entries, got {k.shape[0]}")
        ref = None
        if self.reference is not None:
            ref = np.asarray(self.reference, dtype=np.float64)
            if ref.shape != (m,) or not np.all(np.isfinite(ref)):
                raise ConfigError(f"{where}.reference: expected {m} finite values")
            ref = tuple(float(v) for v in ref)
        if not (isinstance(self.seed, int) and not isinstance(self.seed, bool) and self.seed >= 0):
            raise ConfigError(f"{where}.seed: expected a non-negative integer, got {self.seed!r}")
        if not isinstance(self.out_dir, str) or not self.out_dir:
            raise ConfigError(f"{where}.out_dir: expected a nonempty path")
        try:
            eps = float(self.epsilon_disturbance)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}.epsilon_disturbance: {exc}") from exc
        cfg = replace(self, preference=tuple(float(v) for v in k), reference=ref,
                      epsilon_disturbance=eps, train=replace(self.train, seed=self.seed))
        try:
            cfg.scalarization()
        except DomainError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
        return cfg

    def scalarization(self):
        k = np.asarray(self.preference)
        ref = np.zeros(k.shape[0]) if self.reference is None else np.asarray(self.reference)
        if self.problem != MODEL and self.reference is None:
            ref = get_problem(self.problem, **self.analytic.problem_kwargs).reference
        return ScalarizationConfig(preference=k, reference=ref,
                                   epsilon_disturbance=self.epsilon_disturbance)

    def to_json(self):
        return {
            "problem": self.problem,
            "preference": list(self.preference),
            "reference": None if self.reference is None else list(self.reference),
            "epsilon_disturbance": self.epsilon_disturbance,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "profile": self.profile,
            "train": self.train.to_json(),
            "net": self.net.to_json(),
            "dataset": self.dataset.to_json(),
            "analytic": asdict(self.analytic),
        }


_SWEEP_KEYS = {"problem", "method", "budget", "plan", "jobs", "out_dir", "profile", "train",
               "net", "dataset", "analytic"}


@dataclass(frozen=True)
class SweepConfig:
    """A preference sweep over an analytic problem or the multi-task model."""

    problem: str
    method: str
    budget: int | None
    plan: SweepPlan
    jobs: int | None
    out_dir: str
    profile: str
    train: TrainConfig
    net: MTLSpec
    dataset: DatasetConfig
    analytic: AnalyticSettings

    @classmethod
    def from_json(cls, data, where="sweep"):
        if not isinstance(data, dict):
            raise ConfigError(f"{where}: expected a JSON object")
        unknown = sorted(set(data) - _SWEEP_KEYS)
        if unknown:
            raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")
        problem = data.get("problem", MODEL)
        _check_problem(problem, where)
        name, train, net, dataset = _model_parts(data, where)
        analytic = _build(AnalyticSettings, data.get("analytic"), f"{where}.analytic")
        plan = _build(SweepPlan, data.get("plan"), f"{where}.plan")
        cfg = cls(problem=problem, method=data.get("method", "chebyshev"),
                  budget=data.get("budget"), plan=plan, jobs=data.get("jobs"),
                  out_dir=data.get("out_dir", "."), profile=name, train=train, net=net,
                  dataset=dataset, analytic=analytic)
        return cfg.validated(where)

    def validated(self, where="sweep"):
        if self.method not in ("chebyshev", "weighted_sum"):
            raise ConfigError(f"{where}.method: expected 'chebyshev' or 'weighted_sum', "
                              f"got {self.method!r}")
        if self.method == "weighted_sum" and self.problem == MODEL:
            raise ConfigError(f"{where}.method: weighted_sum is only available for analytic problems")
        if self.budget is not None and not (isinstance(self.budget, int) and self.budget >= 1):
            raise ConfigError(f"{where}.budget: expected a positive integer")
        if self.jobs is not None and not (isinstance(self.jobs, int) and self.jobs >= 1):
            raise ConfigError(f"{where}.jobs: expected a positive integer")
        if not isinstance(self.out_dir, str) or not self.out_dir:
            raise ConfigError(f"{where}.out_dir: expected a nonempty path")
        m = _n_objectives(self.problem, self.net, self.analytic, where)
        if self.plan.n_objectives != m:
            raise ConfigError(f"{where}.plan: produces {self.plan.n_objectives} objectives, "
                              f"problem {self.problem} has {m}")
        if self.plan.reference is not None and len(self.plan.reference) != m:
            raise ConfigError(f"{where}.plan.reference: expected {m} values")
        try:
            self.plan.preferences()
        except DomainError as exc:
            raise ConfigError(f"{where}.plan: {exc}") from exc
        return self

    def to_json(self):
        return {
            "problem": self.problem,
            "method": self.method,
            "budget": self.budget,
            "plan": self.plan.to_json(),
            "jobs": self.jobs,
            "out_dir": self.out_dir,
            "profile": self.profile,
            "train": self.train.to_json(),
            "net": self.net.to_json(),
            "dataset": self.dataset.to_json(),
            "analytic": asdict(self.analytic),
        }


def read_json(path):
    """Load a JSON file, turning syntax errors into :class:`ConfigError`."""
    with open(path) as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno})") from exc


def apply_overrides(data, **flags):
    """Return a copy of the raw config with non-``None`` flag values applied.

    ``seed`` and ``epsilon`` map to the plan for sweeps (``plan.seed``,
    ``plan.archive_epsilon``) and ``seed`` to the top level for solves.
    """
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    out = json.loads(json.dumps(data))
    sweep = flags.pop("sweep", False)
    for key, value in flags.items():
        if value is None:
            continue
        if sweep and key in ("seed", "epsilon"):
            plan = out.setdefault("plan", {})
            if not isinstance(plan, dict):
                raise ConfigError("sweep.plan: expected a JSON object")
            plan["seed" if key == "seed" else "archive_epsilon"] = value
        elif key == "epsilon":
            raise ConfigError("--epsilon applies to sweep and filter only")
        else:
            out[key] = value
    return out
