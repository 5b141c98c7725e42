"""Experiment configuration: JSON schema, validation and overrides."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, GmfgError
from .graphon import Graphon, graphon_from_json
from .ode import TimeGrid
from .simulation import PopulationConfig
from .solver import GmfgParams

ROUTES = ("finite_fp", "finite_riccati", "spectral_fp", "spectral_riccati", "idempotent")
GENERATORS = ("auto", "uniform_attachment", "simple", "weighted", "step")
PROBLEM_KEYS = ("A", "B", "D", "Q", "Q_T", "R", "H", "eta", "Sigma", "T", "dt")


@dataclass
class SolverSection:
    route: str = "spectral_riccati"
    rank: int = 5
    tol: float = 1e-8
    max_iter: int = 200


@dataclass
class PopulationSection:
    N: int = 30
    cluster_size: int | list = 4
    initial_mean_range: list = field(default_factory=lambda: [-3.0, 3.0])
    initial_std: float = 1.0


@dataclass
class NetworkSection:
    generator: str = "auto"


@dataclass
class SweepSection:
    sizes: list = field(default_factory=lambda: [10, 30, 100])
    runs: int = 12


@dataclass
class ExperimentConfig:
    problem: dict
    graphon: dict
    network: NetworkSection = field(default_factory=NetworkSection)
    population: PopulationSection = field(default_factory=PopulationSection)
    solver: SolverSection = field(default_factory=SolverSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    output_dir: str = "out"
    seed: int = 0

    def params(self) -> GmfgParams:
        p = self.problem
        return GmfgParams(
            A=p["A"], B=p["B"], D=p["D"], Q=p["Q"], Q_T=p["Q_T"], R=p["R"], H=p["H"],
            eta=p["eta"], Sigma=p["Sigma"], grid=TimeGrid(float(p["T"]), float(p["dt"])),
        )

    def graphon_object(self) -> Graphon:
        return graphon_from_json(self.graphon)

    def population_config(self) -> PopulationConfig:
        pop = self.population
        return PopulationConfig(pop.N, pop.cluster_size, tuple(pop.initial_mean_range), pop.initial_std, self.seed)

    def to_dict(self) -> dict:
        return {
            "problem": copy.deepcopy(self.problem),
            "graphon": copy.deepcopy(self.graphon),
            "network": asdict(self.network),
            "population": asdict(self.population),
            "solver": asdict(self.solver),
            "sweep": asdict(self.sweep),
            "output_dir": self.output_dir,
            "seed": self.seed,
        }


def _section(data, cls, path: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown key")
    return cls(**data)


def _number(x, path, kind=float):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{path}: expected a number")
    if kind is int and float(x) != int(x):
        raise ConfigError(f"{path}: expected an integer")
    return kind(x)


def parse_config(data) -> ExperimentConfig:
    """Validate a raw config dict; errors name the offending field path."""
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object")
    allowed = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key")
    if "problem" not in data:
        raise ConfigError("problem: missing section")
    if "graphon" not in data:
        raise ConfigError("graphon: missing section")
    problem = data["problem"]
    if not isinstance(problem, dict):
        raise ConfigError("problem: expected an object")
    extra = sorted(set(problem) - set(PROBLEM_KEYS))
    if extra:
        raise ConfigError(f"problem.{extra[0]}: unknown key")
    for key in PROBLEM_KEYS:
        if key not in problem:
            raise ConfigError(f"problem.{key}: missing")
    problem = copy.deepcopy(problem)
    problem["T"] = _number(problem["T"], "problem.T")
    problem["dt"] = _number(problem["dt"], "problem.dt")

    cfg = ExperimentConfig(
        problem=problem,
        graphon=copy.deepcopy(data["graphon"]),
        network=_section(data.get("network"), NetworkSection, "network"),
        population=_section(data.get("population"), PopulationSection, "population"),
        solver=_section(data.get("solver"), SolverSection, "solver"),
        sweep=_section(data.get("sweep"), SweepSection, "sweep"),
        output_dir=str(data.get("output_dir", "out")),
        seed=_number(data.get("seed", 0), "seed", int),
    )
    s = cfg.solver
    if s.route not in ROUTES:
        raise ConfigError(f"solver.route: must be one of {', '.join(ROUTES)}")
    s.rank = _number(s.rank, "solver.rank", int)
    s.max_iter = _number(s.max_iter, "solver.max_iter", int)
    s.tol = _number(s.tol, "solver.tol")
    if s.rank < 1:
        raise ConfigError("solver.rank: must be positive")
    if cfg.network.generator not in GENERATORS:
        raise ConfigError(f"network.generator: must be one of {', '.join(GENERATORS)}")
    pop = cfg.population
    pop.N = _number(pop.N, "population.N", int)
    pop.initial_std = _number(pop.initial_std, "population.initial_std")
    pop.initial_mean_range = [_number(v, "population.initial_mean_range") for v in pop.initial_mean_range]
    cfg.sweep.sizes = [_number(v, "sweep.sizes", int) for v in cfg.sweep.sizes]
    cfg.sweep.runs = _number(cfg.sweep.runs, "sweep.runs", int)

    # module preconditions, checked before any computation
    stage = "problem"
    try:
        cfg.params()
        stage = "graphon"
        cfg.graphon_object()
        stage = "population"
        cfg.population_config()
    except GmfgError as exc:
        raise ConfigError(f"{stage}: {exc}") from None
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"{stage}: {exc}") from None
    return cfg


def bundled_config_path(name: str) -> Path:
    return Path(str(resources.files("gmfg") / "configs" / f"{name}.json"))


def load_config_data(path) -> dict:
    p = Path(path)
    if not p.exists() and not p.suffix:
        bundled = bundled_config_path(str(path))
        if bundled.exists():
            p = bundled
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    if not text.strip():
        raise ConfigError("problem: missing section (config file is empty)")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from None


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key.sub=value`` overrides (value parsed as JSON when possible)."""
    data = copy.deepcopy(data)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"--set {item}: expected key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {key}: {part} is not a section")
        node[parts[-1]] = _parse_value(value)
    return data


def load_config(path, overrides=()) -> ExperimentConfig:
    return parse_config(apply_overrides(load_config_data(path), overrides))


def dump_config(cfg: ExperimentConfig) -> str:
    def clean(x):
        if isinstance(x, np.ndarray):
            return x.tolist()
        if isinstance(x, tuple):
            return list(x)
        return x

    return json.dumps(cfg.to_dict(), indent=2, default=clean)
