"""Experiment configuration.

Every tunable constant of the testbench lives here. Values can be read from a
flat ``key = value`` text file where keys are namespaced by section, e.g.::

    world.car_speed = 12.0
    proximity.distance_threshold = 30
    mpc.w3 = 4.0
    grid.kinds = RANDOM, PROXIMITY

Unknown keys raise ``ConfigError`` so typos do not silently fall back to
defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class AgentKind(str, enum.Enum):
    RANDOM = "RANDOM"
    RANDOM_CONSTRAINED = "RANDOM_CONSTRAINED"
    PROXIMITY = "PROXIMITY"
    ELECTION = "ELECTION"
    Q_LEARNING = "Q_LEARNING"
    MPC = "MPC"

    @property
    def section(self) -> str:
        return self.value.lower()


ALL_KINDS = tuple(AgentKind)


@dataclass(frozen=True)
class RoadGeometry:
    road_length: float = 99.0
    lane_width: float = 3.65
    pavement_width: float = 2.0
    lane_count: int = 2

    def __post_init__(self):
        if self.road_length <= 0 or self.lane_width <= 0 or self.pavement_width <= 0:
            raise ConfigError("road dimensions must be positive")
        if self.lane_count != 2:
            raise ConfigError("only two-lane roads are supported")

    @property
    def height(self) -> float:
        """Total corridor height: both lanes plus both pavements."""
        return self.lane_count * self.lane_width + 2 * self.pavement_width

    @property
    def road_bottom(self) -> float:
        return self.pavement_width

    @property
    def road_top(self) -> float:
        return self.pavement_width + self.lane_count * self.lane_width

    @property
    def car_lane_center(self) -> float:
        return self.pavement_width + 0.5 * self.lane_width


@dataclass(frozen=True)
class WorldParams:
    car_speed: float = 10.0
    max_decel: float = 6.0
    reaction_time: float = 1.0
    v_max: float = 2.5
    dt: float = 0.1
    max_steps: int = 200
    spawn_margin: float = 5.0
    min_separation: float = 1.0
    max_pedestrians: int = 5
    delta_v: float = 0.5
    delta_theta: float = math.pi / 4

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.car_speed < 0 or self.max_decel <= 0 or self.reaction_time < 0:
            raise ConfigError("invalid car parameters")
        if self.v_max <= 0 or self.delta_v <= 0 or self.delta_theta <= 0:
            raise ConfigError("invalid pedestrian parameters")
        if self.max_steps < 1 or self.max_pedestrians < 1:
            raise ConfigError("max_steps and max_pedestrians must be >= 1")


@dataclass(frozen=True)
class AgentConfig:
    """Per-kind decision parameters.

    ``epsilon`` means the re-draw probability for RANDOM, the per-step crossing
    probability for RANDOM_CONSTRAINED and is unused otherwise.
    """

    kind: AgentKind
    epsilon: float = 0.0
    distance_threshold: float = 25.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"{self.kind.value}: epsilon must lie in [0, 1]")
        if self.distance_threshold <= 0:
            raise ConfigError(f"{self.kind.value}: distance_threshold must be > 0")


@dataclass(frozen=True)
class QConfig:
    alpha: float = 0.1
    gamma: float = 0.95
    epsilon_train_start: float = 0.2
    epsilon_train_end: float = 0.02
    epsilon_eval: float = 0.05
    episodes: int = 2000
    gap_bin: float = 10.0
    interesting_reward: float = 100.0
    road_step_penalty: float = 1.0
    turn_penalty: float = 2.0
    progress_gain: float = 0.1
    turn_epsilon: float = 0.1
    table: str = ""

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("qlearning.alpha must lie in (0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("qlearning.gamma must lie in [0, 1)")
        for name in ("epsilon_train_start", "epsilon_train_end", "epsilon_eval"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"qlearning.{name} must lie in [0, 1]")
        if self.episodes < 1:
            raise ConfigError("qlearning.episodes must be >= 1")
        if self.gap_bin <= 0:
            raise ConfigError("qlearning.gap_bin must be > 0")


@dataclass(frozen=True)
class MpcWeights:
    w1: float = 1.0
    w2: float = 0.05
    w3: float = 0.3

    def __post_init__(self):
        if min(self.w1, self.w2, self.w3) < 0:
            raise ConfigError("mpc weights must be nonnegative")
        if max(self.w1, self.w2, self.w3) <= 0:
            raise ConfigError("at least one mpc weight must be positive")


@dataclass(frozen=True)
class MpcConfig:
    horizon_steps: int = 4
    dt: float = 1.5
    turn_epsilon: float = 0.1
    weights: MpcWeights = field(default_factory=MpcWeights)
    budget: int = 1_000_000

    def __post_init__(self):
        if self.horizon_steps < 1:
            raise ConfigError("mpc.horizon_steps must be >= 1")
        if self.dt <= 0:
            raise ConfigError("mpc.dt must be positive")
        if self.turn_epsilon <= 0:
            raise ConfigError("mpc.turn_epsilon must be positive")
        if 5**self.horizon_steps > self.budget:
            raise ConfigError(
                f"mpc enumeration of 5^{self.horizon_steps} sequences exceeds "
                f"budget {self.budget}"
            )


@dataclass(frozen=True)
class CoverageParams:
    x_bin: float = 3.0
    heading_bins: int = 8
    speed_bins: int = 3

    def __post_init__(self):
        if self.x_bin <= 0 or self.heading_bins < 1 or self.speed_bins < 1:
            raise ConfigError("invalid coverage grid")


@dataclass(frozen=True)
class ScoreWeights:
    c_turn: float = 10.0
    c_road: float = 1.0
    c_edge: float = 50.0
    turn_epsilon: float = 0.1


@dataclass(frozen=True)
class GridParams:
    kinds: tuple[AgentKind, ...] = ALL_KINDS
    counts: tuple[int, ...] = (1, 2, 3, 4, 5)
    runs: int = 5
    tests: int = 100
    base_seed: int = 20240521

    def __post_init__(self):
        if not self.kinds or len(set(self.kinds)) != len(self.kinds):
            raise ConfigError("grid.kinds must be a nonempty set")
        if not self.counts or any(c < 1 for c in self.counts):
            raise ConfigError("grid.counts must be positive integers")
        if self.runs < 1 or self.tests < 1:
            raise ConfigError("grid.runs and grid.tests must be >= 1")
        if not 0 <= self.base_seed < 2**64:
            raise ConfigError("grid.base_seed must be an unsigned 64-bit integer")


# agent kinds that read each per-agent key
EPSILON_KINDS = (AgentKind.RANDOM, AgentKind.RANDOM_CONSTRAINED)
DISTANCE_KINDS = (AgentKind.PROXIMITY, AgentKind.ELECTION)


def _default_agents() -> dict[AgentKind, AgentConfig]:
    return {
        AgentKind.RANDOM: AgentConfig(AgentKind.RANDOM, epsilon=0.1),
        AgentKind.RANDOM_CONSTRAINED: AgentConfig(AgentKind.RANDOM_CONSTRAINED, epsilon=0.002),
        AgentKind.PROXIMITY: AgentConfig(AgentKind.PROXIMITY, distance_threshold=25.0),
        AgentKind.ELECTION: AgentConfig(AgentKind.ELECTION, distance_threshold=25.0),
        AgentKind.Q_LEARNING: AgentConfig(AgentKind.Q_LEARNING),
        AgentKind.MPC: AgentConfig(AgentKind.MPC),
    }


@dataclass(frozen=True)
class ExperimentConfig:
    road: RoadGeometry = field(default_factory=RoadGeometry)
    world: WorldParams = field(default_factory=WorldParams)
    agents: Mapping[AgentKind, AgentConfig] = field(default_factory=_default_agents)
    qlearning: QConfig = field(default_factory=QConfig)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    coverage: CoverageParams = field(default_factory=CoverageParams)
    score: ScoreWeights = field(default_factory=ScoreWeights)
    grid: GridParams = field(default_factory=GridParams)

    def agent(self, kind: AgentKind) -> AgentConfig:
        return self.agents[kind]

    def with_overrides(self, values: Mapping[str, Any]) -> "ExperimentConfig":
        return apply_overrides(self, values)


# -- flat key/value file -------------------------------------------------------

_SIMPLE_SECTIONS = ("road", "world", "qlearning", "coverage", "score", "grid")


def _coerce(raw: Any, target: Any, key: str) -> Any:
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if target is bool or isinstance(target, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(target, int):
            return int(text, 0)
        if isinstance(target, float):
            return float(text)
        if isinstance(target, tuple):
            items = [t.strip() for t in text.split(",") if t.strip()]
            if target and isinstance(target[0], AgentKind):
                return tuple(AgentKind(t.upper()) for t in items)
            return tuple(int(t) for t in items)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from exc
    return text


def apply_overrides(cfg: ExperimentConfig, values: Mapping[str, Any]) -> ExperimentConfig:
    """Return ``cfg`` with dotted ``section.field`` keys replaced."""
    sections: dict[str, dict[str, Any]] = {}
    for key, raw in values.items():
        if "." not in key:
            raise ConfigError(f"config key {key!r} lacks a section prefix")
        section, name = key.split(".", 1)
        sections.setdefault(section.lower(), {})[name.lower()] = raw

    updates: dict[str, Any] = {}
    agents = dict(cfg.agents)
    for section, items in sections.items():
        if section in _SIMPLE_SECTIONS:
            current = getattr(cfg, section)
            names = {f.name for f in fields(current)}
            kw = {}
            for name, raw in items.items():
                if name not in names:
                    raise ConfigError(f"unknown config key {section}.{name}")
                kw[name] = _coerce(raw, getattr(current, name), f"{section}.{name}")
            updates[section] = replace(current, **kw)
        elif section == "mpc":
            current = cfg.mpc
            weights = {}
            kw = {}
            for name, raw in items.items():
                if name in ("w1", "w2", "w3"):
                    weights[name] = _coerce(raw, 0.0, f"mpc.{name}")
                elif name in {f.name for f in fields(current)} and name != "weights":
                    kw[name] = _coerce(raw, getattr(current, name), f"mpc.{name}")
                else:
                    raise ConfigError(f"unknown config key mpc.{name}")
            if weights:
                kw["weights"] = replace(current.weights, **weights)
            updates["mpc"] = replace(current, **kw)
        else:
            try:
                kind = AgentKind(section.upper())
            except ValueError:
                raise ConfigError(f"unknown config section {section!r}") from None
            current = agents[kind]
            kw = {}
            for name, raw in items.items():
                if name not in ("epsilon", "distance_threshold"):
                    raise ConfigError(f"unknown config key {section}.{name}")
                kw[name] = _coerce(raw, getattr(current, name), f"{section}.{name}")
            agents[kind] = replace(current, **kw)
    updates["agents"] = agents
    return dataclasses.replace(cfg, **updates)


def parse_config_text(text: str) -> dict[str, str]:
    parser = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#", ";"), interpolation=None
    )
    parser.optionxform = str
    parser.read_string("[config]\n" + text)
    return dict(parser["config"])


def load_config(path: str | Path | None = None, **overrides: Any) -> ExperimentConfig:
    """Build a configuration from defaults, an optional file and overrides.

    ``overrides`` use the same dotted keys as the file, with ``__`` standing in
    for the dot when passed as keyword arguments (``world__dt=0.05``).
    """
    cfg = ExperimentConfig()
    if path is not None:
        cfg = apply_overrides(cfg, parse_config_text(Path(path).read_text()))
    if overrides:
        cfg = apply_overrides(cfg, {k.replace("__", "."): v for k, v in overrides.items()})
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    """Render ``cfg`` in the flat key/value format accepted by ``load_config``."""
    lines = []
    for section in _SIMPLE_SECTIONS:
        obj = getattr(cfg, section)
        for f in fields(obj):
            value = getattr(obj, f.name)
            if isinstance(value, tuple):
                value = ", ".join(v.value if isinstance(v, AgentKind) else str(v) for v in value)
            lines.append(f"{section}.{f.name} = {value}")
    for kind, agent in cfg.agents.items():
        if kind in EPSILON_KINDS:
            lines.append(f"{kind.section}.epsilon = {agent.epsilon!r}")
        if kind in DISTANCE_KINDS:
            lines.append(f"{kind.section}.distance_threshold = {agent.distance_threshold!r}")
    m = cfg.mpc
    lines += [
        f"mpc.horizon_steps = {m.horizon_steps}",
        f"mpc.dt = {m.dt!r}",
        f"mpc.turn_epsilon = {m.turn_epsilon!r}",
        f"mpc.budget = {m.budget}",
        f"mpc.w1 = {m.weights.w1!r}",
        f"mpc.w2 = {m.weights.w2!r}",
        f"mpc.w3 = {m.weights.w3!r}",
    ]
    return "\n".join(lines) + "\n"
