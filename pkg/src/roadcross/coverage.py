"""Situation, scenario and agent-action coverage ledgers.

A situation is the coarse spatial layout of a scene: the car's longitudinal
bin plus the multiset of pedestrian (longitudinal bin, lateral region) pairs.
Scenarios refine situations with each pedestrian's heading and speed bins.
Action keys pair a pedestrian's discretized observation with the action it
chose. Pedestrian identity never enters a key.
"""

from __future__ import annotations

import enum
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Hashable, Iterable

from .agents import Observation, gap_bin_count, observation_key_space, q_state_key
from .config import CoverageParams, ExperimentConfig, RoadGeometry
from .world import PedestrianAction, Region, WorldState, region_of

N_ACTION_KINDS = len(PedestrianAction)


class Metric(str, enum.Enum):
    SITUATION = "SITUATION"
    SCENARIO = "SCENARIO"
    ACTION = "ACTION"


@dataclass(frozen=True)
class DiscretizationGrid:
    x_bin: float
    heading_bins: int
    speed_bins: int
    road: RoadGeometry
    v_max: float
    gap_bin: float

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "DiscretizationGrid":
        c: CoverageParams = cfg.coverage
        return cls(c.x_bin, c.heading_bins, c.speed_bins, cfg.road, cfg.world.v_max, cfg.qlearning.gap_bin)

    @property
    def x_bins(self) -> int:
        return int(math.ceil(self.road.road_length / self.x_bin))

    def x_index(self, x: float) -> int:
        return min(max(int(math.floor(x / self.x_bin)), 0), self.x_bins - 1)

    def heading_index(self, theta: float) -> int:
        arc = 2 * math.pi / self.heading_bins
        return int(round(theta / arc)) % self.heading_bins

    def speed_index(self, v: float) -> int:
        return min(int(math.floor(v / self.v_max * self.speed_bins)), self.speed_bins - 1)

    @property
    def max_gap_bin(self) -> int:
        return gap_bin_count(self.road, self.gap_bin) - 1


def situation_key(state: WorldState, grid: DiscretizationGrid) -> tuple:
    cells = sorted((grid.x_index(p.x), int(region_of(p.y, grid.road))) for p in state.pedestrians)
    return (grid.x_index(state.car.x), tuple(cells))


def scenario_key(state: WorldState, grid: DiscretizationGrid) -> tuple:
    cells = sorted(
        (
            grid.x_index(p.x),
            int(region_of(p.y, grid.road)),
            grid.heading_index(p.heading),
            grid.speed_index(p.speed),
        )
        for p in state.pedestrians
    )
    return (grid.x_index(state.car.x), tuple(cells))


def action_key(obs: Observation, action: PedestrianAction, grid: DiscretizationGrid) -> tuple:
    return (q_state_key(obs, grid.gap_bin, grid.max_gap_bin), int(action))


def _multisets(kinds: int, n: int) -> int:
    return math.comb(kinds + n - 1, n)


def key_space_size(metric: Metric, grid: DiscretizationGrid, n_pedestrians: int) -> int:
    """Number of distinct keys a metric can produce.

    Pedestrian cells form a multiset, so ``n`` pedestrians over ``c`` cell
    values contribute C(c + n - 1, n) combinations.
    """
    metric = Metric(metric)
    if metric is Metric.ACTION:
        return observation_key_space(grid.road, grid.gap_bin) * N_ACTION_KINDS
    cells = grid.x_bins * len(Region)
    if metric is Metric.SCENARIO:
        cells *= grid.heading_bins * grid.speed_bins
    return grid.x_bins * _multisets(cells, n_pedestrians)


@dataclass
class CoverageLedger:
    metric: Metric
    key_space_size: int
    counts: Counter = field(default_factory=Counter)

    @property
    def unique(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def record(self, key: Hashable) -> "CoverageLedger":
        self.counts[key] += 1
        return self

    def merge(self, other: "CoverageLedger") -> "CoverageLedger":
        if self.metric != other.metric or self.key_space_size != other.key_space_size:
            raise ValueError("cannot merge ledgers of different metrics or key spaces")
        return CoverageLedger(self.metric, self.key_space_size, self.counts + other.counts)

    def __eq__(self, other):
        if not isinstance(other, CoverageLedger):
            return NotImplemented
        return (
            self.metric == other.metric
            and self.key_space_size == other.key_space_size
            and dict(self.counts) == dict(other.counts)
        )


def record(ledger: CoverageLedger, key: Hashable) -> CoverageLedger:
    return ledger.record(key)


def coverage_ratio(ledger: CoverageLedger) -> float:
    if ledger.key_space_size <= 0:
        raise ValueError("key space must be nonempty")
    return ledger.unique / ledger.key_space_size


def new_ledgers(grid: DiscretizationGrid, n_pedestrians: int) -> dict[Metric, CoverageLedger]:
    return {m: CoverageLedger(m, key_space_size(m, grid, n_pedestrians)) for m in Metric}


def merge_all(ledgers: Iterable[CoverageLedger]) -> CoverageLedger:
    ledgers = list(ledgers)
    out = CoverageLedger(ledgers[0].metric, ledgers[0].key_space_size)
    for led in ledgers:
        out = out.merge(led)
    return out


# -- text serialization ------------------------------------------------------------


def _encode_key(key: Any) -> str:
    return json.dumps(key, separators=(",", ":"))


def _decode_key(text: str) -> Any:
    def tup(v):
        return tuple(tup(x) for x in v) if isinstance(v, list) else v

    return tup(json.loads(text))


def dumps_ledger(ledger: CoverageLedger, grid: DiscretizationGrid) -> str:
    lines = [
        f"# metric={ledger.metric.value}",
        f"# key_space_size={ledger.key_space_size}",
        f"# x_bin={grid.x_bin!r} heading_bins={grid.heading_bins} speed_bins={grid.speed_bins} "
        f"gap_bin={grid.gap_bin!r} regions={len(Region)}",
    ]
    body = sorted(f"{_encode_key(k)}\t{c}" for k, c in ledger.counts.items())
    return "\n".join(lines + body) + "\n"


def loads_ledger(text: str) -> CoverageLedger:
    header: dict[str, str] = {}
    counts: Counter = Counter()
    for line in text.splitlines():
        if not line:
            continue
        if line.startswith("#"):
            for item in line[1:].split():
                name, _, value = item.partition("=")
                header[name] = value
            continue
        key, count = line.rsplit("\t", 1)
        counts[_decode_key(key)] = int(count)
    return CoverageLedger(Metric(header["metric"]), int(header["key_space_size"]), counts)


def save_ledger(ledger: CoverageLedger, grid: DiscretizationGrid, path: str | Path) -> None:
    Path(path).write_text(dumps_ledger(ledger, grid))


def load_ledger(path: str | Path) -> CoverageLedger:
    return loads_ledger(Path(path).read_text())
