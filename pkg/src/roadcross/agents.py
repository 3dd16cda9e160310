"""Pedestrian decision policies.

Six policies share one interface: a ``Policy`` is built once per test and its
``decide`` method maps the current world state to one action per pedestrian.
The per-pedestrian decision rules are plain functions so they can be tested
and reused on their own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Mapping

import numpy as np

from . import mpc
from .config import AgentConfig, AgentKind, ExperimentConfig, QConfig, RoadGeometry
from .world import (
    MOVE_ACTIONS,
    ContractError,
    CrossingOverride,
    PedestrianAction,
    PedestrianState,
    Region,
    TestEvent,
    WorldState,
    angle_diff,
    classify_test_event,
    in_road,
    make_car,
    region_of,
    spawn_initial,
    step,
    stopping_distance,
)

A = PedestrianAction


@dataclass(frozen=True)
class Observation:
    self_position: tuple[float, float]
    self_heading: float
    self_region: Region
    car_relative: tuple[float, float]
    car_speed: float


def observe(state: WorldState, ped: PedestrianState, road: RoadGeometry) -> Observation:
    car = state.car
    return Observation(
        self_position=(ped.x, ped.y),
        self_heading=ped.heading,
        self_region=region_of(ped.y, road),
        car_relative=(car.x - ped.x, car.y - ped.y),
        car_speed=car.speed,
    )


# -- random family ---------------------------------------------------------------


def decide_random(config: AgentConfig, last: PedestrianAction, rng: np.random.Generator) -> PedestrianAction:
    """Re-draw with probability epsilon, otherwise repeat the last action."""
    if rng.random() < config.epsilon:
        return MOVE_ACTIONS[int(rng.integers(len(MOVE_ACTIONS)))]
    return last


def decide_constrained_random(
    config: AgentConfig,
    state: PedestrianState,
    rng: np.random.Generator,
    latched: bool = False,
) -> PedestrianAction:
    if latched or state.crossing:
        return A.NOOP
    return A.START_CROSSING if rng.random() < config.epsilon else A.NOOP


# -- proximity family -----------------------------------------------------------


def proximity_trigger(ped_position, car_position, d: float) -> bool:
    if d <= 0:
        raise ContractError("distance threshold must be positive")
    dx = ped_position[0] - car_position[0]
    dy = ped_position[1] - car_position[1]
    return math.sqrt(dx * dx + dy * dy) < d


def decide_proximity(config: AgentConfig, obs: Observation, latched: bool = False) -> PedestrianAction:
    if latched:
        return A.NOOP
    car = (
        obs.self_position[0] + obs.car_relative[0],
        obs.self_position[1] + obs.car_relative[1],
    )
    return A.START_CROSSING if proximity_trigger(obs.self_position, car, config.distance_threshold) else A.NOOP


def run_election(candidates: Iterable[tuple[Hashable, float]]):
    """Winner is the candidate closest to the car; ties go to the lowest id."""
    candidates = list(candidates)
    if not candidates:
        raise ContractError("election needs at least one candidate")
    return min(candidates, key=lambda c: (c[1], c[0]))[0]


# -- crossing macro-action ---------------------------------------------------------


def crossing_macro_step(ped: PedestrianState, road: RoadGeometry, v_max: float) -> CrossingOverride:
    """Walk straight across the road at full speed until the opposite pavement.

    A pedestrian already crossing keeps its direction; a freshly armed one
    heads away from the side of the centre line it stands on. On arrival the
    flag clears and the pedestrian stops facing along the road.
    """
    if abs(math.cos(ped.heading)) < 1e-9:
        up = math.sin(ped.heading) > 0
    else:
        up = ped.y < 0.5 * (road.road_bottom + road.road_top)
    arrived = ped.y >= road.road_top if up else ped.y < road.road_bottom
    if arrived:
        return CrossingOverride(0.0, 0.0, False)
    return CrossingOverride(math.pi / 2 if up else -math.pi / 2, v_max, True)


# -- tabular Q-learning ----------------------------------------------------------

StateKey = tuple[int, int, int, int]


def heading_octant(theta: float) -> int:
    return int(round(theta / (math.pi / 4))) % 8


def gap_bin_count(road: RoadGeometry, gap_bin: float) -> int:
    """Bins needed for longitudinal gaps in [0, road_length]."""
    return int(math.floor(road.road_length / gap_bin)) + 1


def q_state_key(obs: Observation, gap_bin: float, max_bin: int | None = None) -> StateKey:
    """(gap bin, side of the car, lateral region, heading octant)."""
    dx = obs.car_relative[0]
    b = int(math.floor(abs(dx) / gap_bin))
    if max_bin is not None:
        b = min(b, max_bin)
    sign = (dx > 0) - (dx < 0)
    return (b, sign, int(obs.self_region), heading_octant(obs.self_heading))


def observation_key_space(road: RoadGeometry, gap_bin: float) -> int:
    """Reachable state keys. A zero sign only occurs in gap bin 0, so the
    (bin, sign) pairs number 3 + 2 * (bins - 1)."""
    pairs = 2 * gap_bin_count(road, gap_bin) + 1
    return pairs * len(Region) * 8


@dataclass
class QTable:
    alpha: float = 0.1
    gamma: float = 0.95
    epsilon_train: float = 0.2
    epsilon_eval: float = 0.05
    values: dict[StateKey, list[float]] = field(default_factory=dict)

    def row(self, s: StateKey) -> list[float]:
        return self.values.get(s, [0.0] * len(MOVE_ACTIONS))

    def get(self, s: StateKey, a: PedestrianAction) -> float:
        return self.row(s)[int(a)]

    def set(self, s: StateKey, a: PedestrianAction, value: float) -> None:
        row = self.values.setdefault(s, [0.0] * len(MOVE_ACTIONS))
        row[int(a)] = value

    def __eq__(self, other):
        if not isinstance(other, QTable):
            return NotImplemented
        return (
            (self.alpha, self.gamma, self.epsilon_train, self.epsilon_eval)
            == (other.alpha, other.gamma, other.epsilon_train, other.epsilon_eval)
            and self.values == other.values
        )


def q_update(
    q: QTable, s: StateKey, a: PedestrianAction, r: float, s_next: StateKey, terminal: bool = False
) -> QTable:
    """One-step Q-learning backup, in place. Terminal successors do not bootstrap."""
    future = 0.0 if terminal else max(q.row(s_next))
    old = q.get(s, a)
    q.set(s, a, old + q.alpha * (r + q.gamma * future - old))
    return q


def q_select(q: QTable, s: StateKey, eps: float, rng: np.random.Generator) -> PedestrianAction:
    if rng.random() < eps:
        return MOVE_ACTIONS[int(rng.integers(len(MOVE_ACTIONS)))]
    row = q.row(s)
    return MOVE_ACTIONS[row.index(max(row))]


def zone_distance(ped: PedestrianState, state: WorldState, road: RoadGeometry) -> float:
    """Distance from a pedestrian to the nearest avoidable-intrusion point."""
    car = state.car
    start = car.x + stopping_distance(car)
    dx = max(0.0, start - ped.x)
    lane_lo, lane_hi = road.road_bottom, road.road_bottom + road.lane_width
    dy = max(0.0, lane_lo - ped.y, ped.y - lane_hi)
    return math.hypot(dx, dy)


def shaping_reward(
    before: WorldState, after: WorldState, pid: int, event: TestEvent, qcfg: QConfig, road: RoadGeometry
) -> float:
    p0 = before.pedestrian(pid)
    p1 = after.pedestrian(pid)
    r = qcfg.progress_gain * (zone_distance(p0, before, road) - zone_distance(p1, after, road))
    if in_road(p1.y, road):
        r -= qcfg.road_step_penalty
        if abs(angle_diff(p1.heading, p0.heading)) > qcfg.turn_epsilon:
            r -= qcfg.turn_penalty
    if event is TestEvent.INTERESTING_INTRUSION:
        r += qcfg.interesting_reward
    return r


def q_train(cfg: ExperimentConfig, episodes: int | None = None, seed: int = 0) -> QTable:
    """Train a table on single-pedestrian episodes with decaying exploration."""
    qcfg = cfg.qlearning
    episodes = qcfg.episodes if episodes is None else episodes
    if episodes < 1:
        raise ContractError("episodes must be >= 1")
    road, params = cfg.road, cfg.world
    max_bin = gap_bin_count(road, qcfg.gap_bin) - 1
    q = QTable(qcfg.alpha, qcfg.gamma, qcfg.epsilon_train_start, qcfg.epsilon_eval)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x51,)))
    car0 = make_car(params, road)
    for ep in range(episodes):
        frac = ep / (episodes - 1) if episodes > 1 else 1.0
        eps = qcfg.epsilon_train_start + (qcfg.epsilon_train_end - qcfg.epsilon_train_start) * frac
        state = spawn_initial(rng, 1, road, car0, params)
        ped = state.pedestrians[0]
        s = q_state_key(observe(state, ped, road), qcfg.gap_bin, max_bin)
        while True:
            a = q_select(q, s, eps, rng)
            nxt = step(state, {ped.id: a}, params, road)
            event = classify_test_event(nxt, road, params.max_steps)
            r = shaping_reward(state, nxt, ped.id, event, qcfg, road)
            ped = nxt.pedestrians[0]
            s2 = q_state_key(observe(nxt, ped, road), qcfg.gap_bin, max_bin)
            q_update(q, s, a, r, s2, terminal=event is not TestEvent.NONE)
            state, s = nxt, s2
            if event is not TestEvent.NONE:
                break
    q.epsilon_train = qcfg.epsilon_train_end
    return q


_QTABLE_PARAMS = ("alpha", "gamma", "epsilon_train", "epsilon_eval")


def save_qtable(q: QTable, path: str | Path) -> None:
    lines = [
        f"# alpha={q.alpha!r} gamma={q.gamma!r} "
        f"epsilon_train={q.epsilon_train!r} epsilon_eval={q.epsilon_eval!r}"
    ]
    for s in sorted(q.values):
        for a in MOVE_ACTIONS:
            key = ",".join(str(k) for k in s)
            lines.append(f"{key}\t{a.name}\t{q.values[s][int(a)]!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_qtable(path: str | Path) -> QTable:
    q = QTable()
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            for item in line[1:].split():
                name, _, value = item.partition("=")
                if name not in _QTABLE_PARAMS:
                    raise ValueError(f"{path}: unknown Q-table parameter {name!r}")
                setattr(q, name, float(value))
            continue
        key, action, value = line.split("\t")
        s = tuple(int(k) for k in key.split(","))
        q.set(s, A[action], float(value))
    return q


# -- policies ----------------------------------------------------------------------


class Policy:
    """Decides one action per pedestrian each step.

    ``crossed`` records pedestrians that have ever emitted START_CROSSING;
    the crossing-capable policies use it as their latch.
    """

    kind: AgentKind

    def __init__(self, cfg: ExperimentConfig, rng: np.random.Generator, state: WorldState):
        self.cfg = cfg
        self.rng = rng
        self.agent_cfg = cfg.agent(self.kind)
        self.crossed: set[int] = set()

    def decide(self, state: WorldState) -> dict[int, PedestrianAction]:
        raise NotImplementedError

    def _latch(self, actions: Mapping[int, PedestrianAction]) -> None:
        for pid, a in actions.items():
            if a == A.START_CROSSING:
                self.crossed.add(pid)


class _Draws:
    """Block-buffered scalar draws; numpy's per-call overhead dwarfs one sample."""

    def __init__(self, sample, block: int = 64):
        self.sample = sample
        self.block = block
        self.buf: list = []
        self.i = 0

    def __call__(self):
        if self.i == len(self.buf):
            self.buf = self.sample(self.block).tolist()
            self.i = 0
        self.i += 1
        return self.buf[self.i - 1]


class RandomPolicy(Policy):
    """``decide_random`` per pedestrian, sampled by event clock.

    Re-draws form a Bernoulli(epsilon) process over decisions, so the wait
    until the next one is geometric. Drawing that wait once per re-draw gives
    the same action law with far fewer generator calls.
    """

    kind = AgentKind.RANDOM

    def __init__(self, cfg, rng, state):
        super().__init__(cfg, rng, state)
        self.last = {p.id: A.NOOP for p in state.pedestrians}
        self.due: dict[int, int] | None = None
        self.calls = 0
        eps = self.agent_cfg.epsilon
        if eps > 0:
            self.wait = _Draws(lambda k: rng.geometric(eps, size=k))
        else:
            self.wait = lambda: 1 << 62
        self.pick = _Draws(lambda k: rng.integers(len(MOVE_ACTIONS), size=k))

    def decide(self, state):
        k = self.calls
        self.calls += 1
        if self.due is None:
            self.due = {pid: self.wait() - 1 for pid in self.last}
            self.next_due = min(self.due.values(), default=-1)
        if k == self.next_due:
            for pid, due in self.due.items():
                if due == k:
                    self.last[pid] = MOVE_ACTIONS[self.pick()]
                    self.due[pid] = k + self.wait()
            self.next_due = min(self.due.values())
        return self.last.copy()


class ConstrainedRandomPolicy(Policy):
    """``decide_constrained_random`` with the onset drawn up front.

    The first success of a per-step Bernoulli(epsilon) trial is geometric,
    and after it the pedestrian is latched, so one draw decides the test.
    """

    kind = AgentKind.RANDOM_CONSTRAINED

    def __init__(self, cfg, rng, state):
        super().__init__(cfg, rng, state)
        self.idle = {p.id: A.NOOP for p in state.pedestrians}
        self.onset: dict[int, int] | None = None
        self.calls = 0

    def decide(self, state):
        if self.onset is None:
            eps = self.agent_cfg.epsilon
            ids = list(self.idle)
            waits = self.rng.geometric(eps, size=len(ids)).tolist() if eps > 0 else [0] * len(ids)
            self.onset = {pid: w - 1 for pid, w in zip(ids, waits)}
            self.onset_steps = set(self.onset.values())
        k = self.calls
        self.calls += 1
        if k not in self.onset_steps:
            return self.idle.copy()
        out = {pid: (A.START_CROSSING if k == t else A.NOOP) for pid, t in self.onset.items()}
        self._latch(out)
        return out


class ProximityPolicy(Policy):
    kind = AgentKind.PROXIMITY

    def decide(self, state):
        road = self.cfg.road
        out = {
            p.id: decide_proximity(self.agent_cfg, observe(state, p, road), p.id in self.crossed)
            for p in state.pedestrians
        }
        self._latch(out)
        return out


class ElectionPolicy(Policy):
    """Proximity trigger plus a vote: the first time anyone triggers, the
    closest triggered pedestrian wins and is the only one ever to cross."""

    kind = AgentKind.ELECTION

    def __init__(self, cfg, rng, state):
        super().__init__(cfg, rng, state)
        self.winner: int | None = None

    def decide(self, state):
        out = {p.id: A.NOOP for p in state.pedestrians}
        if self.winner is not None:
            return out
        road = self.cfg.road
        candidates = []
        for p in state.pedestrians:
            if decide_proximity(self.agent_cfg, observe(state, p, road)) == A.START_CROSSING:
                candidates.append((p.id, math.hypot(state.car.x - p.x, state.car.y - p.y)))
        if candidates:
            self.winner = run_election(candidates)
            out[self.winner] = A.START_CROSSING
            self._latch(out)
        return out


class QLearningPolicy(Policy):
    kind = AgentKind.Q_LEARNING

    def __init__(self, cfg, rng, state, qtable: QTable):
        super().__init__(cfg, rng, state)
        self.q = qtable
        self.max_bin = gap_bin_count(cfg.road, cfg.qlearning.gap_bin) - 1

    def decide(self, state):
        road, gap_bin = self.cfg.road, self.cfg.qlearning.gap_bin
        out = {}
        for p in state.pedestrians:
            s = q_state_key(observe(state, p, road), gap_bin, self.max_bin)
            out[p.id] = q_select(self.q, s, self.q.epsilon_eval, self.rng)
        return out


class MpcPolicy(Policy):
    kind = AgentKind.MPC

    def decide(self, state):
        cfg = self.cfg
        return {
            p.id: mpc.plan(p, state.car, cfg.mpc, cfg.road, cfg.world) for p in state.pedestrians
        }


POLICIES: dict[AgentKind, type[Policy]] = {
    cls.kind: cls
    for cls in (
        RandomPolicy,
        ConstrainedRandomPolicy,
        ProximityPolicy,
        ElectionPolicy,
        QLearningPolicy,
        MpcPolicy,
    )
}


def make_policy(
    kind: AgentKind,
    cfg: ExperimentConfig,
    rng: np.random.Generator,
    state: WorldState,
    qtable: QTable | None = None,
) -> Policy:
    if kind is AgentKind.Q_LEARNING:
        if qtable is None:
            raise ContractError("Q_LEARNING policy needs a trained table")
        return QLearningPolicy(cfg, rng, state, qtable)
    return POLICIES[kind](cfg, rng, state)
