"""Road corridor, kinematics, spawning and test-event classification.

Coordinates: ``x`` runs along the road (the car drives towards +x), ``y`` runs
across it. From ``y = 0`` upwards the corridor is: near pavement, the car's
lane (lane 1), the opposite lane (lane 2), far pavement.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Mapping, NamedTuple, Union

import numpy as np

from .config import RoadGeometry, WorldParams

TWO_PI = 2.0 * math.pi


class ContractError(ValueError):
    """A caller violated an operation's precondition."""


class SpawnError(RuntimeError):
    """The spawn window cannot hold the requested pedestrians."""


class PedestrianAction(enum.IntEnum):
    NOOP = 0
    ACCEL = 1
    DECEL = 2
    TURN_LEFT = 3
    TURN_RIGHT = 4
    START_CROSSING = 5


# the five primitive actions, in tie-break order
MOVE_ACTIONS = (
    PedestrianAction.NOOP,
    PedestrianAction.ACCEL,
    PedestrianAction.DECEL,
    PedestrianAction.TURN_LEFT,
    PedestrianAction.TURN_RIGHT,
)


class Region(enum.IntEnum):
    PAVEMENT_NEAR = 0
    ROAD_LANE_1 = 1
    ROAD_LANE_2 = 2
    PAVEMENT_FAR = 3


class TestEvent(enum.Enum):
    NONE = "NONE"
    INTERESTING_INTRUSION = "INTERESTING_INTRUSION"
    UNAVOIDABLE_INTRUSION = "UNAVOIDABLE_INTRUSION"
    CAR_EXITED = "CAR_EXITED"
    TIMEOUT = "TIMEOUT"

    __test__ = False  # not a pytest class


class CrossingOverride(NamedTuple):
    """Direct heading/speed assignment issued by the crossing macro-action."""

    heading: float
    speed: float
    crossing: bool


StepInput = Union[PedestrianAction, CrossingOverride]


@dataclass(frozen=True)
class CarState:
    x: float
    y: float
    speed: float
    max_decel: float
    reaction_time: float
    heading: float = 0.0

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class PedestrianState:
    id: int
    x: float
    y: float
    heading: float
    speed: float
    crossing: bool = False

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class WorldState:
    car: CarState
    pedestrians: tuple[PedestrianState, ...]
    step_index: int
    dt: float

    @property
    def time(self) -> float:
        return self.step_index * self.dt

    def pedestrian(self, pid: int) -> PedestrianState:
        for p in self.pedestrians:
            if p.id == pid:
                return p
        raise KeyError(pid)


def wrap_angle(theta):
    """Map angles onto (-pi, pi]. Works on floats and arrays."""
    return math.pi - np.mod(math.pi - theta, TWO_PI)


def angle_diff(a, b):
    """Shortest signed arc from ``b`` to ``a``."""
    return wrap_angle(a - b)


# -- regions -------------------------------------------------------------------


def region_of(y, road: RoadGeometry):
    """Lateral region index for ``y`` (float or array)."""
    edges = (road.road_bottom, road.road_bottom + road.lane_width, road.road_top)
    r = np.searchsorted(edges, y, side="right")
    return Region(int(r)) if np.ndim(r) == 0 else r


def in_road(y: float, road: RoadGeometry) -> bool:
    return road.road_bottom <= y < road.road_top


def in_pavement(y: float, road: RoadGeometry) -> bool:
    return y < road.road_bottom or y >= road.road_top


def in_car_lane(y: float, road: RoadGeometry) -> bool:
    return road.road_bottom <= y < road.road_bottom + road.lane_width


# -- kinematics ----------------------------------------------------------------


def integrate(x, y, heading, speed, kind, dt: float, params: WorldParams, road: RoadGeometry):
    """Apply one primitive action per pedestrian, then move for ``dt``.

    Every argument may be an array; all pedestrians (or candidate trajectories)
    are advanced elementwise with identical floating-point operations, so the
    planner's forward model reproduces ``step`` bit for bit.
    """
    kind = np.asarray(kind)
    speed = np.where(
        kind == PedestrianAction.ACCEL,
        speed + params.delta_v,
        np.where(kind == PedestrianAction.DECEL, speed - params.delta_v, speed),
    )
    speed = np.clip(speed, 0.0, params.v_max)
    heading = np.where(
        kind == PedestrianAction.TURN_LEFT,
        heading + params.delta_theta,
        np.where(kind == PedestrianAction.TURN_RIGHT, heading - params.delta_theta, heading),
    )
    heading = wrap_angle(heading)
    return _advance(x, y, heading, speed, dt, road)


def _advance(x, y, heading, speed, dt, road):
    x = np.clip(x + speed * np.cos(heading) * dt, 0.0, road.road_length)
    y = np.clip(y + speed * np.sin(heading) * dt, 0.0, road.height)
    return x, y, heading, speed


def step(
    state: WorldState,
    actions: Mapping[int, StepInput],
    params: WorldParams,
    road: RoadGeometry,
) -> WorldState:
    """Advance the world by one fixed timestep.

    ``actions`` maps every pedestrian id to a primitive action or a crossing
    override. START_CROSSING only arms the crossing flag; the caller is
    expected to replace it with the macro's override before stepping, so here
    it moves the pedestrian like NOOP.
    """
    if state.dt <= 0:
        raise ContractError("dt must be positive")
    ids = [p.id for p in state.pedestrians]
    if set(actions) != set(ids) or len(actions) != len(ids):
        missing = sorted(set(ids) - set(actions))
        extra = sorted(set(actions) - set(ids))
        raise ContractError(f"actions do not match pedestrians (missing {missing}, unknown {extra})")

    car = state.car
    car = replace(car, x=car.x + car.speed * math.cos(car.heading) * state.dt)
    if not state.pedestrians:
        return WorldState(car, (), state.step_index + 1, state.dt)

    peds = state.pedestrians
    x = np.array([p.x for p in peds])
    y = np.array([p.y for p in peds])
    h = np.array([p.heading for p in peds])
    v = np.array([p.speed for p in peds])
    kinds = np.zeros(len(peds), dtype=np.int64)
    crossing = []
    for i, p in enumerate(peds):
        a = actions[p.id]
        if isinstance(a, CrossingOverride):
            h[i] = a.heading
            v[i] = a.speed
            crossing.append(a.crossing)
        else:
            a = PedestrianAction(a)
            kinds[i] = 0 if a == PedestrianAction.START_CROSSING else int(a)
            crossing.append(p.crossing or a == PedestrianAction.START_CROSSING)
    x, y, h, v = integrate(x, y, h, v, kinds, state.dt, params, road)
    new_peds = tuple(
        PedestrianState(p.id, float(x[i]), float(y[i]), float(h[i]), float(v[i]), crossing[i])
        for i, p in enumerate(peds)
    )
    return WorldState(car, new_peds, state.step_index + 1, state.dt)


# -- car safety envelope --------------------------------------------------------


def stopping_distance(car: CarState) -> float:
    """Reaction distance plus braking distance at full deceleration."""
    return car.speed * car.reaction_time + car.speed**2 / (2.0 * car.max_decel)


def longitudinal_gap(ped: PedestrianState, car: CarState) -> float:
    return ped.x - car.x


def in_precondition_zone(ped: PedestrianState, car: CarState, road: RoadGeometry) -> bool:
    """Pedestrian stands in the car's lane far enough ahead to be avoidable."""
    gap = ped.x - car.x
    return in_car_lane(ped.y, road) and gap >= 0 and gap > stopping_distance(car)


def is_unavoidable(ped: PedestrianState, car: CarState, road: RoadGeometry) -> bool:
    gap = ped.x - car.x
    return in_car_lane(ped.y, road) and 0 <= gap <= stopping_distance(car)


def classify_test_event(state: WorldState, road: RoadGeometry, max_steps: int) -> TestEvent:
    car = state.car
    if any(in_precondition_zone(p, car, road) for p in state.pedestrians):
        return TestEvent.INTERESTING_INTRUSION
    if any(is_unavoidable(p, car, road) for p in state.pedestrians):
        return TestEvent.UNAVOIDABLE_INTRUSION
    if car.x >= road.road_length:
        return TestEvent.CAR_EXITED
    if state.step_index >= max_steps:
        return TestEvent.TIMEOUT
    return TestEvent.NONE


# -- spawning ------------------------------------------------------------------


def make_car(params: WorldParams, road: RoadGeometry) -> CarState:
    return CarState(
        x=0.0,
        y=road.car_lane_center,
        speed=params.car_speed,
        max_decel=params.max_decel,
        reaction_time=params.reaction_time,
    )


def spawn_window(car: CarState, params: WorldParams, road: RoadGeometry) -> tuple[float, float]:
    lo = car.x + stopping_distance(car) + params.spawn_margin
    hi = road.road_length - params.spawn_margin
    return lo, hi


def spawn_initial(
    rng: np.random.Generator,
    n: int,
    road: RoadGeometry,
    car_template: CarState,
    params: WorldParams,
    max_attempts: int = 10_000,
) -> WorldState:
    """Place the car at the left end of its lane and ``n`` pedestrians at rest.

    Each pedestrian picks a pavement with equal probability, a lateral offset
    uniform across that pavement and a longitudinal position uniform inside the
    spawn window, with rejection sampling to keep ``min_separation`` between
    pedestrians. Headings start parallel to the road (0 rad).
    """
    if not 1 <= n <= params.max_pedestrians:
        raise ContractError(f"n must lie in [1, {params.max_pedestrians}], got {n}")
    car = replace(car_template, x=0.0, y=road.car_lane_center)
    lo, hi = spawn_window(car, params, road)
    if hi < lo:
        raise SpawnError(f"empty spawn window [{lo:.3f}, {hi:.3f}]")
    per_side = int((hi - lo) // params.min_separation) + 1
    if n > 2 * per_side:
        raise SpawnError(f"spawn window [{lo:.3f}, {hi:.3f}] cannot hold {n} pedestrians")

    placed: list[tuple[float, float]] = []
    pw = road.pavement_width
    attempts = 0
    while len(placed) < n:
        attempts += 1
        if attempts > max_attempts:
            raise SpawnError(f"could not place {n} pedestrians after {max_attempts} attempts")
        far = rng.integers(2) == 1
        offset = rng.uniform(0.0, pw)
        x = float(rng.uniform(lo, hi))
        y = float(road.road_top + offset if far else offset)
        if all(math.hypot(x - px, y - py) >= params.min_separation for px, py in placed):
            placed.append((x, y))
    peds = tuple(PedestrianState(i, x, y, 0.0, 0.0, False) for i, (x, y) in enumerate(placed))
    return WorldState(car, peds, 0, params.dt)
