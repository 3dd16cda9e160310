"""Receding-horizon planner for the MPC pedestrian.

Each call enumerates every sequence of primitive actions over the horizon,
rolls each one forward with the world kinematics, and scores it with a
three-term cost: time-integrated distance to the predicted car, time spent on
the road, and the number of heading changes larger than ``turn_epsilon``.
Only the first action of the cheapest sequence is executed; the planner is
called again on the next step.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .config import MpcConfig, RoadGeometry, WorldParams
from .world import (
    MOVE_ACTIONS,
    CarState,
    ContractError,
    PedestrianAction,
    PedestrianState,
    angle_diff,
    integrate,
)


@dataclass(frozen=True)
class CandidateTrajectory:
    actions: tuple[PedestrianAction, ...]
    positions: np.ndarray  # (N, 2), P_1..P_N
    headings: np.ndarray  # (N,), theta_1..theta_N

    def __len__(self) -> int:
        return len(self.actions)


def predict_car(car: CarState, horizon_steps: int, dt: float) -> np.ndarray:
    """Constant-velocity car positions C_1..C_N as an (N, 2) array."""
    if horizon_steps < 1:
        raise ContractError("horizon_steps must be >= 1")
    i = np.arange(1, horizon_steps + 1, dtype=float)
    return np.column_stack(
        [
            car.x + i * dt * car.speed * np.cos(car.heading),
            car.y + i * dt * car.speed * np.sin(car.heading),
        ]
    )


def rollout(
    ped: PedestrianState,
    actions: Sequence[PedestrianAction],
    dt: float,
    params: WorldParams,
    road: RoadGeometry,
) -> CandidateTrajectory:
    x, y, h, v = ped.x, ped.y, ped.heading, ped.speed
    pos, heads = [], []
    for a in actions:
        x, y, h, v = integrate(x, y, h, v, int(a), dt, params, road)
        pos.append((float(x), float(y)))
        heads.append(float(h))
    return CandidateTrajectory(tuple(actions), np.array(pos), np.array(heads))


def _in_road(y, road: RoadGeometry):
    return (y >= road.road_bottom) & (y < road.road_top)


def trajectory_cost(
    cand: CandidateTrajectory,
    car_pred: np.ndarray,
    cfg: MpcConfig,
    road: RoadGeometry,
) -> float:
    """Discretized objective of one candidate against the predicted car path."""
    n = len(cand.positions)
    if n != len(car_pred) or n != len(cand.headings):
        raise ContractError(f"candidate length {n} does not match car prediction {len(car_pred)}")
    w = cfg.weights
    dist = 0.0
    occupancy = 0.0
    turns = 0.0
    for i in range(n):
        px, py = cand.positions[i]
        dist = dist + np.hypot(px - car_pred[i, 0], py - car_pred[i, 1]) * cfg.dt
        occupancy = occupancy + _in_road(py, road) * cfg.dt
        if i > 0:
            turns = turns + (abs(angle_diff(cand.headings[i], cand.headings[i - 1])) > cfg.turn_epsilon)
    return float(w.w1 * dist + w.w2 * occupancy + w.w3 * turns)


@lru_cache(maxsize=16)
def action_sequences(horizon_steps: int) -> np.ndarray:
    """All |A|^N action sequences in lexicographic order, shape (|A|^N, N)."""
    codes = [int(a) for a in MOVE_ACTIONS]
    seqs = np.array(list(itertools.product(codes, repeat=horizon_steps)), dtype=np.int64)
    seqs.setflags(write=False)
    return seqs


def sequence_costs(
    ped: PedestrianState,
    car: CarState,
    cfg: MpcConfig,
    road: RoadGeometry,
    params: WorldParams,
) -> np.ndarray:
    """Cost of every enumerated sequence, vectorized over candidates.

    Mirrors ``trajectory_cost`` operation for operation so both routes agree
    exactly.
    """
    seqs = action_sequences(cfg.horizon_steps)
    m = len(seqs)
    car_pred = predict_car(car, cfg.horizon_steps, cfg.dt)
    x = np.full(m, ped.x)
    y = np.full(m, ped.y)
    h = np.full(m, ped.heading)
    v = np.full(m, ped.speed)
    dist = np.zeros(m)
    occupancy = np.zeros(m)
    turns = np.zeros(m)
    prev_h = None
    for i in range(cfg.horizon_steps):
        x, y, h, v = integrate(x, y, h, v, seqs[:, i], cfg.dt, params, road)
        dist = dist + np.hypot(x - car_pred[i, 0], y - car_pred[i, 1]) * cfg.dt
        occupancy = occupancy + _in_road(y, road) * cfg.dt
        if prev_h is not None:
            turns = turns + (np.abs(angle_diff(h, prev_h)) > cfg.turn_epsilon)
        prev_h = h
    w = cfg.weights
    return w.w1 * dist + w.w2 * occupancy + w.w3 * turns


def plan_sequence(
    ped: PedestrianState,
    car: CarState,
    cfg: MpcConfig,
    road: RoadGeometry,
    params: WorldParams,
) -> tuple[tuple[PedestrianAction, ...], float]:
    """Optimal action sequence and its cost; ties go to the lexicographically first."""
    costs = sequence_costs(ped, car, cfg, road, params)
    best = int(np.argmin(costs))
    seq = tuple(PedestrianAction(int(c)) for c in action_sequences(cfg.horizon_steps)[best])
    return seq, float(costs[best])


def plan(
    ped: PedestrianState,
    car: CarState,
    cfg: MpcConfig,
    road: RoadGeometry,
    params: WorldParams,
) -> PedestrianAction:
    return plan_sequence(ped, car, cfg, road, params)[0][0]
