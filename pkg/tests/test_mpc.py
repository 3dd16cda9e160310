import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roadcross.config import ConfigError, MpcConfig, MpcWeights, RoadGeometry, WorldParams
from roadcross.mpc import (
    CandidateTrajectory,
    action_sequences,
    plan,
    plan_sequence,
    predict_car,
    rollout,
    sequence_costs,
    trajectory_cost,
)
from roadcross.world import (
    MOVE_ACTIONS,
    CarState,
    ContractError,
    PedestrianAction as A,
    PedestrianState,
    WorldState,
    angle_diff,
    step,
)

ROAD = RoadGeometry()
PARAMS = WorldParams()


def mk_cfg(n=4, dt=0.1, w=(1.0, 0.5, 2.0), eps=0.1):
    return MpcConfig(horizon_steps=n, dt=dt, turn_epsilon=eps, weights=MpcWeights(*w))


def car_at(x=0.0, speed=10.0):
    return CarState(x, ROAD.car_lane_center, speed, 6.0, 1.0)


# -- car prediction ---------------------------------------------------------------


def test_predict_stationary_car():
    pred = predict_car(car_at(12.0, speed=0.0), 5, 0.1)
    assert np.all(pred == [12.0, ROAD.car_lane_center])


def test_predict_linear_offsets():
    pred = predict_car(car_at(0.0), 3, 0.1)
    assert pred[:, 0] == pytest.approx([1.0, 2.0, 3.0], rel=1e-12)


def test_predict_matches_world_step():
    c = car_at(4.2, speed=13.0)
    s = WorldState(c, (), 0, 0.05)
    stepped = []
    for _ in range(40):
        s = step(s, {}, PARAMS, ROAD)
        stepped.append((s.car.x, s.car.y))
    assert np.allclose(predict_car(c, 40, 0.05), stepped, rtol=0, atol=1e-12)


def test_predict_rejects_empty_horizon():
    with pytest.raises(ContractError):
        predict_car(car_at(), 0, 0.1)


# -- trajectory cost hand cases ------------------------------------------------------


def test_cost_distance_hand_case():
    cand = CandidateTrajectory((A.NOOP, A.NOOP), np.array([[0.0, 3.0], [0.0, 3.0]]), np.zeros(2))
    cost = trajectory_cost(cand, np.array([[0.0, 0.0], [1.0, 0.0]]), mk_cfg(2, 1.0, (1, 0, 0)), ROAD)
    assert math.isclose(cost, 3 + math.sqrt(10), rel_tol=1e-9)


def test_cost_occupancy_hand_case():
    ys = [1.0, 2.5, 4.0, 6.0, 8.0, 9.0, 10.0, 11.0]  # five inside [2, 9.3)
    pos = np.array([[10.0, y] for y in ys])
    cand = CandidateTrajectory((A.NOOP,) * 8, pos, np.zeros(8))
    cost = trajectory_cost(cand, np.zeros((8, 2)), mk_cfg(8, 0.1, (0, 1, 0)), ROAD)
    assert math.isclose(cost, 0.5, rel_tol=1e-9)


def test_cost_turn_hand_case():
    heads = np.array([0, 0, math.pi / 2, math.pi / 2, math.pi])
    cand = CandidateTrajectory((A.NOOP,) * 5, np.zeros((5, 2)), heads)
    cost = trajectory_cost(cand, np.zeros((5, 2)), mk_cfg(5, 0.1, (0, 0, 2), 0.1), ROAD)
    assert math.isclose(cost, 4.0, rel_tol=1e-9)


def test_cost_turn_uses_shortest_arc():
    heads = np.array([math.pi - 0.01, -math.pi + 0.01])
    cand = CandidateTrajectory((A.NOOP,) * 2, np.zeros((2, 2)), heads)
    assert trajectory_cost(cand, np.zeros((2, 2)), mk_cfg(2, 0.1, (0, 0, 1), 0.1), ROAD) == 0.0


def test_cost_length_mismatch():
    cand = CandidateTrajectory((A.NOOP,) * 2, np.zeros((2, 2)), np.zeros(2))
    with pytest.raises(ContractError):
        trajectory_cost(cand, np.zeros((3, 2)), mk_cfg(2), ROAD)


def test_weights_and_budget_validation():
    with pytest.raises(ConfigError):
        MpcWeights(0, 0, 0)
    with pytest.raises(ConfigError):
        MpcWeights(-1, 1, 1)
    with pytest.raises(ConfigError):
        MpcConfig(horizon_steps=9)  # 5**9 > 10**6
    with pytest.raises(ConfigError):
        MpcConfig(turn_epsilon=0.0)
    assert MpcConfig(horizon_steps=8).horizon_steps == 8


# -- exhaustive oracle --------------------------------------------------------------


def brute_force(ped, car, cfg):
    """Independent enumerator: world.step rollouts scored one by one."""
    pred = predict_car(car, cfg.horizon_steps, cfg.dt)
    best = None
    for seq in itertools.product(MOVE_ACTIONS, repeat=cfg.horizon_steps):
        s = WorldState(car, (ped,), 0, cfg.dt)
        pos, heads = [], []
        for a in seq:
            s = step(s, {ped.id: a}, PARAMS, ROAD)
            p = s.pedestrians[0]
            pos.append((p.x, p.y))
            heads.append(p.heading)
        cost = trajectory_cost(CandidateTrajectory(seq, np.array(pos), np.array(heads)), pred, cfg, ROAD)
        if best is None or cost < best[1]:
            best = (seq, cost)
    return best


def random_case(rng):
    n = int(rng.integers(1, 5))
    w = rng.uniform(0, 3, 3)
    w[rng.integers(3)] += 0.1
    cfg = mk_cfg(n, float(rng.choice([0.1, 0.25, 0.5, 1.0, 1.5])), tuple(float(x) for x in w), float(rng.uniform(0.01, 1.0)))
    ped = PedestrianState(
        0,
        float(rng.uniform(0, ROAD.road_length)),
        float(rng.uniform(0, ROAD.height)),
        float(rng.uniform(-math.pi, math.pi)),
        float(rng.uniform(0, PARAMS.v_max)),
    )
    car = car_at(float(rng.uniform(0, 90)), float(rng.uniform(0, 15)))
    return ped, car, cfg


def test_plan_matches_brute_force_on_200_cases():
    rng = np.random.default_rng(20240521)
    for _ in range(200):
        ped, car, cfg = random_case(rng)
        seq, cost = plan_sequence(ped, car, cfg, ROAD, PARAMS)
        ref_seq, ref_cost = brute_force(ped, car, cfg)
        assert cost == ref_cost
        assert seq == ref_seq


def test_vectorized_costs_equal_loop_costs():
    rng = np.random.default_rng(1)
    ped, car, cfg = random_case(rng)
    cfg = mk_cfg(3, cfg.dt, (cfg.weights.w1, cfg.weights.w2, cfg.weights.w3), cfg.turn_epsilon)
    costs = sequence_costs(ped, car, cfg, ROAD, PARAMS)
    pred = predict_car(car, 3, cfg.dt)
    for row, c in zip(action_sequences(3), costs):
        cand = rollout(ped, [A(int(a)) for a in row], cfg.dt, PARAMS, ROAD)
        assert trajectory_cost(cand, pred, cfg, ROAD) == c


def test_sequences_are_lexicographic():
    seqs = action_sequences(2)
    assert seqs.shape == (25, 2)
    assert [tuple(r) for r in seqs] == sorted(tuple(r) for r in seqs)


def test_tie_breaks_to_first_sequence():
    # pedestrian with speed 0 far from everything and only the turn term: every sequence costs 0
    ped = PedestrianState(0, 50.0, 0.5, 0.0, 0.0)
    seq, cost = plan_sequence(ped, car_at(0.0, 0.0), mk_cfg(3, 0.1, (0, 0, 1)), ROAD, PARAMS)
    assert cost == 0.0 and seq == (A.NOOP, A.NOOP, A.NOOP)


def test_horizon_one_is_greedy():
    rng = np.random.default_rng(5)
    for _ in range(50):
        ped, car, cfg = random_case(rng)
        cfg = mk_cfg(1, cfg.dt, (cfg.weights.w1, cfg.weights.w2, cfg.weights.w3))
        pred = predict_car(car, 1, cfg.dt)
        costs = [trajectory_cost(rollout(ped, [a], cfg.dt, PARAMS, ROAD), pred, cfg, ROAD) for a in MOVE_ACTIONS]
        assert plan(ped, car, cfg, ROAD, PARAMS) is MOVE_ACTIONS[int(np.argmin(costs))]


def test_distance_only_first_action_improves_when_possible():
    ped = PedestrianState(0, 20.0, 1.0, 0.0, 1.0)
    car = car_at(10.0, 0.0)
    cfg = mk_cfg(1, 0.1, (1, 0, 0))
    pred = predict_car(car, 1, cfg.dt)

    def one_step(a):
        return trajectory_cost(rollout(ped, [a], cfg.dt, PARAMS, ROAD), pred, cfg, ROAD)

    noop = one_step(A.NOOP)
    assert any(one_step(a) < noop for a in MOVE_ACTIONS)
    assert one_step(plan(ped, car, cfg, ROAD, PARAMS)) < noop


# -- properties ---------------------------------------------------------------------


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.25, 0.5, 2.0, 4.0]))
def test_argmin_is_scale_invariant(seed, k):
    ped, car, cfg = random_case(np.random.default_rng(seed))
    w = cfg.weights
    scaled = mk_cfg(cfg.horizon_steps, cfg.dt, (k * w.w1, k * w.w2, k * w.w3), cfg.turn_epsilon)
    assert plan_sequence(ped, car, cfg, ROAD, PARAMS)[0] == plan_sequence(ped, car, scaled, ROAD, PARAMS)[0]


def test_distance_only_planner_closes_on_stationary_car():
    car = car_at(30.0, 0.0)
    cfg = mk_cfg(3, 0.1, (1, 0, 0))
    s = WorldState(car, (PedestrianState(0, 22.0, 1.0, 0.0, 1.0),), 0, 0.1)
    step_len = PARAMS.v_max * 0.1
    d = math.hypot(s.pedestrians[0].x - car.x, s.pedestrians[0].y - car.y)
    while d > step_len:
        a = plan(s.pedestrians[0], s.car, cfg, ROAD, PARAMS)
        s = step(s, {0: a}, PARAMS, ROAD)
        s = WorldState(car, s.pedestrians, s.step_index, s.dt)
        nd = math.hypot(s.pedestrians[0].x - car.x, s.pedestrians[0].y - car.y)
        assert nd < d
        d = nd
        assert s.step_index < 500


@given(st.integers(0, 2**32 - 1))
def test_heavy_turn_weight_plans_no_later_turns(seed):
    ped, car, cfg = random_case(np.random.default_rng(seed))
    cfg = mk_cfg(cfg.horizon_steps, cfg.dt, (1.0, 0.5, 1e9), 0.1)
    seq, _ = plan_sequence(ped, car, cfg, ROAD, PARAMS)
    heads = rollout(ped, seq, cfg.dt, PARAMS, ROAD).headings
    assert all(abs(angle_diff(b, a)) <= 0.1 for a, b in zip(heads, heads[1:]))


@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_cost_is_additive_over_horizon(seed, k):
    rng = np.random.default_rng(seed)
    ped, car, cfg = random_case(rng)
    n = 4
    cfg = mk_cfg(n, cfg.dt, (cfg.weights.w1, cfg.weights.w2, 0.0))
    seq = [MOVE_ACTIONS[i] for i in rng.integers(0, 5, n)]
    pred = predict_car(car, n, cfg.dt)
    whole = trajectory_cost(rollout(ped, seq, cfg.dt, PARAMS, ROAD), pred, cfg, ROAD)
    head = rollout(ped, seq[:k], cfg.dt, PARAMS, ROAD)
    (x, y), h = head.positions[-1], head.headings[-1]
    # speed after the prefix, clamped step by step
    v = ped.speed
    for a in seq[:k]:
        v = min(max(v + 0.5 * ((a is A.ACCEL) - (a is A.DECEL)), 0.0), PARAMS.v_max)
    tail_ped = PedestrianState(0, float(x), float(y), float(h), float(v))
    tail = rollout(tail_ped, seq[k:], cfg.dt, PARAMS, ROAD)
    pk = lambda m: MpcConfig(m, cfg.dt, cfg.turn_epsilon, cfg.weights)  # noqa: E731
    parts = trajectory_cost(head, pred[:k], pk(k), ROAD) + trajectory_cost(tail, pred[k:], pk(n - k), ROAD)
    assert math.isclose(whole, parts, rel_tol=1e-12, abs_tol=1e-12)
