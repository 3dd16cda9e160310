"""
What the planner weighs
=======================

The MPC pedestrian enumerates every sequence of five movement actions over a
short horizon and picks the cheapest. Cost is a weighted sum of distance to
the predicted car, time spent on the road and heading changes. This script
prints the best and worst candidates for one pedestrian, then shows how the
choice shifts when the road-time weight goes up.
"""

import math

import numpy as np

from roadcross.config import MpcConfig, MpcWeights, load_config
from roadcross.mpc import action_sequences, plan_sequence, sequence_costs
from roadcross.world import CarState, PedestrianAction, PedestrianState

cfg = load_config()
road, params = cfg.road, cfg.world
car = CarState(10.0, road.car_lane_center, params.car_speed, params.max_decel, params.reaction_time)
# standing on the near pavement, angled toward the road
ped = PedestrianState(0, 45.0, 1.5, math.pi / 4, 0.0)


def show(mpc: MpcConfig, top=3):
    costs = sequence_costs(ped, car, mpc, road, params)
    seqs = action_sequences(mpc.horizon_steps)
    order = np.argsort(costs, kind="stable")
    for i in list(order[:top]) + [order[-1]]:
        names = ", ".join(PedestrianAction(int(c)).name for c in seqs[i])
        print(f"  {costs[i]:9.3f}  {names}")


print("default weights", cfg.mpc.weights)
show(cfg.mpc)

heavy = MpcConfig(horizon_steps=4, dt=cfg.mpc.dt, weights=MpcWeights(1.0, 50.0, 0.3))
print("\nroad time made expensive", heavy.weights)
show(heavy)

# %% Only the first action is executed; the plan is redone every step.
# Ties resolve to the first sequence in enumeration order.
for label, mpc in (("default", cfg.mpc), ("heavy road", heavy)):
    seq, cost = plan_sequence(ped, car, mpc, road, params)
    print(f"{label:>10s}: first action {seq[0].name} (cost {cost:.3f})")
