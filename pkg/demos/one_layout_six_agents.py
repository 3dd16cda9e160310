"""
One layout, six agents
======================

Every agent kind faces the same spawned layout for a given (n, run, test)
triple. Here three pedestrians wait on the pavement and each kind gets a
turn at making the car's life difficult.

Run with ``python3 demos/one_layout_six_agents.py``.
"""

from roadcross import AgentKind, load_config, run_test
from roadcross.harness import prepare_qtable

cfg = load_config(grid__kinds="Q_LEARNING")
# Q-learning needs a table; training takes a few seconds
qtable = prepare_qtable(cfg)

# %% The shared starting point
first = run_test(AgentKind.RANDOM, 3, 0, 12, cfg).trace[0]
print("car at x=%.1f, pedestrians:" % first["car"][0])
for pid, x, y, *_ in first["peds"]:
    side = "near" if y < cfg.road.road_bottom else "far"
    print(f"  #{pid}  x={x:5.1f}  y={y:4.2f}  ({side} pavement)")

# %% Outcomes
# A test ends when the car leaves the road, a pedestrian enters its lane
# (interesting if the car could still stop, unavoidable otherwise) or the
# step budget runs out.
print()
print(f"{'kind':20s} {'event':24s} {'steps':>5s} {'score':>8s} {'cpu ms':>8s}")
for kind in AgentKind:
    rec = run_test(kind, 3, 0, 12, cfg, qtable=qtable).record
    print(f"{kind.value:20s} {rec.event.value:24s} {rec.steps:5d} {rec.score:8.1f} {rec.decision_cpu_ms:8.2f}")

# %% A closer look at the MPC trace
# Pedestrian rows in the trace are [id, x, y, heading, speed, crossing].
trace = run_test(AgentKind.MPC, 3, 0, 12, cfg).trace
shown = trace[:: max(1, len(trace) // 8)]
if shown[-1] is not trace[-1]:
    shown.append(trace[-1])
for line in shown:
    lane = " ".join(f"{p[2]:5.2f}" for p in line["peds"])
    print(f"step {line['step']:3d}  car x={line['car'][0]:5.1f}  ped y: {lane}  {line['event']}")
