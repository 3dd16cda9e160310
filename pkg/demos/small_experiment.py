"""
A small experiment grid
=======================

The full default grid (6 kinds, 1..5 pedestrians, 5 runs of 100 tests) takes
a few minutes on one core. This demo runs a trimmed grid, prints the summary
table and then rebuilds everything from the written traces to show that
results can be recomputed offline.

Command line equivalent::

    roadcross run --out out/small --counts 1,3 --runs 2 --tests 20
    roadcross summarize --out out/small
"""

import tempfile
from pathlib import Path

from roadcross import load_config, run_experiment, summarize
from roadcross.harness import recompute_from_traces

cfg = load_config().with_overrides({"grid.counts": "1, 3", "grid.runs": 2, "grid.tests": 20})
out = Path(tempfile.mkdtemp(prefix="roadcross-"))
result = run_experiment(cfg, out)

print(f"{'kind':20s} {'n':>2s} {'acc %':>6s} {'score':>9s} {'cpu ms':>8s} {'sit.':>6s} {'act.':>6s}")
for r in summarize(result.records, result.ledgers):
    print(f"{r.agent_kind.value:20s} {r.n:2d} {r.accuracy_pct:6.1f} {r.score_sum:9.1f} "
          f"{r.mean_cpu_ms:8.3f} {r.situation_unique:6d} {r.action_unique:6d}")

# %% Replay
_, ledgers = recompute_from_traces(out, cfg)
print("\nledgers rebuilt from traces match:", ledgers == result.ledgers)
print("outputs in", out)
