"""Experiment harness: run tests, score them, sweep the grid, write results.

Seeds are derived with ``numpy.random.SeedSequence`` from the grid's base seed
and a spawn key naming the stream:

* spawn stream  ``(0, n, run, test)`` -- shared by every agent kind, so all
  kinds face identical initial layouts;
* agent stream  ``(1, kind_index, n, run, test)`` with ``kind_index`` the
  kind's position in ``AgentKind``;
* Q-learning training stream, see ``agents.q_train``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .agents import (
    QTable,
    crossing_macro_step,
    load_qtable,
    make_policy,
    observe,
    q_train,
    save_qtable,
)
from .config import ALL_KINDS, AgentKind, ExperimentConfig, RoadGeometry, ScoreWeights
from .coverage import (
    CoverageLedger,
    DiscretizationGrid,
    Metric,
    action_key,
    coverage_ratio,
    new_ledgers,
    save_ledger,
    scenario_key,
    situation_key,
)
from .world import (
    CarState,
    ContractError,
    PedestrianAction,
    PedestrianState,
    TestEvent,
    WorldState,
    angle_diff,
    classify_test_event,
    in_road,
    make_car,
    spawn_initial,
    step,
)

log = logging.getLogger(__name__)

CURVE_METRICS = ("accuracy", "score", "cpu", "situation_coverage", "action_coverage")

RECORD_FIELDS = (
    "agent_kind", "n", "run", "test", "seed", "event", "steps",
    "interesting", "score", "decision_cpu_ms", "trace",
)
SUMMARY_FIELDS = (
    "agent_kind", "n", "tests", "interesting", "accuracy_pct", "score_sum", "mean_cpu_ms",
    "situation_unique", "situation_coverage", "scenario_unique", "scenario_coverage",
    "action_unique", "action_coverage",
)


# -- seeds ---------------------------------------------------------------------------


def spawn_seed(base_seed: int, n: int, run: int, test: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(base_seed, spawn_key=(0, n, run, test))


def agent_seed(base_seed: int, kind: AgentKind, n: int, run: int, test: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(base_seed, spawn_key=(1, ALL_KINDS.index(kind), n, run, test))


# -- records -------------------------------------------------------------------------


@dataclass
class TestRecord:
    agent_kind: AgentKind
    n: int
    run: int
    test: int
    seed: int
    event: TestEvent
    steps: int
    interesting: bool
    score: float
    decision_cpu_ms: float
    trace: str = ""

    __test__ = False


@dataclass
class SummaryRow:
    agent_kind: AgentKind
    n: int
    tests: int
    interesting: int
    accuracy_pct: float
    score_sum: float
    mean_cpu_ms: float
    situation_unique: int = 0
    situation_coverage: float = 0.0
    scenario_unique: int = 0
    scenario_coverage: float = 0.0
    action_unique: int = 0
    action_coverage: float = 0.0


@dataclass
class TestResult:
    record: TestRecord
    ledgers: dict[Metric, CoverageLedger]
    trace: list[dict]

    __test__ = False


@dataclass
class GridResult:
    records: list[TestRecord]
    ledgers: dict[tuple[AgentKind, int], dict[Metric, CoverageLedger]]
    qtable: QTable | None = None
    failures: list[tuple[tuple, str]] = field(default_factory=list)


# -- traces --------------------------------------------------------------------------


def state_line(state: WorldState, actions: Mapping[int, PedestrianAction] | None, event: TestEvent) -> dict:
    car = state.car
    return {
        "step": state.step_index,
        "car": [car.x, car.y, car.speed],
        "peds": [[p.id, p.x, p.y, p.heading, p.speed, int(p.crossing)] for p in state.pedestrians],
        "actions": None if actions is None else [PedestrianAction(actions[p.id]).name for p in state.pedestrians],
        "event": event.value,
    }


def state_from_line(line: Mapping, cfg: ExperimentConfig) -> WorldState:
    x, y, speed = line["car"]
    car = CarState(x, y, speed, cfg.world.max_decel, cfg.world.reaction_time)
    peds = tuple(PedestrianState(int(i), px, py, h, v, bool(c)) for i, px, py, h, v, c in line["peds"])
    return WorldState(car, peds, int(line["step"]), cfg.world.dt)


def dumps_trace(trace: Sequence[dict]) -> str:
    return "".join(json.dumps(rec, separators=(",", ":")) + "\n" for rec in trace)


def read_trace(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def trace_relpath(kind: AgentKind, n: int, run: int, test: int) -> str:
    return f"traces/{kind.value}/n{n}/run{run}/test{test:03d}.jsonl"


# -- scoring -------------------------------------------------------------------------


def score_components(trace: Sequence[dict], weights: ScoreWeights, road: RoadGeometry) -> tuple[int, int, bool]:
    """(on-road heading changes, on-road agent-steps, interesting) of a trace."""
    turns = road_steps = 0
    for prev, cur in zip(trace, trace[1:]):
        for p0, p1 in zip(prev["peds"], cur["peds"]):
            if in_road(p1[2], road):
                road_steps += 1
                if abs(angle_diff(p1[3], p0[3])) > weights.turn_epsilon:
                    turns += 1
    interesting = trace[-1]["event"] == TestEvent.INTERESTING_INTRUSION.value
    return turns, road_steps, interesting


def score_test(trace: Sequence[dict], weights: ScoreWeights, road: RoadGeometry) -> float:
    """Realism penalties plus a bonus for an interesting test."""
    turns, road_steps, interesting = score_components(trace, weights, road)
    return -weights.c_turn * turns - weights.c_road * road_steps + weights.c_edge * interesting


# -- coverage from traces ------------------------------------------------------------


def ledgers_from_trace(
    trace: Sequence[dict], cfg: ExperimentConfig, grid: DiscretizationGrid, n: int
) -> dict[Metric, CoverageLedger]:
    ledgers = new_ledgers(grid, n)
    prev = None
    for line in trace:
        state = state_from_line(line, cfg)
        if prev is not None:
            for p, name in zip(prev.pedestrians, line["actions"]):
                ledgers[Metric.ACTION].record(action_key(observe(prev, p, cfg.road), PedestrianAction[name], grid))
        ledgers[Metric.SITUATION].record(situation_key(state, grid))
        ledgers[Metric.SCENARIO].record(scenario_key(state, grid))
        prev = state
    return ledgers


# -- one test ------------------------------------------------------------------------


def run_test(
    kind: AgentKind,
    n: int,
    run: int,
    test: int,
    cfg: ExperimentConfig,
    qtable: QTable | None = None,
    grid: DiscretizationGrid | None = None,
    trace_path: str | Path | None = None,
) -> TestResult:
    """Spawn, then observe/decide/step until the test ends."""
    road, params = cfg.road, cfg.world
    grid = grid or DiscretizationGrid.from_config(cfg)
    base = cfg.grid.base_seed
    sseq = spawn_seed(base, n, run, test)
    state = spawn_initial(np.random.default_rng(sseq), n, road, make_car(params, road), params)
    policy = make_policy(kind, cfg, np.random.default_rng(agent_seed(base, kind, n, run, test)), state, qtable)

    ledgers = new_ledgers(grid, n)
    situation, scenario, actions_led = ledgers[Metric.SITUATION], ledgers[Metric.SCENARIO], ledgers[Metric.ACTION]
    situation.record(situation_key(state, grid))
    scenario.record(scenario_key(state, grid))
    trace = [state_line(state, None, TestEvent.NONE)]
    cpu_ns = 0
    event = TestEvent.NONE
    while event is TestEvent.NONE:
        t0 = time.process_time_ns()
        actions = policy.decide(state)
        cpu_ns += time.process_time_ns() - t0

        inputs = {}
        for p in state.pedestrians:
            a = actions[p.id]
            actions_led.record(action_key(observe(state, p, road), a, grid))
            if a == PedestrianAction.START_CROSSING or p.crossing:
                inputs[p.id] = crossing_macro_step(p, road, params.v_max)
            else:
                inputs[p.id] = a
        state = step(state, inputs, params, road)
        event = classify_test_event(state, road, params.max_steps)
        situation.record(situation_key(state, grid))
        scenario.record(scenario_key(state, grid))
        trace.append(state_line(state, actions, event))

    score = score_test(trace, cfg.score, road)
    rel = trace_relpath(kind, n, run, test)
    if trace_path is not None:
        path = Path(trace_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_trace(trace))
    record = TestRecord(
        agent_kind=kind,
        n=n,
        run=run,
        test=test,
        seed=int(sseq.generate_state(1, np.uint64)[0]),
        event=event,
        steps=state.step_index,
        interesting=event is TestEvent.INTERESTING_INTRUSION,
        score=score,
        decision_cpu_ms=cpu_ns / 1e6,
        trace=rel,
    )
    return TestResult(record, ledgers, trace)


# -- the grid ------------------------------------------------------------------------


def prepare_qtable(cfg: ExperimentConfig) -> QTable | None:
    if AgentKind.Q_LEARNING not in cfg.grid.kinds:
        return None
    if cfg.qlearning.table:
        return load_qtable(cfg.qlearning.table)
    return q_train(cfg, seed=cfg.grid.base_seed)


def run_cell(
    kind: AgentKind,
    n: int,
    run: int,
    cfg: ExperimentConfig,
    qtable: QTable | None,
    out_dir: str | Path | None = None,
) -> tuple[list[TestRecord], dict[Metric, CoverageLedger]]:
    grid = DiscretizationGrid.from_config(cfg)
    merged = new_ledgers(grid, n)
    records = []
    for test in range(cfg.grid.tests):
        path = None if out_dir is None else Path(out_dir) / trace_relpath(kind, n, run, test)
        res = run_test(kind, n, run, test, cfg, qtable, grid, path)
        records.append(res.record)
        for m, led in res.ledgers.items():
            merged[m] = merged[m].merge(led)
    return records, merged


def _cell_job(args):
    kind, n, run, cfg, qtable, out_dir = args
    return run_cell(kind, n, run, cfg, qtable, out_dir)


def grid_cells(cfg: ExperimentConfig) -> list[tuple[AgentKind, int, int]]:
    g = cfg.grid
    return [(k, n, r) for k in g.kinds for n in g.counts for r in range(g.runs)]


def run_grid(
    cfg: ExperimentConfig,
    out_dir: str | Path | None = None,
    workers: int = 1,
    qtable: QTable | None = None,
    cells: Sequence[tuple[AgentKind, int, int]] | None = None,
) -> GridResult:
    """Execute every (kind, n, run) cell; per-cell output is order independent."""
    qtable = qtable if qtable is not None else prepare_qtable(cfg)
    cells = list(cells) if cells is not None else grid_cells(cfg)
    grid = DiscretizationGrid.from_config(cfg)
    by_cell: dict[tuple, tuple[list[TestRecord], dict]] = {}
    failures = []
    jobs = [(k, n, r, cfg, qtable, out_dir) for k, n, r in cells]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            futures = {pool.submit(_cell_job, job): job[:3] for job in jobs}
            for fut, cell in futures.items():
                try:
                    by_cell[cell] = fut.result()
                except Exception as exc:  # report and keep going
                    failures.append((cell, repr(exc)))
    else:
        for job in jobs:
            try:
                by_cell[job[:3]] = _cell_job(job)
            except Exception as exc:
                failures.append((job[:3], repr(exc)))
    for cell, msg in failures:
        log.error("cell %s failed: %s", _cell_name(cell), msg)

    records: list[TestRecord] = []
    ledgers: dict[tuple[AgentKind, int], dict[Metric, CoverageLedger]] = {}
    for cell in sorted(by_cell, key=_cell_order):
        recs, led = by_cell[cell]
        records.extend(recs)
        kind, n, _ = cell
        if (kind, n) not in ledgers:
            ledgers[(kind, n)] = new_ledgers(grid, n)
        for m in Metric:
            ledgers[(kind, n)][m] = ledgers[(kind, n)][m].merge(led[m])
    return GridResult(records, ledgers, qtable, failures)


def _cell_order(cell):
    kind, n, run = cell
    return (ALL_KINDS.index(kind), n, run)


def _cell_name(cell) -> str:
    kind, n, run = cell
    return f"{kind.value}/n{n}/run{run}"


# -- summaries -----------------------------------------------------------------------


def summarize(
    records: Iterable[TestRecord],
    ledgers: Mapping[tuple[AgentKind, int], Mapping[Metric, CoverageLedger]] | None = None,
) -> list[SummaryRow]:
    records = list(records)
    if not records:
        raise ContractError("summarize needs at least one record")
    groups: dict[tuple[AgentKind, int], list[TestRecord]] = defaultdict(list)
    for r in records:
        groups[(r.agent_kind, r.n)].append(r)
    rows = []
    for key in sorted(groups, key=lambda k: (ALL_KINDS.index(k[0]), k[1])):
        recs = groups[key]
        hits = sum(r.interesting for r in recs)
        row = SummaryRow(
            agent_kind=key[0],
            n=key[1],
            tests=len(recs),
            interesting=hits,
            accuracy_pct=100.0 * hits / len(recs),
            score_sum=float(sum(r.score for r in recs)),
            mean_cpu_ms=float(np.mean([r.decision_cpu_ms for r in recs])),
        )
        if ledgers is not None and key in ledgers:
            led = ledgers[key]
            row.situation_unique = led[Metric.SITUATION].unique
            row.situation_coverage = coverage_ratio(led[Metric.SITUATION])
            row.scenario_unique = led[Metric.SCENARIO].unique
            row.scenario_coverage = coverage_ratio(led[Metric.SCENARIO])
            row.action_unique = led[Metric.ACTION].unique
            row.action_coverage = coverage_ratio(led[Metric.ACTION])
        rows.append(row)
    return rows


def curves(rows: Sequence[SummaryRow]) -> list[tuple[str, AgentKind, int, float]]:
    out = []
    for metric in CURVE_METRICS:
        for r in rows:
            value = {
                "accuracy": r.accuracy_pct,
                "score": r.score_sum,
                "cpu": r.mean_cpu_ms,
                "situation_coverage": r.situation_coverage,
                "action_coverage": r.action_coverage,
            }[metric]
            out.append((metric, r.agent_kind, r.n, value))
    return out


# -- persistence ---------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.6f}"
    if isinstance(value, (AgentKind, TestEvent)):
        return value.value
    return str(value)


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def records_csv(records: Sequence[TestRecord]) -> str:
    return _csv_text(RECORD_FIELDS, ([getattr(r, f) for f in RECORD_FIELDS] for r in records))


def summary_csv(rows: Sequence[SummaryRow]) -> str:
    return _csv_text(SUMMARY_FIELDS, ([getattr(r, f) for f in SUMMARY_FIELDS] for r in rows))


def curves_csv(rows: Sequence[SummaryRow]) -> str:
    return _csv_text(("metric", "agent_kind", "n", "value"), curves(rows))


def ledger_relpath(kind: AgentKind, n: int, metric: Metric) -> str:
    return f"ledgers/{kind.value}_n{n}_{metric.value.lower()}.tsv"


def emit_outputs(
    records: Sequence[TestRecord],
    summaries: Sequence[SummaryRow],
    ledgers: Mapping[tuple[AgentKind, int], Mapping[Metric, CoverageLedger]],
    out_dir: str | Path,
    cfg: ExperimentConfig,
) -> None:
    """Write records.csv, summary.csv, curves.csv and one file per ledger.

    Per-test traces are written while the grid runs.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "records.csv").write_text(records_csv(records))
        (out / "summary.csv").write_text(summary_csv(summaries))
        (out / "curves.csv").write_text(curves_csv(summaries))
        grid = DiscretizationGrid.from_config(cfg)
        for (kind, n), per_metric in ledgers.items():
            for metric, led in per_metric.items():
                path = out / ledger_relpath(kind, n, metric)
                path.parent.mkdir(parents=True, exist_ok=True)
                save_ledger(led, grid, path)
    except OSError as exc:
        raise OSError(f"cannot write outputs under {out}: {exc}") from exc


def read_records(path: str | Path) -> list[TestRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        TestRecord(
            agent_kind=AgentKind(r["agent_kind"]),
            n=int(r["n"]),
            run=int(r["run"]),
            test=int(r["test"]),
            seed=int(r["seed"]),
            event=TestEvent(r["event"]),
            steps=int(r["steps"]),
            interesting=r["interesting"] == "1",
            score=float(r["score"]),
            decision_cpu_ms=float(r["decision_cpu_ms"]),
            trace=r["trace"],
        )
        for r in rows
    ]


def recompute_from_traces(
    out_dir: str | Path, cfg: ExperimentConfig
) -> tuple[list[TestRecord], dict[tuple[AgentKind, int], dict[Metric, CoverageLedger]]]:
    """Rebuild records and ledgers from persisted traces.

    Only ``decision_cpu_ms`` is taken from records.csv; it is not part of a
    trace.
    """
    out = Path(out_dir)
    grid = DiscretizationGrid.from_config(cfg)
    old = read_records(out / "records.csv")
    records, ledgers = [], {}
    for r in old:
        trace = read_trace(out / r.trace)
        event = TestEvent(trace[-1]["event"])
        records.append(
            TestRecord(
                agent_kind=r.agent_kind,
                n=r.n,
                run=r.run,
                test=r.test,
                seed=r.seed,
                event=event,
                steps=int(trace[-1]["step"]),
                interesting=event is TestEvent.INTERESTING_INTRUSION,
                score=score_test(trace, cfg.score, cfg.road),
                decision_cpu_ms=r.decision_cpu_ms,
                trace=r.trace,
            )
        )
        key = (r.agent_kind, r.n)
        if key not in ledgers:
            ledgers[key] = new_ledgers(grid, r.n)
        for m, led in ledgers_from_trace(trace, cfg, grid, r.n).items():
            ledgers[key][m] = ledgers[key][m].merge(led)
    return records, ledgers


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path, workers: int = 1) -> GridResult:
    """Run the grid and persist everything under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_grid(cfg, out, workers)
    if result.qtable is not None:
        save_qtable(result.qtable, out / "qtable.tsv")
    if result.records:
        rows = summarize(result.records, result.ledgers)
    else:
        rows = []
    emit_outputs(result.records, rows, result.ledgers, out, cfg)
    return result
