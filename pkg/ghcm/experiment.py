import csv
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ghcm.config import ExperimentConfig
from ghcm.divergence import choose_constants, it_threshold
from ghcm.evaluation import agreement, cstar_visibility_connected
from ghcm.geometry import build_block_grid
from ghcm.recovery import full_recover, phase1, phase2, refine_scores
from ghcm.sampler import expected_edge_count, sample_ghcm
from ghcm.util import (
    ALGORITHM_VERSION,
    ConfigurationError,
    GHCMError,
    InfeasibleRegimeError,
    default_threads,
    env_flag,
    format_float,
    logger,
)

CSV_SCHEMA_VERSION = 1
BENCH_TOLERANCE = 2.0

TRIAL_COLUMNS = (
    "seed",
    "vertex_count",
    "edge_count",
    "threshold_ratio",
    "regime",
    "lambda_prime",
    "lambda_prime_cstar",
    "phase1_agreement",
    "agreement",
    "exact",
    "almost_exact",
    "cstar_connected",
    "max_block_errors",
    "time_sample",
    "time_phase1",
    "time_phase2",
    "error",
)

BENCH_COLUMNS = (
    "n",
    "seed",
    "vertex_count",
    "edge_count",
    "expected_edges",
    "edge_ratio",
    "seconds",
    "seconds_per_edge",
)


@dataclass
class TrialRecord:
    point: int
    trial: int
    sweep_values: Dict[str, float]
    seed: int
    vertex_count: Optional[int] = None
    edge_count: Optional[int] = None
    threshold_ratio: Optional[float] = None
    regime: str = ""
    lambda_prime: Optional[float] = None
    lambda_prime_cstar: Optional[float] = None
    phase1_agreement: Optional[float] = None
    agreement: Optional[float] = None
    exact: Optional[bool] = None
    almost_exact: Optional[bool] = None
    cstar_connected: Optional[bool] = None
    max_block_errors: Optional[int] = None
    timings: Dict[str, float] = field(default_factory=dict)
    error: str = ""

    def row(self, axes):
        values = {
            "time_sample": self.timings.get("sample"),
            "time_phase1": self.timings.get("phase1"),
            "time_phase2": self.timings.get("phase2"),
        }
        cells = [str(self.point), str(self.trial)]
        cells += [format_float(self.sweep_values[name]) for name in axes]
        for column in TRIAL_COLUMNS:
            value = values[column] if column in values else getattr(self, column)
            cells.append(_cell(value))
        return cells


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def _constants(config: ExperimentConfig, lambda_prime, d):
    return choose_constants(lambda_prime, d, **config.constants.overrides())


def _cstar_connected(config, params, inst):
    """Connectivity diagnostic with pi1*lambda in place of lambda; None when infeasible."""
    try:
        consts = choose_constants(
            params.pi1 * params.lam,
            params.d,
            safety=config.constants.safety,
            delta_tilde=config.constants.delta_tilde,
        )
        grid = build_block_grid(params, consts.chi)
    except (InfeasibleRegimeError, ConfigurationError):
        return None
    return cstar_visibility_connected(inst, grid, consts)


def run_trial(config: ExperimentConfig, point_index: int, point: Dict[str, float], trial: int) -> TrialRecord:
    """Sample, recover and evaluate one seeded trial. Failures land in ``error``."""
    seed = config.base_seed + trial
    record = TrialRecord(point=point_index, trial=trial, sweep_values=dict(point), seed=seed)
    try:
        params = config.model_params(point)
        report = it_threshold(params)
        record.threshold_ratio = report.threshold_ratio
        record.regime = report.regime
        record.lambda_prime = params.lam
        record.lambda_prime_cstar = params.pi1 * params.lam
        consts = _constants(config, params.lam, params.d)
        grid = build_block_grid(params, consts.chi)

        start = time.perf_counter()
        inst = sample_ghcm(params, seed)
        sampled = time.perf_counter() - start
        record.vertex_count = inst.vertex_count
        record.edge_count = inst.edge_count

        xtilde = full_recover(inst.public, consts, exploration=config.exploration)
        first = agreement(xtilde.phase1, inst, grid)
        final = agreement(xtilde, inst, grid)
        record.phase1_agreement = first.agreement
        record.agreement = final.agreement
        record.exact = final.exact
        record.almost_exact = first.almost_exact(config.epsilon)
        record.max_block_errors = first.max_block_errors
        record.cstar_connected = _cstar_connected(config, params, inst)
        if config.timings:
            record.timings = {"sample": sampled, **xtilde.timings}
    except GHCMError as e:
        record.error = f"{type(e).__name__}: {e}"
        logger.warning(
            "Trial failed",
            extra={"extra": {"point": point_index, "trial": trial, "error": record.error}},
        )
    except Exception as e:
        # a sweep must survive one broken trial
        record.error = f"{type(e).__name__}: {e}"
        logger.error(
            "Trial crashed",
            extra={"extra": {"point": point_index, "trial": trial, "error": record.error}},
        )
    return record


def sweep(config: ExperimentConfig, threads: Optional[int] = None) -> List[TrialRecord]:
    """Every (point, trial) pair, ordered by point index then trial index."""
    jobs = [
        (index, point, trial)
        for index, point in enumerate(config.points())
        for trial in range(config.trials)
    ]
    workers = threads or default_threads()
    logger.info(
        "Starting sweep",
        extra={"extra": {"points": len(config.points()), "trials": config.trials, "threads": workers}},
    )
    if workers == 1:
        return [run_trial(config, *job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(lambda job: run_trial(config, *job), jobs))


def sweep_axes(config: ExperimentConfig):
    return [axis.name for axis in config.sweep]


def summarize(config: ExperimentConfig, records: List[TrialRecord]):
    """Per-point exact and almost-exact recovery rates over the successful trials."""
    lines = []
    for index, point in enumerate(config.points()):
        rows = [r for r in records if r.point == index]
        if not rows:
            continue
        done = [r for r in rows if not r.error]
        exact = sum(1 for r in done if r.exact)
        almost = sum(1 for r in done if r.almost_exact)
        parts = [f"point={index}"]
        parts += [f"{name}={format_float(value)}" for name, value in point.items()]
        parts += [
            f"trials={len(rows)}",
            f"errors={len(rows) - len(done)}",
            f"exact_rate={format_float(exact / len(done) if done else None)}",
            f"almost_exact_rate={format_float(almost / len(done) if done else None)}",
        ]
        lines.append(" ".join(parts))
    return lines


def write_sweep_csv(config: ExperimentConfig, records: List[TrialRecord], handle):
    axes = sweep_axes(config)
    settings = config.to_json()
    settings.pop("output", None)
    handle.write(f"# ghcm sweep schema={CSV_SCHEMA_VERSION} algorithm={ALGORITHM_VERSION}\n")
    handle.write("# config=" + json.dumps(settings, sort_keys=True) + "\n")
    handle.write("# seed = base_seed + trial index (shared across sweep points)\n")
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(["point", "trial", *axes, *TRIAL_COLUMNS])
    for record in records:
        writer.writerow(record.row(axes))
    for line in summarize(config, records):
        handle.write(f"# summary {line}\n")


def _open_output(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline=""), True


def run_sweep(config: ExperimentConfig, out=None, threads=None) -> int:
    records = sweep(config, threads)
    handle, owned = _open_output(out or config.output)
    try:
        write_sweep_csv(config, records, handle)
    finally:
        if owned:
            handle.close()
    failures = sum(1 for r in records if r.error)
    logger.info("Sweep finished", extra={"extra": {"rows": len(records), "failures": failures}})
    return 1 if failures else 0


@dataclass
class BenchRow:
    n: float
    seed: int
    vertex_count: int
    edge_count: int
    expected_edges: float
    seconds: float

    @property
    def edge_ratio(self):
        return self.edge_count / self.expected_edges if self.expected_edges else float("nan")

    @property
    def seconds_per_edge(self):
        return self.seconds / max(self.edge_count, 1)

    def row(self):
        return [
            format_float(self.n),
            str(self.seed),
            str(self.vertex_count),
            str(self.edge_count),
            format_float(self.expected_edges),
            format_float(self.edge_ratio),
            format_float(self.seconds),
            format_float(self.seconds_per_edge),
        ]


def _recover_profiled(inst, consts, exploration):
    from line_profiler import LineProfiler

    profiler = LineProfiler(phase1.__wrapped__, phase2, refine_scores)
    result = profiler.runcall(full_recover, inst, consts, exploration)
    profiler.print_stats(stream=sys.stderr)
    return result


def bench(config: ExperimentConfig, n_values=None) -> List[BenchRow]:
    """Time full_recover at each n; edges are unordered visible pairs."""
    rows = []
    profile = env_flag("GHCM_PROFILE")
    for n in n_values or config.bench_n or [config.n]:
        params = config.model_copy(update={"n": float(n), "sweep": []}).model_params()
        consts = _constants(config, params.lam, params.d)
        inst = sample_ghcm(params, config.base_seed)
        start = time.perf_counter()
        if profile:
            _recover_profiled(inst.public, consts, config.exploration)
        else:
            full_recover(inst.public, consts, exploration=config.exploration)
        seconds = time.perf_counter() - start
        rows.append(
            BenchRow(
                n=float(n),
                seed=config.base_seed,
                vertex_count=inst.vertex_count,
                edge_count=inst.edge_count,
                expected_edges=expected_edge_count(params) / 2.0,
                seconds=seconds,
            )
        )
        logger.info("Bench point", extra={"extra": dict(zip(BENCH_COLUMNS, rows[-1].row()))})
    return rows


def bench_within_tolerance(rows: List[BenchRow], tolerance=BENCH_TOLERANCE) -> bool:
    """Time per edge may vary by at most ``tolerance``; a single row always passes."""
    if len(rows) < 2:
        return True
    ratios = [row.seconds_per_edge for row in rows]
    return max(ratios) <= tolerance * min(ratios)


def write_bench_csv(rows: List[BenchRow], handle):
    handle.write(f"# ghcm bench schema={CSV_SCHEMA_VERSION} algorithm={ALGORITHM_VERSION}\n")
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(BENCH_COLUMNS)
    for row in rows:
        writer.writerow(row.row())


def run_bench(config: ExperimentConfig, out=None) -> int:
    rows = bench(config)
    handle, owned = _open_output(out or config.output)
    try:
        write_bench_csv(rows, handle)
    finally:
        if owned:
            handle.close()
    if not bench_within_tolerance(rows):
        logger.error(
            "Bench time per edge varies beyond tolerance",
            extra={"extra": {"seconds_per_edge": [r.seconds_per_edge for r in rows]}},
        )
        return 1
    return 0
