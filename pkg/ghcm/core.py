import json
import sys

import numpy as np

from ghcm.config import load_config
from ghcm.db import dump_instance, load_instance, write_labeling
from ghcm.divergence import BELOW, choose_constants, it_threshold
from ghcm.evaluation import agreement, degree_profile
from ghcm.experiment import run_bench, run_sweep
from ghcm.geometry import build_block_grid, torus_distances
from ghcm.instance import SampleInstance
from ghcm.oracle import brute_force_map
from ghcm.recovery import DATA_DRIVEN, full_recover, map_seed, phase1
from ghcm.sampler import sample_ghcm, stream_rng
from ghcm.util import (
    ConfigurationError,
    GHCMError,
    InfeasibleRegimeError,
    logger,
    require,
    timed,
)

ORACLE_VERTICES = 12
STREAM_ORACLE_CENTER = 4


def report_error(msg, payload):
    error_log = {
        "error": True,
        "message": msg,
        "payload": payload,
    }
    logger.error("Command failed", extra={"extra": error_log})


def report_success(msg, payload):
    success_log = {
        "error": False,
        "message": msg,
        "payload": payload,
    }
    logger.info("Command finished", extra={"extra": success_log})


def emit(document):
    sys.stdout.write(json.dumps(document, sort_keys=True, indent=2) + "\n")


def cmd_divergence(config=None, **_):
    require(config, "CLI: divergence needs --config", ConfigurationError)
    experiment = load_config(config)
    params = experiment.model_params(experiment.points()[0])
    report = it_threshold(params)
    document = {"params": params.to_json(), "threshold": report.to_json()}
    try:
        document["constants"] = choose_constants(
            params.lam, params.d, **experiment.constants.overrides()
        ).to_json()
    except (InfeasibleRegimeError, ConfigurationError) as e:
        document["constants"] = None
        document["constants_error"] = str(e)
    emit(document)
    return 0


def cmd_sample(config=None, seed=None, out=None, **_):
    require(config and out, "CLI: sample needs --config and --out", ConfigurationError)
    experiment = load_config(config)
    seed = experiment.base_seed if seed is None else seed
    inst = sample_ghcm(experiment.model_params(experiment.points()[0]), seed)
    dump_instance(inst, out)
    emit({"out": out, "seed": seed, "vertices": inst.vertex_count, "edges": inst.edge_count})
    return 0


def cmd_recover(
    instance=None,
    config=None,
    out=None,
    force=False,
    phase1_only=False,
    timings=False,
    **_,
):
    require(instance and out, "CLI: recover needs an instance path and --out", ConfigurationError)
    inst = load_instance(instance)
    params = inst.params
    report = it_threshold(params)
    if report.regime == BELOW and not force:
        raise InfeasibleRegimeError(
            f"RECOVERY: threshold ratio {report.threshold_ratio:.9g} is below 1 "
            "(pass --force to run anyway)",
            params.lam * report.nu_d,
        )

    overrides, exploration = {}, DATA_DRIVEN
    if config:
        experiment = load_config(config)
        overrides, exploration = experiment.constants.overrides(), experiment.exploration
    consts = choose_constants(params.lam, params.d, **overrides)
    public = inst.public if isinstance(inst, SampleInstance) else inst
    if phase1_only:
        elapsed = {}
        labeling = timed(elapsed)(phase1)(public, consts, exploration=exploration)
        labeling.timings = elapsed
    else:
        labeling = full_recover(public, consts, exploration=exploration)

    header = {
        "seed": public.seed,
        "params": params.to_json(),
        "constants": consts.to_json(),
        "regime": report.regime,
        "phase": "phase1" if phase1_only else "full",
        "timings": labeling.timings if timings else None,
    }
    write_labeling(labeling, out, header)

    document = {
        "labeling": out,
        "threshold": report.to_json(),
        "constants": consts.to_json(),
        "degrees": degree_profile(public),
    }
    if isinstance(inst, SampleInstance):
        grid = build_block_grid(params, consts.chi)
        document["evaluation"] = agreement(labeling, inst, grid).to_json()
        if labeling.phase1 is not None:
            document["phase1_evaluation"] = agreement(labeling.phase1, inst, grid).to_json()
    if timings:
        document["timings"] = labeling.timings
    emit(document)
    return 0


def _oracle_window(inst, seed):
    """Up to ORACLE_VERTICES vertices nearest a random centre, all within r/2 of it."""
    params = inst.params
    half = params.side / 2.0
    centre = stream_rng(seed, STREAM_ORACLE_CENTER).uniform(-half, half, size=params.d)
    distances = torus_distances(inst.positions, centre[None, :], params.side)
    inside = np.flatnonzero(distances < 0.49 * params.radius)
    nearest = inside[np.argsort(distances[inside], kind="stable")][:ORACLE_VERTICES]
    return inst.restrict(nearest)


def cmd_oracle_check(config=None, seed=None, trials=None, **_):
    """Compare map_seed with the brute-force MAP on small windows of sampled instances."""
    require(config, "CLI: oracle-check needs --config", ConfigurationError)
    experiment = load_config(config)
    base = experiment.base_seed if seed is None else seed
    count = experiment.trials if trials is None else trials
    params = experiment.model_params(experiment.points()[0])
    mismatches = []
    for trial in range(count):
        window = _oracle_window(sample_ghcm(params, base + trial), base + trial)
        vertices = range(window.vertex_count)
        seeded = map_seed(window.public, vertices, params.pi, params.kernel)
        exact = brute_force_map(window).labeling.labels
        if [seeded[v] for v in vertices] != exact.tolist():
            mismatches.append(base + trial)
    emit({"trials": count, "mismatched_seeds": mismatches})
    return 1 if mismatches else 0


def cmd_sweep(config=None, out=None, trials=None, seed=None, threads=None, timings=False, **_):
    require(config, "CLI: sweep needs --config", ConfigurationError)
    experiment = load_config(
        config, trials=trials, base_seed=seed, timings=True if timings else None
    )
    return run_sweep(experiment, out=out, threads=threads)


def cmd_bench(config=None, out=None, seed=None, **_):
    require(config, "CLI: bench needs --config", ConfigurationError)
    experiment = load_config(config, base_seed=seed)
    return run_bench(experiment, out=out)


def handle(command, **options):
    handlers = {
        "divergence": cmd_divergence,
        "sample": cmd_sample,
        "recover": cmd_recover,
        "oracle-check": cmd_oracle_check,
        "sweep": cmd_sweep,
        "bench": cmd_bench,
    }
    handler = handlers[command]
    payload = {key: value for key, value in options.items() if value is not None}
    logger.info("Command started", extra={"extra": {"command": command, **payload}})
    try:
        status = handler(**options)
    except InfeasibleRegimeError as e:
        report_error(str(e), {**payload, "lambda_nu": e.lambda_nu})
        return e.exit_code
    except GHCMError as e:
        report_error(str(e), payload)
        return e.exit_code
    report_success(command, {**payload, "status": status})
    return status
