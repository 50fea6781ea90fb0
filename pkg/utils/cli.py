"""Batch experiment runner.

    python -m utils.cli --config experiments/ber_floors.ini --output results --workers 4

Exit status: 0 on success, 2 for an invalid configuration, 1 for any other
simulator error. Result tables are written only after the whole experiment
has finished.
"""

import argparse
import logging
import sys
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .artifact_store import ArtifactStore
from .config import RunConfig, apply_overrides, load_config, require_valid, validate
from .errors import ConfigError, UwbSimError
from .estimation import gen_mseq, training_sweep
from .montecarlo import (
    BerExperiment,
    ber_batch_worker,
    coupling_batch_worker,
    coupling_histogram,
    equivalence_batch_worker,
    equivalence_test,
    run_ber,
    users_for_load,
)
from .mutual_info import LoadParams, mi_point_worker, spectral_efficiency_curve
from .transceiver import Scheme
from .trial_coordinator import TrialCoordinator

logger = logging.getLogger(__name__)

__all__ = ["execute", "main", "run", "validate"]


def make_coordinator(workers: Optional[int]) -> TrialCoordinator:
    return TrialCoordinator({
        "ber": ber_batch_worker,
        "equivalence": equivalence_batch_worker,
        "coupling": coupling_batch_worker,
        "mi": mi_point_worker,
    }, workers)


def _training(config: RunConfig):
    return gen_mseq(config.register_length, amplitude=config.training_amplitude, iota=config.iota)


def _run_ber(config: RunConfig, coordinator: TrialCoordinator) -> Dict[str, pd.DataFrame]:
    frames = []
    csi = {"csi_mode": "training", "training": _training(config)} if config.uses_training else {}
    for beta, sigma_xi2 in config.pairs():
        system = config.system_config(K=users_for_load(config.N, beta),
                                      csi_error_var=0.0 if np.isnan(sigma_xi2) else sigma_xi2)
        for scheme in config.schemes:
            exp = BerExperiment(config=system, snr_grid_db=tuple(config.snr_db), trials=config.trials,
                                scheme=Scheme.parse(scheme), seed=config.seed, preset=config.preset,
                                target_errors=config.target_errors, batch_size=config.batch_size,
                                fixed_channel=config.fixed_channel, beta=beta, **csi)
            frames.append(run_ber(exp, coordinator).to_frame())
    return {"ber": pd.concat(frames, ignore_index=True)}


def _run_equivalence(config: RunConfig, coordinator: TrialCoordinator) -> Tuple[Dict[str, pd.DataFrame], List[str]]:
    frames, lines = [], []
    sigmas = sorted(set(config.sigma_xi2 or [0.0]))
    for sigma_xi2 in sigmas:
        system = config.system_config(K=1, csi_error_var=sigma_xi2)
        for snr in config.snr_db:
            report = equivalence_test(system, trials=config.trials, seed=config.seed, snr_db=snr,
                                      preset=config.preset, batch_size=config.batch_size,
                                      fixed_channel=config.fixed_channel, coordinator=coordinator)
            frames.append(report.to_frame())
            lines.append(f"sigma_xi2={sigma_xi2:g} snr={snr:g} dB: {report.summary()}")
    return {"equivalence": pd.concat(frames, ignore_index=True)}, lines


def _run_coupling(config: RunConfig, coordinator: TrialCoordinator) -> Tuple[Dict[str, pd.DataFrame], List[str]]:
    histograms, moments, lines = [], [], []
    for sigma_xi2 in sorted(set(config.sigma_xi2 or [0.0])):
        system = config.system_config(K=2, csi_error_var=sigma_xi2)
        for scheme in config.schemes:
            stats = coupling_histogram(system, Scheme.parse(scheme), sigma_xi2, config.samples,
                                       seed=config.seed, preset=config.preset,
                                       batch_size=config.batch_size, coordinator=coordinator)
            histograms.append(stats.to_frame())
            moments.append({"scheme": stats.scheme.value, "sigma_xi2": sigma_xi2, **stats.moments()})
            lines.append(f"{scheme} sigma_xi2={sigma_xi2:g}: variance={stats.variance:.4g}, "
                         f"kurtosis={stats.kurtosis:.3g}")
    return {"couplings": pd.concat(histograms, ignore_index=True),
            "coupling_moments": pd.DataFrame(moments)}, lines


def _run_mi(config: RunConfig, coordinator: TrialCoordinator) -> Dict[str, pd.DataFrame]:
    frames = []
    samples_cache = {}
    for beta, sigma_xi2 in config.pairs():
        system = config.system_config(K=users_for_load(config.N, beta), csi_error_var=sigma_xi2)
        load = LoadParams(beta=beta, L=system.L, iota=system.iota, N=system.N)
        for scheme in config.schemes:
            key = (scheme, sigma_xi2)
            if key not in samples_cache:
                samples_cache[key] = coupling_histogram(
                    system, Scheme.parse(scheme), sigma_xi2, config.samples, seed=config.seed,
                    preset=config.preset, batch_size=config.batch_size, coordinator=coordinator)
            stats = samples_cache[key]
            frames.append(spectral_efficiency_curve(stats.self_, stats.cross, system, load, config.snr_db,
                                                    Scheme.parse(scheme), sigma_xi2, mode=config.mi_mode,
                                                    coordinator=coordinator))
    return {"mi": pd.concat(frames, ignore_index=True)}


def _run_estimation(config: RunConfig) -> Dict[str, pd.DataFrame]:
    system = config.system_config(K=config.users)
    frame = training_sweep(system, _training(config), config.snr_db, config.trials, seed=config.seed,
                           estimator=config.estimator, users=config.users, preset=config.preset)
    return {"estimation": frame}


def execute(config: RunConfig, coordinator: Optional[TrialCoordinator] = None) -> Tuple[Dict[str, pd.DataFrame], List[str]]:
    """Run the configured experiment; returns named result tables and summary lines."""
    coordinator = coordinator or make_coordinator(config.workers)
    logger.info(f"Running experiment '{config.experiment}' with seed {config.seed}")
    if config.experiment == "ber":
        return _run_ber(config, coordinator), []
    if config.experiment == "equivalence":
        return _run_equivalence(config, coordinator)
    if config.experiment == "coupling":
        return _run_coupling(config, coordinator)
    if config.experiment == "mi":
        return _run_mi(config, coordinator), []
    if config.experiment == "estimation":
        return _run_estimation(config), []
    raise ConfigError(f"unknown experiment '{config.experiment}'")


def run(config: RunConfig, diagnostics=None) -> int:
    """Validate, execute and store; returns the process exit status."""
    try:
        require_valid(config, diagnostics)
        tables, lines = execute(config)
        store = ArtifactStore(config.output)
        provenance = config.provenance()
        for name, frame in tables.items():
            store.save_table(name, frame, provenance)
    except ConfigError as e:
        logger.error(f"Configuration rejected: {e}")
        print(str(e), file=sys.stderr)
        return 2
    except (UwbSimError, OSError) as e:
        logger.error(f"Experiment failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1
    for line in lines:
        print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uwbsim", description="TR vs AR link-level experiments")
    parser.add_argument("--config", required=True, help="INI file, or a result CSV to re-run")
    parser.add_argument("--output", help="output directory (overrides the config)")
    parser.add_argument("--workers", type=int, help="worker processes (default: $UWBSIM_WORKERS or 1)")
    parser.add_argument("--seed", type=int, help="seed override")
    parser.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level))
    try:
        config, diagnostics = load_config(args.config)
    except ConfigError as e:
        logger.error(f"Configuration rejected: {e}")
        print(str(e), file=sys.stderr)
        return 2
    except OSError as e:
        logger.error(f"Cannot read configuration: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2
    apply_overrides(config, seed=args.seed, workers=args.workers, output=args.output)
    return run(config, diagnostics)


if __name__ == "__main__":
    sys.exit(main())
