"""
Main Entry Point - Interface Homogenization Toolkit

Subcommands:
    cell      periodic cell problems on both sides (mu+-, g+-, D+-)
    model     strip measure, compensator and the effective model
    simulate  path ensembles of the eps-process or the limit process
    verify    full statistical comparison; exit code 1 on a failed verdict
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

# Add project root to path
sys.path.append(str(Path(__file__).parent))

from fields.builtins import field_from_config
from fields.drift_field import InterfaceDrift, export_drift_table, sample_on_grid
from fields.grid import GridSpec
from homogenization.effective_model import asymptotic_side_probability
from homogenization.errors import HomogenizationError
from homogenization.model_builder import ModelSettings, build_model, solve_cells, tail_d11_min
from homogenization.strip_measure import cell_masses
from simulation.eps_sim import exit_statistics, simulate_eps
from simulation.estimates import Estimate
from simulation.limit_sim import simulate_limit, time_on_positive_side
from simulation.settings import SimulationSettings
from utils.config_loader import apply_overrides, load_config, merge_defaults, save_config
from utils.export import provenance, write_cell_masses, write_csv, write_json, write_torus_table
from utils.logger import setup_logger
from verification.checks import CSV_COLUMNS
from verification.convergence import exit_level
from verification.pipeline import NEGATIVE_CONTROLS, full_pipeline

DEFAULT_CONFIG_PATH = "config/homogenization_config.yaml"

EXIT_OK = 0
EXIT_FAILED_VERDICT = 1
EXIT_ERROR = 2

logger = logging.getLogger("main")


# ===== ARGUMENTS =====

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Homogenization of diffusions across a periodic interface")
    parser.add_argument("--config", default=None, help=f"YAML run configuration (default {DEFAULT_CONFIG_PATH})")
    parser.add_argument("--seed", type=int, default=None, help="base seed of all random streams")
    parser.add_argument("--threads", type=int, default=None, help="simulator worker threads")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--dump-config", action="store_true",
                        help="print the effective configuration (defaults included) and exit")

    commands = parser.add_subparsers(dest="command")
    commands.add_parser("cell", help="solve the periodic cell problems")
    commands.add_parser("model", help="assemble the effective model")
    simulate = commands.add_parser("simulate", help="simulate path ensembles")
    simulate.add_argument("--which", choices=("eps", "limit"), default="eps")
    verify = commands.add_parser("verify", help="run the statistical comparison")
    verify.add_argument("--negative-control", choices=NEGATIVE_CONTROLS, default=None,
                        help="verify a deliberately wrong model (the verdict must fail)")
    return parser


def resolve_config(args: argparse.Namespace) -> Dict[str, Any]:
    """Config file (if any) completed with defaults, then command-line overrides"""
    path = args.config
    if path is None and Path(DEFAULT_CONFIG_PATH).exists():
        path = DEFAULT_CONFIG_PATH
    config = merge_defaults(load_config(path) if path else {})
    return apply_overrides(config, {
        'simulation.seed': args.seed,
        'simulation.threads': args.threads,
        'output.dir': args.out,
        'logging.level': args.log_level,
        'verify.negative_control': getattr(args, 'negative_control', None),
    })


def _output_dir(config: Dict[str, Any]) -> Path:
    out = Path(config['output']['dir'])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _field_and_grid(config: Dict[str, Any]) -> Tuple[InterfaceDrift, GridSpec]:
    field = field_from_config(config['field'])
    return field, GridSpec.from_config(config['grid'], field.dimension, field.half_width)


# ===== COMMANDS =====

def cmd_cell(config: Dict[str, Any]) -> int:
    out = _output_dir(config)
    field, grid = _field_and_grid(config)
    settings = ModelSettings.from_config(config)
    cells = solve_cells(field, grid, settings.solver)

    points = grid.torus_points()
    d = field.dimension
    for cell in cells:
        write_torus_table(cell.density.values, points, out / f"cells_mu_{cell.side}.csv", ['mu'])
        write_torus_table(cell.corrector.values, points, out / f"cells_g_{cell.side}.csv",
                          [f'g{k + 1}' for k in range(d)])
        logger.info(f"D{'+' if cell.side == 'plus' else '-'} = {np.round(cell.tensor.matrix, 8).tolist()}")
    export_drift_table(sample_on_grid(field, grid), out / "drift_table.csv")

    residuals = {cell.side: {'stationarity': cell.density.residual,
                             'corrector': cell.corrector.residuals.tolist()} for cell in cells}
    write_json({'field': field.describe(), 'plus': cells[0].summary(), 'minus': cells[1].summary(),
                'provenance': provenance(config, grid=grid.to_dict(), residuals=residuals)},
               out / "cell_summary.json")
    logger.info(f"✅ Cell problems written to {out}")
    return EXIT_OK


def cmd_model(config: Dict[str, Any]) -> int:
    out = _output_dir(config)
    field, grid = _field_and_grid(config)
    sim = SimulationSettings.from_config(config['simulation'])
    artifacts = build_model(field, grid, ModelSettings.from_config(config), seed=sim.seed, threads=sim.threads)

    residuals = {'strip': artifacts.strip.residual, 'fit': artifacts.strip.fit.residual}
    stamp = provenance(config, sim.seed, grid.to_dict(), residuals)
    write_cell_masses(cell_masses(artifacts.strip), out / "cells_masses.csv")
    write_json({'field': field.describe(), 'plus': artifacts.cells[0].summary(),
                'minus': artifacts.cells[1].summary(), 'provenance': stamp}, out / "cell_summary.json")
    write_json(artifacts.model.to_dict(stamp), out / "model.json")
    logger.info(f"✅ Model written to {out / 'model.json'}")
    return EXIT_OK


def _covariance_estimates(final: np.ndarray, start: np.ndarray, seed: int) -> List[Estimate]:
    increments = final - start
    centered = increments - increments.mean(axis=0)
    d = final.shape[1]
    return [Estimate.from_samples(centered[:, i] * centered[:, j], f'covariance_x{i + 1}_x{j + 1}', seed)
            for i in range(d) for j in range(i, d)]


def cmd_simulate(config: Dict[str, Any], which: str) -> int:
    out = _output_dir(config)
    sim = SimulationSettings.from_config(config['simulation'])
    field, grid = _field_and_grid(config)
    fan = sim.fan_out()
    estimates: List[Estimate] = []

    if which == "eps":
        eps = sim.smallest_eps
        d11_min = tail_d11_min(solve_cells(field, grid, ModelSettings.from_config(config).solver))
        ensemble = simulate_eps(field, eps, sim.x0, sim.horizon, sim.dt, sim.n_paths, sim.seed,
                                save_points=sim.save_points, **fan)
        ensemble.to_csv(out / "paths_eps.csv", thin=sim.export_thin, max_paths=sim.export_paths)
        stats = exit_statistics(field, eps, sim.x0, exit_level(eps, sim.delta), sim.n_paths, sim.seed,
                                sim.dt, d11_min, **fan)
        estimates.append(stats['side'])
        estimates.extend(stats['first'])
        estimates.extend(stats['second'])
    else:
        artifacts = build_model(field, grid, ModelSettings.from_config(config), seed=sim.seed,
                                threads=sim.threads)
        model = artifacts.model
        ensemble = simulate_limit(model, sim.x0, sim.horizon, sim.limit_dt, sim.n_paths, sim.seed,
                                  backend=sim.limit_backend, save_points=sim.save_points, **fan)
        ensemble.to_csv(out / "paths_limit.csv", thin=sim.export_thin, max_paths=sim.export_paths)
        local = Estimate.from_samples(ensemble.local_time[:, -1], 'local_time_at_T', sim.seed)
        side = time_on_positive_side(ensemble)
        side.params['asymptotic_side_probability'] = asymptotic_side_probability(model)
        estimates.extend([local, side])

    estimates.extend(_covariance_estimates(ensemble.final, ensemble.initial, sim.seed))
    write_json({'which': which, 'ensemble': ensemble.describe(),
                'estimates': [e.to_dict() for e in estimates],
                'provenance': provenance(config, sim.seed, grid.to_dict())},
               out / "estimates.json")
    logger.info(f"✅ {ensemble.n_paths} {which} paths simulated, estimates in {out / 'estimates.json'}")
    return EXIT_OK


def cmd_verify(config: Dict[str, Any]) -> int:
    out = _output_dir(config)
    result = full_pipeline(config)
    report = result.report
    write_json(result.model.to_dict(report.provenance), out / "model.json")
    write_json(report.to_dict(), out / "report.json")
    write_csv(CSV_COLUMNS, report.rows(), out / "checks.csv")
    return EXIT_OK if report.verdict else EXIT_FAILED_VERDICT


# ===== MAIN EXECUTION =====

def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = resolve_config(args)
    except (FileNotFoundError, yaml.YAMLError, HomogenizationError) as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_ERROR

    if args.dump_config:
        yaml.dump(config, sys.stdout, default_flow_style=False, allow_unicode=True)
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_ERROR

    out = _output_dir(config)
    log_file = config['logging'].get('file') or str(out / "logs" / "run.log")
    setup_logger("", log_file, config['logging'].get('level', 'INFO'))
    save_config(config, str(out / "effective_config.yaml"))

    logger.info("========================================")
    logger.info(f"   Interface homogenization: {args.command}")
    logger.info("========================================")

    try:
        if args.command == "cell":
            return cmd_cell(config)
        if args.command == "model":
            return cmd_model(config)
        if args.command == "simulate":
            return cmd_simulate(config, args.which)
        return cmd_verify(config)
    except HomogenizationError as e:
        logger.error(f"❌ Aborted at stage '{e.stage}': {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
