"""
experiment サブコマンド
ソースでβを推定し、ターゲットで全手法を繰り返し評価して表を書き出す
"""

import argparse
import asyncio
import logging
from pathlib import Path
from typing import Any, Dict, Optional

from utils.evalbench import (
    ExperimentConfig,
    ResultsTable,
    grid_summary_csv,
    load_experiment_config,
    run_cross_center_async,
    run_experiment_async,
    write_results,
    write_text,
)
from utils.tensor_io import export_pgm


class ExperimentCommand:
    """クロスセンター実験を実行するコマンド"""

    name = "experiment"

    def __init__(self, config: Dict[str, Any]):
        self.config = config
        self.logger = logging.getLogger(__name__)
        experiment_config = config.get("experiment", {}) or {}
        self.default_jobs: Optional[int] = experiment_config.get("jobs")

    def register(self, subparsers) -> argparse.ArgumentParser:
        parser = subparsers.add_parser(self.name, help="run the repeated cross-center experiment")
        parser.add_argument("--config", required=True, type=Path, help="experiment JSON")
        parser.add_argument("--out", required=True, type=Path, help="output directory")
        parser.add_argument(
            "--jobs", type=int, default=self.default_jobs, help="concurrent repetitions (default: CPU count)"
        )
        parser.set_defaults(handler=self.run)
        return parser

    def _export_rasters(self, table: ResultsTable, out_dir: Path) -> None:
        for record in table.records():
            if record.segmentation is not None:
                export_pgm(record.segmentation, out_dir / "rasters" / f"{record.method.value}_rep{record.repetition:02d}.pgm")

    async def _run_single(self, experiment: ExperimentConfig, out_dir: Path, jobs: Optional[int]) -> None:
        table = await run_experiment_async(experiment, jobs)
        await write_results(table, out_dir, experiment.record_runtime)
        if experiment.export_rasters:
            self._export_rasters(table, out_dir)

        for result in table.methods.values():
            print(f"{result.method.value:>4}  mean error = {result.mean:.4f} ± {result.sem:.4f}  (R={result.repetitions})")

    async def _run_grid(self, experiment: ExperimentConfig, out_dir: Path, jobs: Optional[int]) -> None:
        grid = await run_cross_center_async(experiment, jobs)
        for (source, target), table in grid.items():
            cell_dir = out_dir / f"{source}__{target}"
            await write_results(table, cell_dir, experiment.record_runtime)
            if experiment.export_rasters:
                self._export_rasters(table, cell_dir)
        await write_text(out_dir / "grid_summary.csv", grid_summary_csv(grid))

        for (source, target), table in grid.items():
            cells = "  ".join(f"{r.method.value}={r.mean:.4f}" for r in table.methods.values())
            print(f"{source} -> {target}: {cells}")

    def run(self, args: argparse.Namespace) -> int:
        experiment = load_experiment_config(args.config, self.config)
        self.logger.info(
            f"Experiment {args.config}: methods={[m.value for m in experiment.methods]}, "
            f"repetitions={experiment.repetitions}, beta={experiment.beta_mode}, fits_beta={experiment.fits_beta}"
        )
        if experiment.centers:
            asyncio.run(self._run_grid(experiment, args.out, args.jobs))
        else:
            asyncio.run(self._run_single(experiment, args.out, args.jobs))
        self.logger.info(f"Experiment results written to {args.out}")
        return 0


def setup(subparsers, config: Dict[str, Any]) -> ExperimentCommand:
    command = ExperimentCommand(config)
    command.register(subparsers)
    return command
