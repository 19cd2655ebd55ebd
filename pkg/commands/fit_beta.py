"""
fit-beta サブコマンド
ソース側のセグメンテーションからPottsのβを最尤推定する
"""

import argparse
import logging
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict

import numpy as np

from utils.errors import ArgumentError
from utils.grid import LabelField
from utils.potts import BetaFitConfig, fit_beta
from utils.tensor_io import read_grid, write_beta


class FitBetaCommand:
    name = "fit-beta"

    def __init__(self, config: Dict[str, Any]):
        self.config = config
        self.logger = logging.getLogger(__name__)
        self.fit_config = BetaFitConfig.from_config(config)

    def register(self, subparsers) -> argparse.ArgumentParser:
        parser = subparsers.add_parser(self.name, help="fit Potts smoothness parameters to label files")
        parser.add_argument("--labels", required=True, nargs="+", type=Path, help="source label files")
        parser.add_argument("--out", required=True, type=Path, help="beta JSON to write")
        parser.add_argument("--beta-max", type=float, default=self.fit_config.beta_max)
        parser.add_argument("--tol", type=float, default=self.fit_config.tolerance)
        parser.add_argument(
            "--shared", action="store_true", default=self.fit_config.shared, help="fit one beta for all classes"
        )
        parser.set_defaults(handler=self.run)
        return parser

    def _read_labels(self, paths):
        fields = []
        for path in paths:
            tensor = read_grid(path)
            if not isinstance(tensor, LabelField):
                raise ArgumentError(f"{path} does not hold a label field")
            fields.append((path, tensor))

        classes = {tensor.n_classes for _, tensor in fields}
        if len(classes) > 1:
            detail = ", ".join(f"{path}: K={tensor.n_classes}" for path, tensor in fields)
            raise ArgumentError(f"label files disagree on the class count K ({detail})")
        return [tensor for _, tensor in fields]

    def run(self, args: argparse.Namespace) -> int:
        segmentations = self._read_labels(args.labels)
        config = replace(self.fit_config, beta_max=args.beta_max, tolerance=args.tol, shared=args.shared)
        result = fit_beta(segmentations, config)
        write_beta(args.out, result)

        self.logger.info(f"Beta written to {args.out}")
        print(f"beta = {np.array2string(result.params.beta, precision=6, separator=', ')}")
        print(f"iterations = {result.iterations}, objective = {result.objective:.6f}, converged = {result.converged}")
        return 0


def setup(subparsers, config: Dict[str, Any]) -> FitBetaCommand:
    command = FitBetaCommand(config)
    command.register(subparsers)
    return command
