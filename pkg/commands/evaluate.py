"""
eval サブコマンド
マスク内の分類誤差を表示する
"""

import argparse
import logging
from pathlib import Path
from typing import Any, Dict

from utils.errors import ArgumentError
from utils.evalbench import classification_error, match_clusters, relabel
from utils.grid import LabelField, Mask
from utils.tensor_io import read_grid


class EvaluateCommand:
    name = "eval"

    def __init__(self, config: Dict[str, Any]):
        self.config = config
        self.logger = logging.getLogger(__name__)

    def register(self, subparsers) -> argparse.ArgumentParser:
        parser = subparsers.add_parser(self.name, help="masked classification error of a segmentation")
        parser.add_argument("--pred", required=True, type=Path)
        parser.add_argument("--truth", required=True, type=Path)
        parser.add_argument("--mask", required=True, type=Path)
        parser.add_argument("--match", action="store_true", help="map clusters onto tissues before scoring")
        parser.set_defaults(handler=self.run)
        return parser

    @staticmethod
    def _read(path: Path, expected: type):
        tensor = read_grid(path)
        if not isinstance(tensor, expected):
            raise ArgumentError(f"{path} holds a {type(tensor).__name__}, expected {expected.__name__}")
        return tensor

    def run(self, args: argparse.Namespace) -> int:
        pred = self._read(args.pred, LabelField)
        truth = self._read(args.truth, LabelField)
        mask = self._read(args.mask, Mask)

        if args.match:
            permutation = match_clusters(pred, truth, mask)
            pred = relabel(pred, permutation)
            print(f"permutation = {' '.join(str(t) for t in permutation)}")
        print(f"{classification_error(pred, truth, mask):.6f}")
        return 0


def setup(subparsers, config: Dict[str, Any]) -> EvaluateCommand:
    command = EvaluateCommand(config)
    command.register(subparsers)
    return command
