"""
phantom サブコマンド
合成ファントム（画像・正解ラベル・マスク）を生成して書き出す
"""

import argparse
import logging
from pathlib import Path
from typing import Any, Dict

from utils.phantom import PhantomSpec, generate_phantom
from utils.tensor_io import write_grid


class PhantomCommand:
    """合成ファントムを生成するコマンド"""

    name = "phantom"

    def __init__(self, config: Dict[str, Any]):
        self.config = config
        self.logger = logging.getLogger(__name__)
        self.defaults = PhantomSpec.from_config(config)

    def register(self, subparsers) -> argparse.ArgumentParser:
        parser = subparsers.add_parser(self.name, help="generate a synthetic head phantom")
        parser.add_argument("--out", required=True, type=Path, help="output directory")
        parser.add_argument("--seed", required=True, type=int)
        parser.add_argument("--height", type=int, default=self.defaults.height)
        parser.add_argument("--width", type=int, default=self.defaults.width)
        parser.add_argument("--classes", type=int, default=self.defaults.n_classes)
        parser.add_argument("--noise", type=float, default=None, help="override every class stddev")
        parser.set_defaults(handler=self.run)
        return parser

    def spec_for(self, args: argparse.Namespace) -> PhantomSpec:
        # クラス数を変えた場合は設定の平均・標準偏差を使えない
        same_classes = args.classes == self.defaults.n_classes
        spec = PhantomSpec(
            height=args.height,
            width=args.width,
            n_classes=args.classes,
            means=self.defaults.means if same_classes else None,
            stddevs=self.defaults.stddevs if same_classes else None,
            perturbation=self.defaults.perturbation,
        )
        if args.noise is not None:
            spec = spec.with_noise(args.noise)
        return spec

    def run(self, args: argparse.Namespace) -> int:
        spec = self.spec_for(args)
        phantom = generate_phantom(spec, args.seed)

        out_dir: Path = args.out
        write_grid(out_dir / "image.gt", phantom.image)
        write_grid(out_dir / "labels.gt", phantom.truth)
        write_grid(out_dir / "mask.gt", phantom.mask)

        self.logger.info(f"Phantom written to {out_dir} (seed={args.seed})")
        print(
            f"phantom {spec.height}x{spec.width} K={spec.n_classes} seed={args.seed} "
            f"mask={int(phantom.mask.values.sum())} voxels -> {out_dir}"
        )
        return 0


def setup(subparsers, config: Dict[str, Any]) -> PhantomCommand:
    """コマンドのセットアップ"""
    command = PhantomCommand(config)
    command.register(subparsers)
    return command
