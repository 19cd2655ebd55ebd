"""
segment サブコマンド
画像1枚を（半）教師なしの隠れPotts混合ガウスモデルでセグメンテーションする
"""

import argparse
import logging
from pathlib import Path
from typing import Any, Dict, Optional

from utils.errors import ArgumentError
from utils.grid import ImageGrid
from utils.initialization import DEFAULT_KERNEL_WIDTH, kmeans_init, knn_init
from utils.potts import DEFAULT_BETA_MAX, DEFAULT_FIXED_BETA, SmoothnessParams
from utils.tensor_io import export_pgm, read_beta, read_grid, read_labeled_set, write_grid, write_posterior
from utils.vb import ClampSet, PriorHyperparams, VbConfig, fit, segment


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


class SegmentCommand:
    """画像をセグメンテーションするコマンド"""

    name = "segment"

    def __init__(self, config: Dict[str, Any]):
        self.config = config
        self.logger = logging.getLogger(__name__)
        self.vb_config = VbConfig.from_config(config)
        potts_config = config.get("potts", {}) or {}
        self.fixed_beta = float(potts_config.get("fixed_beta", DEFAULT_FIXED_BETA))
        self.beta_max = float(potts_config.get("beta_max", DEFAULT_BETA_MAX))
        init_config = config.get("init", {}) or {}
        self.kmeans_max_iterations = int(init_config.get("kmeans_max_iterations", 100))
        self.kmeans_tolerance = float(init_config.get("kmeans_tolerance", 1e-8))
        self.kernel_width = float(init_config.get("kernel_width", DEFAULT_KERNEL_WIDTH))
        self.parser: Optional[argparse.ArgumentParser] = None

    def register(self, subparsers) -> argparse.ArgumentParser:
        parser = subparsers.add_parser(self.name, help="segment an image with the hidden Potts mixture")
        parser.add_argument("--image", required=True, type=Path)
        parser.add_argument("--out", required=True, type=Path, help="output directory")
        beta = parser.add_mutually_exclusive_group()
        beta.add_argument("--beta", type=Path, help="beta JSON from fit-beta")
        beta.add_argument("--beta-fixed", type=float, help=f"uniform beta (default {self.fixed_beta})")
        parser.add_argument("--labels-given", type=Path, help='JSON list of {"index", "class"} records')
        parser.add_argument("--semi", action="store_true", help="clamp the given labels (requires --labels-given)")
        parser.add_argument("--classes", type=int, default=4)
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--max-iter", type=positive_int, default=self.vb_config.max_iterations)
        parser.add_argument("--tol", type=positive_float, default=self.vb_config.tolerance)
        parser.set_defaults(handler=self.run)
        self.parser = parser
        return parser

    def _smoothness(self, args: argparse.Namespace) -> SmoothnessParams:
        if args.beta is not None:
            params = read_beta(args.beta).params
            if params.n_classes != args.classes:
                raise ArgumentError(f"{args.beta} holds K={params.n_classes} betas but --classes is {args.classes}")
            return params
        value = self.fixed_beta if args.beta_fixed is None else args.beta_fixed
        return SmoothnessParams.uniform(args.classes, value, max(self.beta_max, value))

    def run(self, args: argparse.Namespace) -> int:
        if args.semi and args.labels_given is None:
            # argparse.error は SystemExit(2) を送出する
            self.parser.error("--semi requires --labels-given")

        image = read_grid(args.image)
        if not isinstance(image, ImageGrid):
            raise ArgumentError(f"{args.image} does not hold an image")
        beta = self._smoothness(args)
        priors = PriorHyperparams.weak(image, args.classes)
        config = VbConfig(max_iterations=args.max_iter, tolerance=args.tol)

        if args.semi:
            labeled = read_labeled_set(args.labels_given, image)
            rho = knn_init(image, labeled, args.classes, self.kernel_width)
            clamps = labeled.to_clamps()
        else:
            rho = kmeans_init(
                image, args.classes, args.seed, self.kmeans_max_iterations, self.kmeans_tolerance, self.kernel_width
            ).responsibilities
            clamps = ClampSet()

        result = fit(image, priors, beta, rho, clamps, config)
        labels = segment(result.responsibilities)

        out_dir: Path = args.out
        write_grid(out_dir / "labels.gt", labels)
        write_grid(out_dir / "resp.gt", result.responsibilities)
        write_posterior(out_dir / "posterior.json", result.posterior)
        export_pgm(labels, out_dir / "seg.pgm")

        self.logger.info(f"Segmentation written to {out_dir}")
        print(f"iterations = {result.iterations}, final change = {result.final_change:.6g}, converged = {result.converged}")
        return 0


def setup(subparsers, config: Dict[str, Any]) -> SegmentCommand:
    command = SegmentCommand(config)
    command.register(subparsers)
    return command
