#!/usr/bin/env python3
"""
smoothprior-segmenter - 隠れPotts事前分布つき変分ベイズ画像セグメンテーション
"""

import argparse
import copy
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from dotenv import load_dotenv

from commands import COMMAND_MODULES
from utils.errors import ConfigError, SegmentationError
from utils.logger import cleanup_old_logs, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

DEFAULT_CONFIG: Dict[str, Any] = {
    "vb": {"max_iterations": 30, "tolerance": 1e-5},
    "potts": {
        "step_size": 1e-3,
        "max_iterations": 1000,
        "tolerance": 1e-6,
        "beta_max": 10.0,
        "fixed_beta": 0.1,
        "shared": False,
    },
    "init": {"kmeans_max_iterations": 100, "kmeans_tolerance": 1e-8, "kernel_width": 0.01},
    "phantom": {"height": 64, "width": 64, "classes": 4},
    "experiment": {"jobs": None, "record_runtime": False},
    "logging": {"level": "INFO", "file": None},
}


def load_config(path: Optional[str] = None) -> Dict[str, Any]:
    """設定ファイルを読み込む（無ければ組み込みのデフォルト）"""
    config_path = Path(path or os.getenv("SEGMENTER_CONFIG", "config.yaml"))
    if config_path.exists():
        with open(config_path, "r", encoding="utf-8") as f:
            return yaml.safe_load(f) or {}
    return copy.deepcopy(DEFAULT_CONFIG)


def build_parser(config: Dict[str, Any]) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segmenter",
        description="Variational Bayes segmentation with a hidden Potts prior fitted across centers.",
    )
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True
    for module in COMMAND_MODULES:
        module.setup(subparsers, config)
    return parser


def main(argv: Optional[List[str]] = None, config: Optional[Dict[str, Any]] = None) -> int:
    """メイン実行関数。終了コードを返す"""
    load_dotenv()
    if config is None:
        config = load_config()
    setup_logging(config)
    cleanup_old_logs(config)

    parser = build_parser(config)
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except SystemExit as e:
        # argparse（--help と使い方の誤り）
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    except ConfigError as e:
        logger.error(f"Invalid experiment config: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SegmentationError as e:
        stage = getattr(e, "stage", None)
        logger.error(f"{type(e).__name__}{f' in {stage}' if stage else ''}: {e}")
        print(f"error: {f'[{stage}] ' if stage else ''}{e}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as e:
        logger.error(f"I/O error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
