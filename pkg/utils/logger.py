"""
ロギング設定ユーティリティ
CLI実行ごとのログファイル管理（ローテーション・圧縮付き）
"""

import gzip
import logging
import logging.handlers
import os
import shutil
import sys
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Dict, Optional

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def _gzip_file(source: Path, target: Path) -> None:
    with open(source, "rb") as f_in:
        with gzip.open(target, "wb") as f_out:
            shutil.copyfileobj(f_in, f_out)
    source.unlink()


class CompressedRotatingFileHandler(logging.handlers.RotatingFileHandler):
    """圧縮機能付きローテーティングファイルハンドラー

    CLIプロセスは短命なので、圧縮はバックグラウンドスレッドではなく同期で行う。
    """

    def doRollover(self):
        if self.stream:
            self.stream.close()
            self.stream = None

        if self.backupCount > 0:
            for i in range(self.backupCount - 1, 0, -1):
                sfn = f"{self.baseFilename}.{i}.gz"
                dfn = f"{self.baseFilename}.{i + 1}.gz"
                if os.path.exists(sfn):
                    if os.path.exists(dfn):
                        os.remove(dfn)
                    os.rename(sfn, dfn)

            dfn = Path(f"{self.baseFilename}.1.gz")
            if dfn.exists():
                dfn.unlink()
            current = Path(self.baseFilename)
            if current.exists():
                try:
                    _gzip_file(current, dfn)
                except OSError as exc:
                    logging.getLogger(__name__).warning(f"Log compression failed: {exc}")

        if not self.delay:
            self.stream = self._open()


def rotate_log_on_startup(log_file: str) -> Optional[Path]:
    """起動時に既存ログを退避して圧縮する"""
    log_path = Path(log_file)
    try:
        if not log_path.exists() or log_path.stat().st_size == 0:
            return None
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        backup_file = log_path.parent / f"{log_path.stem}_{timestamp}.log"
        log_path.rename(backup_file)
        compressed_file = backup_file.with_suffix(".log.gz")
        _gzip_file(backup_file, compressed_file)
        return compressed_file
    except OSError as e:
        print(f"[WARNING] Failed to rotate log on startup: {e}", file=sys.stderr)
        return None


def setup_logging(config: Dict[str, Any]) -> logging.Logger:
    """ロギングの設定

    ``logging.file`` が null の場合はファイル出力を行わない（テスト・スクリプト用）。
    """
    log_config = config.get("logging", {}) or {}
    level_name = os.getenv("SEGMENTER_LOG_LEVEL") or log_config.get("level", "INFO")
    log_level = getattr(logging, str(level_name).upper(), logging.INFO)
    log_file = log_config.get("file")

    logger = logging.getLogger()
    logger.setLevel(log_level)

    # 既存のハンドラーをクリア
    for handler in logger.handlers[:]:
        logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    # 結果はstdoutに出すので、ログはstderrへ
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(log_level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        rotation_config = log_config.get("rotation", {}) or {}
        max_bytes = rotation_config.get("max_bytes", 10 * 1024 * 1024)
        backup_count = rotation_config.get("backup_count", 5)
        handler_cls = (
            CompressedRotatingFileHandler
            if rotation_config.get("compression", True)
            else logging.handlers.RotatingFileHandler
        )

        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        if rotation_config.get("rotate_on_startup", False):
            rotate_log_on_startup(log_file)

        file_handler = handler_cls(
            log_file, maxBytes=max_bytes, backupCount=backup_count, encoding="utf-8"
        )
        file_handler.setLevel(log_level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
        logger.debug(
            f"Logging to {log_file} (max_bytes={max_bytes}, backups={backup_count})"
        )

    return logger


def cleanup_old_logs(config: Dict[str, Any]) -> int:
    """保持期間を過ぎたローテーション済みログを削除し、削除件数を返す"""
    log_config = config.get("logging", {}) or {}
    cleanup_config = log_config.get("cleanup", {}) or {}
    log_file = log_config.get("file")
    if not log_file or not cleanup_config.get("enabled", True):
        return 0

    log_dir = Path(log_file).parent
    if not log_dir.exists():
        return 0

    cutoff = datetime.now() - timedelta(days=cleanup_config.get("max_days", 30))
    deleted = 0
    for pattern in ("*.log.*", "*.gz"):
        for path in log_dir.glob(pattern):
            try:
                if datetime.fromtimestamp(path.stat().st_mtime) < cutoff:
                    path.unlink()
                    deleted += 1
            except FileNotFoundError:
                # 同じファイルが両方のパターンに一致する
                continue
            except OSError as e:
                logging.getLogger(__name__).error(f"Failed to remove log file {path}: {e}")

    if deleted:
        logging.getLogger(__name__).info(f"Log cleanup completed: {deleted} files deleted")
    return deleted
