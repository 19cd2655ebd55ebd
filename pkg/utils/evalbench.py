"""
評価プロトコル
マスク付き分類誤差、クラスタ→組織の対応付け、1NNベースライン、境界長、繰り返し実験ハーネス
"""

from __future__ import annotations

import asyncio
import csv
import io
import itertools
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import aiofiles
import numpy as np

from .errors import ArgumentError, ConfigError, ExperimentError, SegmentationError
from .grid import ImageGrid, LabelField, Mask, check_same_shape
from .initialization import DEFAULT_KERNEL_WIDTH, LabeledVoxelSet, kmeans_init, knn_init, nearest_prototype_labels, sample_labels
from .phantom import PhantomSpec, generate_phantom
from .potts import DEFAULT_BETA_MAX, DEFAULT_FIXED_BETA, BetaFitConfig, SmoothnessParams, fit_beta
from .tensor_io import read_grid
from .vb import ClampSet, PriorHyperparams, VbConfig, fit, segment

logger = logging.getLogger(__name__)

MAX_MATCH_CLASSES = 8
# ソース側ファントムのシードはターゲットの繰り返しと重ならないようにずらす
SOURCE_SEED_OFFSET = 1000

RESULTS_HEADER = ("method", "repetition", "error", "runtime_ms")
SUMMARY_HEADER = ("method", "mean_error", "sem", "repetitions")
GRID_SUMMARY_HEADER = ("source", "target", "method", "mean_error", "sem", "repetitions")


class Method(str, Enum):
    UGM = "UGM"
    SGM = "SGM"
    UHP = "UHP"
    SHP = "SHP"
    ONE_NN = "1NN"

    @property
    def semi_supervised(self) -> bool:
        return self in (Method.SGM, Method.SHP)

    @property
    def unsupervised(self) -> bool:
        return self in (Method.UGM, Method.UHP)

    @property
    def uses_potts(self) -> bool:
        return self in (Method.UHP, Method.SHP)

    @property
    def needs_labels(self) -> bool:
        return self.semi_supervised or self is Method.ONE_NN


ALL_METHODS = tuple(Method)


def classification_error(pred: LabelField, truth: LabelField, mask: Mask) -> float:
    """Fraction of masked voxels where ``pred`` disagrees with ``truth``."""
    check_same_shape(pred, truth, mask)
    n_masked = int(mask.values.sum())
    if n_masked == 0:
        raise ArgumentError("classification error needs a non-empty mask")
    wrong = (pred.labels != truth.labels) & mask.values
    return float(wrong.sum()) / n_masked


def match_clusters(pred: LabelField, truth: LabelField, mask: Mask) -> Tuple[int, ...]:
    """Permutation ``perm`` with ``perm[cluster] = tissue`` minimizing the masked error.

    Exhaustive over all K! permutations; the first optimum in lexicographic
    order wins, so the identity is kept whenever it is optimal.
    """
    check_same_shape(pred, truth, mask)
    if pred.n_classes != truth.n_classes:
        raise ArgumentError(f"cannot match K={pred.n_classes} clusters onto K={truth.n_classes} tissues")
    n_classes = pred.n_classes
    if n_classes > MAX_MATCH_CLASSES:
        raise ArgumentError(f"exhaustive cluster matching is limited to K <= {MAX_MATCH_CLASSES}, got {n_classes}")

    inside = mask.values
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (pred.labels[inside], truth.labels[inside]), 1)

    permutations = np.array(list(itertools.permutations(range(n_classes))), dtype=np.int64)
    agreement = confusion[np.arange(n_classes), permutations].sum(axis=1)
    best = int(np.argmax(agreement))
    return tuple(int(t) for t in permutations[best])


def relabel(pred: LabelField, permutation: Sequence[int]) -> LabelField:
    return LabelField(np.asarray(permutation, dtype=np.int64)[pred.labels], pred.n_classes)


def boundary_length(labels: LabelField) -> int:
    """Unordered 4-neighbor pairs with differing labels."""
    grid = labels.labels
    vertical = np.count_nonzero(grid[1:, :] != grid[:-1, :])
    horizontal = np.count_nonzero(grid[:, 1:] != grid[:, :-1])
    return int(vertical + horizontal)


def onenn_baseline(image: ImageGrid, labeled: LabeledVoxelSet, n_classes: int) -> LabelField:
    return nearest_prototype_labels(image, labeled, n_classes)


# ---------------------------------------------------------------------------
# 実験設定
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetFiles:
    image: Path
    labels: Path
    mask: Path


@dataclass(frozen=True)
class ExperimentConfig:
    target: Union[PhantomSpec, Tuple[TargetFiles, ...]] = field(default_factory=PhantomSpec)
    # None はβをフィットしない設定（固定βまたはPottsなし）
    source: Union[PhantomSpec, Tuple[Path, ...], None] = None
    source_count: int = 5
    methods: Tuple[Method, ...] = ALL_METHODS
    beta_mode: str = "fitted"
    fixed_beta: float = DEFAULT_FIXED_BETA
    repetitions: int = 10
    labels_per_class: int = 1
    seed: int = 0
    vb: VbConfig = field(default_factory=VbConfig)
    beta_fit: BetaFitConfig = field(default_factory=BetaFitConfig)
    kmeans_max_iterations: int = 100
    kmeans_tolerance: float = 1e-8
    kernel_width: float = DEFAULT_KERNEL_WIDTH
    record_runtime: bool = False
    export_rasters: bool = True
    centers: Optional[Dict[str, PhantomSpec]] = None

    @property
    def fits_beta(self) -> bool:
        return self.beta_mode == "fitted" and any(m.uses_potts for m in self.methods)

    @property
    def needs_labels(self) -> bool:
        return any(m.needs_labels for m in self.methods)

    @classmethod
    def from_dict(
        cls,
        data: Any,
        defaults: Optional[Dict[str, Any]] = None,
        base_dir: Optional[Path] = None,
    ) -> "ExperimentConfig":
        """Validate a JSON experiment document; errors carry a JSON pointer."""
        return _ExperimentParser(defaults or {}, base_dir or Path(".")).parse(data)


def load_experiment_config(path: Union[str, Path], defaults: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError("/", f"{path} is not valid JSON: {e}") from e
    return ExperimentConfig.from_dict(data, defaults, path.parent)


class _ExperimentParser:
    def __init__(self, defaults: Dict[str, Any], base_dir: Path):
        self.defaults = defaults
        self.base_dir = base_dir

    def parse(self, data: Any) -> ExperimentConfig:
        if not isinstance(data, dict):
            raise ConfigError("/", "experiment config must be a JSON object")

        methods = self._methods(data.get("methods", [m.value for m in ALL_METHODS]))
        beta_mode, fixed_beta = self._beta(data.get("beta", {"mode": "fitted"}))
        centers = self._centers(data["centers"]) if "centers" in data else None

        if "target" in data:
            target = self._target(data["target"])
        elif centers is not None:
            target = next(iter(centers.values()))
        else:
            target = self._phantom(self.defaults.get("phantom", {}) or {}, "/target")

        source = self._source(data["source"]) if "source" in data else None
        fitted = beta_mode == "fitted" and any(m.uses_potts for m in methods)
        if fitted and source is None and centers is None:
            raise ConfigError("/source", "source segmentations are required to fit beta for UHP/SHP")

        init_defaults = self.defaults.get("init", {}) or {}
        experiment_defaults = self.defaults.get("experiment", {}) or {}
        try:
            vb = VbConfig.from_config({"vb": {**(self.defaults.get("vb") or {}), **self._object(data, "vb")}})
        except (ArgumentError, TypeError, ValueError) as e:
            raise ConfigError("/vb", str(e)) from e
        try:
            beta_fit = BetaFitConfig.from_config(
                {"potts": {**(self.defaults.get("potts") or {}), **self._object(data, "beta_fit")}}
            )
        except (ArgumentError, TypeError, ValueError) as e:
            raise ConfigError("/beta_fit", str(e)) from e
        if beta_mode == "fixed" and fixed_beta > beta_fit.beta_max:
            raise ConfigError(
                "/beta/value", f"fixed beta {fixed_beta} exceeds beta_max {beta_fit.beta_max}"
            )

        return ExperimentConfig(
            target=target,
            source=source,
            source_count=self._int(data, "source_count", 5, minimum=1),
            methods=methods,
            beta_mode=beta_mode,
            fixed_beta=fixed_beta,
            repetitions=self._int(data, "repetitions", 10, minimum=1),
            labels_per_class=self._int(data, "labels_per_class", 1, minimum=1),
            seed=self._int(data, "seed", 0, minimum=0),
            vb=vb,
            beta_fit=beta_fit,
            kmeans_max_iterations=int(init_defaults.get("kmeans_max_iterations", 100)),
            kmeans_tolerance=float(init_defaults.get("kmeans_tolerance", 1e-8)),
            kernel_width=float(init_defaults.get("kernel_width", DEFAULT_KERNEL_WIDTH)),
            record_runtime=self._bool(data, "record_runtime", bool(experiment_defaults.get("record_runtime", False))),
            export_rasters=self._bool(data, "export_rasters", True),
            centers=centers,
        )

    @staticmethod
    def _object(data: Dict[str, Any], key: str) -> Dict[str, Any]:
        value = data.get(key, {})
        if not isinstance(value, dict):
            raise ConfigError(f"/{key}", "must be an object")
        return value

    @staticmethod
    def _int(data: Dict[str, Any], key: str, default: int, minimum: int) -> int:
        value = data.get(key, default)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"/{key}", f"must be an integer, got {value!r}")
        if value < minimum:
            raise ConfigError(f"/{key}", f"must be >= {minimum}, got {value}")
        return value

    @staticmethod
    def _bool(data: Dict[str, Any], key: str, default: bool) -> bool:
        value = data.get(key, default)
        if not isinstance(value, bool):
            raise ConfigError(f"/{key}", f"must be true or false, got {value!r}")
        return value

    @staticmethod
    def _methods(value: Any) -> Tuple[Method, ...]:
        if not isinstance(value, list) or not value:
            raise ConfigError("/methods", "must be a non-empty list of method names")
        methods = []
        for index, name in enumerate(value):
            try:
                method = Method(name)
            except ValueError:
                raise ConfigError(
                    f"/methods/{index}", f"unknown method {name!r}, expected one of {[m.value for m in Method]}"
                ) from None
            if method in methods:
                raise ConfigError(f"/methods/{index}", f"duplicate method {name!r}")
            methods.append(method)
        return tuple(methods)

    @staticmethod
    def _beta(value: Any) -> Tuple[str, float]:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = {"mode": "fixed", "value": value}
        if not isinstance(value, dict):
            raise ConfigError("/beta", "must be an object or a number")
        mode = value.get("mode", "fitted")
        if mode not in ("fitted", "fixed"):
            raise ConfigError("/beta/mode", f"must be 'fitted' or 'fixed', got {mode!r}")
        fixed = value.get("value", DEFAULT_FIXED_BETA)
        if isinstance(fixed, bool) or not isinstance(fixed, (int, float)) or not fixed >= 0:
            raise ConfigError("/beta/value", f"must be a non-negative number, got {fixed!r}")
        return mode, float(fixed)

    def _phantom(self, value: Any, pointer: str) -> PhantomSpec:
        if not isinstance(value, dict):
            raise ConfigError(pointer, "phantom spec must be an object")
        try:
            return PhantomSpec.from_dict(value)
        except (ArgumentError, TypeError, ValueError) as e:
            raise ConfigError(pointer, str(e)) from e

    def _path(self, value: Any, pointer: str) -> Path:
        if not isinstance(value, str) or not value:
            raise ConfigError(pointer, "must be a file path")
        path = Path(value)
        return path if path.is_absolute() else self.base_dir / path

    def _source(self, value: Any):
        if isinstance(value, dict) and "labels" in value:
            files = value["labels"]
            if not isinstance(files, list) or not files:
                raise ConfigError("/source/labels", "must be a non-empty list of label files")
            return tuple(self._path(f, f"/source/labels/{i}") for i, f in enumerate(files))
        return self._phantom(value, "/source")

    def _target(self, value: Any):
        if isinstance(value, dict) and "files" in value:
            entries = value["files"]
            if not isinstance(entries, list) or not entries:
                raise ConfigError("/target/files", "must be a non-empty list")
            targets = []
            for i, entry in enumerate(entries):
                if not isinstance(entry, dict):
                    raise ConfigError(f"/target/files/{i}", "must be an object with image, labels and mask")
                paths = {}
                for key in ("image", "labels", "mask"):
                    if key not in entry:
                        raise ConfigError(f"/target/files/{i}/{key}", "is required")
                    paths[key] = self._path(entry[key], f"/target/files/{i}/{key}")
                targets.append(TargetFiles(**paths))
            return tuple(targets)
        return self._phantom(value, "/target")

    def _centers(self, value: Any) -> Dict[str, PhantomSpec]:
        if not isinstance(value, dict) or not value:
            raise ConfigError("/centers", "must be a non-empty object of phantom specs")
        centers = {name: self._phantom(spec, f"/centers/{name}") for name, spec in value.items()}
        if len({spec.n_classes for spec in centers.values()}) != 1:
            raise ConfigError("/centers", "all centers must share the same class count")
        return centers


# ---------------------------------------------------------------------------
# 結果テーブル
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RepetitionRecord:
    method: Method
    repetition: int
    error: float
    runtime_ms: float
    boundary_length: int
    segmentation: Optional[LabelField] = field(default=None, repr=False, compare=False)


@dataclass
class MethodResult:
    method: Method
    records: List[RepetitionRecord] = field(default_factory=list)

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.records], dtype=np.float64)

    @property
    def boundary_lengths(self) -> np.ndarray:
        return np.array([r.boundary_length for r in self.records], dtype=np.int64)

    @property
    def repetitions(self) -> int:
        return len(self.records)

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors))

    @property
    def sem_defined(self) -> bool:
        return self.repetitions > 1

    @property
    def sem(self) -> float:
        """Bessel-corrected sample stddev / √R; 0 for a single repetition."""
        if not self.sem_defined:
            return 0.0
        return float(np.std(self.errors, ddof=1) / math.sqrt(self.repetitions))


@dataclass
class ResultsTable:
    methods: Dict[Method, MethodResult]
    beta: Optional[SmoothnessParams] = None

    def __getitem__(self, method: Union[Method, str]) -> MethodResult:
        return self.methods[Method(method)]

    def records(self) -> List[RepetitionRecord]:
        rows = [record for result in self.methods.values() for record in result.records]
        return sorted(rows, key=lambda r: (list(self.methods).index(r.method), r.repetition))


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def results_csv(table: ResultsTable, record_runtime: bool = False) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(RESULTS_HEADER)
    for record in table.records():
        runtime = _fmt(record.runtime_ms) if record_runtime else ""
        writer.writerow((record.method.value, record.repetition, _fmt(record.error), runtime))
    return buffer.getvalue()


def summary_csv(table: ResultsTable) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    for result in table.methods.values():
        writer.writerow((result.method.value, _fmt(result.mean), _fmt(result.sem), result.repetitions))
    return buffer.getvalue()


def grid_summary_csv(grid: Dict[Tuple[str, str], ResultsTable]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(GRID_SUMMARY_HEADER)
    for (source, target), table in grid.items():
        for result in table.methods.values():
            writer.writerow(
                (source, target, result.method.value, _fmt(result.mean), _fmt(result.sem), result.repetitions)
            )
    return buffer.getvalue()


async def write_text(path: Union[str, Path], text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    async with aiofiles.open(path, "w", encoding="utf-8", newline="") as f:
        await f.write(text)
    return path


async def write_results(table: ResultsTable, out_dir: Union[str, Path], record_runtime: bool = False) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    results_path = await write_text(out_dir / "results.csv", results_csv(table, record_runtime))
    summary_path = await write_text(out_dir / "summary.csv", summary_csv(table))
    return results_path, summary_path


# ---------------------------------------------------------------------------
# 実行
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetCase:
    image: ImageGrid
    truth: LabelField
    mask: Mask


def _n_classes(config: ExperimentConfig) -> int:
    if isinstance(config.target, PhantomSpec):
        return config.target.n_classes
    return _load_target_files(config.target[0]).truth.n_classes


def _load_target_files(files: TargetFiles) -> TargetCase:
    image, truth, mask = read_grid(files.image), read_grid(files.labels), read_grid(files.mask)
    if not (isinstance(image, ImageGrid) and isinstance(truth, LabelField) and isinstance(mask, Mask)):
        raise ArgumentError(f"target files must hold an image, labels and a mask: {files}")
    check_same_shape(image, truth, mask)
    return TargetCase(image, truth, mask)


def load_target(config: ExperimentConfig, repetition: int) -> TargetCase:
    if isinstance(config.target, PhantomSpec):
        phantom = generate_phantom(config.target, config.seed + repetition)
        return TargetCase(phantom.image, phantom.truth, phantom.mask)
    return _load_target_files(config.target[repetition % len(config.target)])


def source_segmentations(config: ExperimentConfig) -> List[LabelField]:
    if isinstance(config.source, PhantomSpec):
        seeds = [config.seed + SOURCE_SEED_OFFSET + s for s in range(config.source_count)]
        return [generate_phantom(config.source, seed).truth for seed in seeds]
    if config.source:
        fields = [read_grid(path) for path in config.source]
        for path, labels in zip(config.source, fields):
            if not isinstance(labels, LabelField):
                raise ArgumentError(f"source file {path} does not hold a label field")
        return fields
    raise ArgumentError("no source segmentations configured")


def prepare_beta(config: ExperimentConfig) -> Optional[SmoothnessParams]:
    """β used by the Potts methods: fitted on the source set or the fixed value."""
    if not any(m.uses_potts for m in config.methods):
        return None
    n_classes = _n_classes(config)
    if config.beta_mode == "fixed":
        return SmoothnessParams.uniform(n_classes, config.fixed_beta, config.beta_fit.beta_max)

    segmentations = source_segmentations(config)
    source_classes = {s.n_classes for s in segmentations}
    if source_classes != {n_classes}:
        raise ArgumentError(f"source segmentations have K={sorted(source_classes)} but the target has K={n_classes}")
    result = fit_beta(segmentations, config.beta_fit)
    logger.info(f"Fitted beta on {len(segmentations)} source segmentations: {np.round(result.params.beta, 4).tolist()}")
    return result.params


def _segment_with(
    method: Method,
    case: TargetCase,
    config: ExperimentConfig,
    beta: Optional[SmoothnessParams],
    labeled: Optional[LabeledVoxelSet],
    seed: int,
) -> LabelField:
    n_classes = case.truth.n_classes
    if method is Method.ONE_NN:
        return onenn_baseline(case.image, labeled, n_classes)

    if method.uses_potts:
        smoothness = beta
    else:
        smoothness = SmoothnessParams.zeros(n_classes, beta.beta_max if beta is not None else DEFAULT_BETA_MAX)
    priors = PriorHyperparams.weak(case.image, n_classes)

    if method.semi_supervised:
        rho = knn_init(case.image, labeled, n_classes, config.kernel_width)
        clamps = labeled.to_clamps()
    else:
        rho = kmeans_init(
            case.image, n_classes, seed, config.kmeans_max_iterations, config.kmeans_tolerance, config.kernel_width
        ).responsibilities
        clamps = ClampSet()
    result = fit(case.image, priors, smoothness, rho, clamps, config.vb)
    return segment(result.responsibilities)


def run_repetition(config: ExperimentConfig, beta: Optional[SmoothnessParams], repetition: int) -> List[RepetitionRecord]:
    """All configured methods on one target; RNG streams depend only on (seed, repetition)."""
    seed = config.seed + repetition
    try:
        case = load_target(config, repetition)
    except SegmentationError as e:
        raise ExperimentError("target", repetition, e) from e

    labeled = None
    if config.needs_labels:
        labeled = sample_labels(case.truth, config.labels_per_class, seed, case.image)

    records = []
    for method in config.methods:
        started = time.perf_counter()
        try:
            pred = _segment_with(method, case, config, beta, labeled, seed)
            if method.unsupervised:
                pred = relabel(pred, match_clusters(pred, case.truth, case.mask))
            error = classification_error(pred, case.truth, case.mask)
        except SegmentationError as e:
            raise ExperimentError(method.value, repetition, e) from e
        runtime_ms = (time.perf_counter() - started) * 1000.0

        records.append(
            RepetitionRecord(
                method=method,
                repetition=repetition,
                error=error,
                runtime_ms=runtime_ms,
                boundary_length=boundary_length(pred),
                segmentation=pred,
            )
        )
        logger.info(f"[{method.value}] repetition {repetition}: error={error:.4f} ({runtime_ms:.0f} ms)")
    return records


def _collect(config: ExperimentConfig, beta: Optional[SmoothnessParams], per_repetition) -> ResultsTable:
    table = ResultsTable({method: MethodResult(method) for method in config.methods}, beta)
    for records in per_repetition:
        for record in records:
            table.methods[record.method].records.append(record)
    for result in table.methods.values():
        if not result.sem_defined:
            logger.warning(f"[{result.method.value}] single repetition, SEM reported as 0")
    return table


def run_experiment(config: ExperimentConfig) -> ResultsTable:
    beta = prepare_beta(config)
    per_repetition = [run_repetition(config, beta, r) for r in range(config.repetitions)]
    return _collect(config, beta, per_repetition)


def default_jobs() -> int:
    return os.cpu_count() or 1


async def run_experiment_async(config: ExperimentConfig, jobs: Optional[int] = None) -> ResultsTable:
    """Repetitions on a thread pool, at most ``jobs`` at a time, gathered in repetition order."""
    jobs = jobs or default_jobs()
    if jobs < 1:
        raise ArgumentError(f"jobs must be >= 1, got {jobs}")
    loop = asyncio.get_running_loop()
    beta = await loop.run_in_executor(None, prepare_beta, config)
    semaphore = asyncio.Semaphore(jobs)

    with ThreadPoolExecutor(max_workers=jobs) as executor:

        async def run_one(repetition: int) -> List[RepetitionRecord]:
            async with semaphore:
                return await loop.run_in_executor(executor, run_repetition, config, beta, repetition)

        per_repetition = await asyncio.gather(*(run_one(r) for r in range(config.repetitions)))
    return _collect(config, beta, per_repetition)


def _center_pair(config: ExperimentConfig, source: str, target: str) -> ExperimentConfig:
    centers = config.centers
    if source == target:
        # 同一センターでは単一センター設定の固定βを使う
        return replace(
            config,
            source=None,
            target=centers[target],
            beta_mode="fixed",
            fixed_beta=DEFAULT_FIXED_BETA,
            centers=None,
        )
    return replace(config, source=centers[source], target=centers[target], beta_mode="fitted", centers=None)


def center_pairs(config: ExperimentConfig) -> List[Tuple[str, str]]:
    if not config.centers:
        raise ArgumentError("cross-center runs need a 'centers' mapping")
    names = list(config.centers)
    return [(s, t) for s in names for t in names]


def run_cross_center(config: ExperimentConfig) -> Dict[Tuple[str, str], ResultsTable]:
    """Every (source center, target center) pair, rows in center order."""
    return {(s, t): run_experiment(_center_pair(config, s, t)) for s, t in center_pairs(config)}


async def run_cross_center_async(
    config: ExperimentConfig, jobs: Optional[int] = None
) -> Dict[Tuple[str, str], ResultsTable]:
    grid = {}
    for source, target in center_pairs(config):
        logger.info(f"Cross-center cell: source={source} target={target}")
        grid[(source, target)] = await run_experiment_async(_center_pair(config, source, target), jobs)
    return grid
