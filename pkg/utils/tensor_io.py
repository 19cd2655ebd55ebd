"""
ファイル入出力
GRIDTNSRテンソル、PGMラスター、β・事後分布・ラベル付きボクセルのJSON文書
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from .errors import BetaFileError, MalformedHeaderError, NotAGridTensorError, PayloadLengthError
from .grid import ImageGrid, LabelField, Mask, ResponsibilityField
from .initialization import LabeledVoxelSet
from .potts import BetaFitResult, SmoothnessParams
from .vb import PosteriorHyperparams

logger = logging.getLogger(__name__)

MAGIC = b"GRIDTNSR"

Tensor = Union[ImageGrid, LabelField, ResponsibilityField, Mask]

_DTYPES = {"f64": np.dtype("<f8"), "u8": np.dtype("u1")}
_KIND_DTYPES = {"image": "f64", "resp": "f64", "labels": "u8", "mask": "u8"}

BETA_KEYS = ("beta", "beta_max", "iterations", "objective")


def _tensor_layout(tensor: Tensor):
    if isinstance(tensor, ImageGrid):
        return "image", tensor.data, {}
    if isinstance(tensor, ResponsibilityField):
        return "resp", tensor.values, {}
    if isinstance(tensor, LabelField):
        if tensor.n_classes > 256:
            raise MalformedHeaderError(f"labels with {tensor.n_classes} classes do not fit in u8")
        return "labels", tensor.labels[:, :, np.newaxis], {"classes": tensor.n_classes}
    if isinstance(tensor, Mask):
        return "mask", tensor.values[:, :, np.newaxis], {}
    raise TypeError(f"cannot write {type(tensor).__name__} as a grid tensor")


def write_grid(path: Union[str, Path], tensor: Tensor) -> Path:
    """Write magic, one JSON header line, then the little-endian row-major payload."""
    path = Path(path)
    kind, array, extra = _tensor_layout(tensor)
    dtype_name = _KIND_DTYPES[kind]
    header = {"dtype": dtype_name, "shape": list(array.shape), "kind": kind, **extra}
    payload = np.ascontiguousarray(array, dtype=_DTYPES[dtype_name]).tobytes()

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(json.dumps(header, separators=(",", ":")).encode("utf-8") + b"\n")
        f.write(payload)
    logger.debug(f"Wrote {kind} tensor {array.shape} to {path}")
    return path


def _parse_header(line: bytes) -> Dict[str, Any]:
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedHeaderError(f"grid tensor header is not valid JSON: {e}") from e
    if not isinstance(header, dict):
        raise MalformedHeaderError("grid tensor header must be a JSON object")

    kind = header.get("kind")
    if kind not in _KIND_DTYPES:
        raise MalformedHeaderError(f"unknown tensor kind: {kind!r}")
    if header.get("dtype") != _KIND_DTYPES[kind]:
        raise MalformedHeaderError(f"{kind} tensors must use dtype {_KIND_DTYPES[kind]}, got {header.get('dtype')!r}")
    shape = header.get("shape")
    if (
        not isinstance(shape, list)
        or len(shape) != 3
        or not all(isinstance(n, int) and not isinstance(n, bool) and n >= 1 for n in shape)
    ):
        raise MalformedHeaderError(f"shape must be [H, W, C] of positive integers, got {shape!r}")
    if kind in ("labels", "mask") and shape[2] != 1:
        raise MalformedHeaderError(f"{kind} tensors must have a single channel, got {shape[2]}")
    return header


def read_grid(path: Union[str, Path]) -> Tensor:
    path = Path(path)
    with open(path, "rb") as f:
        raw = f.read()

    if raw[: len(MAGIC)] != MAGIC:
        raise NotAGridTensorError(str(path))
    newline = raw.find(b"\n", len(MAGIC))
    if newline < 0:
        raise MalformedHeaderError(f"grid tensor header in {path} is not terminated by a newline")
    header = _parse_header(raw[len(MAGIC):newline])

    dtype = _DTYPES[header["dtype"]]
    shape = tuple(header["shape"])
    payload = raw[newline + 1:]
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(payload) != expected:
        raise PayloadLengthError(expected, len(payload))
    array = np.frombuffer(payload, dtype=dtype).reshape(shape)

    kind = header["kind"]
    if kind == "image":
        return ImageGrid(array.astype(np.float64))
    if kind == "resp":
        return ResponsibilityField(array.astype(np.float64))
    if kind == "mask":
        return Mask(array[:, :, 0] != 0)

    labels = array[:, :, 0].astype(np.int64)
    # 古いファイルには classes が無い
    n_classes = header.get("classes", int(labels.max()) + 1)
    if not isinstance(n_classes, int) or n_classes < 1:
        raise MalformedHeaderError(f"classes must be a positive integer, got {n_classes!r}")
    return LabelField(labels, n_classes)


def export_pgm(tensor: Union[LabelField, ImageGrid], path: Union[str, Path]) -> Path:
    """Binary P5 raster with maxval 255; labels spread over the grey range, images floor(255·x)."""
    path = Path(path)
    if isinstance(tensor, LabelField):
        if tensor.n_classes > 1:
            pixels = tensor.labels.astype(np.int64) * 255 // (tensor.n_classes - 1)
        else:
            pixels = np.zeros_like(tensor.labels)
    elif isinstance(tensor, ImageGrid):
        pixels = np.floor(np.clip(tensor.data[:, :, 0], 0.0, 1.0) * 255.0)
    else:
        raise TypeError(f"cannot export {type(tensor).__name__} as PGM")

    height, width = pixels.shape
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        f.write(pixels.astype(np.uint8).tobytes())
    return path


def _read_json(path: Path, what: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise BetaFileError(f"{what} file {path} is not valid JSON: {e}") from e


def _write_json(path: Path, document: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    # json は float を最短表現で出すので往復で値が変わらない
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2)
        f.write("\n")
    return path


def write_beta(path: Union[str, Path], result: BetaFitResult) -> Path:
    document = {
        "beta": [float(b) for b in result.params.beta],
        "beta_max": float(result.params.beta_max),
        "iterations": int(result.iterations),
        "objective": float(result.objective),
        "converged": bool(result.converged),
        "shared": bool(result.shared),
    }
    return _write_json(Path(path), document)


def read_beta(path: Union[str, Path]) -> BetaFitResult:
    path = Path(path)
    document = _read_json(path, "beta")
    if not isinstance(document, dict):
        raise BetaFileError(f"beta file {path} must contain a JSON object")
    for key in BETA_KEYS:
        if key not in document:
            raise BetaFileError(f"beta file {path} is missing the {key!r} key")
    try:
        params = SmoothnessParams(np.array(document["beta"], dtype=np.float64), float(document["beta_max"]))
    except (TypeError, ValueError) as e:
        raise BetaFileError(f"beta file {path} has invalid values: {e}") from e
    return BetaFitResult(
        params=params,
        iterations=int(document["iterations"]),
        objective=float(document["objective"]),
        converged=bool(document.get("converged", True)),
        shared=bool(document.get("shared", False)),
    )


def write_posterior(path: Union[str, Path], posterior: PosteriorHyperparams) -> Path:
    return _write_json(Path(path), posterior.to_dict())


def read_posterior(path: Union[str, Path]) -> PosteriorHyperparams:
    path = Path(path)
    document = _read_json(path, "posterior")
    if not isinstance(document, dict):
        raise BetaFileError(f"posterior file {path} must contain a JSON object")
    try:
        return PosteriorHyperparams.from_dict(document)
    except KeyError as e:
        raise BetaFileError(f"posterior file {path} is missing the {e.args[0]!r} key") from e
    except (TypeError, ValueError) as e:
        raise BetaFileError(f"posterior file {path} has invalid values: {e}") from e


def write_labeled_set(path: Union[str, Path], labeled: LabeledVoxelSet) -> Path:
    return _write_json(Path(path), labeled.to_records())


def read_labeled_set(path: Union[str, Path], image: Optional[ImageGrid] = None) -> LabeledVoxelSet:
    """JSON list of {"index", "class"} records; indices are checked against ``image`` when given."""
    path = Path(path)
    document = _read_json(path, "labeled voxel")
    if not isinstance(document, list):
        raise BetaFileError(f"labeled voxel file {path} must contain a JSON list")
    pairs = []
    for position, record in enumerate(document):
        if not isinstance(record, dict):
            raise BetaFileError(f"labeled voxel file {path}: entry {position} is not an object")
        for key in ("index", "class"):
            if key not in record:
                raise BetaFileError(f"labeled voxel file {path}: entry {position} is missing the {key!r} key")
            value = record[key]
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise BetaFileError(
                    f"labeled voxel file {path}: entry {position} {key!r} must be a non-negative integer, got {value!r}"
                )
        pairs.append((record["index"], record["class"]))
    return LabeledVoxelSet.from_pairs(pairs, image)
