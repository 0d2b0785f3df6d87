"""Labelled sample sets stored as raw tensors plus a small TOML descriptor.

Layout of a dataset directory::

    dataset.desc   format, version, count, sample shape [C, H, W], classes
    inputs.bin     uint8 input codes, count x C x H x W
    labels.bin     uint8 class labels, count
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .tensorio import TensorFormatError, read_tensor, write_tensor

DESCRIPTOR = "dataset.desc"
FORMAT_NAME = "xbarsnn-dataset"
FORMAT_VERSION = 1


class DatasetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    inputs: np.ndarray  # uint8, n x C x H x W
    labels: np.ndarray  # n
    classes: int

    def __post_init__(self) -> None:
        if self.inputs.ndim != 4:
            raise DatasetError(f"inputs must be n x C x H x W, got shape {self.inputs.shape}")
        if self.labels.shape != (self.inputs.shape[0],):
            raise DatasetError("one label per sample is required")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise DatasetError("label outside [0, classes)")

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def sample_shape(self) -> tuple[int, int, int]:
        return tuple(self.inputs.shape[1:])

    def subset(self, index) -> "Dataset":
        return Dataset(self.inputs[index], self.labels[index], self.classes)


def save_dataset(ds: Dataset, path: str | Path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    write_tensor(root / "inputs.bin", np.asarray(ds.inputs, dtype=np.uint8))
    write_tensor(root / "labels.bin", np.asarray(ds.labels, dtype=np.uint8))
    desc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "count": len(ds),
        "shape": list(ds.sample_shape),
        "classes": ds.classes,
    }
    (root / DESCRIPTOR).write_text(tomli_w.dumps(desc), encoding="utf-8")


def load_dataset(path: str | Path) -> Dataset:
    root = Path(path)
    try:
        desc = tomllib.loads((root / DESCRIPTOR).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DatasetError(f"no {DESCRIPTOR} in {root}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise DatasetError(f"malformed header: {exc}") from exc
    if desc.get("format") != FORMAT_NAME or desc.get("version") != FORMAT_VERSION:
        raise DatasetError("malformed header: not a version-1 dataset descriptor")
    try:
        n = int(desc["count"])
        shape = tuple(int(v) for v in desc["shape"])
        classes = int(desc["classes"])
        inputs = read_tensor(root / "inputs.bin", (n, *shape))
        labels = read_tensor(root / "labels.bin", (n,))
    except (KeyError, TypeError, ValueError, FileNotFoundError) as exc:
        if isinstance(exc, TensorFormatError):
            raise DatasetError(f"bad tensor file: {exc}") from exc
        raise DatasetError(f"malformed header: {exc}") from exc
    return Dataset(inputs, labels.astype(np.int64), classes)
