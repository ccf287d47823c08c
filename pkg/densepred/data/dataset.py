"""Dataset directories of generated samples.

Layout::

    <root>/meta.txt
    <root>/<split>/<index:05d>.rgb.ppm
    <root>/<split>/<index:05d>.depth.pgm
    <root>/<split>/<index:05d>.labels.pgm
    <root>/<split>/<index:05d>.normals.tns
    <root>/<split>/<index:05d>.mask.pgm

Ground-truth files are optional per sample; ``rgb.ppm`` is not.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar, Union

import logging

import numpy as np

from ..errors import FormatError, InputError
from ..geometry.camera import Intrinsics
from ..project_types import Size2D
from .netpbm import (
    read_depth_pgm,
    read_labels_pgm,
    read_mask_pgm,
    read_ppm,
    write_depth_pgm,
    write_labels_pgm,
    write_mask_pgm,
    write_ppm,
)
from .sample import Sample
from .scene import SceneSpec, gen_scene
from .tensor_file import read_tensor, write_tensor

PathLike = Union[str, Path]
A = TypeVar("A")
B = TypeVar("B")

META_FILE = "meta.txt"
SPLITS = ("train", "test")
SUFFIXES = {
    "rgb": ".rgb.ppm",
    "depth": ".depth.pgm",
    "labels": ".labels.pgm",
    "normals": ".normals.tns",
    "mask": ".mask.pgm",
}

logger = logging.getLogger("DensePred.Data")


@dataclass(frozen=True)
class DatasetMeta:
    """What ``meta.txt`` records about a generated dataset.

    Attributes:
        size: ``(height, width)`` of every sample.
        intrinsics: Camera intrinsics shared by every sample.
        num_classes: Class count K.
        seed: Base seed; train sample ``i`` uses ``seed + i`` and test sample
            ``j`` uses ``seed + train_count + j``.
        train_count: Number of training samples.
        test_count: Number of test samples.
    """

    size: Size2D
    intrinsics: Intrinsics
    num_classes: int
    seed: int
    train_count: int
    test_count: int

    def seed_range(self, split: str) -> range:
        """Scene seeds of a split."""
        if split == "train":
            return range(self.seed, self.seed + self.train_count)
        if split == "test":
            start = self.seed + self.train_count
            return range(start, start + self.test_count)
        raise InputError(f"Unknown split '{split}', expected one of {SPLITS}", field="split")

    def to_text(self) -> str:
        h, w = self.size
        k = self.intrinsics
        lines = [
            f"size={w}x{h}",
            f"fx={k.fx!r}",
            f"fy={k.fy!r}",
            f"cx={k.cx!r}",
            f"cy={k.cy!r}",
            f"num_classes={self.num_classes}",
            f"seed={self.seed}",
            f"train_count={self.train_count}",
            f"test_count={self.test_count}",
            f"train_seeds={self.seed_range('train').start}..{self.seed_range('train').stop - 1}",
            f"test_seeds={self.seed_range('test').start}..{self.seed_range('test').stop - 1}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, path=None) -> "DatasetMeta":
        """Parse ``meta.txt``; derived ``*_seeds`` lines are informational.

        Raises:
            FormatError: On a malformed line or a missing key (offset is the
                line number).
        """
        values: Dict[str, str] = {}
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise FormatError(f"Expected 'key=value', got '{line}'", path=path, offset=number)
            values[key.strip()] = value.strip()
        try:
            w, h = (int(v) for v in values["size"].split("x"))
            return cls(
                size=(h, w),
                intrinsics=Intrinsics(
                    float(values["fx"]),
                    float(values["fy"]),
                    float(values["cx"]),
                    float(values["cy"]),
                ),
                num_classes=int(values["num_classes"]),
                seed=int(values["seed"]),
                train_count=int(values["train_count"]),
                test_count=int(values["test_count"]),
            )
        except KeyError as exc:
            raise FormatError(f"Missing key {exc.args[0]!r}", path=path) from exc
        except ValueError as exc:
            raise FormatError(f"Malformed value: {exc}", path=path) from exc

    def save(self, root: PathLike) -> Path:
        path = Path(root) / META_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text())
        return path

    @classmethod
    def load(cls, root: PathLike) -> "DatasetMeta":
        path = Path(root) / META_FILE
        return cls.from_text(path.read_text(), path=str(path))


def ordered_map(fn: Callable[[A], B], items: Iterable[A], workers: Optional[int] = None) -> List[B]:
    """``fn`` over ``items`` on a thread pool, results in input order."""
    items = list(items)
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def sample_paths(directory: PathLike, index: int) -> Dict[str, Path]:
    stem = f"{index:05d}"
    return {name: Path(directory) / (stem + suffix) for name, suffix in SUFFIXES.items()}


def write_sample(directory: PathLike, index: int, sample: Sample) -> None:
    """Write one sample; absent ground-truth fields produce no file."""
    paths = sample_paths(directory, index)
    write_ppm(paths["rgb"], sample.rgb)
    if sample.depth is not None:
        write_depth_pgm(paths["depth"], sample.depth)
    if sample.labels is not None:
        write_labels_pgm(paths["labels"], sample.labels)
    if sample.normals is not None:
        write_tensor(paths["normals"], np.asarray(sample.normals, dtype=np.float64))
    if sample.mask is not None:
        write_mask_pgm(paths["mask"], sample.mask)


def read_sample(
    directory: PathLike,
    index: int,
    intrinsics: Intrinsics,
    num_classes: Optional[int] = None,
) -> Sample:
    """Read one sample and validate it.

    Raises:
        FormatError: On a malformed file.
        InputError: If the files disagree on size or a label is ``>= num_classes``.
    """
    paths = sample_paths(directory, index)
    present = {name: path for name, path in paths.items() if path.exists()}
    if "rgb" not in present:
        raise InputError(f"Missing {paths['rgb']}", field="rgb")
    sample = Sample(
        rgb=read_ppm(present["rgb"]),
        intrinsics=intrinsics,
        depth=read_depth_pgm(present["depth"]) if "depth" in present else None,
        normals=read_tensor(present["normals"]) if "normals" in present else None,
        labels=read_labels_pgm(present["labels"], num_classes) if "labels" in present else None,
        mask=read_mask_pgm(present["mask"]) if "mask" in present else None,
    )
    return sample.validate(num_classes)


def write_dataset(
    root: PathLike,
    split: str,
    samples: Sequence[Sample],
    meta: Optional[DatasetMeta] = None,
) -> Path:
    """Write ``samples`` as ``<root>/<split>/00000.*``, ``00001.*``, ...

    Side Effects:
        Creates the split directory and, when ``meta`` is given, ``meta.txt``.
    """
    directory = Path(root) / split
    directory.mkdir(parents=True, exist_ok=True)
    for index, sample in enumerate(samples):
        write_sample(directory, index, sample)
    if meta is not None:
        meta.save(root)
    logger.info("Wrote %d samples to %s", len(samples), directory)
    return directory


def split_indices(root: PathLike, split: str) -> List[int]:
    directory = Path(root) / split
    return sorted(int(p.name[: -len(SUFFIXES["rgb"])]) for p in directory.glob("*" + SUFFIXES["rgb"]))


def load_dataset(
    root: PathLike,
    split: str,
    num_classes: Optional[int] = None,
    workers: Optional[int] = None,
) -> List[Sample]:
    """Read every sample of a split in index order.

    Intrinsics come from ``meta.txt`` when present, otherwise
    :meth:`Intrinsics.default_for` the image size.

    Raises:
        InputError: If the split holds no sample.
    """
    root = Path(root)
    meta = DatasetMeta.load(root) if (root / META_FILE).exists() else None
    if num_classes is None and meta is not None:
        num_classes = meta.num_classes
    indices = split_indices(root, split)
    if not indices:
        raise InputError(f"No samples under {root / split}", field="dataset")

    def read(index: int) -> Sample:
        if meta is not None:
            intrinsics = meta.intrinsics
        else:
            rgb = read_ppm(sample_paths(root / split, index)["rgb"])
            intrinsics = Intrinsics.default_for(rgb.shape[2], rgb.shape[1])
        return read_sample(root / split, index, intrinsics, num_classes)

    samples = ordered_map(read, indices, workers)
    logger.info("Loaded %d %s samples from %s", len(samples), split, root)
    return samples


def generate_samples(spec: SceneSpec, seeds: Iterable[int], workers: Optional[int] = None) -> List[Sample]:
    """One scene per seed, each from its own generator."""

    def render(seed: int) -> Sample:
        return gen_scene(replace(spec, seed=seed), np.random.default_rng(seed))

    return ordered_map(render, seeds, workers)


def generate_dataset(
    root: PathLike,
    spec: SceneSpec,
    train_count: int,
    test_count: int = 0,
    workers: Optional[int] = None,
) -> DatasetMeta:
    """Generate and write both splits from disjoint seed ranges.

    Raises:
        InputError: If ``train_count`` is below 1 or ``test_count`` is negative.
    """
    if train_count < 1:
        raise InputError(f"Need at least one training sample, got {train_count}", field="count")
    if test_count < 0:
        raise InputError(f"Negative test count {test_count}", field="test_count")
    meta = DatasetMeta(
        size=tuple(spec.size),
        intrinsics=spec.camera,
        num_classes=spec.num_classes,
        seed=spec.seed,
        train_count=train_count,
        test_count=test_count,
    )
    for split in SPLITS:
        seeds = meta.seed_range(split)
        if len(seeds):
            write_dataset(root, split, generate_samples(spec, seeds, workers))
    meta.save(root)
    return meta


def split_digests(samples: Iterable[Sample]) -> Tuple[str, ...]:
    return tuple(sample.digest() for sample in samples)
