"""Corpus expansion, manifests, and shuffled batching."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..tensor import Tensor, default_dtype
from .augment import AugmentSpec, apply_affine, draw_params


@dataclass
class Dataset:
    items: list  # H x W x 3 uint8 arrays
    provenance: list = field(default_factory=list)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.items:
            shape = self.items[0].shape
            if any(it.shape != shape for it in self.items):
                raise ValueError("all dataset items must share dimensions")
        if self.provenance and len(self.provenance) != len(self.items):
            raise ValueError("provenance count does not match item count")

    def __len__(self):
        return len(self.items)

    def as_array(self, dtype=None) -> np.ndarray:
        """All items as an N x 3 x H x W array in model range."""
        dtype = np.dtype(dtype or default_dtype())
        if dtype not in self._cache:
            stack = np.stack(self.items).astype(np.float64).transpose(0, 3, 1, 2)
            self._cache[dtype] = np.ascontiguousarray(stack / 127.5 - 1.0, dtype=dtype)
        return self._cache[dtype]


def item_rng(base_seed: int, index: int) -> np.random.Generator:
    """Independent stream per item, so items can be produced in any order."""
    return np.random.default_rng([base_seed, index])


def expand_dataset(sources, target_count: int, spec: AugmentSpec, rng: np.random.Generator,
                   source_names=None, executor=None) -> Dataset:
    """Originals first, then augmented variants round-robin over the sources."""
    sources = list(sources)
    if not sources:
        raise ValueError("need at least one source image")
    if target_count < len(sources):
        raise ValueError(f"target_count {target_count} is smaller than {len(sources)} sources")
    names = list(source_names) if source_names is not None else [str(i) for i in range(len(sources))]
    base_seed = int(rng.integers(2 ** 63))
    k = len(sources)

    def make(index):
        src = index % k
        if index < k:
            return sources[src], {"index": index, "source": names[src], "params": None}
        params = draw_params(spec, item_rng(base_seed, index))
        img = apply_affine(sources[src], params, spec.interpolation, spec.fill_mode, spec.fill_value)
        return img, {"index": index, "source": names[src], "params": params.to_dict()}

    mapper = executor.map if executor is not None else map
    items, prov = [], []
    for img, rec in mapper(make, range(target_count)):
        items.append(img)
        prov.append(rec)
    return Dataset(items, prov)


def write_manifest(path, dataset: Dataset, output_paths) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec, out in zip(dataset.provenance, output_paths):
            fh.write(json.dumps({"source": rec["source"], "params": rec["params"],
                                 "output": str(out)}, sort_keys=True) + "\n")


def read_manifest(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line]


def batches(dataset: Dataset, batch_size: int, rng: np.random.Generator, drop_last: bool = True):
    """One epoch: a shuffled pass over the dataset in batches of model-range tensors."""
    n = len(dataset)
    if not 1 <= batch_size <= n:
        raise ValueError(f"batch_size must be in [1, {n}], got {batch_size}")
    order = rng.permutation(n)
    data = dataset.as_array()
    stop = n - n % batch_size if drop_last else n
    for start in range(0, stop, batch_size):
        yield Tensor(data[order[start:start + batch_size]], dtype=data.dtype)
