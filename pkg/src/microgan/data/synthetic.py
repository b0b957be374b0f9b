"""Synthetic image fixtures standing in for real micrographs."""
from __future__ import annotations

import numpy as np


def stripes(size: int, rng: np.random.Generator) -> np.ndarray:
    period = rng.integers(3, 6)
    phase = rng.integers(0, period)
    rows = (np.arange(size)[:, None] + phase) % period < period / 2
    img = np.where(rows, 220, 40) + rng.integers(-20, 21, size=(size, size))
    return _rgb(img)


def blobs(size: int, rng: np.random.Generator) -> np.ndarray:
    """Dark round particles on a light matrix, loosely like a eutectic micrograph."""
    yy, xx = np.mgrid[0:size, 0:size]
    img = np.full((size, size), 200.0)
    for _ in range(rng.integers(2, 5)):
        cy, cx = rng.uniform(0, size, 2)
        r = rng.uniform(size / 10, size / 5)
        img[(yy - cy) ** 2 + (xx - cx) ** 2 < r * r] = 50
    img += rng.integers(-20, 21, size=(size, size))
    return _rgb(img)


def _rgb(gray) -> np.ndarray:
    g = np.clip(gray, 0, 255).astype(np.uint8)
    return np.repeat(g[:, :, None], 3, axis=2)


def two_texture_dataset(count: int, size: int, seed: int = 0) -> list[np.ndarray]:
    """Alternating stripe and blob images."""
    rng = np.random.default_rng(seed)
    return [stripes(size, rng) if i % 2 == 0 else blobs(size, rng) for i in range(count)]


def centered_square(size: int = 64, side: int = 32) -> np.ndarray:
    img = np.zeros((size, size, 3), dtype=np.uint8)
    lo = (size - side) // 2
    img[lo:lo + side, lo:lo + side] = 255
    return img
