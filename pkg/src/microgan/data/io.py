"""PNG I/O and the [0, 255] <-> [-1, 1] range mapping.

Images are plain ``uint8`` arrays shaped H x W x 3.
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..tensor import Tensor


def load_image(path, size: int | None = None) -> np.ndarray:
    """Read a PNG as RGB uint8.

    Grayscale is promoted to three identical channels and alpha is dropped.
    With ``size``, the image is center-cropped to a square and box-filtered
    down (or up) to ``size`` x ``size``.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise OSError(f"{path}: unsupported format {im.format} (PNG only)")
            im.load()
            if size is not None:
                im = _crop_resize(im.convert("RGB"), size)
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, SyntaxError, ValueError) as exc:
        raise OSError(f"{path}: cannot decode image ({exc})") from exc
    except OSError as exc:
        if str(path) in str(exc):
            raise
        raise OSError(f"{path}: {exc}") from exc
    return np.ascontiguousarray(arr)


def _crop_resize(im: Image.Image, size: int) -> Image.Image:
    w, h = im.size
    side = min(w, h)
    left, top = (w - side) // 2, (h - side) // 2
    im = im.crop((left, top, left + side, top + side))
    if side != size:
        im = im.resize((size, size), Image.BOX)
    return im


def save_image(image: np.ndarray, path) -> None:
    image = np.asarray(image)
    if image.dtype != np.uint8 or image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected H x W x 3 uint8 image, got {image.dtype} {image.shape}")
    path = Path(path)
    if not path.parent.is_dir():
        raise OSError(f"{path.parent}: directory does not exist")
    Image.fromarray(image, "RGB").save(path, format="PNG")


def list_pngs(directory) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir()
                  if p.is_file() and p.suffix.lower() == ".png")


def to_model_range(image: np.ndarray) -> Tensor:
    """H x W x 3 uint8 -> 3 x H x W tensor with v / 127.5 - 1."""
    x = np.asarray(image, dtype=np.float64).transpose(2, 0, 1) / 127.5 - 1.0
    return Tensor(np.ascontiguousarray(x))


def from_model_range(x) -> np.ndarray:
    """Inverse of :func:`to_model_range`; clamps to [-1, 1], rounds half to even."""
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    arr = np.clip(arr.astype(np.float64), -1.0, 1.0)
    v = np.rint((arr + 1.0) * 127.5)
    return np.ascontiguousarray(v.astype(np.uint8).transpose(1, 2, 0))


def write_atomic(path, payload: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)
