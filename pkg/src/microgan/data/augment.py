"""Random affine augmentation: shifts, shear, zoom and flips about the image center."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class AugmentSpec:
    width_shift_range: float = 0.1
    height_shift_range: float = 0.1
    shear_range: float = 0.2  # radians
    zoom_range: float = 0.2
    horizontal_flip: bool = True
    vertical_flip: bool = True
    flip_probability: float = 0.5
    fill_mode: str = "nearest"
    fill_value: int = 255
    interpolation: str = "bilinear"
    seed: int = 0

    def __post_init__(self):
        ranges = (self.width_shift_range, self.height_shift_range, self.shear_range, self.zoom_range)
        if min(ranges) < 0:
            raise ValueError("augmentation ranges must be >= 0")
        if self.zoom_range >= 1:
            raise ValueError("zoom_range must be < 1")
        if self.fill_mode not in ("nearest", "constant"):
            raise ValueError(f"fill_mode must be 'nearest' or 'constant', got {self.fill_mode!r}")
        if self.interpolation not in ("nearest", "bilinear"):
            raise ValueError(f"interpolation must be 'nearest' or 'bilinear', got {self.interpolation!r}")
        if not 0 <= self.flip_probability <= 1:
            raise ValueError("flip_probability must lie in [0, 1]")
        if not 0 <= self.fill_value <= 255:
            raise ValueError("fill_value must be a pixel level in [0, 255]")

    @classmethod
    def identity(cls, **kw):
        base = dict(width_shift_range=0.0, height_shift_range=0.0, shear_range=0.0,
                    zoom_range=0.0, horizontal_flip=False, vertical_flip=False)
        base.update(kw)
        return cls(**base)


@dataclass(frozen=True)
class AugmentParams:
    """One concrete draw. Shifts are fractions of the extent; zoom scales content."""

    shift_x: float = 0.0
    shift_y: float = 0.0
    shear: float = 0.0
    zoom: float = 1.0
    flip_h: bool = False
    flip_v: bool = False

    def to_dict(self):
        return asdict(self)


def draw_params(spec: AugmentSpec, rng: np.random.Generator) -> AugmentParams:
    # Every field is always drawn so the stream position never depends on the spec.
    sx = rng.uniform(-spec.width_shift_range, spec.width_shift_range)
    sy = rng.uniform(-spec.height_shift_range, spec.height_shift_range)
    shear = rng.uniform(-spec.shear_range, spec.shear_range)
    zoom = rng.uniform(1 - spec.zoom_range, 1 + spec.zoom_range)
    fh = rng.random() < spec.flip_probability
    fv = rng.random() < spec.flip_probability
    return AugmentParams(float(sx), float(sy), float(shear), float(zoom),
                         bool(fh and spec.horizontal_flip), bool(fv and spec.vertical_flip))


def inverse_matrix(params: AugmentParams, height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Output-to-source map about the center: ``src = A @ (out - c - t) + c``.

    Returns ``(A, offset)`` with ``src = A @ out + offset`` in (x, y) order.
    """
    s = params.shear
    shear_inv = np.array([[1.0, -math.sin(s)], [0.0, math.cos(s)]])
    flips = np.diag([-1.0 if params.flip_h else 1.0, -1.0 if params.flip_v else 1.0])
    a = flips @ shear_inv / params.zoom
    c = np.array([(width - 1) / 2, (height - 1) / 2])
    t = np.array([params.shift_x * width, params.shift_y * height])
    return a, c - a @ (c + t)


def apply_affine(image: np.ndarray, params: AugmentParams, interpolation="bilinear",
                 fill_mode="nearest", fill_value=255) -> np.ndarray:
    h, w = image.shape[:2]
    a, offset = inverse_matrix(params, h, w)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    # Exact 0/1 matrix entries keep identity and flip maps on the integer grid.
    src_x = a[0, 0] * xs + a[0, 1] * ys + offset[0]
    src_y = a[1, 0] * xs + a[1, 1] * ys + offset[1]
    img = image.astype(np.float64)

    def sample(iy, ix):
        inside = (iy >= 0) & (iy < h) & (ix >= 0) & (ix < w)
        vals = img[np.clip(iy, 0, h - 1), np.clip(ix, 0, w - 1)]
        if fill_mode == "constant":
            vals[~inside] = fill_value
        return vals

    if interpolation == "nearest":
        out = sample(np.floor(src_y + 0.5).astype(np.int64), np.floor(src_x + 0.5).astype(np.int64))
    else:
        x0 = np.floor(src_x)
        y0 = np.floor(src_y)
        fx = (src_x - x0)[..., None]
        fy = (src_y - y0)[..., None]
        x0 = x0.astype(np.int64)
        y0 = y0.astype(np.int64)
        out = ((1 - fy) * ((1 - fx) * sample(y0, x0) + fx * sample(y0, x0 + 1))
               + fy * ((1 - fx) * sample(y0 + 1, x0) + fx * sample(y0 + 1, x0 + 1)))
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def augment(image: np.ndarray, spec: AugmentSpec, rng: np.random.Generator,
            return_params: bool = False):
    params = draw_params(spec, rng)
    out = apply_affine(image, params, spec.interpolation, spec.fill_mode, spec.fill_value)
    return (out, params) if return_params else out
