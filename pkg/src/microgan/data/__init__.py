from .augment import AugmentParams, AugmentSpec, apply_affine, augment, draw_params
from .dataset import Dataset, batches, expand_dataset, read_manifest, write_manifest
from .io import from_model_range, list_pngs, load_image, save_image, to_model_range

__all__ = [
    "AugmentParams", "AugmentSpec", "Dataset", "apply_affine", "augment", "batches",
    "draw_params", "expand_dataset", "from_model_range", "list_pngs", "load_image",
    "read_manifest", "save_image", "to_model_range", "write_manifest",
]
