"""Python bindings for the shapeseg C++ library.

Volumes are numpy arrays indexed [z, y, x]; slices are indexed [y, x].
"""

from ._shapeseg import (
    Error,
    InputError,
    Model,
    bce_loss,
    dice_loss,
    edt_squared,
    evaluate,
    l1_loss,
    laplacian_loss,
    load_volume,
    marching_cubes,
    phantom_case,
    save_volume,
    sdf_slice,
    sdf_volume,
    train_dataset,
)

__all__ = [
    "Error",
    "InputError",
    "Model",
    "bce_loss",
    "dice_loss",
    "edt_squared",
    "evaluate",
    "l1_loss",
    "laplacian_loss",
    "load_volume",
    "marching_cubes",
    "phantom_case",
    "save_volume",
    "sdf_slice",
    "sdf_volume",
    "train_dataset",
]
