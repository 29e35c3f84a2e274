"""Quanvolutional feature extraction with a state-vector simulator, plus a
small numpy CNN trained on the resulting feature maps."""

__version__ = "0.1.0"

from .circuit import (  # noqa: E402
    QuanvCircuitConfig,
    build_quanv_circuit,
    encode_pixel,
    run_quanv_circuit,
    swap_test,
)
from .quanv import QuanvConfig, extract_patch, quanvolve_dataset, quanvolve_image  # noqa: E402
from .nn import ModelParams, TrainConfig, evaluate, forward, backward, train  # noqa: E402

__all__ = [
    "QuanvCircuitConfig",
    "QuanvConfig",
    "ModelParams",
    "TrainConfig",
    "build_quanv_circuit",
    "encode_pixel",
    "run_quanv_circuit",
    "swap_test",
    "extract_patch",
    "quanvolve_image",
    "quanvolve_dataset",
    "forward",
    "backward",
    "train",
    "evaluate",
]
