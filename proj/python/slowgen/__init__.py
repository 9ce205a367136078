"""Physics-aware probabilistic model reduction of particle simulations."""

from ._core import (
    CountTensor,
    TrainedModel,
    fd_oracle_ad,
    fd_oracle_burgers,
    predict,
    predict_from_new_ic,
    simulate,
    spectral_radius,
    train,
    two_point,
)

__all__ = [
    "CountTensor",
    "TrainedModel",
    "fd_oracle_ad",
    "fd_oracle_burgers",
    "predict",
    "predict_from_new_ic",
    "simulate",
    "spectral_radius",
    "train",
    "two_point",
]
