"""Learning engine: one-vs-one SMO SVM and small backprop networks."""

import numpy as np

from .model import ArchConfig, InputSpec, SvmConfig, TrainedModel, KINDS, NN_KINDS
from .nn import nn_forward, nn_loss_and_grads, train_nn
from .svm import smo_train, svm_predict


def predict(model: TrainedModel, rows) -> np.ndarray:
    """Predicted class indices; ties go to the lowest index."""
    if model.kind == "SVM":
        return svm_predict(model, rows)
    return np.argmax(nn_forward(model, rows), axis=1)


__all__ = [
    "ArchConfig",
    "InputSpec",
    "SvmConfig",
    "TrainedModel",
    "KINDS",
    "NN_KINDS",
    "nn_forward",
    "nn_loss_and_grads",
    "train_nn",
    "smo_train",
    "predict",
]
