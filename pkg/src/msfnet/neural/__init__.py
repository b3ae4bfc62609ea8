"""Numpy neural regressors: MLP, CNN and RBF networks with SCG / SGD training."""
from .models import CnnModel, MlpModel, Network, PerMeasureModel, ShapeError, build_model, train_per_measure
from .optim import NumericalError, TrainConfig, scg, train_scg, train_sgd
from .rbf import RbfModel, train_rbf
from .serialize import ModelFormatError, ModelVersionError, load_model, save_model

__all__ = [
    "CnnModel", "MlpModel", "Network", "PerMeasureModel", "ShapeError", "build_model", "train_per_measure",
    "NumericalError", "TrainConfig", "scg", "train_scg", "train_sgd",
    "RbfModel", "train_rbf",
    "ModelFormatError", "ModelVersionError", "load_model", "save_model",
]
