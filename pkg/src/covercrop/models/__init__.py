"""Biomass regressors: random forest, epsilon-SVR, MLP, and fusion CNN.

All four follow the scikit-learn estimator API (constructor parameters,
``fit``/``predict``, ``get_params``) and train deterministically from a
seed. The forest and SVR consume FeatureVec rows; the MLP consumes
FeatureVec rows; the fusion CNN consumes 4-channel image tensors.
"""

from .base import DivergenceError, NotFittedError, Standardizer
from .forest import RandomForestBiomass
from .io import load_model, save_model
from .nets import FusionCNNBiomass, MLPBiomass
from .svr import ConvergenceError, SupportVectorBiomass, kkt_violations

MODEL_KINDS = {
    "rfr": RandomForestBiomass,
    "svr": SupportVectorBiomass,
    "mlp": MLPBiomass,
    "cnn": FusionCNNBiomass,
}

__all__ = [
    "RandomForestBiomass",
    "SupportVectorBiomass",
    "MLPBiomass",
    "FusionCNNBiomass",
    "Standardizer",
    "ConvergenceError",
    "DivergenceError",
    "NotFittedError",
    "kkt_violations",
    "save_model",
    "load_model",
    "MODEL_KINDS",
]
