"""Temporal, trust-aware latent-factor preference modelling.

The package trains and evaluates recommender models in which user bias,
item bias, feature preferences, and feature-value preferences each carry
independently switchable temporal-drift and social-influence components.
"""

from aspectmf.model import AspectConfig, HyperParams, ModelParams
from aspectmf.data import RatingDataset, TrustNetwork

__all__ = [
    "AspectConfig",
    "HyperParams",
    "ModelParams",
    "RatingDataset",
    "TrustNetwork",
]

__version__ = "0.1.0"
