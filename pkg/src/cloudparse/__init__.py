"""Fitting deformable landmark shape models to edge-like point clouds.

A PCA point-distribution model gives the global shape, a chain-structured
Gaussian MRF moves each landmark along its normal, and data-driven
candidates from fitted contour fragments seed an alternation of exact
dynamic programming and weighted least-squares refits.
"""

from .config import CgParams, DeformationParams, EnergyParams, TransformPriorParams
from .geometry import LandmarkShape, SimilarityTransform, avg_point_error
from .parser import NoHypothesisError, ParseResult, asm_baseline, parse
from .preprocess import PointCloud
from .shape_model import PcaInstance, PcaShapeModel, fit_weighted_pca, synthesize, train_pca

__all__ = [
    "CgParams", "DeformationParams", "EnergyParams", "TransformPriorParams",
    "LandmarkShape", "SimilarityTransform", "avg_point_error",
    "NoHypothesisError", "ParseResult", "asm_baseline", "parse",
    "PointCloud", "PcaInstance", "PcaShapeModel", "fit_weighted_pca", "synthesize", "train_pca",
]
