"""Component-wise gradient boosting for distributional regression (GAMLSS)."""

from .boost import BoostControl, BoostModel, deserialize, fit, path_events, serialize, stabilize
from .data import Dataset, ingest
from .families import compute_offset, get_family
from .inference import partial_effects, predint, region_summary
from .learners import BaseLearnerSpec, MRFGraph, build_workspace, calibrate_lambda, fit_learner
from .tuning import cv_risk, make_folds, make_grid, optimal_mstop

__version__ = "0.1.0"

__all__ = [
    "BaseLearnerSpec",
    "BoostControl",
    "BoostModel",
    "Dataset",
    "MRFGraph",
    "build_workspace",
    "calibrate_lambda",
    "compute_offset",
    "cv_risk",
    "deserialize",
    "fit",
    "fit_learner",
    "get_family",
    "ingest",
    "make_folds",
    "make_grid",
    "optimal_mstop",
    "partial_effects",
    "path_events",
    "predint",
    "region_summary",
    "serialize",
    "stabilize",
]
