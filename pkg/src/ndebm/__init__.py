"""Event-based disease progression models (EBM, DEBM, nDEBM) with a synthetic validation framework."""

from .datamodel import (
    BiomarkerDataset,
    EventOrdering,
    GroundTruth,
    PosteriorMatrix,
    SubjectLabel,
    load_dataset,
    save_dataset,
    validate,
)
from .pipeline import FitConfig, FittedModel, fit_model

__version__ = "0.1.0"
